//! Configuration layer and experiment orchestration.
//!
//! One config file describes one experiment: model, hedge assets, claim,
//! solver settings, simulation size and outputs. A run simulates one path
//! set, computes the liquidity-aware strategy and the classical one on
//! the same trajectories, evaluates both under the configured liquidity
//! structure, and writes the artifacts (criteria CSV, strategy-path CSV,
//! diagnostics and manifest JSON). Identical configs reproduce identical
//! files byte for byte, so nothing time- or machine-dependent is written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binning::excess_kurtosis;
use crate::criteria::{evaluate_criteria, CriteriaReport};
use crate::diagnostics::{
    collect_condition_inputs, run_condition_suite, ConditionSuiteReport, ConditionThresholds,
    FPropertyMode,
};
use crate::engine::{
    backward_induction, ClaimStateBinning, EngineDiagnostics, FactorBinning, FixedPointConfig,
    LrmConfig, PartitionBuilder, PriceBinning, StrategySet,
};
use crate::error::{HedgeError, Result};
use crate::futures::{build_extended_prices, ExtendedPriceSet, FuturesSpec};
use crate::grid::TimeGrid;
use crate::market::{asian_call_payoff, simulate_paths, OUFactorSpec, PathSet};
use crate::oracle::{run_oracle_suite, OracleReport};
use crate::Real;

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "LRMHEDGE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimConfig {
    /// Averaging window start, on the grid.
    pub t1c: f64,
    /// Averaging window end, on the grid.
    pub t2c: f64,
    pub strike: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinState {
    /// Factor values plus the running claim average: the Markov state of
    /// the claim-and-market system, and the default.
    #[default]
    ClaimState,
    /// Factor values only (insufficient for path-dependent claims once
    /// the averaging window opens).
    Factors,
    Prices,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub bins_per_dim: usize,
    /// Finer cell resolution for the value regression; defaults to
    /// `bins_per_dim` when absent.
    pub value_bins_per_dim: Option<usize>,
    pub pd_tolerance: f64,
    /// Sampling-noise shrinkage multiplier (see `LrmConfig`); enabled by
    /// default for experiments.
    pub variance_ridge: f64,
    pub fixed_point: FixedPointConfig,
    pub bin_state: BinState,
    /// Excess-kurtosis level above which the moment-condition warning
    /// fires for prices or payoff.
    pub kurtosis_warn: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1.0,
            bins_per_dim: 40,
            value_bins_per_dim: Some(250),
            pd_tolerance: 1e-10,
            variance_ridge: 1.0,
            fixed_point: FixedPointConfig::default(),
            bin_state: BinState::ClaimState,
            kurtosis_warn: 1000.0,
        }
    }
}

impl SolverConfig {
    pub fn lrm(&self) -> LrmConfig {
        LrmConfig {
            alpha: self.alpha,
            pd_tolerance: self.pd_tolerance,
            variance_ridge: self.variance_ridge,
            fixed_point: self.fixed_point,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { n_paths: 100_000, seed: 20180228 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Dump the simulated factor/spot paths.
    pub dump_paths: bool,
    /// Dump the extended price panel.
    pub dump_prices: bool,
    /// Number of leading paths written to the strategy CSV.
    pub strategy_dump_paths: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            dump_paths: false,
            dump_prices: false,
            strategy_dump_paths: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub t_end: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub factors: Vec<OUFactorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ConditionConfig {
    pub thresholds: ConditionThresholds,
    pub mode: FPropertyModeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FPropertyModeConfig {
    Direct,
    #[default]
    PrincipalMinors,
}

impl From<FPropertyModeConfig> for FPropertyMode {
    fn from(m: FPropertyModeConfig) -> Self {
        match m {
            FPropertyModeConfig::Direct => FPropertyMode::Direct,
            FPropertyModeConfig::PrincipalMinors => FPropertyMode::PrincipalMinors,
        }
    }
}

/// Full experiment description; the normative key schema of the config
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub assets: Vec<FuturesSpec>,
    pub claim: ClaimConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub conditions: ConditionConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HedgeError::Config(e.to_string()))?;
        cfg.normalize()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Validate and normalize: sort assets by maturity (labels preserved),
    /// check every date against the grid.
    pub fn normalize(&mut self) -> Result<()> {
        let grid = self.time_grid()?;
        if self.model.factors.is_empty() {
            return Err(HedgeError::Config("at least one model factor is required".into()));
        }
        for f in &self.model.factors {
            f.validate(&grid)?;
        }
        if self.assets.is_empty() {
            return Err(HedgeError::Config("at least one hedge asset is required".into()));
        }
        self.assets.sort_by(|a, b| {
            (a.t2f, a.t1f).partial_cmp(&(b.t2f, b.t1f)).expect("finite delivery dates")
        });
        for a in &self.assets {
            a.validate(&grid)?;
            if a.floor_fraction.is_some() && self.assets.len() > 1 {
                return Err(HedgeError::Config(
                    "the truncated supply curve is supported for single-asset configs only"
                        .into(),
                ));
            }
        }
        grid.index_of(self.claim.t1c)?;
        grid.index_of(self.claim.t2c)?;
        if !(self.claim.t1c < self.claim.t2c) {
            return Err(HedgeError::Config("claim window must have t1c < t2c".into()));
        }
        if self.simulation.n_paths == 0 {
            return Err(HedgeError::Config("n_paths must be >= 1".into()));
        }
        self.solver.lrm().validate()?;
        if self.solver.bins_per_dim == 0 {
            return Err(HedgeError::Config("bins_per_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t_end, self.grid.n_steps)
    }

    /// Preflight warnings (small samples, thin bins).
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.simulation.n_paths < 1000 {
            w.push(format!(
                "n_paths = {} is small for criteria estimates (< 1000)",
                self.simulation.n_paths
            ));
        }
        let cells = self.solver.bins_per_dim.pow(self.model.factors.len() as u32);
        if self.simulation.n_paths < 10 * cells {
            w.push(format!(
                "n_paths = {} is below 10x the bin count {cells}; conditional moments will be noisy",
                self.simulation.n_paths
            ));
        }
        w
    }

    pub fn instruments_label(&self) -> String {
        self.assets.iter().map(|a| a.label.as_str()).collect::<Vec<_>>().join("+")
    }

    /// Output directory after the environment override.
    pub fn output_directory(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.outputs.directory.clone(),
        }
    }
}

/// Simulated inputs shared by both strategies of a run.
pub struct PreparedExperiment {
    pub grid: TimeGrid,
    pub paths: PathSet<Real>,
    pub prices: ExtendedPriceSet<Real>,
    pub payoff: Vec<Real>,
    pub path_checksum: u64,
}

/// FNV-1a over the bit patterns; stable fingerprint for the
/// common-random-numbers assertion.
fn checksum(parts: &[&[Real]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for v in *part {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    let grid = config.time_grid()?;
    let paths = simulate_paths::<Real>(
        &config.model.factors,
        &grid,
        config.simulation.n_paths,
        config.simulation.seed,
    )?;
    let prices = build_extended_prices(&paths, &config.assets, &config.model.factors)?;
    let payoff = asian_call_payoff(&paths, config.claim.t1c, config.claim.t2c, config.claim.strike)?;
    let path_checksum = checksum(&[
        paths.factor_values.as_slice().expect("contiguous"),
        paths.spot_values.as_slice().expect("contiguous"),
    ]);
    Ok(PreparedExperiment { grid, paths, prices, payoff, path_checksum })
}

/// Both strategies of a run, solved on common random numbers.
pub struct SolvedRun {
    pub liq: StrategySet<Real>,
    pub cls: StrategySet<Real>,
    pub liq_diagnostics: EngineDiagnostics,
    pub cls_diagnostics: EngineDiagnostics,
}

pub fn solve_strategies(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
) -> Result<SolvedRun> {
    let builder: Box<dyn PartitionBuilder<Real>> = match config.solver.bin_state {
        BinState::ClaimState => Box::new(
            ClaimStateBinning::new(
                &prepared.paths,
                config.claim.t1c,
                config.claim.t2c,
                config.solver.bins_per_dim,
            )?
            .with_value_bins(
                config.solver.value_bins_per_dim.unwrap_or(config.solver.bins_per_dim),
            ),
        ),
        BinState::Factors => Box::new(FactorBinning {
            paths: &prepared.paths,
            bins_per_dim: config.solver.bins_per_dim,
        }),
        BinState::Prices => Box::new(PriceBinning {
            prices: &prepared.prices,
            bins_per_dim: config.solver.bins_per_dim,
        }),
    };
    let liq_cfg = config.solver.lrm();
    let cls_cfg = LrmConfig { alpha: 0.0, ..liq_cfg };
    let before = checksum(&[prepared.paths.spot_values.as_slice().expect("contiguous")]);
    let (liq, liq_diagnostics) =
        backward_induction(&prepared.prices, &prepared.payoff, builder.as_ref(), &liq_cfg)?;
    let (cls, cls_diagnostics) =
        backward_induction(&prepared.prices, &prepared.payoff, builder.as_ref(), &cls_cfg)?;
    let after = checksum(&[prepared.paths.spot_values.as_slice().expect("contiguous")]);
    if before != after {
        return Err(HedgeError::invalid(
            "common random numbers violated: path set changed between strategies",
        ));
    }
    Ok(SolvedRun { liq, cls, liq_diagnostics, cls_diagnostics })
}

/// Everything a run produces, in memory.
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub prepared: PreparedExperiment,
    pub solved: SolvedRun,
    pub report_liq: CriteriaReport<Real>,
    pub report_cls: CriteriaReport<Real>,
    pub warnings: Vec<String>,
}

/// Files written by a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub criteria_csv: PathBuf,
    pub strategy_csv: PathBuf,
    pub diagnostics_json: PathBuf,
    pub manifest_json: PathBuf,
    pub paths_csv: Option<PathBuf>,
    pub prices_csv: Option<PathBuf>,
}

/// Execute the configured experiment without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    let prepared = prepare(config)?;
    let solved = solve_strategies(config, &prepared)?;
    let report_liq =
        evaluate_criteria(&solved.liq, &prepared.prices, &prepared.payoff, config.solver.alpha)?;
    let report_cls =
        evaluate_criteria(&solved.cls, &prepared.prices, &prepared.payoff, config.solver.alpha)?;

    let mut warnings = config.warnings();
    let kurt_h = excess_kurtosis(&prepared.payoff);
    if kurt_h > config.solver.kurtosis_warn {
        warnings.push(format!(
            "payoff excess kurtosis {kurt_h:.1} exceeds {}; fourth-moment conditions may fail",
            config.solver.kurtosis_warn
        ));
    }
    let n = prepared.prices.n_paths();
    let last = prepared.grid.n_steps;
    for j in 0..prepared.prices.n_assets() {
        let col: Vec<Real> = (0..n).map(|p| prepared.prices.prices[(p, last, j)]).collect();
        let kurt = excess_kurtosis(&col);
        if kurt > config.solver.kurtosis_warn {
            warnings.push(format!(
                "terminal price kurtosis {kurt:.1} for asset {} exceeds {}",
                prepared.prices.specs[j].label, config.solver.kurtosis_warn
            ));
        }
    }

    Ok(RunOutput { config: config.clone(), prepared, solved, report_liq, report_cls, warnings })
}

/// Run the experiment and write all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(RunOutput, RunArtifacts)> {
    let out = execute(config)?;
    let artifacts = write_artifacts(&out)?;
    Ok((out, artifacts))
}

/// Condition checks only: no solving.
pub fn run_condition_check(config: &ExperimentConfig) -> Result<ConditionSuiteReport> {
    let prepared = prepare(config)?;
    let builder = FactorBinning {
        paths: &prepared.paths,
        bins_per_dim: config.solver.bins_per_dim,
    };
    let mut inputs = Vec::with_capacity(prepared.grid.n_steps);
    for k in 0..prepared.grid.n_steps {
        let partition = builder.partition_at(k)?;
        inputs.push(collect_condition_inputs(k, &prepared.prices, &partition)?);
    }
    run_condition_suite(
        &inputs,
        &config.conditions.thresholds,
        config.conditions.mode.into(),
        config.solver.alpha,
    )
}

/// The enumeration-oracle suite, re-exported for the CLI.
pub fn oracle_suite() -> OracleReport {
    run_oracle_suite()
}

fn sci(v: impl std::fmt::UpperExp) -> String {
    format!("{v:.4E}")
}

fn write_deterministic(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents.as_bytes())?;
    Ok(())
}

/// Write criteria, strategy extract, diagnostics and manifest.
pub fn write_artifacts(out: &RunOutput) -> Result<RunArtifacts> {
    let dir = out.config.output_directory();
    fs::create_dir_all(&dir)?;
    let cfg = &out.config;
    let grid = out.prepared.grid;

    // criteria.csv: one row in the table layout plus standard errors.
    let mut csv = String::new();
    csv.push_str(
        "instruments,t0_liq,t0_cls,t0_tilde_liq,t0_tilde_cls,l0_liq,l0_cls,c0_liq,c0_cls,\
         se_t0_liq,se_t0_cls,se_t0_tilde_liq,se_t0_tilde_cls,se_l0_liq,se_l0_cls,se_c0_liq,se_c0_cls,\
         l0_bar_liq,l0_bar_cls,tv_liq,tv_cls\n",
    );
    let (l, c) = (&out.report_liq, &out.report_cls);
    let tv = |r: &CriteriaReport<Real>| r.strategy_variability.iter().map(|e| e.value).sum::<Real>();
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cfg.instruments_label(),
        sci(l.t0.value),
        sci(c.t0.value),
        sci(l.t0_tilde.value),
        sci(c.t0_tilde.value),
        sci(l.l0.value),
        sci(c.l0.value),
        sci(l.c0.value),
        sci(c.c0.value),
        sci(l.t0.std_error),
        sci(c.t0.std_error),
        sci(l.t0_tilde.std_error),
        sci(c.t0_tilde.std_error),
        sci(l.l0.std_error),
        sci(c.l0.std_error),
        sci(l.c0.std_error),
        sci(c.c0.std_error),
        sci(l.l0_bar.value),
        sci(c.l0_bar.value),
        sci(tv(l)),
        sci(tv(c)),
    );
    let criteria_csv = dir.join("criteria.csv");
    write_deterministic(&criteria_csv, &csv)?;

    // strategy_paths.csv: long format behind the per-trajectory figures.
    let mut s_csv = String::from("path,k,time,asset,x_liq,x_cls\n");
    let n_dump = cfg.outputs.strategy_dump_paths.min(out.prepared.paths.n_paths());
    for p in 0..n_dump {
        for k in 0..=grid.n_steps {
            for (j, spec) in out.prepared.prices.specs.iter().enumerate() {
                let _ = writeln!(
                    s_csv,
                    "{p},{k},{},{},{},{}",
                    sci(grid.time(k)),
                    spec.label,
                    sci(out.solved.liq.x[(p, k, j)]),
                    sci(out.solved.cls.x[(p, k, j)]),
                );
            }
        }
    }
    let strategy_csv = dir.join("strategy_paths.csv");
    write_deterministic(&strategy_csv, &s_csv)?;

    // diagnostics.json: solver events, criteria with errors, warnings.
    #[derive(Serialize)]
    struct Diagnostics<'a> {
        instruments: String,
        path_checksum: u64,
        report_liq: &'a CriteriaReport<Real>,
        report_cls: &'a CriteriaReport<Real>,
        engine_liq: &'a EngineDiagnostics,
        engine_cls: &'a EngineDiagnostics,
        warnings: &'a [String],
    }
    let diag = Diagnostics {
        instruments: cfg.instruments_label(),
        path_checksum: out.prepared.path_checksum,
        report_liq: &out.report_liq,
        report_cls: &out.report_cls,
        engine_liq: &out.solved.liq_diagnostics,
        engine_cls: &out.solved.cls_diagnostics,
        warnings: &out.warnings,
    };
    let diagnostics_json = dir.join("diagnostics.json");
    write_deterministic(
        &diagnostics_json,
        &serde_json::to_string_pretty(&diag).map_err(|e| HedgeError::Config(e.to_string()))?,
    )?;

    // manifest.json: everything needed to reproduce the run.
    #[derive(Serialize)]
    struct Manifest<'a> {
        version: &'static str,
        config: &'a ExperimentConfig,
        path_checksum: u64,
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        path_checksum: out.prepared.path_checksum,
    };
    let manifest_json = dir.join("manifest.json");
    write_deterministic(
        &manifest_json,
        &serde_json::to_string_pretty(&manifest).map_err(|e| HedgeError::Config(e.to_string()))?,
    )?;

    // Optional dumps.
    let paths_csv = if cfg.outputs.dump_paths {
        let path = dir.join("paths.csv");
        write_deterministic(&path, &paths_to_csv(&out.prepared.paths))?;
        Some(path)
    } else {
        None
    };
    let prices_csv = if cfg.outputs.dump_prices {
        let path = dir.join("prices.csv");
        write_deterministic(&path, &prices_to_csv(&out.prepared.prices))?;
        Some(path)
    } else {
        None
    };

    Ok(RunArtifacts {
        criteria_csv,
        strategy_csv,
        diagnostics_json,
        manifest_json,
        paths_csv,
        prices_csv,
    })
}

/// Simulated paths as CSV (factor values and spot per path and time).
pub fn paths_to_csv(paths: &PathSet<Real>) -> String {
    let mut csv = String::from("path,k,time");
    for i in 0..paths.n_factors() {
        let _ = write!(csv, ",factor_{i}");
    }
    csv.push_str(",spot\n");
    for p in 0..paths.n_paths() {
        for k in 0..paths.grid.len() {
            let _ = write!(csv, "{p},{k},{}", sci(paths.grid.time(k)));
            for i in 0..paths.n_factors() {
                let _ = write!(csv, ",{}", sci(paths.factor_values[(p, k, i)]));
            }
            let _ = writeln!(csv, ",{}", sci(paths.spot_values[(p, k)]));
        }
    }
    csv
}

pub fn prices_to_csv(prices: &ExtendedPriceSet<Real>) -> String {
    let mut csv = String::from("path,k,time");
    for spec in &prices.specs {
        let _ = write!(csv, ",{}", spec.label);
    }
    csv.push('\n');
    for p in 0..prices.n_paths() {
        for k in 0..prices.grid.len() {
            let _ = write!(csv, "{p},{k},{}", sci(prices.grid.time(k)));
            for j in 0..prices.n_assets() {
                let _ = write!(csv, ",{}", sci(prices.prices[(p, k, j)]));
            }
            csv.push('\n');
        }
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL_CONFIG: &str = r#"
[grid]
t_end = 0.1
n_steps = 40

[[model.factors]]
lambda = 0.01
sigma = 0.34
y0 = 0.5
driver = { kind = "gamma_process", gamma = 1.0, alpha = 1.0 }

[[model.factors]]
lambda = 0.1
sigma = 0.01
y0 = 0.5
driver = { kind = "compound_poisson", gamma = 1.0, alpha = 0.1 }

[[assets]]
label = "F2"
t1f = 0.0125
t2f = 0.1
kind = "constant"
m = 0.01
n = 0.01

[[assets]]
label = "F1"
t1f = 0.0125
t2f = 0.05
kind = "constant"
m = 0.01
n = 0.01

[claim]
t1c = 0.0125
t2c = 0.1
strike = 1.05

[solver]
alpha = 1.0
bins_per_dim = 4

[simulation]
n_paths = 2000
seed = 7
"#;

    #[test]
    fn config_round_trip_and_sorting() {
        let cfg = ExperimentConfig::from_toml_str(SMALL_CONFIG).unwrap();
        // Assets re-sorted by maturity, labels preserved.
        assert_eq!(cfg.assets[0].label, "F1");
        assert_eq!(cfg.assets[1].label, "F2");
        assert_eq!(cfg.instruments_label(), "F1+F2");
        assert_eq!(cfg.solver.bins_per_dim, 4);
        assert_eq!(cfg.solver.alpha, 1.0);
        assert_eq!(cfg.simulation.seed, 7);
    }

    #[test]
    fn off_grid_dates_rejected() {
        let bad = SMALL_CONFIG.replace("t1f = 0.0125", "t1f = 0.013");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn run_produces_consistent_reports() {
        let cfg = ExperimentConfig::from_toml_str(SMALL_CONFIG).unwrap();
        let out = execute(&cfg).unwrap();
        // t0 = t0_tilde + l0 to machine precision, for both strategies.
        for r in [&out.report_liq, &out.report_cls] {
            assert!(
                (r.t0.value - (r.t0_tilde.value + r.l0.value)).abs()
                    <= 1e-15 * r.t0.value.max(1e-30)
            );
            assert!(r.l0.value >= 0.0);
        }
        // Classical strategy ignores liquidity, so it pays more of it.
        assert!(out.report_cls.l0.value > out.report_liq.l0.value);
    }

    #[test]
    fn zero_liquidity_makes_strategies_identical() {
        let zero = SMALL_CONFIG
            .replace("kind = \"constant\"\nm = 0.01\nn = 0.01", "kind = \"zero\"")
            .replace("n_paths = 2000", "n_paths = 500");
        let cfg = ExperimentConfig::from_toml_str(&zero).unwrap();
        let out = execute(&cfg).unwrap();
        assert_eq!(out.solved.liq.x, out.solved.cls.x);
        assert_eq!(out.report_liq.l0.value, 0.0);
        assert_eq!(out.report_cls.l0.value, 0.0);
    }

    #[test]
    fn artifacts_are_reproducible_across_runs_and_threads() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(SMALL_CONFIG).unwrap();
        cfg.simulation.n_paths = 800;
        cfg.outputs.directory = tmp.path().join("a");
        cfg.outputs.dump_paths = true;
        let run_with = |cfg: &ExperimentConfig, threads: usize| {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_experiment(cfg).unwrap())
        };
        let (_, a) = run_with(&cfg, 1);
        let mut cfg_b = cfg.clone();
        cfg_b.outputs.directory = tmp.path().join("b");
        let (_, b) = run_with(&cfg_b, 4);
        for (x, y) in [
            (&a.criteria_csv, &b.criteria_csv),
            (&a.strategy_csv, &b.strategy_csv),
            (&a.diagnostics_json, &b.diagnostics_json),
            (a.paths_csv.as_ref().unwrap(), b.paths_csv.as_ref().unwrap()),
        ] {
            let fa = fs::read(x).unwrap();
            let fb = fs::read(y).unwrap();
            assert_eq!(fa, fb, "artifact mismatch: {x:?} vs {y:?}");
        }
        // Manifests differ only in the output directory they echo.
        let ma = fs::read_to_string(&a.manifest_json).unwrap().replace("/a\"", "/x\"");
        let mb = fs::read_to_string(&b.manifest_json).unwrap().replace("/b\"", "/x\"");
        assert_eq!(ma, mb);
    }

    #[test]
    fn condition_check_runs() {
        // Bins need enough paths to catch jumps of the rare-jump driver,
        // otherwise sample covariances are legitimately rank-deficient.
        let mut cfg = ExperimentConfig::from_toml_str(SMALL_CONFIG).unwrap();
        cfg.simulation.n_paths = 20_000;
        cfg.solver.bins_per_dim = 2;
        let report = run_condition_check(&cfg).unwrap();
        assert!(report.mean_variance.pass, "worst ratio {}", report.mean_variance.worst);
        assert!(report.positive_definite.pass, "worst margin {}", report.positive_definite.worst);
        assert!(report.f_property.pass, "boundary {}", report.f_property.worst);
        assert!(report.f_diagonal_1.pass && report.f_diagonal_2.pass);
    }

    #[test]
    fn truncated_multi_asset_rejected() {
        let bad = SMALL_CONFIG.replace(
            "label = \"F1\"\nt1f = 0.0125\nt2f = 0.05\nkind = \"constant\"\nm = 0.01\nn = 0.01",
            "label = \"F1\"\nt1f = 0.0125\nt2f = 0.05\nkind = \"constant\"\nm = 0.01\nn = 0.01\nfloor_fraction = 10.0",
        );
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }
}
