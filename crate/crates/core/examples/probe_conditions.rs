use lrm_hedge::diagnostics::*;
use lrm_hedge::engine::{FactorBinning, PartitionBuilder};
use lrm_hedge::experiment::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_paths: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let bins: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let distinct = args.get(3).map(|s| s == "distinct").unwrap_or(true);

    let assets = if distinct {
        // F1 [0.0125, 0.05], F3 [0.05, 0.1]: distinct delivery starts
        r#"
[[assets]]
label = "F1"
t1f = 0.0125
t2f = 0.05
kind = "constant"
m = 0.01
n = 0.01

[[assets]]
label = "F3"
t1f = 0.05
t2f = 0.1
kind = "constant"
m = 0.01
n = 0.01
"#
    } else {
        r#"
[[assets]]
label = "F1"
t1f = 0.0125
t2f = 0.05
kind = "constant"
m = 0.01
n = 0.01

[[assets]]
label = "F2"
t1f = 0.0125
t2f = 0.1
kind = "constant"
m = 0.01
n = 0.01
"#
    };
    let cfg_text = format!(r#"
[grid]
t_end = 0.1
n_steps = 40

[[model.factors]]
lambda = 0.01
sigma = 0.34
y0 = 0.5
driver = {{ kind = "gamma_process", gamma = 1.0, alpha = 1.0 }}

[[model.factors]]
lambda = 0.1
sigma = 0.01
y0 = 0.5
driver = {{ kind = "compound_poisson", gamma = 1.0, alpha = 0.1 }}
{assets}
[claim]
t1c = 0.0125
t2c = 0.1
strike = 1.05

[solver]
bins_per_dim = {bins}

[simulation]
n_paths = {n_paths}
seed = 42
"#);
    let cfg = ExperimentConfig::from_toml_str(&cfg_text).unwrap();
    let prepared = prepare(&cfg).unwrap();
    let builder = FactorBinning { paths: &prepared.paths, bins_per_dim: bins };
    let mut inputs = Vec::new();
    for k in 0..prepared.grid.n_steps {
        let partition = builder.partition_at(k).unwrap();
        inputs.push(collect_condition_inputs(k, &prepared.prices, &partition).unwrap());
    }
    let th = ConditionThresholds::default();
    let suite = run_condition_suite(&inputs, &th, FPropertyMode::PrincipalMinors, 1.0).unwrap();
    println!("== PD: pass {} worst {:.3e}", suite.positive_definite.pass, suite.positive_definite.worst);
    for s in &suite.positive_definite.steps {
        if s.pass_fraction < 1.0 || !s.pass {
            println!("  step {}: worst {:.3e} frac {:.3} degen {} pass {}", s.step, s.worst, s.pass_fraction, s.degenerate_bins, s.pass);
        }
    }
    println!("== F-prop: pass {} worst-boundary {:.6}", suite.f_property.pass, suite.f_property.worst);
    for s in &suite.f_property.steps {
        if s.pass_fraction < 0.999 || !s.pass {
            println!("  step {}: boundary {:.6} frac {:.3} pass {}", s.step, s.worst, s.pass_fraction, s.pass);
        }
    }
    println!("== MV tradeoff: pass {} worst {:.3e}", suite.mean_variance.pass, suite.mean_variance.worst);
    println!("== F-diag1: pass {} min {:.3e} | F-diag2: pass {} min {:.3e}",
        suite.f_diagonal_1.pass, suite.f_diagonal_1.worst, suite.f_diagonal_2.pass, suite.f_diagonal_2.worst);
    println!("== boundedness: a {:.3e} b {:.3e} ae {:.3e} be {:.3e} skipped {}",
        suite.boundedness.max_alpha, suite.boundedness.max_beta, suite.boundedness.max_alpha_eps,
        suite.boundedness.max_beta_eps, suite.boundedness.skipped_singular);
}
