use lrm_hedge::experiment::*;

fn config(
    assets: &[(&str, f64, f64)],
    claim: (f64, f64),
    time_varying: bool,
    n_steps: usize,
    n_paths: usize,
    bins: usize,
    seed: u64,
    ridge: f64,
    vbins: usize,
) -> ExperimentConfig {
    let mut asset_blocks = String::new();
    for (label, t1f, t2f) in assets {
        if time_varying {
            asset_blocks.push_str(&format!(
                "[[assets]]\nlabel = \"{label}\"\nt1f = {t1f}\nt2f = {t2f}\nkind = \"time_varying\"\nm = 0.005\nn = 0.01\ndelta = 1e-6\n\n"
            ));
        } else {
            asset_blocks.push_str(&format!(
                "[[assets]]\nlabel = \"{label}\"\nt1f = {t1f}\nt2f = {t2f}\nkind = \"constant\"\nm = 0.01\nn = 0.01\n\n"
            ));
        }
    }
    let text = format!(
        r#"
[grid]
t_end = 0.1
n_steps = {n_steps}

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

{asset_blocks}
[claim]
t1c = {}
t2c = {}
strike = 1.05

[solver]
alpha = 1.0
bins_per_dim = {bins}
value_bins_per_dim = {vbins}
variance_ridge = {ridge}

[simulation]
n_paths = {n_paths}
seed = {seed}
"#,
        claim.0, claim.1
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_paths: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let n_steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let bins: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20180228);
    let ridge: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let vbins: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(250);

    let f1 = ("F1", 0.0125, 0.05);
    let f2 = ("F2", 0.0125, 0.1);
    let f3 = ("F3", 0.05, 0.1);
    let g1 = ("G1", 0.05, 0.075);
    let g2 = ("G2", 0.05, 0.1);
    let g3 = ("G3", 0.0125, 0.05);
    let s1 = (0.0125, 0.1);
    let s2 = (0.05, 0.1);

    // (name, assets, claim, tv, table row [t0l, t0c, ttl, ttc, l0l, l0c, c0l, c0c])
    let rows: Vec<(&str, Vec<(&str, f64, f64)>, (f64, f64), bool, [f64; 8])> = vec![
        ("T1 F2", vec![f2], s1, false, [2.19e-3, 4.79e-2, 2.03e-3, 3.40e-4, 1.56e-4, 4.76e-2, 1.09e-2, 9.29e-3]),
        ("T1 F1F2", vec![f1, f2], s1, false, [1.86e-3, 3.64e-2, 1.67e-3, 2.92e-4, 1.88e-4, 3.61e-2, 1.07e-2, 9.19e-3]),
        ("T1 F1F3", vec![f1, f3], s1, false, [1.51e-3, 1.59e-2, 1.31e-3, 2.20e-4, 2.01e-4, 1.57e-2, 1.05e-2, 8.92e-3]),
        ("T2 F2", vec![f2], s1, true, [1.63e-3, 4.11e-2, 1.49e-3, 3.40e-4, 1.40e-4, 4.08e-2, 1.05e-2, 9.29e-3]),
        ("T2 F1F2", vec![f1, f2], s1, true, [1.56e-3, 3.58e-2, 1.35e-3, 2.92e-4, 2.10e-4, 3.55e-2, 1.04e-2, 9.19e-3]),
        ("T2 F1F3", vec![f1, f3], s1, true, [7.09e-4, 1.28e-2, 4.50e-4, 2.20e-4, 2.59e-4, 1.26e-2, 9.66e-3, 8.92e-3]),
        ("T3 G2", vec![g2], s2, false, [3.22e-3, 2.30e-2, 2.99e-3, 7.75e-4, 2.28e-4, 2.23e-2, 1.60e-2, 1.41e-2]),
        ("T3 G1G2", vec![g1, g2], s2, false, [2.33e-3, 8.03e-3, 2.06e-3, 5.21e-4, 2.68e-4, 7.51e-3, 1.55e-2, 1.39e-2]),
        ("T3 G2G3", vec![g2, g3], s2, false, [2.95e-3, 1.52e-2, 2.69e-3, 7.12e-4, 2.55e-4, 1.45e-2, 1.58e-2, 1.40e-2]),
        ("T4 G2", vec![g2], s2, true, [1.66e-3, 1.45e-2, 1.49e-3, 7.75e-4, 1.69e-4, 1.37e-2, 1.50e-2, 1.41e-2]),
        ("T4 G1G2", vec![g1, g2], s2, true, [1.32e-3, 4.64e-3, 1.13e-3, 5.21e-4, 1.92e-4, 4.12e-3, 1.47e-2, 1.39e-2]),
        ("T4 G2G3", vec![g2, g3], s2, true, [1.63e-3, 1.25e-2, 1.39e-3, 7.12e-4, 2.39e-4, 1.18e-2, 1.49e-2, 1.40e-2]),
    ];

    let t_start = std::time::Instant::now();
    println!("n_paths {n_paths} n_steps {n_steps} bins {bins} vbins {vbins} seed {seed} ridge {ridge}");
    println!("{:9} | {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} | orderings", "row",
        "t0L", "t0C", "ttL", "ttC", "l0L", "l0C", "c0L", "c0C");
    let mut worst_ratio = 0.0f64;
    for (name, assets, claim, tv, table) in rows {
        let cfg = config(&assets, claim, tv, n_steps, n_paths, bins, seed, ridge, vbins);
        let out = execute(&cfg).unwrap();
        let l = &out.report_liq;
        let c = &out.report_cls;
        let got = [
            l.t0.value, c.t0.value, l.t0_tilde.value, c.t0_tilde.value,
            l.l0.value, c.l0.value, l.c0.value, c.c0.value,
        ];
        let ratios: Vec<f64> = got.iter().zip(table).map(|(g, t)| g / t).collect();
        for r in &ratios {
            worst_ratio = worst_ratio.max(r.max(1.0 / r));
        }
        let ord = [
            ("t0L<t0C", l.t0.value < c.t0.value),
            ("ttC<=ttL", c.t0_tilde.value <= l.t0_tilde.value),
            ("l0L<l0C", l.l0.value < c.l0.value),
            ("c0L>=c0C", l.c0.value >= c.c0.value),
        ];
        println!(
            "{name:9} | {:9.2e} {:9.2e} {:9.2e} {:9.2e} {:9.2e} {:9.2e} {:9.2e} {:9.2e} | {}",
            got[0], got[1], got[2], got[3], got[4], got[5], got[6], got[7],
            ord.iter().map(|(n, ok)| if *ok { format!("{n} ok") } else { format!("{n} FAIL") }).collect::<Vec<_>>().join(", ")
        );
        println!(
            "{:9} | {:9.2} {:9.2} {:9.2} {:9.2} {:9.2} {:9.2} {:9.2} {:9.2} | ratio vs table",
            "", ratios[0], ratios[1], ratios[2], ratios[3], ratios[4], ratios[5], ratios[6], ratios[7]
        );
    }
    println!("worst |ratio| vs table: {worst_ratio:.2}");
    println!("elapsed: {:?}", t_start.elapsed());
}
