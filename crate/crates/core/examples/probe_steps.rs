use lrm_hedge::experiment::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_paths: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let bins: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let assets: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let asset_block = if assets == 1 {
        r#"
[[assets]]
label = "F2"
t1f = 0.0125
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
    let text = format!(
        r#"
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
{asset_block}
[claim]
t1c = 0.0125
t2c = 0.1
strike = 1.05

[solver]
alpha = 1.0
bins_per_dim = {bins}

[simulation]
n_paths = {n_paths}
seed = 20180228
"#
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let prepared = prepare(&cfg).unwrap();
    let solved = solve_strategies(&cfg, &prepared).unwrap();
    let n = prepared.prices.n_paths();
    let steps = prepared.grid.n_steps;
    let d = prepared.prices.n_assets();

    for sd in solved.cls_diagnostics.steps.iter().rev() {
        if sd.step % 8 == 0 {
            println!("step {} n_bins {} occ [{}, {}]", sd.step, sd.n_bins, sd.min_occupancy, sd.max_occupancy);
        }
    }
    println!("per-step stats (classical | liquidity-aware), {n_paths} paths, {bins} bins/dim, {d} asset(s)");
    println!("{:>3} {:>10} {:>10} {:>10} {:>10} {:>12} {:>12}", "k", "max|Xc|", "sd(Xc)", "max|Xl|", "sd(Xl)", "E dC^2 (C)", "E dC^2 (L)");
    for k in 0..steps {
        let stats = |strat: &lrm_hedge::engine::StrategySet<f64>| -> (f64, f64, f64) {
            let mut max_x: f64 = 0.0;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            let mut dc2 = 0.0;
            for p in 0..n {
                let mut gains = 0.0;
                for j in 0..d {
                    let x = strat.x[(p, k, j)];
                    max_x = max_x.max(x.abs());
                    sum += x;
                    sumsq += x * x;
                    gains += x * (prepared.prices.prices[(p, k + 1, j)] - prepared.prices.prices[(p, k, j)]);
                }
                let dc = strat.v[(p, k + 1)] - strat.v[(p, k)] - gains;
                dc2 += dc * dc;
            }
            let mean = sum / (n * d) as f64;
            let var = (sumsq / (n * d) as f64 - mean * mean).max(0.0);
            (max_x, var.sqrt(), dc2 / n as f64)
        };
        let (mc, sc, dc2c) = stats(&solved.cls);
        let (ml, sl, dc2l) = stats(&solved.liq);
        println!("{k:>3} {mc:>10.3} {sc:>10.3} {ml:>10.3} {sl:>10.3} {dc2c:>12.3e} {dc2l:>12.3e}");
    }
}
// quick check of partition sizes per step (appended main2 via env flag)
