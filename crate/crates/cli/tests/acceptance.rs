//! Acceptance gate. Each test prints one `criterion N ... PASS|FAIL` line
//! and fails when its criterion does not hold.
//!
//! `cargo test -p countycast-cli --test acceptance -- --include-ignored --nocapture`

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use countycast::arima::{adf_test, arima_forecast, fit_arima, Order};
use countycast::dataset::{compliance_score, diversity_index, generate_synthetic_panel, SynthSpec};
use countycast::eval::{
    aggregate_state, backtest, chronological_folds, make_windows, rmse_macro_micro, ForecastTask, ModelSpec, Objective,
};
use countycast::forecast::{backward, train, DwlstmConfig, Params, Tensor, TrainingWindow};
use countycast::pca::{components_for_variance, eigen_sym, PcaModel, PcaOptions};
use countycast::stats::{kendall, pearson, spearman};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn gate(n: usize, name: &str, limit_s: f64, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let r = f();
    let secs = t.elapsed().as_secs_f64();
    let (verdict, detail) = match &r {
        Ok(d) if secs <= limit_s => ("PASS", d.clone()),
        Ok(d) => ("FAIL", format!("{d}; took {secs:.1}s, limit {limit_s}s")),
        Err(d) => ("FAIL", d.clone()),
    };
    println!("criterion {n} {name}: {verdict} ({detail}; {secs:.1}s)");
    assert_eq!(verdict, "PASS", "criterion {n}: {detail}");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_formula_fidelity() {
    gate(1, "formula fidelity", 1.0, || {
        // 1 - sum (n_i / N)^2 written out by hand
        let cases: [(&[f64], f64); 3] = [(&[100.0], 0.0), (&[50.0, 50.0], 0.5), (&[25.0, 25.0, 25.0, 25.0], 0.75)];
        for (counts, want) in cases {
            let got = diversity_index(counts).map_err(|e| e.to_string())?;
            ensure((got - want).abs() <= 1e-12, || format!("diversity {counts:?} = {got}"))?;
        }
        // -1 - (mean(m) - 100) / 100
        for (m, want) in [(-100.0, 1.0), (100.0, -1.0), (0.0, 0.0)] {
            let got = compliance_score(&[m; 6]).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("compliance at {m}% = {got}"))?;
        }
        let m = [-40.0, -35.0, 10.0, 5.0, -60.0, 12.0];
        let mean = m.iter().sum::<f64>() / 6.0;
        let got = compliance_score(&m).map_err(|e| e.to_string())?;
        ensure((got - (-1.0 - (mean - 100.0) / 100.0)).abs() <= 1e-12, || {
            format!("compliance {got}")
        })?;
        Ok("diversity and compliance examples exact".into())
    });
}

// ---------------------------------------------------------------- 2

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
fn ranks_by_counting(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len();
    let mut net = 0i64;
    for i in 0..m {
        for j in i + 1..m {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            net += (s > 0.0) as i64 - (s < 0.0) as i64;
        }
    }
    net as f64 / (m * (m - 1) / 2) as f64
}

// Two-sided Student-t tail: Simpson quadrature of cos^(df-1) over the
// angle a = atan(t / sqrt(df)).
fn t_tail(t: f64, df: f64) -> f64 {
    let f = |a: f64| a.cos().powf(df - 1.0);
    let simpson = |hi: f64| {
        let n = 4000;
        let h = hi / n as f64;
        let mut s = f(0.0) + f(hi);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    1.0 - simpson((t.abs() / df.sqrt()).atan()) / simpson(std::f64::consts::FRAC_PI_2)
}

#[test]
fn criterion_2_correlation_oracles() {
    gate(2, "correlation oracles", 10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst_p: f64 = 0.0;
        for trial in 0..100 {
            let m = rng.random_range(3..=50);
            // odd trials draw from a small grid so ties occur
            let draw = |rng: &mut ChaCha8Rng| {
                if trial % 2 == 1 {
                    rng.random_range(0..6) as f64
                } else {
                    rng.random::<f64>()
                }
            };
            let x: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
            let y: Vec<f64> = x.iter().map(|v| 0.3 * v + draw(&mut rng)).collect();
            let vary = |v: &[f64]| v.iter().any(|&a| a != v[0]);
            if !vary(&x) || !vary(&y) {
                continue;
            }

            let r = pearson(&x, &y).map_err(|e| e.to_string())?;
            let want = pearson_oracle(&x, &y);
            ensure((r.statistic - want).abs() <= 1e-12, || format!("pearson trial {trial}"))?;
            if want.abs() < 1.0 {
                let df = (m - 2) as f64;
                let t = want * (df / (1.0 - want * want)).sqrt();
                let p = r.p_value.ok_or("pearson p-value missing")?;
                let d = (p - t_tail(t, df)).abs();
                worst_p = worst_p.max(d);
                ensure(d <= 1e-6, || format!("p-value trial {trial} off by {d:e}"))?;
            }

            let s = spearman(&x, &y).map_err(|e| e.to_string())?.statistic;
            let want = pearson_oracle(&ranks_by_counting(&x), &ranks_by_counting(&y));
            ensure((s - want).abs() <= 1e-12, || {
                format!("spearman trial {trial}: {s} vs {want}")
            })?;

            let k = kendall(&x, &y).map_err(|e| e.to_string())?.statistic;
            let want = kendall_oracle(&x, &y);
            ensure((k - want).abs() <= 1e-12, || {
                format!("kendall trial {trial}: {k} vs {want}")
            })?;
        }
        Ok(format!("100 vectors, worst p-value gap {worst_p:.1e}"))
    });
}

// ---------------------------------------------------------------- 3

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn criterion_3_pca() {
    gate(3, "pca", 30.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 10, 20, 35, 50] {
            let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let s = (&a + &a.t()) / 2.0;
            let (l, v) = eigen_sym(s.view()).map_err(|e| e.to_string())?;
            let ortho = max_abs(&(v.t().dot(&v) - Array2::<f64>::eye(n)));
            ensure(ortho <= 1e-9, || format!("orthonormality {ortho:e} at n={n}"))?;
            let recon = v.dot(&Array2::from_diag(&Array1::from(l))).dot(&v.t());
            let err = max_abs(&(recon - &s));
            ensure(err <= 1e-8, || format!("reconstruction {err:e} at n={n}"))?;

            let x = Array2::from_shape_fn((n + 30, n), |_| normal(&mut rng));
            let names: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
            let model = PcaModel::fit(x.view(), &names, &PcaOptions::default()).map_err(|e| e.to_string())?;
            let total: f64 = model.explained_variance_ratio.iter().sum();
            ensure((total - 1.0).abs() <= 1e-9, || format!("ratio sum {total} at n={n}"))?;
        }

        let sd = [3.0, 2.0, 1.0, 0.5];
        let x = Array2::from_shape_fn((2000, 4), |(_, j)| sd[j] * normal(&mut rng));
        let names: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let options = PcaOptions {
            standardize: false,
            ..PcaOptions::default()
        };
        let model = PcaModel::fit(x.view(), &names, &options).map_err(|e| e.to_string())?;
        let var: f64 = sd.iter().map(|s| s * s).sum();
        for (j, s) in sd.iter().enumerate() {
            let gap = (model.explained_variance_ratio[j] - s * s / var).abs();
            ensure(gap <= 0.02, || format!("diagonal ratio {j} off by {gap}"))?;
        }

        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let mut raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(2)).collect();
            raw.sort_by(|a, b| b.total_cmp(a));
            let sum: f64 = raw.iter().sum();
            let ratios: Vec<f64> = raw.iter().map(|r| r / sum).collect();
            let frac = rng.random_range(0.05..0.99);
            let mut acc = 0.0;
            let oracle = ratios
                .iter()
                .position(|r| {
                    acc += r;
                    acc >= frac
                })
                .map_or(n, |i| i + 1);
            let k = components_for_variance(&ratios, frac).0;
            ensure(k == oracle, || format!("components_for_variance {k} vs {oracle}"))?;
        }
        Ok("eigen checks to 50x50, diagonal ratios, 50 spectra".into())
    });
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_network_gradients() {
    gate(4, "network gradients", 60.0, || {
        let mut worst: f64 = 0.0;
        for seed in 0..24u64 {
            let c = DwlstmConfig {
                w_in: 2 + seed as usize % 4,
                w_out: 1 + seed as usize % 3,
                dynamic_size: 1 + seed as usize % 3,
                static_size: 1 + seed as usize % 2,
                dyn_proj: 2 + seed as usize % 2,
                static_proj: 1 + seed as usize % 3,
                hidden: 2 + seed as usize % 3,
                target_history: seed % 5 != 0,
                seed,
                ..DwlstmConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let mut p = Params::<f64>::init(&c);
            for v in p.data.iter_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
            let w = TrainingWindow {
                county: 0,
                start: 0,
                dynamic: (0..c.w_in * c.dynamic_size)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
                history: (0..c.w_in).map(|_| rng.random_range(-1.0..2.0)).collect(),
                statics: (0..c.static_size).map(|_| rng.random_range(-1.0..1.0)).collect(),
                targets: (0..c.w_out).map(|_| rng.random_range(-1.0..2.0)).collect(),
            };
            let l2 = if seed % 2 == 0 { 0.0 } else { 1e-2 };
            let (theta, alpha) = (0.5, 4.0);
            let loss = |q: &Params<f64>| {
                backward(q, &w, c.target_history, theta, alpha, l2)
                    .map(|r| r.0)
                    .map_err(|e| e.to_string())
            };
            let (_, grad) = backward(&p, &w, c.target_history, theta, alpha, l2).map_err(|e| e.to_string())?;
            let h = 1e-5;
            for t in Tensor::ALL {
                let (mut diff, mut scale): (f64, f64) = (0.0, 1e-8);
                for k in p.layout.range(t) {
                    let keep = p.data[k];
                    p.data[k] = keep + h;
                    let up = loss(&p)?;
                    p.data[k] = keep - h;
                    let down = loss(&p)?;
                    p.data[k] = keep;
                    let num = (up - down) / (2.0 * h);
                    diff = diff.max((num - grad[k]).abs());
                    scale = scale.max(num.abs()).max(grad[k].abs());
                }
                let rel = diff / scale;
                worst = worst.max(rel);
                ensure(rel < 1e-4, || {
                    format!("seed {seed} tensor {}: relative error {rel:e}", t.name())
                })?;
            }
        }
        Ok(format!("24 configs, worst relative error {worst:.1e}"))
    });
}

// ---------------------------------------------------------------- 5, 6

fn synthetic_task(beta: f64) -> Result<(countycast::FeaturePanel, ForecastTask), String> {
    let panel = generate_synthetic_panel(&SynthSpec::new(30, 120, beta), 7).map_err(|e| e.to_string())?;
    let task = ForecastTask::last_days(&panel, Objective::NewDailyCases, 10, 10, 10).map_err(|e| e.to_string())?;
    Ok((panel, task))
}

#[test]
fn criterion_5_training_convergence() {
    gate(5, "training convergence", 180.0, || {
        let (panel, task) = synthetic_task(0.9)?;
        let cfg = DwlstmConfig {
            seed: 1,
            ..DwlstmConfig::default()
        };
        let a = train(&panel, &task, &cfg).map_err(|e| e.to_string())?;
        let b = train(&panel, &task, &cfg).map_err(|e| e.to_string())?;
        ensure(a.to_json() == b.to_json(), || "identical-seed runs differ".into())?;
        let first = a.log[0].train_loss;
        let last = a.final_train_loss().ok_or("no kept epoch")?;
        let epochs = a.log.len() - 1;
        let ratio = last / first;
        ensure(epochs <= 200 && ratio <= 0.2, || {
            format!("final/epoch-0 train loss {last:.4}/{first:.4} = {ratio:.3} after {epochs} epochs")
        })?;
        Ok(format!(
            "final/epoch-0 train loss {ratio:.3} after {epochs} epochs, runs identical"
        ))
    });
}

fn rmse_pair(beta: f64) -> Result<(f64, f64), String> {
    let (panel, task) = synthetic_task(beta)?;
    let spec = ModelSpec {
        dwlstm: Some(DwlstmConfig {
            seed: 1,
            ..DwlstmConfig::default()
        }),
        arima_star: true,
        arima_120: false,
        ..ModelSpec::default()
    };
    let r = backtest(&panel, &task, &spec).map_err(|e| e.to_string())?;
    let d = r.model("dwlstm").ok_or("no dwlstm row")?.macro_rmse;
    let a = r.model("arima_star").ok_or("no arima_star row")?.macro_rmse;
    Ok((d, a))
}

#[test]
#[ignore = "red: DWLSTM does not reach 0.8x ARIMA* on the beta=0.9 backtest, see README"]
fn criterion_6_direction_of_effect() {
    gate(6, "direction of effect", 300.0, || {
        let (d9, a9) = rmse_pair(0.9)?;
        let (d0, a0) = rmse_pair(0.0)?;
        let detail = format!(
            "beta 0.9: dwlstm {d9:.3} / arima* {a9:.3} = {:.3} (need <= 0.8); \
             beta 0: dwlstm {d0:.3} / arima* {a0:.3} = {:.3} (need within 25%)",
            d9 / a9,
            d0 / a0
        );
        let close = (d0 - a0).abs() <= 0.25 * d0.max(a0);
        ensure(d9 <= 0.8 * a9 && close, || detail.clone())?;
        Ok(detail)
    });
}

// ---------------------------------------------------------------- 7

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| normal(&mut rng)).collect()
}

fn cumsum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |a, x| {
            *a += x;
            Some(*a)
        })
        .collect()
}

#[test]
fn criterion_7_arima() {
    gate(7, "arima", 60.0, || {
        let mut ar_hits = 0;
        for seed in 0..10 {
            let e = noise(600, 700 + seed);
            let mut y = vec![0.0; 600];
            for t in 1..600 {
                y[t] = 0.7 * y[t - 1] + e[t];
            }
            let m = fit_arima(&y[100..], Order::new(1, 0, 0)).map_err(|e| e.to_string())?;
            ar_hits += ((m.ar[0] - 0.7).abs() <= 0.1) as usize;
        }
        let (mut rejects, mut keeps) = (0, 0);
        for seed in 0..100 {
            let e = noise(300, 7000 + seed);
            rejects += adf_test(&e, 15).map_err(|e| e.to_string())?.reject as usize;
            keeps += !adf_test(&cumsum(&e), 15).map_err(|e| e.to_string())?.reject as usize;
        }
        let mut walk = cumsum(&noise(200, 77));
        *walk.last_mut().unwrap() = 12.5;
        let m = fit_arima(&walk, Order::new(0, 1, 0)).map_err(|e| e.to_string())?;
        let fc = arima_forecast(&m, &walk, 10, false).map_err(|e| e.to_string())?;
        let detail = format!("AR(1) {ar_hits}/10, ADF rejects noise {rejects}/100, keeps walk {keeps}/100");
        ensure(ar_hits >= 8 && rejects >= 95 && keeps >= 90, || detail.clone())?;
        ensure(fc.point.iter().all(|&p| p == 12.5), || {
            format!("walk forecast {:?}", fc.point)
        })?;
        Ok(detail + ", walk forecast exact")
    });
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_evaluation_algebra() {
    gate(8, "evaluation algebra", 10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let counties = rng.random_range(1..10);
            let len = rng.random_range(1..15);
            let pred: Vec<Vec<f64>> = (0..counties)
                .map(|_| (0..len).map(|_| rng.random_range(-20.0..20.0)).collect())
                .collect();
            let truth: Vec<Vec<f64>> = (0..counties)
                .map(|_| (0..len).map(|_| rng.random_range(-20.0..20.0)).collect())
                .collect();
            let (ma, mi) = rmse_macro_micro(&pred, &truth).map_err(|e| e.to_string())?;
            let mse: Vec<f64> = pred
                .iter()
                .zip(&truth)
                .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / len as f64)
                .collect();
            let pooled = mse.iter().sum::<f64>() / counties as f64;
            ensure((mi * mi - pooled).abs() <= 1e-10 * (1.0 + pooled), || {
                format!("micro^2 {} vs {pooled}", mi * mi)
            })?;
            if counties == 1 {
                ensure(ma == mi, || format!("single county macro {ma} micro {mi}"))?;
            }
        }

        let one = generate_synthetic_panel(&SynthSpec::new(1, 70, 0.9), 8).map_err(|e| e.to_string())?;
        let task = ForecastTask::last_days(&one, Objective::NewDailyCases, 7, 5, 5).map_err(|e| e.to_string())?;
        let spec = ModelSpec {
            dwlstm: None,
            arima_star: true,
            arima_120: true,
            ..ModelSpec::default()
        };
        let r = backtest(&one, &task, &spec).map_err(|e| e.to_string())?;
        for m in &r.models {
            ensure(m.macro_rmse == m.micro_rmse, || {
                format!("{} macro != micro on one county", m.model)
            })?;
        }

        let panel = generate_synthetic_panel(&SynthSpec::new(15, 90, 0.5), 9).map_err(|e| e.to_string())?;
        for objective in Objective::ALL {
            let outcome = objective.outcome();
            let rows: Vec<Vec<f64>> = (0..panel.n_counties())
                .map(|c| panel.outcome_series(c, outcome))
                .collect();
            let mut direct: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (k, row) in panel.counties().iter().zip(&rows) {
                let acc = direct
                    .entry(k.state().to_string())
                    .or_insert_with(|| vec![0.0; row.len()]);
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            let agg = aggregate_state(panel.counties(), &rows).map_err(|e| e.to_string())?;
            ensure(agg == direct.into_iter().collect::<Vec<_>>(), || {
                format!("state sums differ for {objective}")
            })?;
        }

        let mut splits = 0;
        for objective in Objective::ALL {
            for (w_in, w_out, test_days) in [(10, 10, 10), (10, 15, 15), (10, 20, 20), (3, 1, 25), (14, 7, 30)] {
                let base =
                    ForecastTask::last_days(&panel, objective, w_in, w_out, test_days).map_err(|e| e.to_string())?;
                let mut tasks = vec![base.clone()];
                // three folds over 90 days leave 22-day blocks
                if w_in + w_out + 1 <= 22 {
                    tasks.extend(chronological_folds(&panel, &base, 3, 90).map_err(|e| e.to_string())?);
                }
                for task in tasks {
                    let s = make_windows(&panel, &task, 0.1).map_err(|e| e.to_string())?;
                    let first_test_target = panel.day_index(task.test_start).ok_or("test start outside panel")?;
                    for w in s.train.iter().chain(&s.val) {
                        let last_seen = w.start + w.history.len() + w.targets.len() - 1;
                        ensure(last_seen < first_test_target, || {
                            format!("{objective} window at {} reaches day {last_seen}", w.start)
                        })?;
                    }
                    s.check_no_leakage().map_err(|e| e.to_string())?;
                    splits += 1;
                }
            }
        }
        Ok(format!("metric identities hold, {splits} splits leak-free"))
    });
}

// ---------------------------------------------------------------- 9

const PIPELINE: &str = r#"
seed = 9

[synth]
counties = 10
days = 70

[task]
w_in = 7
w_out = 7
test_days = 7

[dwlstm]
epochs = 15
hidden = 8

[backtest]
arima_120 = true
"#;

fn run_pipeline(root: &Path) -> Result<(), String> {
    std::fs::write(root.join("run.toml"), PIPELINE).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 5] = [
        &["synth", "--out", "synth"],
        &["build-panel", "--raw", "synth/raw", "--out", "panel"],
        &["train", "--panel", "panel", "--out", "model"],
        &["backtest", "--panel", "panel", "--out", "backtest"],
        &["report", "--out", "backtest"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_countycast"))
            .current_dir(root)
            .args(["--config", "run.toml"])
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim())
        })?;
    }
    Ok(())
}

fn tree(dir: &Path, prefix: &str, into: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = format!("{prefix}{}", path.file_name().unwrap().to_string_lossy());
        if path.is_dir() {
            tree(&path, &format!("{name}/"), into);
        } else {
            into.insert(name, std::fs::read(&path).unwrap());
        }
    }
}

#[test]
fn criterion_9_end_to_end_determinism() {
    gate(9, "end-to-end determinism", 600.0, || {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_pipeline(a.path())?;
        run_pipeline(b.path())?;
        let (mut ta, mut tb) = (BTreeMap::new(), BTreeMap::new());
        tree(a.path(), "", &mut ta);
        tree(b.path(), "", &mut tb);
        ensure(ta.contains_key("backtest/report.md"), || "report.md missing".into())?;
        let differing: Vec<&String> = ta.keys().filter(|k| tb.get(*k) != ta.get(*k)).collect();
        ensure(ta.len() == tb.len() && differing.is_empty(), || {
            format!("files differ: {differing:?}")
        })?;
        Ok(format!("{} files byte-identical across two runs", ta.len()))
    });
}
