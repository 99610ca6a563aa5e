//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use c3rf::candidates::{divmbest, CandidateSet, MapSolver};
use c3rf::cli::experiments::{rank_corr, sweep_bethe, RankCorrConfig};
use c3rf::graph::{gen_grid, Configuration};
use c3rf::hamming::{constrained_posterior, exact_constrained_oracle, expand_multilabel, HammingBall};
use c3rf::infer::{bethe_log_z, exact_log_z, sum_product, BPSettings};
use c3rf::loss::{fela_hamming, fela_iou, LossKind};
use c3rf::predict::{
    c3rf_fela_predict, crf_fela_predict, delta_predict, mass_predict, PosteriorSource,
};
use rand::Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn tree_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut dz, mut dm) = (0.0f64, 0.0f64);
    for case in 0..50 {
        let t = [0.5, 1.0, 2.0][case % 3];
        let model = random_tree(&mut r, 12, 4, 1 << 16, t);
        let bp = sum_product(&model, &BPSettings::for_graph(model.graph())).unwrap();
        dz = dz.max((bethe_log_z(&model, &bp) - brute_log_z(&model)).abs());
        for (a, b) in bp.node.iter().flatten().zip(brute_marginals(&model).iter().flatten()) {
            dm = dm.max((a - b).abs());
        }
    }
    let el = start.elapsed();
    outcome(
        dz < 1e-9 && dm < 1e-9 && within(el, 5),
        format!("max |dlogZ| = {dz:.2e}, max |dP| = {dm:.2e}, {:.2}s (limit 5s)", el.as_secs_f64()),
    )
}

fn constrained_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let (mut dz, mut dm) = (0.0f64, 0.0f64);
    for case in 0..50 {
        let k = if case % 2 == 0 { 2 } else { 3 };
        let n = r.gen_range(1..=if k == 2 { 12 } else { 8 });
        let model = random_unary(&mut r, n, k, -4.0);
        let center = random_configuration(&mut r, &model);
        let radius = r.gen_range(0..=n);
        let ball = HammingBall::new(center.clone(), radius);
        let post = constrained_posterior(&model, &ball, &BPSettings::default()).unwrap();
        let keep = |y: &Configuration| hamming(y, &center) <= radius;
        dz = dz.max((post.log_mass - brute_log_z_where(&model, keep)).abs());
        let oracle = brute_marginals_where(&model, keep);
        for (a, b) in post.node_marginals.iter().flatten().zip(oracle.iter().flatten()) {
            dm = dm.max((a - b).abs());
        }
        let lib = exact_constrained_oracle(&model, &ball).unwrap();
        dz = dz.max((lib.log_mass - brute_log_z_where(&model, keep)).abs());
    }
    let el = start.elapsed();
    outcome(
        dz < 1e-6 && dm < 1e-6 && within(el, 10),
        format!("max |dlog mass| = {dz:.2e}, max |dP| = {dm:.2e}, {:.2}s (limit 10s)", el.as_secs_f64()),
    )
}

fn bethe_vs_sampling() -> Outcome {
    let start = Instant::now();
    let rows = sweep_bethe(&[3, 4], 10, &[1000], -5.0, 3, &BPSettings::default()).unwrap();
    let mean = |est: &str| {
        let e: Vec<f64> = rows.iter().filter(|r| r.estimator == est).map(|r| r.abs_error).collect();
        e.iter().sum::<f64>() / e.len() as f64
    };
    let ok = rows.iter().all(|r| r.status == "ok");
    let (b, s) = (mean("bethe"), mean("sampling"));
    let el = start.elapsed();
    outcome(
        ok && b <= s && b < 0.5 && within(el, 60),
        format!("mean |err| bethe = {b:.4}, sampling(1e3) = {s:.4}, {:.2}s (limit 60s)", el.as_secs_f64()),
    )
}

fn expansion_fidelity() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let model = random_multilabel(&mut r, 1 << 16);
        let expanded = expand_multilabel(&model).unwrap();
        let lz = exact_log_z(&expanded.model).unwrap();
        worst = worst.max((lz - brute_log_z(&model)).abs());
    }
    outcome(worst < 1e-9, format!("max |dlogZ| = {worst:.2e} over 30 models"))
}

fn radius_zero_collapse() -> Outcome {
    let mut r = rng(5);
    let mut mismatches = 0;
    let src = PosteriorSource::default();
    for case in 0..100 {
        let model = gen_grid(3, r.gen(), -5.0).unwrap().with_temperature([0.5, 1.0, 2.0][case % 3]).unwrap();
        let m = if case % 2 == 0 { 3 } else { 5 };
        let cands = divmbest(&model, m, r.gen_range(0.1..2.0), MapSolver::MaxProduct, &BPSettings::default()).unwrap();
        for loss in [LossKind::Hamming, LossKind::Iou { classes: 2 }] {
            let d = delta_predict(&model, &cands, loss).unwrap().chosen_index;
            let c = c3rf_fela_predict(&model, &cands, 0, loss, &src).unwrap().chosen_index;
            let ms = mass_predict(&model, &cands, 0, loss, &src).unwrap().chosen_index;
            mismatches += usize::from(c != d) + usize::from(ms != d);
        }
    }
    outcome(mismatches == 0, format!("{mismatches} index mismatches over 100 instances x 2 losses"))
}

fn full_radius_collapse() -> Outcome {
    let mut r = rng(6);
    let mut mismatches = 0;
    for case in 0..50 {
        let model = gen_grid(2 + case % 2, r.gen(), -5.0).unwrap();
        let n = model.num_variables();
        let cands = divmbest(&model, 4, 1.0, MapSolver::Exhaustive, &BPSettings::default()).unwrap();
        for loss in [LossKind::Hamming, LossKind::Iou { classes: 2 }] {
            let a = c3rf_fela_predict(&model, &cands, n, loss, &PosteriorSource::Exact).unwrap();
            let b = crf_fela_predict(&model, &cands, loss, &PosteriorSource::Exact).unwrap();
            mismatches += usize::from(a.chosen_index != b.chosen_index);
        }
    }
    outcome(mismatches == 0, format!("{mismatches} index mismatches over 50 cases x 2 losses"))
}

fn fela_exactness() -> Outcome {
    let mut r = rng(7);
    let mut worst_h = 0.0f64;
    for _ in 0..50 {
        let model = random_multilabel(&mut r, 1 << 12);
        let yhat = random_configuration(&mut r, &model);
        let marg = brute_marginals(&model);
        let exact: f64 = brute_distribution_where(&model, |_| true)
            .iter()
            .map(|(y, p)| p * hamming_loss_oracle(y, &yhat))
            .sum();
        worst_h = worst_h.max((fela_hamming(&marg, &yhat).unwrap() - exact).abs());
    }
    let mut worst_i = 0.0f64;
    for _ in 0..50 {
        let n = r.gen_range(1..=20);
        let k = r.gen_range(2..=5);
        let y = Configuration::new((0..n).map(|_| r.gen_range(0..k)).collect());
        let yhat = Configuration::new((0..n).map(|_| r.gen_range(0..k)).collect());
        let delta: Vec<Vec<f64>> = y
            .labels()
            .iter()
            .map(|&l| (0..k).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
            .collect();
        worst_i = worst_i.max((fela_iou(&delta, &yhat, k).unwrap() - iou_loss_oracle(&y, &yhat, k)).abs());
    }
    outcome(
        worst_h < 1e-12 && worst_i < 1e-12,
        format!("hamming max err = {worst_h:.2e}, point-mass iou max err = {worst_i:.2e}"),
    )
}

fn ball_constant_equivalence() -> Outcome {
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for case in 0..30 {
        let model = gen_grid(2, r.gen(), -5.0).unwrap().with_temperature(r.gen_range(0.5..2.0)).unwrap();
        let n = model.num_variables();
        let radius = 1 + case % (n - 1);
        let cands = divmbest(&model, 4, 0.8, MapSolver::Exhaustive, &BPSettings::default()).unwrap();
        for loss in [LossKind::Hamming, LossKind::Iou { classes: 2 }] {
            let pred = mass_predict(&model, &cands, radius, loss, &PosteriorSource::Exact).unwrap();
            let t = model.temperature();
            let all = all_scores(&model);
            for (j, yhat) in cands.items.iter().enumerate() {
                // Enumerated inner sum with the loss held at its value at the centre.
                let mut total = 0.0;
                for c in &cands.items {
                    let lc = match loss {
                        LossKind::Hamming => hamming_loss_oracle(&c.labels, &yhat.labels),
                        LossKind::Iou { classes } => iou_loss_oracle(&c.labels, &yhat.labels, classes),
                    };
                    for (y, s) in &all {
                        if hamming(y, &c.labels) <= radius {
                            total += c.weight * (s / t - pred.log_offset).exp() * lc;
                        }
                    }
                }
                let got = pred.objective_values[j];
                worst = worst.max((got - total).abs() / total.abs().max(1.0));
            }
        }
    }
    let mut r = rng(18);
    let mut n8 = 0.0f64;
    for _ in 0..5 {
        let model = random_unary(&mut r, 8, 2, -3.0);
        let cands = CandidateSet::from_configurations(
            &model,
            (0..3).map(|_| random_configuration(&mut r, &model)).collect(),
        )
        .unwrap();
        let pred = mass_predict(&model, &cands, 3, LossKind::Hamming, &PosteriorSource::Exact).unwrap();
        for (j, yhat) in cands.items.iter().enumerate() {
            let total: f64 = cands
                .items
                .iter()
                .map(|c| {
                    let lz = brute_log_z_where(&model, |y| hamming(y, &c.labels) <= 3);
                    (lz - pred.log_offset).exp() * hamming_loss_oracle(&c.labels, &yhat.labels)
                })
                .sum();
            n8 = n8.max((pred.objective_values[j] - total).abs() / total.abs().max(1.0));
        }
    }
    worst = worst.max(n8);
    outcome(worst < 1e-12, format!("max relative deviation = {worst:.2e}"))
}

fn divmbest_optimality() -> Outcome {
    let mut r = rng(9);
    let mut failures = 0;
    for case in 0..100 {
        let model = if case % 2 == 0 {
            gen_grid(2, r.gen(), -5.0).unwrap()
        } else {
            let n = r.gen_range(1..=10);
            random_unary(&mut r, n, 2, -2.0)
        };
        let lambda = r.gen_range(0.1..3.0);
        let m = r.gen_range(2..=5);
        let set = divmbest(&model, m, lambda, MapSolver::Exhaustive, &BPSettings::default()).unwrap();
        let all = all_scores(&model);
        for j in 0..m {
            let objective = |y: &Configuration, s: f64| {
                s + lambda * set.items[..j].iter().map(|p| hamming(y, &p.labels) as f64).sum::<f64>()
            };
            let best = all.iter().map(|(y, s)| objective(y, *s)).fold(f64::NEG_INFINITY, f64::max);
            let got = objective(&set.items[j].labels, model.score(&set.items[j].labels).unwrap());
            if (got - best).abs() > 1e-9 {
                failures += 1;
            }
        }
        let zero = divmbest(&model, m, 0.0, MapSolver::Exhaustive, &BPSettings::default()).unwrap();
        if zero.items.iter().any(|c| c.labels != zero.items[0].labels) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} non-optimal candidates over 100 cases"))
}

fn rank_correlation_anchor() -> Outcome {
    let config = RankCorrConfig {
        instances: 50,
        side: 4,
        potential_low: -5.0,
        m: 10,
        lambda: 0.5,
        rhos: vec![0.0],
        temperatures: vec![1.0],
        seed: 10,
    };
    let rows = rank_corr(&config, &BPSettings::default()).unwrap();
    let ok = rows.iter().filter(|r| r.spearman == Some(1.0)).count();
    let degenerate = rows.iter().filter(|r| r.status == "degenerate").count();
    outcome(
        ok + degenerate == rows.len() && ok > 0,
        format!("{ok} instances with rho_s = 1 exactly, {degenerate} degenerate, of {}", rows.len()),
    )
}

fn mass_monotonicity() -> Outcome {
    let mut r = rng(11);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for case in 0..50 {
        let model = if case % 2 == 0 {
            gen_grid(3, r.gen(), -5.0).unwrap()
        } else {
            random_multilabel(&mut r, 1 << 12)
        };
        let center = random_configuration(&mut r, &model);
        let n = model.num_variables();
        let masses: Vec<f64> = (0..=n)
            .map(|radius| exact_constrained_oracle(&model, &HammingBall::new(center.clone(), radius)).unwrap().log_mass)
            .collect();
        violations += masses.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
        worst = worst.max((masses[n] - brute_log_z(&model)).abs());
    }
    outcome(
        violations == 0 && worst < 1e-9,
        format!("{violations} decreases, max |log mass(R=n) - log Z| = {worst:.2e}"),
    )
}

fn run_tune(dir: &Path) -> (bool, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_c3rf"))
        .args(["tune", "--seed", "12", "--out", "report.csv"])
        .current_dir(dir)
        .status()
        .expect("spawn c3rf");
    let bytes = std::fs::read(dir.join("report.csv")).unwrap_or_default();
    (status.success(), bytes)
}

fn tune_pipeline() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ok_a, bytes_a) = run_tune(a.path());
    let (ok_b, bytes_b) = run_tune(b.path());
    let text = String::from_utf8_lossy(&bytes_a);
    let data_rows = text.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1);
    let expected = 5 * 5 * 5 * 6 * 4;
    let el = start.elapsed();
    outcome(
        ok_a && ok_b && bytes_a == bytes_b && data_rows == expected && within(el, 300),
        format!(
            "{data_rows} report rows (expected {expected}), identical reruns: {}, {:.1}s for two runs (limit 300s each)",
            bytes_a == bytes_b,
            el.as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("tree exactness", tree_exactness),
        ("constrained inference exactness", constrained_exactness),
        ("bethe vs sampling log-mass error", bethe_vs_sampling),
        ("multi-label expansion fidelity", expansion_fidelity),
        ("radius-0 collapse to delta", radius_zero_collapse),
        ("full-radius collapse to crf+fela", full_radius_collapse),
        ("fela exactness", fela_exactness),
        ("ball-constant loss equivalence", ball_constant_equivalence),
        ("divmbest optimality", divmbest_optimality),
        ("rank-correlation anchor at radius 0", rank_correlation_anchor),
        ("mass monotonicity in radius", mass_monotonicity),
        ("tune pipeline smoke", tune_pipeline),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
