//! Experiment drivers behind `sweep-bethe`, `rank-corr` and
//! `export-marginals`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::candidates::{divmbest, first_unique, CandidateSet, MapSolver};
use crate::error::{Error, Result};
use crate::graph::{gen_grid, Configuration, GibbsModel};
use crate::hamming::{constrained_posterior, exact_constrained_oracle, sample_mass_uniform_ball, HammingBall};
use crate::infer::BPSettings;
use crate::predict::{c3rf_marginals, radius_from_fraction, PosteriorSource};

/// Ranks starting at 1, with tied values sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let co = |a: &[f64], ma: f64, b: &[f64], mb: f64| -> f64 {
        a.iter().zip(b).map(|(&p, &q)| (p - ma) * (q - mb)).sum()
    };
    let vx = co(x, mx, x, mx);
    let vy = co(y, my, y, my);
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some((co(x, mx, y, my) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average-rank ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub size: usize,
    pub run: usize,
    pub instance_seed: u64,
    pub radius: usize,
    pub estimator: String,
    pub samples: usize,
    pub estimate: f64,
    pub exact: f64,
    pub abs_error: f64,
    pub status: String,
}

impl SweepRow {
    pub const HEADER: &'static str = "size,run,instance_seed,radius,estimator,samples,estimate,exact,abs_error,status";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.12},{:.12},{:.12},{}",
            self.size,
            self.run,
            self.instance_seed,
            self.radius,
            self.estimator,
            self.samples,
            self.estimate,
            self.exact,
            self.abs_error,
            self.status
        )
    }
}

/// Log-mass estimation error of the Bethe estimator and of uniform-ball
/// sampling against the enumerated mass, on random binary grids with a
/// random ball per run. Radii are uniform on `{1, …, ceil(√N)}`.
pub fn sweep_bethe(
    sizes: &[usize],
    runs: usize,
    sample_counts: &[usize],
    potential_low: f64,
    seed: u64,
    settings: &BPSettings,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        if size == 0 {
            return Err(Error::InvalidParameter("grid sizes must be positive".into()));
        }
        let n = size * size;
        let max_radius = ((size as f64).sqrt().ceil() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (size as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for run in 0..runs {
            let instance_seed: u64 = rng.gen();
            let radius = rng.gen_range(1..=max_radius);
            let center = Configuration::new((0..n).map(|_| rng.gen_range(0..2)).collect());
            let sampler_seed: u64 = rng.gen();
            let model = gen_grid(size, instance_seed, potential_low)?;
            let ball = HammingBall::new(center, radius);
            let exact = exact_constrained_oracle(&model, &ball)?.log_mass;
            let row = |estimator: &str, samples: usize, estimate: Result<f64>| {
                let (estimate, status) = match estimate {
                    Ok(e) if e.is_finite() => (e, "ok".to_string()),
                    Ok(_) => (0.0, "non_finite".to_string()),
                    Err(e) => (0.0, format!("error: {e}").replace(',', ";")),
                };
                SweepRow {
                    size,
                    run,
                    instance_seed,
                    radius,
                    estimator: estimator.into(),
                    samples,
                    estimate,
                    exact,
                    abs_error: if status == "ok" { (estimate - exact).abs() } else { 0.0 },
                    status,
                }
            };
            let bethe = constrained_posterior(&model, &ball, settings).map(|p| p.log_mass);
            rows.push(row("bethe", 0, bethe));
            for (j, &s) in sample_counts.iter().enumerate() {
                let est = sample_mass_uniform_ball(&model, &ball, s, sampler_seed.wrapping_add(j as u64));
                rows.push(row("sampling", s, est));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCorrRow {
    pub instance: usize,
    pub rho: f64,
    pub temperature: f64,
    pub candidates: usize,
    pub spearman: Option<f64>,
    pub status: String,
}

impl RankCorrRow {
    pub const HEADER: &'static str = "instance,rho,T,candidates,spearman,status";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.instance,
            self.rho,
            self.temperature,
            self.candidates,
            self.spearman.map(|s| format!("{s:.12}")).unwrap_or_default(),
            self.status
        )
    }
}

/// Spearman correlation between per-candidate log-masses and scores for
/// one candidate set.
pub fn mass_score_correlation(
    model: &GibbsModel,
    cands: &CandidateSet,
    radius: usize,
    source: &PosteriorSource,
) -> Result<Option<f64>> {
    let posts = crate::predict::candidate_posteriors(model, cands, radius, source)?;
    let masses: Vec<f64> = posts.iter().map(|p| p.log_mass).collect();
    let scores: Vec<f64> = cands.items.iter().map(|c| c.score).collect();
    Ok(spearman(&masses, &scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankCorrConfig {
    pub instances: usize,
    pub side: usize,
    pub potential_low: f64,
    pub m: usize,
    pub lambda: f64,
    pub rhos: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub seed: u64,
}

/// Rank correlations over a seeded corpus of grids, one row per
/// (instance, ρ, T).
pub fn rank_corr(config: &RankCorrConfig, settings: &BPSettings) -> Result<Vec<RankCorrRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    for instance in 0..config.instances {
        let model = gen_grid(config.side, rng.gen(), config.potential_low)?;
        let cands = divmbest(&model, config.m, config.lambda, MapSolver::MaxProduct, settings)?;
        let cands = first_unique(&cands, config.m);
        for &rho in &config.rhos {
            for &t in &config.temperatures {
                let tm = model.with_temperature(t)?;
                let radius = radius_from_fraction(rho, tm.num_variables());
                let source = PosteriorSource::BeliefPropagation(*settings);
                let (spearman, status) = if cands.len() < 2 {
                    (None, "degenerate".to_string())
                } else {
                    match mass_score_correlation(&tm, &cands, radius, &source) {
                        Ok(Some(r)) => (Some(r), "ok".into()),
                        Ok(None) => (None, "degenerate".into()),
                        Err(e) => (None, format!("error: {e}").replace(',', ";")),
                    }
                };
                rows.push(RankCorrRow {
                    instance,
                    rho,
                    temperature: t,
                    candidates: cands.len(),
                    spearman,
                    status,
                });
            }
        }
    }
    Ok(rows)
}

/// Radius fractions for a marginal export, always bracketed by 0 and 1.
pub fn bracketed_radii(rhos: &[f64]) -> Vec<f64> {
    let mut v = rhos.to_vec();
    v.push(0.0);
    v.push(1.0);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Mixture marginals for every (ρ, T) pair, in ascending ρ then T order.
pub fn export_marginals(
    model: &GibbsModel,
    cands: &CandidateSet,
    rhos: &[f64],
    temperatures: &[f64],
    source: &PosteriorSource,
) -> Result<Vec<(f64, f64, Vec<Vec<f64>>)>> {
    let mut out = Vec::new();
    for rho in bracketed_radii(rhos) {
        for &t in temperatures {
            let tm = model.with_temperature(t)?;
            let radius = radius_from_fraction(rho, tm.num_variables());
            out.push((rho, t, c3rf_marginals(&tm, cands, radius, source)?.node));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_cases() {
        let x = [0.1, 0.5, -2.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp() * 3.0).collect();
        assert_eq!(spearman(&x, &y), Some(1.0));
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &rev), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[2.0]), None);
        assert_eq!(spearman(&[1.0, 1.0], &[2.0, 3.0]), None);
        // Hand value: ranks (1,2,3) vs (1,3,2) -> 1 - 6*2/(3*8) = 0.5.
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sweep_smoke() {
        let rows = sweep_bethe(&[2], 10, &[100], -5.0, 1, &BPSettings::default()).unwrap();
        assert_eq!(rows.iter().filter(|r| r.estimator == "bethe").count(), 10);
        assert_eq!(rows.iter().filter(|r| r.estimator == "sampling").count(), 10);
        assert!(rows.iter().all(|r| r.status == "ok" && r.abs_error.is_finite()));
        let again = sweep_bethe(&[2], 10, &[100], -5.0, 1, &BPSettings::default()).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn zero_potential_sampling_is_exact() {
        let rows = sweep_bethe(&[3], 4, &[1, 10], 0.0, 5, &BPSettings::default()).unwrap();
        for r in rows.iter().filter(|r| r.estimator == "sampling") {
            assert!(r.abs_error < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn rank_corr_degenerate_and_anchor() {
        let mut config = RankCorrConfig {
            instances: 3,
            side: 3,
            potential_low: -5.0,
            m: 1,
            lambda: 0.5,
            rhos: vec![0.0],
            temperatures: vec![1.0],
            seed: 2,
        };
        let rows = rank_corr(&config, &BPSettings::default()).unwrap();
        assert!(rows.iter().all(|r| r.status == "degenerate" && r.spearman.is_none()));
        config.m = 5;
        let rows = rank_corr(&config, &BPSettings::default()).unwrap();
        for r in rows {
            assert!(r.status == "degenerate" || r.spearman == Some(1.0), "{r:?}");
        }
    }

    #[test]
    fn bracket_always_includes_extremes() {
        assert_eq!(bracketed_radii(&[0.5]), vec![0.0, 0.5, 1.0]);
        assert_eq!(bracketed_radii(&[1.0, 0.0]), vec![0.0, 1.0]);
    }
}
