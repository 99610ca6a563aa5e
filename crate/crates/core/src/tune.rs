//! Parameter selection by cross-validated grid search, either on task
//! performance (ERM) or on ground-truth log-probability (BDT).
//!
//! Per-instance statistics are computed once for every grid point; folds
//! only aggregate them.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{divmbest, CandidateSet, MapSolver};
use crate::error::{Error, Result};
use crate::graph::{gen_grid, Configuration, GibbsModel};
use crate::infer::{Enumerator, DEFAULT_ENUMERATION_CAP};
use crate::loss::{IouCounts, LossKind};
use crate::predict::{
    c3rf_fela_from_posteriors, c3rf_marginals_from_posteriors, candidate_posteriors, crf_fela_from_marginals,
    delta_predict, map_predict, mass_from_posteriors, mean_log_prob, radius_from_fraction, unconstrained_marginals,
    PosteriorSource, PredictorConfig, PredictorKind,
};

#[derive(Debug, Clone)]
pub struct Instance {
    pub model: GibbsModel,
    pub ground_truth: Configuration,
    /// Used for every λ when present.
    pub candidates: Option<CandidateSet>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub instances: Vec<Instance>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(Error::InvalidParameter("corpus is empty".into()));
        }
        for inst in &self.instances {
            inst.model.graph().check_configuration(&inst.ground_truth)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub lambdas: Vec<f64>,
    pub radius_fractions: Vec<f64>,
    pub temperatures: Vec<f64>,
}

impl Default for ParameterGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            radius_fractions: vec![0.0, 0.05, 0.1, 0.25, 0.5, 1.0],
            temperatures: vec![0.5, 1.0, 2.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub rho: f64,
    pub temperature: f64,
}

impl GridPoint {
    fn key(&self) -> (f64, f64, f64) {
        (self.lambda, self.rho, self.temperature)
    }
}

fn canonical(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl ParameterGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.radius_fractions.is_empty() || self.temperatures.is_empty() {
            return Err(Error::InvalidParameter("parameter grid lists must be non-empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|&&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!("lambda {l} is negative")));
        }
        if let Some(r) = self.radius_fractions.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidParameter(format!("radius fraction {r} outside [0, 1]")));
        }
        if let Some(&t) = self.temperatures.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidTemperature(t));
        }
        Ok(())
    }

    /// Distinct grid points in ascending `(λ, ρ, T)` order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &lambda in &canonical(&self.lambdas) {
            for &rho in &canonical(&self.radius_fractions) {
                for &temperature in &canonical(&self.temperatures) {
                    out.push(GridPoint {
                        lambda,
                        rho,
                        temperature,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CVMode {
    Kfold,
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CVPlan {
    pub folds: usize,
    pub permutations: usize,
    pub seed: u64,
    pub mode: CVMode,
}

impl Default for CVPlan {
    fn default() -> Self {
        Self {
            folds: 5,
            permutations: 5,
            seed: 0,
            mode: CVMode::Kfold,
        }
    }
}

impl CVPlan {
    /// Held-out index sets for permutation `p` over `n` instances. The folds
    /// partition `0..n`.
    pub fn partition(&self, n: usize, p: usize) -> Result<Vec<Vec<usize>>> {
        if self.permutations == 0 {
            return Err(Error::InvalidParameter("permutations must be at least 1".into()));
        }
        match self.mode {
            CVMode::LeaveOneOut => {
                if n < 2 {
                    return Err(Error::InvalidParameter("leave-one-out needs at least 2 instances".into()));
                }
                Ok((0..n).map(|i| vec![i]).collect())
            }
            CVMode::Kfold => {
                if self.folds < 2 || self.folds > n {
                    return Err(Error::InvalidParameter(format!(
                        "k-fold needs 2 <= folds <= {n}, got {}",
                        self.folds
                    )));
                }
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(p as u64));
                order.shuffle(&mut rng);
                let mut folds = vec![Vec::new(); self.folds];
                for (pos, i) in order.into_iter().enumerate() {
                    folds[pos % self.folds].push(i);
                }
                for f in &mut folds {
                    f.sort_unstable();
                }
                Ok(folds)
            }
        }
    }
}

/// Options shared by every grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneSettings {
    pub kind: PredictorKind,
    pub loss: LossKind,
    /// Candidates generated per instance when none are supplied.
    pub m: usize,
    pub solver: MapSolver,
    pub source: PosteriorSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Erm,
    Bdt,
}

/// Per-instance contribution to a corpus score.
#[derive(Debug, Clone, PartialEq)]
enum Stat {
    Loss(f64),
    Iou(IouCounts),
    LogProb(f64),
}

/// Aggregate statistics over `indices`. Higher is better for every result:
/// Hamming is reported as `1 − mean loss`.
fn aggregate(stats: &[Stat], indices: &[usize]) -> f64 {
    match &stats[indices[0]] {
        Stat::Loss(_) => {
            let total: f64 = indices
                .iter()
                .map(|&i| match &stats[i] {
                    Stat::Loss(l) => *l,
                    _ => unreachable!("mixed statistics"),
                })
                .sum();
            1.0 - total / indices.len() as f64
        }
        Stat::Iou(_) => {
            let mut acc = IouCounts::default();
            for &i in indices {
                if let Stat::Iou(c) = &stats[i] {
                    acc.accumulate(c);
                }
            }
            acc.mean_iou()
        }
        Stat::LogProb(_) => {
            let total: f64 = indices
                .iter()
                .map(|&i| match &stats[i] {
                    Stat::LogProb(l) => *l,
                    _ => unreachable!("mixed statistics"),
                })
                .sum();
            total / indices.len() as f64
        }
    }
}

fn candidates_for(inst: &Instance, lambda: f64, settings: &TuneSettings) -> Result<CandidateSet> {
    match &inst.candidates {
        Some(c) => Ok(c.clone()),
        None => {
            let bp = match settings.source {
                PosteriorSource::BeliefPropagation(s) => s,
                PosteriorSource::Exact => Default::default(),
            };
            divmbest(&inst.model, settings.m, lambda, settings.solver, &bp)
        }
    }
}

fn task_stat(chosen: &Configuration, inst: &Instance, loss: LossKind) -> Result<Stat> {
    Ok(match loss {
        LossKind::Hamming => Stat::Loss(loss.loss(&inst.ground_truth, chosen)?),
        LossKind::Iou { classes } => Stat::Iou(IouCounts::new(&inst.ground_truth, chosen, classes)?),
    })
}

fn classes_of(loss: LossKind, model: &GibbsModel) -> usize {
    match loss {
        LossKind::Iou { classes } => classes,
        LossKind::Hamming => model.graph().cardinalities().iter().copied().max().unwrap_or(2),
    }
}

/// Task and log-probability statistics of one instance at one grid point.
fn instance_stats(
    inst: &Instance,
    cands: &CandidateSet,
    point: &GridPoint,
    settings: &TuneSettings,
) -> Result<(Stat, Stat)> {
    let model = inst.model.with_temperature(point.temperature)?;
    let n = model.num_variables();
    let loss = settings.loss;
    let classes = classes_of(loss, &model);
    let (chosen, marginals) = match settings.kind {
        PredictorKind::CrfFela => {
            let m = unconstrained_marginals(&model, &settings.source)?;
            let p = crf_fela_from_marginals(cands, &m, loss)?;
            (p.chosen, m.node)
        }
        kind => {
            let radius = match kind {
                PredictorKind::Map | PredictorKind::Delta => 0,
                _ => radius_from_fraction(point.rho, n),
            };
            let posts = candidate_posteriors(&model, cands, radius, &settings.source)?;
            let chosen = match kind {
                PredictorKind::Map => map_predict(cands)?.chosen,
                PredictorKind::Delta => delta_predict(&model, cands, loss)?.chosen,
                PredictorKind::Mass => mass_from_posteriors(cands, &posts, loss)?.chosen,
                _ => c3rf_fela_from_posteriors(cands, &posts, loss)?.chosen,
            };
            (chosen, c3rf_marginals_from_posteriors(cands, &posts)?.node)
        }
    };
    Ok((
        task_stat(&chosen, inst, loss)?,
        Stat::LogProb(mean_log_prob(&marginals, &inst.ground_truth, classes)?),
    ))
}

/// Runs the predictor on every instance and returns the corpus score:
/// mean instance loss for Hamming, corpus-level IOU accuracy for IOU.
pub fn evaluate_corpus(
    corpus: &Corpus,
    config: &PredictorConfig,
    lambda: f64,
    settings: &TuneSettings,
) -> Result<f64> {
    corpus.validate()?;
    config.validate()?;
    let settings = TuneSettings {
        kind: config.kind,
        loss: config.loss,
        ..*settings
    };
    let point = GridPoint {
        lambda,
        rho: config.radius_fraction,
        temperature: config.temperature,
    };
    let stats = corpus
        .instances
        .par_iter()
        .map(|inst| {
            let cands = candidates_for(inst, lambda, &settings)?;
            Ok(instance_stats(inst, &cands, &point, &settings)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    if let LossKind::Hamming = config.loss {
        let total: f64 = stats.iter().map(|s| if let Stat::Loss(l) = s { *l } else { 0.0 }).sum();
        return Ok(total / stats.len() as f64);
    }
    let all: Vec<usize> = (0..stats.len()).collect();
    Ok(aggregate(&stats, &all))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub permutation: usize,
    pub fold: usize,
    pub point: GridPoint,
    pub heldin_score: f64,
    pub heldout_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub permutation: usize,
    pub fold: usize,
    pub point: GridPoint,
    pub heldin_score: f64,
    pub heldout_score: f64,
    /// Held-out task performance of the selected point.
    pub heldout_task_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub objective: Objective,
    pub best: PredictorConfig,
    pub best_lambda: f64,
    pub best_mean_heldout: f64,
    pub selections: Vec<FoldSelection>,
    pub rows: Vec<ReportRow>,
}

impl TuneReport {
    /// CSV with columns `permutation,fold,lambda,rho,T,heldin_score,heldout_score`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "permutation,fold,lambda,rho,T,heldin_score,heldout_score")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.permutation,
                r.fold,
                r.point.lambda,
                r.point.rho,
                r.point.temperature,
                fmt_score(r.heldin_score),
                fmt_score(r.heldout_score)
            )?;
        }
        Ok(())
    }
}

fn fmt_score(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.12}")
    }
}

/// Index of the largest score; exact ties keep the earliest (smallest point).
fn best_index(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if i == 0 || s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Cross-validated grid search maximising task performance.
pub fn grid_search_erm(
    corpus: &Corpus,
    grid: &ParameterGrid,
    plan: &CVPlan,
    settings: &TuneSettings,
) -> Result<TuneReport> {
    grid_search(corpus, grid, plan, settings, Objective::Erm)
}

/// Same protocol, maximising mean ground-truth log-probability under the
/// predictor's marginals.
pub fn grid_search_bdt(
    corpus: &Corpus,
    grid: &ParameterGrid,
    plan: &CVPlan,
    settings: &TuneSettings,
) -> Result<TuneReport> {
    grid_search(corpus, grid, plan, settings, Objective::Bdt)
}

pub fn grid_search(
    corpus: &Corpus,
    grid: &ParameterGrid,
    plan: &CVPlan,
    settings: &TuneSettings,
    objective: Objective,
) -> Result<TuneReport> {
    corpus.validate()?;
    grid.validate()?;
    let n = corpus.len();
    let partitions = (0..plan.permutations.max(1))
        .map(|p| plan.partition(n, p))
        .collect::<Result<Vec<_>>>()?;
    if plan.permutations == 0 {
        return Err(Error::InvalidParameter("permutations must be at least 1".into()));
    }
    let points = grid.points();
    let lambdas = canonical(&grid.lambdas);

    let mut jobs = Vec::new();
    for i in 0..n {
        for &lambda in &lambdas {
            jobs.push((i, lambda));
        }
    }
    let cands: Vec<CandidateSet> = jobs
        .par_iter()
        .map(|&(i, lambda)| candidates_for(&corpus.instances[i], lambda, settings))
        .collect::<Result<_>>()?;
    let cand_of = |i: usize, lambda: f64| {
        let l = lambdas.iter().position(|&x| x == lambda).expect("lambda in grid");
        &cands[i * lambdas.len() + l]
    };

    // Predictors that ignore ρ or T share statistics across those axes.
    let effective = |p: &GridPoint| {
        let rho = if settings.kind.uses_radius() { p.rho } else { 0.0 };
        let t = if settings.kind.uses_temperature() || objective == Objective::Bdt {
            p.temperature
        } else {
            1.0
        };
        (p.lambda, rho, t)
    };
    let mut unique: Vec<(f64, f64, f64)> = points.iter().map(effective).collect();
    unique.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    unique.dedup();

    let mut work = Vec::new();
    for i in 0..n {
        for (u, _) in unique.iter().enumerate() {
            work.push((i, u));
        }
    }
    let computed: Vec<(Stat, Stat)> = work
        .par_iter()
        .map(|&(i, u)| {
            let (lambda, rho, temperature) = unique[u];
            let point = GridPoint {
                lambda,
                rho,
                temperature,
            };
            instance_stats(&corpus.instances[i], cand_of(i, lambda), &point, settings)
        })
        .collect::<Result<_>>()?;

    // stats[g][i] for grid point g and instance i.
    let mut task = Vec::with_capacity(points.len());
    let mut logp = Vec::with_capacity(points.len());
    for p in &points {
        let u = unique.binary_search_by(|x| x.partial_cmp(&effective(p)).unwrap()).expect("present");
        let (t, l): (Vec<Stat>, Vec<Stat>) = (0..n).map(|i| computed[i * unique.len() + u].clone()).unzip();
        task.push(t);
        logp.push(l);
    }
    let selection_stats = match objective {
        Objective::Erm => &task,
        Objective::Bdt => &logp,
    };

    let mut rows = Vec::new();
    let mut selections = Vec::new();
    let mut heldout_sum = vec![0.0; points.len()];
    let mut fold_count = 0usize;
    for (p, folds) in partitions.iter().enumerate() {
        for (f, heldout) in folds.iter().enumerate() {
            let heldin: Vec<usize> = (0..n).filter(|i| !heldout.contains(i)).collect();
            let scores: Vec<(f64, f64)> = selection_stats
                .iter()
                .map(|s| (aggregate(s, &heldin), aggregate(s, heldout)))
                .collect();
            for (g, &(hi, ho)) in scores.iter().enumerate() {
                heldout_sum[g] += ho;
                rows.push(ReportRow {
                    permutation: p,
                    fold: f,
                    point: points[g],
                    heldin_score: hi,
                    heldout_score: ho,
                });
            }
            let g = best_index(scores.iter().map(|s| s.0));
            selections.push(FoldSelection {
                permutation: p,
                fold: f,
                point: points[g],
                heldin_score: scores[g].0,
                heldout_score: scores[g].1,
                heldout_task_score: aggregate(&task[g], heldout),
            });
            fold_count += 1;
        }
    }
    let means: Vec<f64> = heldout_sum.iter().map(|s| s / fold_count as f64).collect();
    let g = best_index(means.iter().copied());
    let best = points[g];
    debug_assert!(points.windows(2).all(|w| w[0].key() < w[1].key()));
    Ok(TuneReport {
        objective,
        best: PredictorConfig {
            kind: settings.kind,
            radius_fraction: best.rho,
            temperature: best.temperature,
            loss: settings.loss,
        },
        best_lambda: best.lambda,
        best_mean_heldout: means[g],
        selections,
        rows,
    })
}

/// Draw one configuration exactly from the Gibbs distribution.
pub fn sample_exact(model: &GibbsModel, rng: &mut impl Rng) -> Result<Configuration> {
    let en = Enumerator::new(model.graph(), DEFAULT_ENUMERATION_CAP);
    let t = model.temperature();
    let mut max = f64::NEG_INFINITY;
    en.run(|_, s| max = max.max(s / t))?;
    if max == f64::NEG_INFINITY {
        return Err(Error::AllConfigurationsForbidden);
    }
    let mut total = 0.0;
    en.run(|_, s| total += (s / t - max).exp())?;
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    let mut chosen = None;
    en.run(|labels, s| {
        if chosen.is_some() {
            return;
        }
        acc += (s / t - max).exp();
        last = Some(labels.to_vec());
        if acc > target {
            chosen = Some(labels.to_vec());
        }
    })?;
    Ok(Configuration::new(chosen.or(last).expect("live configuration")))
}

/// `count` binary grid models of side `side` with ground truth drawn from
/// each model's own Gibbs distribution at T = 1.
pub fn synthetic_corpus(count: usize, side: usize, potential_low: f64, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let model = gen_grid(side, rng.gen(), potential_low)?;
        let ground_truth = sample_exact(&model, &mut rng)?;
        instances.push(Instance {
            model,
            ground_truth,
            candidates: None,
        });
    }
    Ok(Corpus { instances })
}
