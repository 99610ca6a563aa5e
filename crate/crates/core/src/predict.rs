//! Candidate-restricted predictors: MAP, Delta, Mass, CRF+FELA and
//! C3RF+FELA, plus mass-averaged marginals.
//!
//! Every predictor returns the candidate minimising its objective; ties go
//! to the smallest index. Objectives that mix probabilities are computed
//! from per-candidate log-weights shifted by their common maximum, and the
//! shift is reported as [`Prediction::log_offset`].

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::graph::{Configuration, GibbsModel};
use crate::hamming::{constrained_posterior, exact_constrained_oracle, ConstrainedPosterior, HammingBall};
use crate::infer::{exact_marginals, sum_product, BPSettings, Marginals};
use crate::loss::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Map,
    Delta,
    Mass,
    CrfFela,
    C3rfFela,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::Map,
        PredictorKind::Delta,
        PredictorKind::Mass,
        PredictorKind::CrfFela,
        PredictorKind::C3rfFela,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Map => "map",
            PredictorKind::Delta => "delta",
            PredictorKind::Mass => "mass",
            PredictorKind::CrfFela => "crf_fela",
            PredictorKind::C3rfFela => "c3rf_fela",
        }
    }

    /// Whether the predictor depends on the ball radius.
    pub fn uses_radius(&self) -> bool {
        matches!(self, PredictorKind::Mass | PredictorKind::C3rfFela)
    }

    /// Whether the predictor depends on the temperature.
    pub fn uses_temperature(&self) -> bool {
        !matches!(self, PredictorKind::Map)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown predictor {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub radius_fraction: f64,
    pub temperature: f64,
    pub loss: LossKind,
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.radius_fraction) {
            return Err(Error::InvalidParameter(format!(
                "radius fraction must lie in [0, 1], got {}",
                self.radius_fraction
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        Ok(())
    }

    /// `R = round(ρ · n)`.
    pub fn radius(&self, n: usize) -> usize {
        radius_from_fraction(self.radius_fraction, n)
    }
}

pub fn radius_from_fraction(rho: f64, n: usize) -> usize {
    ((rho * n as f64).round() as usize).min(n)
}

/// Where per-ball and unconstrained posteriors come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosteriorSource {
    BeliefPropagation(BPSettings),
    Exact,
}

impl Default for PosteriorSource {
    fn default() -> Self {
        PosteriorSource::BeliefPropagation(BPSettings::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub chosen: Configuration,
    pub chosen_index: usize,
    pub objective_values: Vec<f64>,
    /// Objectives built from probabilities are scaled by `exp(-log_offset)`.
    pub log_offset: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Per-candidate log-weight entering the objective (log Gibbs weight,
    /// log-mass, or empty when unused), including the candidate weight.
    pub log_masses: Vec<f64>,
    pub converged: Vec<bool>,
}

/// Smallest index attaining the minimum.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn finish(cands: &CandidateSet, objective_values: Vec<f64>, log_offset: f64, diagnostics: Diagnostics) -> Prediction {
    let chosen_index = argmin(&objective_values);
    Prediction {
        chosen: cands.items[chosen_index].labels.clone(),
        chosen_index,
        objective_values,
        log_offset,
        diagnostics,
    }
}

fn check_weights(cands: &CandidateSet) -> Result<()> {
    cands.require_nonempty()?;
    if let Some(c) = cands.items.iter().find(|c| !(c.weight > 0.0 && c.weight.is_finite())) {
        return Err(Error::InvalidParameter(format!("candidate weight {} is not positive", c.weight)));
    }
    Ok(())
}

/// `exp(lw − max)` for each log-weight, with the shared max.
fn linear_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllConfigurationsForbidden);
    }
    Ok((log_weights.iter().map(|&l| (l - max).exp()).collect(), max))
}

fn loss_weighted(cands: &CandidateSet, kind: LossKind, log_weights: Vec<f64>, converged: Vec<bool>) -> Result<Prediction> {
    let (w, offset) = linear_weights(&log_weights)?;
    let objective = cands
        .items
        .iter()
        .map(|yhat| {
            cands.items.iter().zip(&w).try_fold(0.0, |acc, (c, &wc)| {
                Ok(acc + kind.loss(&c.labels, &yhat.labels)? * wc)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(
        cands,
        objective,
        offset,
        Diagnostics {
            log_masses: log_weights,
            converged,
        },
    ))
}

/// MAP baseline: the first candidate.
pub fn map_predict(cands: &CandidateSet) -> Result<Prediction> {
    cands.require_nonempty()?;
    let objective = (0..cands.len()).map(|i| i as f64).collect();
    Ok(finish(cands, objective, 0.0, Diagnostics::default()))
}

/// `argmin_ŷ Σ_c ℓ(c, ŷ) w(c) exp(S(c)/T)`.
pub fn delta_predict(model: &GibbsModel, cands: &CandidateSet, loss: LossKind) -> Result<Prediction> {
    check_weights(cands)?;
    let lw = cands
        .items
        .iter()
        .map(|c| Ok(c.weight.ln() + model.log_gibbs_weight(&c.labels)?))
        .collect::<Result<Vec<_>>>()?;
    let n = lw.len();
    loss_weighted(cands, loss, lw, vec![true; n])
}

/// Posterior of the model restricted to the ball of radius `radius` around
/// `center`. Radius 0 is the point mass at the centre.
pub fn ball_posterior(
    model: &GibbsModel,
    center: &Configuration,
    radius: usize,
    source: &PosteriorSource,
) -> Result<ConstrainedPosterior> {
    if radius == 0 {
        let log_mass = model.log_gibbs_weight(center)?;
        if log_mass == f64::NEG_INFINITY {
            return Err(Error::EmptyBall);
        }
        let node_marginals = model
            .graph()
            .cardinalities()
            .iter()
            .zip(center.labels())
            .map(|(&k, &l)| {
                let mut row = vec![0.0; k];
                row[l] = 1.0;
                row
            })
            .collect();
        return Ok(ConstrainedPosterior {
            log_mass,
            node_marginals,
            converged: true,
        });
    }
    let ball = HammingBall::new(center.clone(), radius);
    match source {
        PosteriorSource::BeliefPropagation(settings) => constrained_posterior(model, &ball, settings),
        PosteriorSource::Exact => exact_constrained_oracle(model, &ball),
    }
}

/// Per-candidate ball posteriors, computed concurrently and returned in
/// candidate order.
pub fn candidate_posteriors(
    model: &GibbsModel,
    cands: &CandidateSet,
    radius: usize,
    source: &PosteriorSource,
) -> Result<Vec<ConstrainedPosterior>> {
    cands
        .items
        .par_iter()
        .map(|c| ball_posterior(model, &c.labels, radius, source))
        .collect()
}

fn log_masses(cands: &CandidateSet, posts: &[ConstrainedPosterior]) -> Vec<f64> {
    cands
        .items
        .iter()
        .zip(posts)
        .map(|(c, p)| c.weight.ln() + p.log_mass)
        .collect()
}

/// `argmin_ŷ Σ_c ℓ(c, ŷ) w(c) Z({c}, R)`.
pub fn mass_predict(
    model: &GibbsModel,
    cands: &CandidateSet,
    radius: usize,
    loss: LossKind,
    source: &PosteriorSource,
) -> Result<Prediction> {
    check_weights(cands)?;
    let posts = candidate_posteriors(model, cands, radius, source)?;
    mass_from_posteriors(cands, &posts, loss)
}

pub fn mass_from_posteriors(cands: &CandidateSet, posts: &[ConstrainedPosterior], loss: LossKind) -> Result<Prediction> {
    check_weights(cands)?;
    let converged = posts.iter().map(|p| p.converged).collect();
    loss_weighted(cands, loss, log_masses(cands, posts), converged)
}

pub fn unconstrained_marginals(model: &GibbsModel, source: &PosteriorSource) -> Result<Marginals> {
    match source {
        PosteriorSource::BeliefPropagation(settings) => sum_product(model, settings),
        PosteriorSource::Exact => exact_marginals(model),
    }
}

/// `argmin_ŷ f(P, ŷ)` with P the unconstrained node marginals.
pub fn crf_fela_predict(
    model: &GibbsModel,
    cands: &CandidateSet,
    loss: LossKind,
    source: &PosteriorSource,
) -> Result<Prediction> {
    cands.require_nonempty()?;
    let marginals = unconstrained_marginals(model, source)?;
    crf_fela_from_marginals(cands, &marginals, loss)
}

pub fn crf_fela_from_marginals(cands: &CandidateSet, marginals: &Marginals, loss: LossKind) -> Result<Prediction> {
    cands.require_nonempty()?;
    let objective = cands
        .items
        .iter()
        .map(|c| loss.fela(&marginals.node, &c.labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(
        cands,
        objective,
        0.0,
        Diagnostics {
            log_masses: Vec::new(),
            converged: vec![marginals.converged],
        },
    ))
}

/// `argmin_ŷ Σ_c w(c) Z({c}, R) f(P_{c,R}, ŷ)`.
pub fn c3rf_fela_predict(
    model: &GibbsModel,
    cands: &CandidateSet,
    radius: usize,
    loss: LossKind,
    source: &PosteriorSource,
) -> Result<Prediction> {
    check_weights(cands)?;
    let posts = candidate_posteriors(model, cands, radius, source)?;
    c3rf_fela_from_posteriors(cands, &posts, loss)
}

pub fn c3rf_fela_from_posteriors(
    cands: &CandidateSet,
    posts: &[ConstrainedPosterior],
    loss: LossKind,
) -> Result<Prediction> {
    check_weights(cands)?;
    let lw = log_masses(cands, posts);
    let (w, offset) = linear_weights(&lw)?;
    let objective = cands
        .items
        .iter()
        .map(|yhat| {
            posts.iter().zip(&w).try_fold(0.0, |acc, (p, &wc)| {
                Ok(acc + wc * loss.fela(&p.node_marginals, &yhat.labels)?)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(
        cands,
        objective,
        offset,
        Diagnostics {
            log_masses: lw,
            converged: posts.iter().map(|p| p.converged).collect(),
        },
    ))
}

/// Node marginals `Σ_c w(c) Z({c}, R) P_{i,c,R}`, normalised per variable.
pub fn c3rf_marginals(
    model: &GibbsModel,
    cands: &CandidateSet,
    radius: usize,
    source: &PosteriorSource,
) -> Result<Marginals> {
    check_weights(cands)?;
    let posts = candidate_posteriors(model, cands, radius, source)?;
    c3rf_marginals_from_posteriors(cands, &posts)
}

pub fn c3rf_marginals_from_posteriors(cands: &CandidateSet, posts: &[ConstrainedPosterior]) -> Result<Marginals> {
    check_weights(cands)?;
    let (w, _) = linear_weights(&log_masses(cands, posts))?;
    let mut node: Vec<Vec<f64>> = posts[0].node_marginals.iter().map(|r| vec![0.0; r.len()]).collect();
    for (p, &wc) in posts.iter().zip(&w) {
        for (acc, row) in node.iter_mut().zip(&p.node_marginals) {
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += wc * x;
            }
        }
    }
    for row in &mut node {
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            row.iter_mut().for_each(|x| *x /= z);
        }
    }
    Ok(Marginals {
        node,
        factor: Vec::new(),
        converged: posts.iter().all(|p| p.converged),
        iterations: 0,
    })
}

/// For each class `k` present in the ground truth,
/// `(1/|GT(k)|) Σ_{i ∈ GT(k)} log P_i(k)`. Returns `(class, value)` pairs in
/// class order.
pub fn log_prob_objective(node: &[Vec<f64>], ground_truth: &Configuration, classes: usize) -> Result<Vec<(usize, f64)>> {
    if node.len() != ground_truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} marginal vectors for a ground truth of length {}",
            node.len(),
            ground_truth.len()
        )));
    }
    let mut sum = vec![0.0; classes];
    let mut count = vec![0usize; classes];
    for (i, (row, &k)) in node.iter().zip(ground_truth.labels()).enumerate() {
        if k >= classes || k >= row.len() {
            return Err(Error::DimensionMismatch(format!("label {k} of variable {i} exceeds the class count")));
        }
        sum[k] += row[k].ln();
        count[k] += 1;
    }
    Ok((0..classes)
        .filter(|&k| count[k] > 0)
        .map(|k| (k, sum[k] / count[k] as f64))
        .collect())
}

/// Class mean of [`log_prob_objective`].
pub fn mean_log_prob(node: &[Vec<f64>], ground_truth: &Configuration, classes: usize) -> Result<f64> {
    let per_class = log_prob_objective(node, ground_truth, classes)?;
    Ok(per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len().max(1) as f64)
}

/// Run the configured predictor, using the configured temperature.
pub fn predict(
    model: &GibbsModel,
    cands: &CandidateSet,
    config: &PredictorConfig,
    source: &PosteriorSource,
) -> Result<Prediction> {
    config.validate()?;
    let model = model.with_temperature(config.temperature)?;
    let radius = config.radius(model.num_variables());
    match config.kind {
        PredictorKind::Map => map_predict(cands),
        PredictorKind::Delta => delta_predict(&model, cands, config.loss),
        PredictorKind::Mass => mass_predict(&model, cands, radius, config.loss, source),
        PredictorKind::CrfFela => crf_fela_predict(&model, cands, config.loss, source),
        PredictorKind::C3rfFela => c3rf_fela_predict(&model, cands, radius, config.loss, source),
    }
}
