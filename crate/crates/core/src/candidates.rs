//! Diverse M-best candidate generation and candidate-set curation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Configuration, GibbsModel, GraphBuilder};
use crate::infer::{map_exhaustive, map_maxproduct, BPSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub labels: Configuration,
    pub score: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub items: Vec<Candidate>,
    #[serde(default)]
    pub lambda: f64,
    /// Set when the candidates came from an approximate MAP solver.
    #[serde(default)]
    pub heuristic_map: bool,
}

impl CandidateSet {
    /// Unit-weight candidates with scores computed under `model`.
    pub fn from_configurations(model: &GibbsModel, configs: Vec<Configuration>) -> Result<Self> {
        let items = configs
            .into_iter()
            .map(|labels| {
                let score = model.score(&labels)?;
                Ok(Candidate {
                    labels,
                    score,
                    weight: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            items,
            lambda: 0.0,
            heuristic_map: false,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn configurations(&self) -> impl Iterator<Item = &Configuration> {
        self.items.iter().map(|c| &c.labels)
    }

    /// Indices whose stored score differs from the model score by more than
    /// `tol` (or whose configuration is invalid for the model).
    pub fn verify_scores(&self, model: &GibbsModel, tol: f64) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, c)| match model.score(&c.labels) {
                Ok(s) if s == c.score => false,
                Ok(s) => !((s - c.score).abs() <= tol),
                Err(_) => true,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Recompute every score from the model.
    pub fn rescore(&mut self, model: &GibbsModel) -> Result<()> {
        for c in &mut self.items {
            c.score = model.score(&c.labels)?;
        }
        Ok(())
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSolver {
    Exhaustive,
    MaxProduct,
}

/// Sequential diverse MAP: the first candidate is the MAP, and each later one
/// maximises `S(y) + λ Σ_{m' < m} Δ(y, y^{m'})` with Hamming `Δ`.
pub fn divmbest(
    model: &GibbsModel,
    m: usize,
    lambda: f64,
    solver: MapSolver,
    settings: &BPSettings,
) -> Result<CandidateSet> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be at least 1".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be non-negative, got {lambda}")));
    }
    let graph = model.graph();
    let n = graph.num_variables();
    let mut bonus: Vec<Vec<f64>> = graph.cardinalities().iter().map(|&k| vec![0.0; k]).collect();
    let mut items = Vec::with_capacity(m);
    for round in 0..m {
        let target = if round == 0 || lambda == 0.0 {
            model.clone()
        } else {
            let mut b = GraphBuilder::from_graph(graph);
            for (v, row) in bonus.iter().enumerate() {
                b.add_table(vec![v], row.clone());
            }
            GibbsModel::new(b.build()?, 1.0)?
        };
        let labels = solve(&target, solver, settings)?;
        let score = model.score(&labels)?;
        if lambda > 0.0 {
            for v in 0..n {
                for (k, x) in bonus[v].iter_mut().enumerate() {
                    if k != labels[v] {
                        *x += lambda;
                    }
                }
            }
        }
        items.push(Candidate {
            labels,
            score,
            weight: 1.0,
        });
    }
    Ok(CandidateSet {
        items,
        lambda,
        heuristic_map: solver == MapSolver::MaxProduct,
    })
}

fn solve(model: &GibbsModel, solver: MapSolver, settings: &BPSettings) -> Result<Configuration> {
    match solver {
        MapSolver::Exhaustive => map_exhaustive(model),
        MapSolver::MaxProduct => map_maxproduct(model, settings),
    }
}

/// Keep first occurrences until `target` distinct configurations are found.
///
/// When the set has fewer than `target` distinct configurations, the surplus
/// duplicates are not dropped: each kept item's weight becomes the total
/// weight of all its occurrences.
pub fn first_unique(set: &CandidateSet, target: usize) -> CandidateSet {
    let mut index: HashMap<&Configuration, usize> = HashMap::new();
    let mut kept: Vec<Candidate> = Vec::new();
    let mut folded: Vec<f64> = Vec::new();
    for c in &set.items {
        match index.get(&c.labels) {
            Some(&i) => folded[i] += c.weight,
            None if kept.len() < target => {
                index.insert(&c.labels, kept.len());
                kept.push(c.clone());
                folded.push(c.weight);
            }
            None => {}
        }
    }
    if kept.len() < target {
        for (c, w) in kept.iter_mut().zip(folded) {
            c.weight = w;
        }
    }
    CandidateSet {
        items: kept,
        lambda: set.lambda,
        heuristic_map: set.heuristic_map,
    }
}
