//! Sum-product and max-product belief propagation in log space, the Bethe
//! estimate of `log Z`, and exhaustive enumeration oracles.
//!
//! Messages are updated sequentially: for each variable in id order, the
//! incoming factor messages are refreshed (factor id order) and then the
//! outgoing variable messages are recomputed. Messages may hold `-inf`
//! entries; a message that is entirely `-inf` means the graph admits no
//! configuration with positive weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Configuration, Factor, FactorGraph, GibbsModel, Potential};
use crate::math::{log_sum_exp, LogAccumulator};

/// Default cap on the number of configurations an exact routine may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub node: Vec<Vec<f64>>,
    pub factor: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BPSettings {
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub damping: f64,
}

impl Default for BPSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            convergence_tol: 1e-8,
            damping: 0.5,
        }
    }
}

impl BPSettings {
    /// Defaults with damping disabled on tree-structured graphs.
    pub fn for_graph(graph: &FactorGraph) -> Self {
        let mut s = Self::default();
        if graph.is_forest() {
            s.damping = 0.0;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter("convergence_tol must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter("damping must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Semiring {
    Sum,
    Max,
}

impl Semiring {
    fn reduce(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Semiring::Sum => {
                let mut acc = LogAccumulator::new();
                for v in values {
                    acc.add(v);
                }
                acc.value()
            }
            Semiring::Max => values.fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn accumulator(self) -> Reducer {
        match self {
            Semiring::Sum => Reducer::Sum(LogAccumulator::new()),
            Semiring::Max => Reducer::Max(f64::NEG_INFINITY),
        }
    }
}

enum Reducer {
    Sum(LogAccumulator),
    Max(f64),
}

impl Reducer {
    fn add(&mut self, x: f64) {
        match self {
            Reducer::Sum(acc) => acc.add(x),
            Reducer::Max(m) => {
                if x > *m {
                    *m = x
                }
            }
        }
    }

    fn value(&self) -> f64 {
        match self {
            Reducer::Sum(acc) => acc.value(),
            Reducer::Max(m) => *m,
        }
    }
}

/// Subtract the largest finite entry. Fails when every entry is `-inf`.
fn normalize(msg: &mut [f64]) -> Result<()> {
    let max = msg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllConfigurationsForbidden);
    }
    for x in msg.iter_mut() {
        *x -= max;
    }
    Ok(())
}

struct Engine<'a> {
    graph: &'a FactorGraph,
    mode: Semiring,
    /// Temperature-scaled tables (None for count factors).
    scaled: Vec<Option<Vec<f64>>>,
    /// First edge id of every factor; edge `offset[f] + j` joins factor `f`
    /// and the `j`-th variable of its scope.
    offset: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
    edge_factor: Vec<usize>,
    edge_pos: Vec<usize>,
    /// Count-factor messages toward the parent count variable. They are exact
    /// convolutions of normalised inputs, so they stay unnormalised and are
    /// left out of the convergence test.
    upward: Vec<bool>,
    /// Auxiliary count variables pass their messages through unnormalised.
    pass_through: Vec<bool>,
    to_var: Vec<Vec<f64>>,
    to_factor: Vec<Vec<f64>>,
}

impl<'a> Engine<'a> {
    fn new(model: &'a GibbsModel, mode: Semiring, temperature: f64) -> Self {
        let graph = model.graph();
        let cards = graph.cardinalities();
        let mut offset = Vec::with_capacity(graph.factors().len());
        let mut edge_factor = Vec::new();
        let mut edge_pos = Vec::new();
        let mut upward = Vec::new();
        let mut pass_through = vec![false; graph.num_variables()];
        let mut var_edges = vec![Vec::new(); graph.num_variables()];
        for (f, factor) in graph.factors().iter().enumerate() {
            offset.push(edge_factor.len());
            let last = factor.scope.len() - 1;
            for (j, &v) in factor.scope.iter().enumerate() {
                var_edges[v].push(edge_factor.len());
                edge_factor.push(f);
                edge_pos.push(j);
                upward.push(factor.is_count() && j == last);
            }
            if factor.is_count() {
                pass_through[factor.scope[last]] = true;
            }
        }
        let scaled = graph
            .factors()
            .iter()
            .map(|f| match &f.potential {
                Potential::Table(t) => Some(t.iter().map(|x| x / temperature).collect()),
                Potential::Count(_) => None,
            })
            .collect();
        let to_var = edge_factor
            .iter()
            .zip(&edge_pos)
            .map(|(&f, &j)| vec![0.0; cards[graph.factors()[f].scope[j]]])
            .collect::<Vec<_>>();
        let to_factor = to_var.clone();
        Self {
            graph,
            mode,
            scaled,
            offset,
            var_edges,
            edge_factor,
            edge_pos,
            upward,
            pass_through,
            to_var,
            to_factor,
        }
    }

    fn factor_edges(&self, f: usize) -> std::ops::Range<usize> {
        let start = self.offset[f];
        start..start + self.graph.factors()[f].scope.len()
    }

    fn compute_factor_message(&self, e: usize) -> Vec<f64> {
        let f = self.edge_factor[e];
        let target = self.edge_pos[e];
        let factor = &self.graph.factors()[f];
        match &factor.potential {
            Potential::Table(_) => self.table_message(f, factor, target),
            Potential::Count(count) => self.count_message(f, count, target),
        }
    }

    fn table_message(&self, f: usize, factor: &Factor, target: usize) -> Vec<f64> {
        let cards = self.graph.cardinalities();
        let table = self.scaled[f].as_ref().expect("table factor");
        let dims: Vec<usize> = factor.scope.iter().map(|&v| cards[v]).collect();
        let base = self.offset[f];
        let mut out: Vec<Reducer> = (0..dims[target]).map(|_| self.mode.accumulator()).collect();
        match dims.len() {
            1 => {
                for (x, &t) in table.iter().enumerate() {
                    out[x].add(t);
                }
            }
            2 => {
                let (a, b) = (&self.to_factor[base], &self.to_factor[base + 1]);
                for i in 0..dims[0] {
                    for j in 0..dims[1] {
                        let t = table[i * dims[1] + j];
                        if target == 0 {
                            out[i].add(t + b[j]);
                        } else {
                            out[j].add(t + a[i]);
                        }
                    }
                }
            }
            _ => {
                let mut idx = 0;
                crate::graph::for_each_assignment(&dims, |states| {
                    let mut v = table[idx];
                    for (j, &s) in states.iter().enumerate() {
                        if j != target {
                            v += self.to_factor[base + j][s];
                        }
                    }
                    out[states[target]].add(v);
                    idx += 1;
                });
            }
        }
        out.iter().map(Reducer::value).collect()
    }

    /// Messages of a count factor, computed on count distributions.
    fn count_message(
        &self,
        f: usize,
        count: &crate::graph::CountPotential,
        target: usize,
    ) -> Vec<f64> {
        let base = self.offset[f];
        let n_children = count.child_counts.len();
        let child_dist = |j: usize| -> Vec<f64> {
            let counts = &count.child_counts[j];
            let max = counts.iter().copied().max().unwrap_or(0);
            let mut dist: Vec<Reducer> = (0..=max).map(|_| self.mode.accumulator()).collect();
            for (s, &k) in counts.iter().enumerate() {
                dist[k].add(self.to_factor[base + j][s]);
            }
            dist.iter().map(Reducer::value).collect()
        };
        let cap = count.cap;
        if target == n_children {
            let mut out: Vec<Reducer> = (0..=cap).map(|_| self.mode.accumulator()).collect();
            let d0 = child_dist(0);
            if n_children == 1 {
                for (k, &v) in d0.iter().enumerate() {
                    out[k.min(cap)].add(v);
                }
            } else {
                let d1 = child_dist(1);
                for (k0, &v0) in d0.iter().enumerate() {
                    if v0 == f64::NEG_INFINITY {
                        continue;
                    }
                    for (k1, &v1) in d1.iter().enumerate() {
                        out[(k0 + k1).min(cap)].add(v0 + v1);
                    }
                }
            }
            return out.iter().map(Reducer::value).collect();
        }
        let parent = &self.to_factor[base + n_children];
        let counts = &count.child_counts[target];
        let max = counts.iter().copied().max().unwrap_or(0);
        let by_count: Vec<f64> = if n_children == 1 {
            (0..=max).map(|k| parent[k.min(cap)]).collect()
        } else {
            let other = child_dist(1 - target);
            (0..=max)
                .map(|k| {
                    self.mode.reduce(
                        other
                            .iter()
                            .enumerate()
                            .map(|(k2, &v)| v + parent[(k + k2).min(cap)]),
                    )
                })
                .collect()
        };
        counts.iter().map(|&k| by_count[k]).collect()
    }

    fn update_variable_messages(&mut self, v: usize) -> Result<()> {
        let edges = &self.var_edges[v];
        let k = self.graph.cardinality(v);
        for (a, &e) in edges.iter().enumerate() {
            let mut msg = vec![0.0; k];
            for (b, &other) in edges.iter().enumerate() {
                if a != b {
                    for (m, x) in msg.iter_mut().zip(&self.to_var[other]) {
                        *m += x;
                    }
                }
            }
            if self.pass_through[v] {
                if msg.iter().all(|&x| x == f64::NEG_INFINITY) {
                    return Err(Error::AllConfigurationsForbidden);
                }
            } else {
                normalize(&mut msg)?;
            }
            self.to_factor[e] = msg;
        }
        Ok(())
    }

    fn run(&mut self, settings: &BPSettings) -> Result<(bool, usize)> {
        settings.validate()?;
        let n = self.graph.num_variables();
        for v in 0..n {
            self.update_variable_messages(v)?;
        }
        // damping only slows exact convergence on trees
        let damping = if self.graph.is_forest() { 0.0 } else { settings.damping };
        for iteration in 1..=settings.max_iterations {
            let mut delta: f64 = 0.0;
            for v in 0..n {
                for idx in 0..self.var_edges[v].len() {
                    let e = self.var_edges[v][idx];
                    let mut msg = self.compute_factor_message(e);
                    if self.upward[e] {
                        if msg.iter().all(|&x| x == f64::NEG_INFINITY) {
                            return Err(Error::AllConfigurationsForbidden);
                        }
                    } else {
                        normalize(&mut msg)?;
                    }
                    let old = &self.to_var[e];
                    if damping > 0.0 {
                        for (m, &o) in msg.iter_mut().zip(old) {
                            if m.is_finite() && o.is_finite() {
                                *m = (1.0 - damping) * *m + damping * o;
                            }
                        }
                    }
                    if !self.upward[e] {
                        for (&m, &o) in msg.iter().zip(old) {
                            let d = if m == o {
                                0.0
                            } else if m.is_finite() && o.is_finite() {
                                (m - o).abs()
                            } else {
                                f64::INFINITY
                            };
                            delta = delta.max(d);
                        }
                    }
                    self.to_var[e] = msg;
                }
                self.update_variable_messages(v)?;
            }
            if delta < settings.convergence_tol {
                return Ok((true, iteration));
            }
        }
        Ok((false, settings.max_iterations))
    }

    fn node_log_beliefs(&self, v: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.graph.cardinality(v)];
        for &e in &self.var_edges[v] {
            for (x, m) in b.iter_mut().zip(&self.to_var[e]) {
                *x += m;
            }
        }
        b
    }

    fn factor_log_beliefs(&self, f: usize) -> Vec<f64> {
        let factor = &self.graph.factors()[f];
        let cards = self.graph.cardinalities();
        let dims: Vec<usize> = factor.scope.iter().map(|&v| cards[v]).collect();
        let edges = self.factor_edges(f);
        let mut out = Vec::with_capacity(factor.table_len(cards));
        let mut idx = 0;
        crate::graph::for_each_assignment(&dims, |states| {
            let theta = match &self.scaled[f] {
                Some(t) => t[idx],
                None => factor.log_value(cards, states),
            };
            let mut v = theta;
            if v != f64::NEG_INFINITY {
                for (e, &s) in edges.clone().zip(states) {
                    v += self.to_factor[e][s];
                }
            }
            out.push(v);
            idx += 1;
        });
        out
    }
}

fn to_probabilities(log_b: &[f64]) -> Result<Vec<f64>> {
    let z = log_sum_exp(log_b);
    if z == f64::NEG_INFINITY {
        return Err(Error::AllConfigurationsForbidden);
    }
    Ok(log_b.iter().map(|&x| (x - z).exp()).collect())
}

/// Node and factor beliefs from sum-product message passing. Exact on
/// tree-structured graphs.
pub fn sum_product(model: &GibbsModel, settings: &BPSettings) -> Result<Marginals> {
    let mut engine = Engine::new(model, Semiring::Sum, model.temperature());
    let (converged, iterations) = engine.run(settings)?;
    let node = (0..model.num_variables())
        .map(|v| to_probabilities(&engine.node_log_beliefs(v)))
        .collect::<Result<Vec<_>>>()?;
    let factor = (0..model.graph().factors().len())
        .map(|f| to_probabilities(&engine.factor_log_beliefs(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Marginals {
        node,
        factor,
        converged,
        iterations,
    })
}

/// Bethe estimate of `log Z` for weights `exp(S / T)`:
///
/// `Σ_F Σ μ_F (θ_F / T − log μ_F) + Σ_i (N(i) − 1) Σ μ_i log μ_i`
///
/// Entries with zero belief contribute nothing, even where `θ_F = -inf`.
pub fn bethe_log_z(model: &GibbsModel, marginals: &Marginals) -> f64 {
    let graph = model.graph();
    let t = model.temperature();
    let mut total = 0.0;
    for (f, factor) in graph.factors().iter().enumerate() {
        let beliefs = &marginals.factor[f];
        let mut term = 0.0;
        match &factor.potential {
            Potential::Table(table) => {
                for (&mu, &theta) in beliefs.iter().zip(table) {
                    if mu > 0.0 {
                        term += mu * (theta / t - mu.ln());
                    }
                }
            }
            Potential::Count(_) => {
                // θ is zero on the support of the belief
                for &mu in beliefs {
                    if mu > 0.0 {
                        term -= mu * mu.ln();
                    }
                }
            }
        }
        total += term;
    }
    for v in 0..graph.num_variables() {
        let degree = graph.neighbors(v).len() as f64;
        let mut neg_entropy = 0.0;
        for &mu in &marginals.node[v] {
            if mu > 0.0 {
                neg_entropy += mu * mu.ln();
            }
        }
        total += (degree - 1.0) * neg_entropy;
    }
    total
}

/// Max-product message passing followed by per-variable decoding (lowest
/// label on ties). Exact on trees with a unique maximiser.
pub fn map_maxproduct(model: &GibbsModel, settings: &BPSettings) -> Result<Configuration> {
    let mut engine = Engine::new(model, Semiring::Max, 1.0);
    engine.run(settings)?;
    let labels = (0..model.num_variables())
        .map(|v| {
            let b = engine.node_log_beliefs(v);
            let mut best = 0;
            for (x, &val) in b.iter().enumerate() {
                if val > b[best] {
                    best = x;
                }
            }
            best
        })
        .collect();
    Ok(Configuration::new(labels))
}

/// Depth-first enumeration of every configuration with finite score,
/// pruning a branch as soon as a fully assigned factor is `-inf`. An optional
/// Hamming ball restricts the search to configurations within `radius` of
/// `center`.
pub(crate) struct Enumerator<'a> {
    graph: &'a FactorGraph,
    cap: u128,
    ball: Option<(&'a [usize], usize)>,
    /// Factors indexed by the largest variable id in their scope.
    closing: Vec<Vec<usize>>,
}

impl<'a> Enumerator<'a> {
    pub(crate) fn new(graph: &'a FactorGraph, cap: u128) -> Self {
        let mut closing = vec![Vec::new(); graph.num_variables()];
        for (f, factor) in graph.factors().iter().enumerate() {
            let last = *factor.scope.iter().max().expect("non-empty scope");
            closing[last].push(f);
        }
        Self {
            graph,
            cap,
            ball: None,
            closing,
        }
    }

    pub(crate) fn within_ball(mut self, center: &'a [usize], radius: usize) -> Self {
        self.ball = Some((center, radius));
        self
    }

    /// Calls `visit(labels, score)` for every live configuration in
    /// lexicographic order and returns how many were visited.
    pub(crate) fn run(&self, mut visit: impl FnMut(&[usize], f64)) -> Result<u128> {
        let n = self.graph.num_variables();
        let mut labels = vec![0usize; n];
        let mut state = SearchState {
            live: 0,
            nodes: 0,
        };
        let node_budget = self.cap.saturating_mul(64);
        let mut scratch = Vec::new();
        self.descend(0, 0.0, 0, &mut labels, &mut state, node_budget, &mut scratch, &mut visit)?;
        Ok(state.live)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        v: usize,
        partial: f64,
        distance: usize,
        labels: &mut Vec<usize>,
        state: &mut SearchState,
        node_budget: u128,
        scratch: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], f64),
    ) -> Result<()> {
        if v == labels.len() {
            state.live += 1;
            if state.live > self.cap {
                return Err(Error::TooLargeToEnumerate(self.graph.space_size()));
            }
            visit(labels, partial);
            return Ok(());
        }
        let cards = self.graph.cardinalities();
        for x in 0..cards[v] {
            state.nodes += 1;
            if state.nodes > node_budget {
                return Err(Error::TooLargeToEnumerate(self.graph.space_size()));
            }
            let mut d = distance;
            if let Some((center, radius)) = self.ball {
                if center[v] != x {
                    d += 1;
                    if d > radius {
                        continue;
                    }
                }
            }
            labels[v] = x;
            let mut s = partial;
            for &f in &self.closing[v] {
                let factor = &self.graph.factors()[f];
                scratch.clear();
                scratch.extend(factor.scope.iter().map(|&u| labels[u]));
                s += factor.log_value(cards, scratch);
                if s == f64::NEG_INFINITY {
                    break;
                }
            }
            if s == f64::NEG_INFINITY {
                continue;
            }
            self.descend(v + 1, s, d, labels, state, node_budget, scratch, visit)?;
        }
        Ok(())
    }
}

struct SearchState {
    live: u128,
    nodes: u128,
}

/// Exact `log Z` and marginals over the live configurations reached by `en`.
pub(crate) fn enumerate_marginals(
    en: &Enumerator<'_>,
    temperature: f64,
) -> Result<(f64, Marginals)> {
    let graph = en.graph;
    let mut max = f64::NEG_INFINITY;
    let live = en.run(|_, s| max = max.max(s / temperature))?;
    if live == 0 {
        return Err(Error::AllConfigurationsForbidden);
    }
    let cards = graph.cardinalities();
    let mut node: Vec<Vec<f64>> = cards.iter().map(|&k| vec![0.0; k]).collect();
    let mut factor: Vec<Vec<f64>> = graph
        .factors()
        .iter()
        .map(|f| vec![0.0; f.table_len(cards)])
        .collect();
    let mut total = 0.0;
    let mut states = Vec::new();
    en.run(|labels, s| {
        let w = (s / temperature - max).exp();
        total += w;
        for (v, &l) in labels.iter().enumerate() {
            node[v][l] += w;
        }
        for (f, fac) in graph.factors().iter().enumerate() {
            states.clear();
            states.extend(fac.scope.iter().map(|&u| labels[u]));
            factor[f][fac.table_index(cards, &states)] += w;
        }
    })?;
    for row in node.iter_mut().chain(factor.iter_mut()) {
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    Ok((
        max + total.ln(),
        Marginals {
            node,
            factor,
            converged: true,
            iterations: 0,
        },
    ))
}

/// `log Σ_y exp(S(y) / T)` by enumeration.
pub fn exact_log_z(model: &GibbsModel) -> Result<f64> {
    exact_log_z_capped(model, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_log_z_capped(model: &GibbsModel, cap: u128) -> Result<f64> {
    let en = Enumerator::new(model.graph(), cap);
    let t = model.temperature();
    let mut max = f64::NEG_INFINITY;
    en.run(|_, s| max = max.max(s / t))?;
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    en.run(|_, s| total += (s / t - max).exp())?;
    Ok(max + total.ln())
}

/// Exact node and factor marginals by enumeration.
pub fn exact_marginals(model: &GibbsModel) -> Result<Marginals> {
    let en = Enumerator::new(model.graph(), DEFAULT_ENUMERATION_CAP);
    Ok(enumerate_marginals(&en, model.temperature())?.1)
}

/// `argmax_y S(y)`, ties broken toward the lexicographically smallest
/// configuration.
pub fn map_exhaustive(model: &GibbsModel) -> Result<Configuration> {
    map_exhaustive_capped(model, DEFAULT_ENUMERATION_CAP)
}

pub fn map_exhaustive_capped(model: &GibbsModel, cap: u128) -> Result<Configuration> {
    let en = Enumerator::new(model.graph(), cap);
    let mut best: Option<(f64, Vec<usize>)> = None;
    en.run(|labels, s| {
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, labels.to_vec()));
        }
    })?;
    best.map(|(_, l)| Configuration::new(l))
        .ok_or(Error::AllConfigurationsForbidden)
}
