//! Discrete factor graphs with log-potential tables, Gibbs scoring and
//! synthetic grid generation.
//!
//! Log-potentials are stored directly; `f64::NEG_INFINITY` marks a forbidden
//! joint assignment. Tables are dense and row-major in scope order, so the
//! last variable of the scope varies fastest.

use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableSpec {
    pub id: usize,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub id: usize,
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

/// Hard count constraint used by cardinality trees.
///
/// The scope is `[children.., parent]`. Child `j` in state `s` contributes
/// `child_counts[j][s]` to the total, and the factor is `0` when the parent
/// state equals `min(total, cap)` and `-inf` otherwise. The parent therefore
/// has `cap + 1` states, the last one being the saturated "at least cap" bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPotential {
    pub child_counts: Vec<Vec<usize>>,
    pub cap: usize,
}

impl CountPotential {
    pub fn parent_state(&self, child_states: &[usize]) -> usize {
        let total: usize = child_states
            .iter()
            .zip(&self.child_counts)
            .map(|(&s, counts)| counts[s])
            .sum();
        total.min(self.cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Table(Vec<f64>),
    Count(CountPotential),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub potential: Potential,
}

impl Factor {
    /// Log-potential of the factor for the given scope assignment.
    pub fn log_value(&self, cards: &[usize], states: &[usize]) -> f64 {
        match &self.potential {
            Potential::Table(table) => table[self.table_index(cards, states)],
            Potential::Count(count) => {
                let (children, parent) = states.split_at(states.len() - 1);
                if count.parent_state(children) == parent[0] {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Row-major index of a scope assignment.
    pub fn table_index(&self, cards: &[usize], states: &[usize]) -> usize {
        self.scope
            .iter()
            .zip(states)
            .fold(0, |acc, (&v, &s)| acc * cards[v] + s)
    }

    pub fn table_len(&self, cards: &[usize]) -> usize {
        self.scope.iter().map(|&v| cards[v]).product()
    }

    /// Dense row-major table, materialising count constraints if needed.
    pub fn dense_table(&self, cards: &[usize]) -> Vec<f64> {
        match &self.potential {
            Potential::Table(t) => t.clone(),
            Potential::Count(_) => {
                let dims: Vec<usize> = self.scope.iter().map(|&v| cards[v]).collect();
                let mut out = Vec::with_capacity(self.table_len(cards));
                for_each_assignment(&dims, |states| out.push(self.log_value(cards, states)));
                out
            }
        }
    }

    pub fn is_count(&self) -> bool {
        matches!(self.potential, Potential::Count(_))
    }
}

/// Visit every joint assignment of `dims` in row-major order.
pub fn for_each_assignment(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut states = vec![0usize; dims.len()];
    loop {
        f(&states);
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            states[pos] += 1;
            if states[pos] < dims[pos] {
                break;
            }
            states[pos] = 0;
        }
    }
}

/// A validated factor graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    cards: Vec<usize>,
    factors: Vec<Factor>,
    adjacency: Vec<Vec<usize>>,
}

impl FactorGraph {
    pub fn num_variables(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn cardinality(&self, v: usize) -> usize {
        self.cards[v]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Factor ids adjacent to variable `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn is_binary(&self) -> bool {
        self.cards.iter().all(|&k| k == 2)
    }

    /// Size of the joint label space, saturating at `u128::MAX`.
    pub fn space_size(&self) -> u128 {
        self.cards
            .iter()
            .fold(1u128, |acc, &k| acc.saturating_mul(k as u128))
    }

    /// True when the bipartite variable/factor graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let n = self.cards.len();
        let mut parent: Vec<usize> = (0..n + self.factors.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (f, factor) in self.factors.iter().enumerate() {
            for &v in &factor.scope {
                let a = find(&mut parent, v);
                let b = find(&mut parent, n + f);
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }

    pub fn check_configuration(&self, y: &Configuration) -> Result<()> {
        if y.len() != self.cards.len() {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} labels, got {}",
                self.cards.len(),
                y.len()
            )));
        }
        for (i, (&l, &k)) in y.labels().iter().zip(&self.cards).enumerate() {
            if l >= k {
                return Err(Error::InvalidConfiguration(format!(
                    "label {l} of variable {i} is out of range 0..{k}"
                )));
            }
        }
        Ok(())
    }

    /// Graph holding the variables and factors of `self` followed by those of
    /// `other`, with the ids of `other` shifted.
    pub fn disjoint_union(&self, other: &FactorGraph) -> FactorGraph {
        let offset = self.cards.len();
        let mut builder = GraphBuilder::from_graph(self);
        for &k in &other.cards {
            builder.add_variable(k);
        }
        for f in &other.factors {
            builder.factors.push(Factor {
                scope: f.scope.iter().map(|&v| v + offset).collect(),
                potential: f.potential.clone(),
            });
        }
        builder.build().expect("union of valid graphs is valid")
    }

    pub fn to_specs(&self) -> (Vec<VariableSpec>, Vec<FactorSpec>) {
        let vars = self
            .cards
            .iter()
            .enumerate()
            .map(|(id, &cardinality)| VariableSpec { id, cardinality })
            .collect();
        let factors = self
            .factors
            .iter()
            .enumerate()
            .map(|(id, f)| FactorSpec {
                id,
                scope: f.scope.clone(),
                table: f.dense_table(&self.cards),
            })
            .collect();
        (vars, factors)
    }
}

/// Incremental construction of factor graphs, used for synthetic instances
/// and for gadget-augmented graphs.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    cards: Vec<usize>,
    factors: Vec<Factor>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_graph(graph: &FactorGraph) -> Self {
        Self {
            cards: graph.cards.clone(),
            factors: graph.factors.clone(),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, v: usize) -> usize {
        self.cards[v]
    }

    pub fn add_variable(&mut self, cardinality: usize) -> usize {
        self.cards.push(cardinality);
        self.cards.len() - 1
    }

    pub fn add_table(&mut self, scope: Vec<usize>, table: Vec<f64>) -> usize {
        self.factors.push(Factor {
            scope,
            potential: Potential::Table(table),
        });
        self.factors.len() - 1
    }

    /// Adds a count constraint over `children` and returns the new parent
    /// count variable (cardinality `cap + 1`).
    pub fn add_count(&mut self, children: Vec<(usize, Vec<usize>)>, cap: usize) -> usize {
        let parent = self.add_variable(cap + 1);
        let (mut scope, child_counts): (Vec<usize>, Vec<Vec<usize>>) = children.into_iter().unzip();
        scope.push(parent);
        self.factors.push(Factor {
            scope,
            potential: Potential::Count(CountPotential { child_counts, cap }),
        });
        parent
    }

    pub fn build(self) -> Result<FactorGraph> {
        let n = self.cards.len();
        for (v, &k) in self.cards.iter().enumerate() {
            if k < 2 && !(k == 1 && self.is_count_parent(v)) {
                return Err(Error::InvalidCardinality {
                    variable: v,
                    cardinality: k,
                });
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (f, factor) in self.factors.iter().enumerate() {
            let mut seen = Vec::with_capacity(factor.scope.len());
            for &v in &factor.scope {
                if v >= n || seen.contains(&v) {
                    return Err(Error::ScopeOutOfRange {
                        factor: f,
                        variable: v,
                    });
                }
                seen.push(v);
            }
            match &factor.potential {
                Potential::Table(table) => {
                    let expected = factor.table_len(&self.cards);
                    if table.len() != expected {
                        return Err(Error::TableSizeMismatch {
                            factor: f,
                            expected,
                            actual: table.len(),
                        });
                    }
                    if table.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                        return Err(Error::NaNPotential(f));
                    }
                }
                Potential::Count(count) => {
                    let children = &factor.scope[..factor.scope.len() - 1];
                    let parent = *factor.scope.last().expect("count factor has a parent");
                    let ok = !children.is_empty()
                        && children.len() <= 2
                        && count.child_counts.len() == children.len()
                        && self.cards[parent] == count.cap + 1
                        && children
                            .iter()
                            .zip(&count.child_counts)
                            .all(|(&c, counts)| counts.len() == self.cards[c]);
                    if !ok {
                        return Err(Error::TableSizeMismatch {
                            factor: f,
                            expected: count.cap + 1,
                            actual: self.cards[parent],
                        });
                    }
                }
            }
            for &v in &factor.scope {
                adjacency[v].push(f);
            }
        }
        Ok(FactorGraph {
            cards: self.cards,
            factors: self.factors,
            adjacency,
        })
    }

    fn is_count_parent(&self, v: usize) -> bool {
        self.factors
            .iter()
            .any(|f| f.is_count() && f.scope.last() == Some(&v))
    }
}

/// Validates variable and factor specs and builds the adjacency structure.
pub fn build_graph(vars: &[VariableSpec], factors: &[FactorSpec]) -> Result<FactorGraph> {
    let mut cards = vec![0usize; vars.len()];
    let mut seen = vec![false; vars.len()];
    for v in vars {
        if v.id >= vars.len() {
            return Err(Error::InvalidParameter(format!(
                "variable id {} is not in 0..{}",
                v.id,
                vars.len()
            )));
        }
        if seen[v.id] {
            return Err(Error::DuplicateId(v.id));
        }
        seen[v.id] = true;
        cards[v.id] = v.cardinality;
    }
    let mut ordered: Vec<&FactorSpec> = Vec::with_capacity(factors.len());
    let mut seen_factor = vec![false; factors.len()];
    for f in factors {
        if f.id >= factors.len() {
            return Err(Error::InvalidParameter(format!(
                "factor id {} is not in 0..{}",
                f.id,
                factors.len()
            )));
        }
        if seen_factor[f.id] {
            return Err(Error::DuplicateId(f.id));
        }
        seen_factor[f.id] = true;
    }
    ordered.extend(factors.iter());
    ordered.sort_by_key(|f| f.id);

    let mut builder = GraphBuilder::new();
    for (v, &k) in cards.iter().enumerate() {
        if k < 2 {
            return Err(Error::InvalidCardinality {
                variable: v,
                cardinality: k,
            });
        }
        builder.add_variable(k);
    }
    for f in ordered {
        builder.add_table(f.scope.clone(), f.table.clone());
    }
    builder.build()
}

/// A label assignment for every variable of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(Vec<usize>);

impl Configuration {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Configuration {
    fn from(labels: Vec<usize>) -> Self {
        Self(labels)
    }
}

impl Index<usize> for Configuration {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// A factor graph together with the temperature of its Gibbs distribution,
/// `P(y) ∝ exp(S(y) / T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsModel {
    graph: FactorGraph,
    temperature: f64,
}

impl GibbsModel {
    pub fn new(graph: FactorGraph, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidTemperature(temperature));
        }
        Ok(Self { graph, temperature })
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn num_variables(&self) -> usize {
        self.graph.num_variables()
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(self.graph.clone(), temperature)
    }

    /// `S(y) = Σ_F θ_F(y_F)`. The temperature is not applied.
    pub fn score(&self, y: &Configuration) -> Result<f64> {
        self.graph.check_configuration(y)?;
        Ok(score_unchecked(&self.graph, y.labels()))
    }

    /// Unnormalised log-probability `S(y) / T`.
    pub fn log_gibbs_weight(&self, y: &Configuration) -> Result<f64> {
        Ok(self.score(y)? / self.temperature)
    }
}

pub(crate) fn score_unchecked(graph: &FactorGraph, labels: &[usize]) -> f64 {
    let cards = graph.cardinalities();
    let mut states = Vec::new();
    let mut total = 0.0;
    for f in graph.factors() {
        states.clear();
        states.extend(f.scope.iter().map(|&v| labels[v]));
        total += f.log_value(cards, &states);
    }
    total
}

/// N×N grid of binary variables with one unary factor per variable and one
/// pairwise factor per 4-connected edge. Every table entry is drawn
/// independently from `Uniform[potential_low, 0]`.
///
/// Variables are numbered row-major. Unary factors come first (in variable
/// order), then for each cell the edge to its right neighbour followed by
/// the edge to the neighbour below.
pub fn gen_grid(n: usize, seed: u64, potential_low: f64) -> Result<GibbsModel> {
    gen_labelled_grid(n, 2, seed, potential_low)
}

/// Same layout as [`gen_grid`] with `labels` states per variable.
pub fn gen_labelled_grid(
    n: usize,
    labels: usize,
    seed: u64,
    potential_low: f64,
) -> Result<GibbsModel> {
    if n == 0 {
        return Err(Error::InvalidParameter("grid side must be at least 1".into()));
    }
    if !(potential_low <= 0.0 && potential_low.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "potential_low must be non-positive and finite, got {potential_low}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(potential_low..=0.0)).collect()
    };
    let mut builder = GraphBuilder::new();
    for _ in 0..n * n {
        builder.add_variable(labels);
    }
    for v in 0..n * n {
        builder.add_table(vec![v], draw(labels));
    }
    for r in 0..n {
        for c in 0..n {
            let v = r * n + c;
            if c + 1 < n {
                builder.add_table(vec![v, v + 1], draw(labels * labels));
            }
            if r + 1 < n {
                builder.add_table(vec![v, v + n], draw(labels * labels));
            }
        }
    }
    GibbsModel::new(builder.build()?, 1.0)
}
