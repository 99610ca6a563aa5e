//! Hamming-ball constraints built from cardinality trees.
//!
//! A cardinality tree is a balanced binary tree of auxiliary count variables
//! over a set of leaves; each internal node holds the (saturated) sum of its
//! children's counts. Putting a potential on the root constrains the number
//! of leaves that are "on". Binary graphs use the original variables as
//! leaves directly, with the leaf count being disagreement with the centre.
//! Multi-label graphs are first expanded into one indicator per
//! variable-label pair, tied together by 1-of-K gadgets.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Configuration, FactorGraph, GibbsModel, GraphBuilder, Potential};
use crate::infer::{bethe_log_z, enumerate_marginals, sum_product, BPSettings, Enumerator};
use crate::math::LogAccumulator;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingBall {
    pub center: Configuration,
    pub radius: usize,
}

impl HammingBall {
    pub fn new(center: Configuration, radius: usize) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, y: &Configuration) -> bool {
        hamming_distance(&self.center, y).is_ok_and(|d| d <= self.radius)
    }

    fn validate(&self, graph: &FactorGraph) -> Result<()> {
        graph.check_configuration(&self.center)?;
        if self.radius > graph.num_variables() {
            return Err(Error::InvalidParameter(format!(
                "radius {} exceeds the number of variables {}",
                self.radius,
                graph.num_variables()
            )));
        }
        Ok(())
    }
}

/// Number of positions where `a` and `b` disagree.
pub fn hamming_distance(a: &Configuration, b: &Configuration) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.labels().iter().zip(b.labels()).filter(|(x, y)| x != y).count())
}

/// `Σ_{d=0..R} C(n, d) (K − 1)^d`, the number of configurations within
/// distance `R` of a point when every variable has `K` labels.
pub fn ball_volume(n: usize, k: usize, radius: usize) -> Result<u128> {
    if n == 0 || k < 2 || radius > n {
        return Err(Error::InvalidParameter(format!(
            "ball_volume needs n >= 1, K >= 2, R <= n (got n={n}, K={k}, R={radius})"
        )));
    }
    let overflow = || Error::Overflow(format!("ball volume for n={n}, K={k}, R={radius}"));
    ball_shell_sizes(n, k, radius)?
        .into_iter()
        .try_fold(0u128, |acc, s| acc.checked_add(s).ok_or_else(overflow))
}

/// `C(n, d) (K − 1)^d` for `d = 0..=R`.
fn ball_shell_sizes(n: usize, k: usize, radius: usize) -> Result<Vec<u128>> {
    let overflow = || Error::Overflow(format!("ball shell sizes for n={n}, K={k}"));
    let mut binom: u128 = 1;
    let mut power: u128 = 1;
    let mut shells = Vec::with_capacity(radius + 1);
    for d in 0..=radius {
        if d > 0 {
            binom = binom
                .checked_mul((n - d + 1) as u128)
                .ok_or_else(overflow)?
                / d as u128;
            power = power.checked_mul((k - 1) as u128).ok_or_else(overflow)?;
        }
        shells.push(binom.checked_mul(power).ok_or_else(overflow)?);
    }
    Ok(shells)
}

/// Handle to a node of a cardinality tree under construction: the variable
/// and the count it contributes in each of its states.
#[derive(Debug, Clone)]
struct TreeNode {
    var: usize,
    counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardinalityTree {
    /// Leaf variables (in tree order) and their per-state counts.
    pub leaves: Vec<(usize, Vec<usize>)>,
    /// Auxiliary count variables, bottom-up; the last one is the root.
    pub internal: Vec<usize>,
    pub root: usize,
    pub saturation_cap: usize,
}

impl CardinalityTree {
    /// Balanced binary tree over `leaves` (kept in the given order).
    pub fn build(builder: &mut GraphBuilder, leaves: Vec<(usize, Vec<usize>)>, cap: usize) -> Self {
        Self::build_split(builder, vec![leaves], cap)
    }

    /// One balanced subtree per group, all summed at the root.
    pub fn build_split(
        builder: &mut GraphBuilder,
        groups: Vec<Vec<(usize, Vec<usize>)>>,
        cap: usize,
    ) -> Self {
        assert!(cap >= 1, "saturation cap must be positive");
        let first_aux = builder.num_variables();
        let leaves: Vec<(usize, Vec<usize>)> = groups.iter().flatten().cloned().collect();
        assert!(!leaves.is_empty(), "cardinality tree needs at least one leaf");
        let subtrees: Vec<TreeNode> = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                let nodes: Vec<TreeNode> = g
                    .into_iter()
                    .map(|(var, counts)| TreeNode { var, counts })
                    .collect();
                balanced(builder, &nodes, cap)
            })
            .collect();
        let root = match subtrees.len() {
            1 if subtrees[0].var >= first_aux => subtrees[0].var,
            _ => {
                let children = subtrees.into_iter().map(|n| (n.var, n.counts)).collect();
                builder.add_count(children, cap)
            }
        };
        Self {
            leaves,
            internal: (first_aux..builder.num_variables()).collect(),
            root,
            saturation_cap: cap,
        }
    }
}

fn balanced(builder: &mut GraphBuilder, nodes: &[TreeNode], cap: usize) -> TreeNode {
    if nodes.len() == 1 {
        return nodes[0].clone();
    }
    let mid = nodes.len().div_ceil(2);
    let left = balanced(builder, &nodes[..mid], cap);
    let right = balanced(builder, &nodes[mid..], cap);
    let var = builder.add_count(vec![(left.var, left.counts), (right.var, right.counts)], cap);
    TreeNode {
        var,
        counts: (0..=cap).collect(),
    }
}

/// Adds a root table allowing only the given counts.
fn constrain_root(builder: &mut GraphBuilder, tree: &CardinalityTree, allowed: impl Fn(usize) -> bool) {
    let table = (0..=tree.saturation_cap)
        .map(|k| if allowed(k) { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    builder.add_table(vec![tree.root], table);
}

/// Sets every count-tree parent to the value implied by its children.
/// Count factors are stored after their children, so one pass suffices.
fn fill_count_variables(graph: &FactorGraph, labels: &mut [usize]) {
    for f in graph.factors() {
        if let Potential::Count(count) = &f.potential {
            let (children, parent) = f.scope.split_at(f.scope.len() - 1);
            let states: Vec<usize> = children.iter().map(|&c| labels[c]).collect();
            labels[parent[0]] = count.parent_state(&states);
        }
    }
}

/// A multi-label model rewritten over binary indicators `b_{i,k}` with a
/// 1-of-K gadget on each original variable.
#[derive(Debug, Clone)]
pub struct ExpandedBinaryGraph {
    pub model: GibbsModel,
    /// `indicators[i][k]` is the id of `b_{i,k}`.
    pub indicators: Vec<Vec<usize>>,
    pub gadgets: Vec<CardinalityTree>,
}

impl ExpandedBinaryGraph {
    pub fn num_original(&self) -> usize {
        self.indicators.len()
    }

    /// Full assignment of the expanded graph encoding `y`.
    pub fn lift(&self, y: &Configuration) -> Configuration {
        let graph = self.model.graph();
        let mut labels = vec![0usize; graph.num_variables()];
        for (i, ids) in self.indicators.iter().enumerate() {
            labels[ids[y[i]]] = 1;
        }
        fill_count_variables(graph, &mut labels);
        Configuration::new(labels)
    }

    fn builder(&self) -> GraphBuilder {
        GraphBuilder::from_graph(self.model.graph())
    }
}

/// Expands `model` into an equivalent binary graph. Unary potentials land on
/// single indicators, and a factor over `a` variables becomes one factor per
/// joint assignment over the matching `a` indicators, active only when all
/// of them are on.
pub fn expand_multilabel(model: &GibbsModel) -> Result<ExpandedBinaryGraph> {
    let graph = model.graph();
    let cards = graph.cardinalities();
    let mut builder = GraphBuilder::new();
    let mut indicators = Vec::with_capacity(graph.num_variables());
    let mut gadgets = Vec::with_capacity(graph.num_variables());
    for &k in cards {
        let ids: Vec<usize> = (0..k).map(|_| builder.add_variable(2)).collect();
        let tree = CardinalityTree::build(
            &mut builder,
            ids.iter().map(|&b| (b, vec![0, 1])).collect(),
            2,
        );
        constrain_root(&mut builder, &tree, |c| c == 1);
        indicators.push(ids);
        gadgets.push(tree);
    }
    for factor in graph.factors() {
        let dims: Vec<usize> = factor.scope.iter().map(|&v| cards[v]).collect();
        let table = factor.dense_table(cards);
        let arity = factor.scope.len();
        let all_on = (1usize << arity) - 1;
        let mut idx = 0;
        crate::graph::for_each_assignment(&dims, |states| {
            let scope: Vec<usize> = factor
                .scope
                .iter()
                .zip(states)
                .map(|(&v, &s)| indicators[v][s])
                .collect();
            let mut t = vec![0.0; 1 << arity];
            t[all_on] = table[idx];
            builder.add_table(scope, t);
            idx += 1;
        });
    }
    Ok(ExpandedBinaryGraph {
        model: GibbsModel::new(builder.build()?, model.temperature())?,
        indicators,
        gadgets,
    })
}

#[derive(Debug, Clone)]
enum Readout {
    /// The first `n` variables of the augmented graph are the originals.
    Direct(usize),
    Expanded(ExpandedBinaryGraph),
}

/// A model with a Hamming-ball constraint attached.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub model: GibbsModel,
    pub tree: CardinalityTree,
    readout: Readout,
}

impl AugmentedModel {
    pub fn is_expanded(&self) -> bool {
        matches!(self.readout, Readout::Expanded(_))
    }

    /// Full assignment of the augmented graph for an original configuration.
    pub fn lift(&self, y: &Configuration) -> Configuration {
        let graph = self.model.graph();
        let mut labels = vec![0usize; graph.num_variables()];
        match &self.readout {
            Readout::Direct(n) => labels[..*n].copy_from_slice(y.labels()),
            Readout::Expanded(ex) => {
                for (i, ids) in ex.indicators.iter().enumerate() {
                    labels[ids[y[i]]] = 1;
                }
            }
        }
        fill_count_variables(graph, &mut labels);
        Configuration::new(labels)
    }

    /// Node marginals in the original label space.
    pub fn original_marginals(&self, node: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match &self.readout {
            Readout::Direct(n) => node[..*n].to_vec(),
            Readout::Expanded(ex) => ex
                .indicators
                .iter()
                .map(|ids| {
                    let on: Vec<f64> = ids.iter().map(|&b| node[b][1]).collect();
                    let total: f64 = on.iter().sum();
                    on.iter().map(|p| p / total).collect()
                })
                .collect(),
        }
    }
}

/// Attaches the Hamming-ball constraint with saturation cap `R + 1`.
pub fn attach_hamming_hop(model: &GibbsModel, ball: &HammingBall) -> Result<AugmentedModel> {
    attach_hamming_hop_with_cap(model, ball, ball.radius + 1)
}

/// As [`attach_hamming_hop`] with an explicit saturation cap. Any cap above
/// the radius gives the same distribution.
pub fn attach_hamming_hop_with_cap(
    model: &GibbsModel,
    ball: &HammingBall,
    cap: usize,
) -> Result<AugmentedModel> {
    let graph = model.graph();
    ball.validate(graph)?;
    let n = graph.num_variables();
    if cap <= ball.radius && cap < n {
        return Err(Error::InvalidParameter(format!(
            "saturation cap {cap} must exceed the radius {} or cover all {n} variables",
            ball.radius
        )));
    }
    // no count can exceed n
    let cap = cap.min(n.max(1));
    let c = ball.center.labels();
    if graph.is_binary() {
        let mut builder = GraphBuilder::from_graph(graph);
        // leaves where c is on count the off bits, leaves where c is off count the on bits
        let on_in_c = (0..n).filter(|&i| c[i] == 1).map(|i| (i, vec![1, 0])).collect();
        let off_in_c = (0..n).filter(|&i| c[i] == 0).map(|i| (i, vec![0, 1])).collect();
        let tree = CardinalityTree::build_split(&mut builder, vec![on_in_c, off_in_c], cap);
        constrain_root(&mut builder, &tree, |k| k <= ball.radius);
        Ok(AugmentedModel {
            model: GibbsModel::new(builder.build()?, model.temperature())?,
            tree,
            readout: Readout::Direct(n),
        })
    } else {
        let expanded = expand_multilabel(model)?;
        attach_to_expanded(expanded, ball, cap)
    }
}

/// Hamming constraint on an expanded graph: counts the indicators that are
/// on in `c` but off in `y`.
pub fn attach_to_expanded(
    expanded: ExpandedBinaryGraph,
    ball: &HammingBall,
    cap: usize,
) -> Result<AugmentedModel> {
    let mut builder = expanded.builder();
    let leaves = expanded
        .indicators
        .iter()
        .zip(ball.center.labels())
        .map(|(ids, &ci)| (ids[ci], vec![1, 0]))
        .collect();
    let tree = CardinalityTree::build(&mut builder, leaves, cap);
    constrain_root(&mut builder, &tree, |k| k <= ball.radius);
    Ok(AugmentedModel {
        model: GibbsModel::new(builder.build()?, expanded.model.temperature())?,
        tree,
        readout: Readout::Expanded(expanded),
    })
}

/// Mass and marginals of the model restricted to one Hamming ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedPosterior {
    pub log_mass: f64,
    #[serde(rename = "marginals")]
    pub node_marginals: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Sum-product on the HOP-augmented graph; the mass is the Bethe estimate.
pub fn constrained_posterior(
    model: &GibbsModel,
    ball: &HammingBall,
    settings: &BPSettings,
) -> Result<ConstrainedPosterior> {
    let augmented = attach_hamming_hop(model, ball)?;
    posterior_on(&augmented, settings)
}

pub fn constrained_posterior_with_cap(
    model: &GibbsModel,
    ball: &HammingBall,
    cap: usize,
    settings: &BPSettings,
) -> Result<ConstrainedPosterior> {
    let augmented = attach_hamming_hop_with_cap(model, ball, cap)?;
    posterior_on(&augmented, settings)
}

fn posterior_on(augmented: &AugmentedModel, settings: &BPSettings) -> Result<ConstrainedPosterior> {
    let marginals = sum_product(&augmented.model, settings).map_err(|e| match e {
        Error::AllConfigurationsForbidden => Error::EmptyBall,
        other => other,
    })?;
    Ok(ConstrainedPosterior {
        log_mass: bethe_log_z(&augmented.model, &marginals),
        node_marginals: augmented.original_marginals(&marginals.node),
        converged: marginals.converged,
    })
}

/// Exact mass and marginals by enumerating the members of the ball.
pub fn exact_constrained_oracle(model: &GibbsModel, ball: &HammingBall) -> Result<ConstrainedPosterior> {
    exact_constrained_oracle_capped(model, ball, crate::infer::DEFAULT_ENUMERATION_CAP)
}

pub fn exact_constrained_oracle_capped(
    model: &GibbsModel,
    ball: &HammingBall,
    cap: u128,
) -> Result<ConstrainedPosterior> {
    ball.validate(model.graph())?;
    let en = Enumerator::new(model.graph(), cap).within_ball(ball.center.labels(), ball.radius);
    let (log_mass, marginals) =
        enumerate_marginals(&en, model.temperature()).map_err(|e| match e {
            Error::AllConfigurationsForbidden => Error::EmptyBall,
            other => other,
        })?;
    Ok(ConstrainedPosterior {
        log_mass,
        node_marginals: marginals.node,
        converged: true,
    })
}

/// Importance estimate of the log-mass from configurations drawn uniformly
/// from the ball: `log(V · mean_s exp(S(y_s) / T))`.
pub fn sample_mass_uniform_ball(
    model: &GibbsModel,
    ball: &HammingBall,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    let graph = model.graph();
    ball.validate(graph)?;
    let n = graph.num_variables();
    let k = graph.cardinality(0);
    if graph.cardinalities().iter().any(|&ki| ki != k) {
        return Err(Error::InvalidParameter(
            "uniform-ball sampling needs every variable to have the same cardinality".into(),
        ));
    }
    if num_samples == 0 {
        return Err(Error::InvalidParameter("num_samples must be at least 1".into()));
    }
    let shells = ball_shell_sizes(n, k, ball.radius)?;
    let volume: u128 = shells.iter().sum();
    let distance = WeightedIndex::new(shells.iter().map(|&s| s as f64))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = ball.center.labels();
    let mut labels = center.to_vec();
    let mut acc = LogAccumulator::new();
    for _ in 0..num_samples {
        labels.copy_from_slice(center);
        let d = distance.sample(&mut rng);
        for pos in rand::seq::index::sample(&mut rng, n, d).iter() {
            let r = rng.gen_range(0..k - 1);
            labels[pos] = if r >= center[pos] { r + 1 } else { r };
        }
        acc.add(crate::graph::score_unchecked(graph, &labels) / model.temperature());
    }
    let (max, sum) = acc.parts();
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((volume as f64).ln() + max + (sum / num_samples as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_grid;
    use crate::infer::exact_log_z;
    use crate::math::log_sum_exp;

    fn cfg(v: &[usize]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn distances() {
        assert_eq!(hamming_distance(&cfg(&[0, 1, 1]), &cfg(&[0, 1, 1])).unwrap(), 0);
        assert_eq!(hamming_distance(&cfg(&[0, 1]), &cfg(&[1, 0])).unwrap(), 2);
        assert_eq!(hamming_distance(&cfg(&[2, 0, 1]), &cfg(&[2, 1, 1])).unwrap(), 1);
        assert_eq!(
            hamming_distance(&cfg(&[0]), &cfg(&[0, 1])),
            Err(Error::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn volumes() {
        assert_eq!(ball_volume(3, 2, 1).unwrap(), 4);
        assert_eq!(ball_volume(2, 3, 2).unwrap(), 9);
        assert_eq!(ball_volume(4, 2, 2).unwrap(), 11);
        assert_eq!(ball_volume(64, 2, 64).unwrap(), 1u128 << 64);
        assert!(matches!(ball_volume(64, 1 << 40, 64), Err(Error::Overflow(_))));
    }

    #[test]
    fn fig2c_expansion_shape() {
        let mut b = GraphBuilder::new();
        b.add_variable(3);
        b.add_variable(3);
        b.add_table(vec![0, 1], vec![0.0; 9]);
        let m = GibbsModel::new(b.build().unwrap(), 1.0).unwrap();
        let ex = expand_multilabel(&m).unwrap();
        assert_eq!(ex.indicators.iter().map(Vec::len).sum::<usize>(), 6);
        assert_eq!(ex.gadgets.len(), 2);
    }

    #[test]
    fn single_three_label_variable_expansion() {
        let mut b = GraphBuilder::new();
        b.add_variable(3);
        b.add_table(vec![0], vec![0.0, -1.0, -2.0]);
        let m = GibbsModel::new(b.build().unwrap(), 1.0).unwrap();
        let ex = expand_multilabel(&m).unwrap();
        let want = (1.0 + (-1f64).exp() + (-2f64).exp()).ln();
        assert!((exact_log_z(&ex.model).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn binary_expansion_scores_agree() {
        let m = gen_grid(2, 4, -3.0).unwrap();
        let ex = expand_multilabel(&m).unwrap();
        assert_eq!(ex.indicators.len(), 4);
        for code in 0..16usize {
            let y = cfg(&(0..4).map(|i| (code >> i) & 1).collect::<Vec<_>>());
            let lifted = ex.lift(&y);
            let a = m.score(&y).unwrap();
            let b = ex.model.score(&lifted).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!((exact_log_z(&ex.model).unwrap() - exact_log_z(&m).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn hop_extremes() {
        let m = gen_grid(2, 12, -4.0).unwrap();
        let c = cfg(&[1, 0, 0, 1]);
        let full = attach_hamming_hop(&m, &HammingBall::new(c.clone(), 4)).unwrap();
        assert!((exact_log_z(&full.model).unwrap() - exact_log_z(&m).unwrap()).abs() < 1e-9);
        let point = attach_hamming_hop(&m, &HammingBall::new(c.clone(), 0)).unwrap();
        let want = m.log_gibbs_weight(&c).unwrap();
        assert!((exact_log_z(&point.model).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn radius_one_ball_on_2x2_grid() {
        let m = gen_grid(2, 21, -5.0).unwrap();
        let c = cfg(&[0, 1, 1, 0]);
        let aug = attach_hamming_hop(&m, &HammingBall::new(c.clone(), 1)).unwrap();
        let mut members = vec![m.log_gibbs_weight(&c).unwrap()];
        for i in 0..4 {
            let mut y = c.clone().into_inner();
            y[i] = 1 - y[i];
            members.push(m.log_gibbs_weight(&cfg(&y)).unwrap());
        }
        assert!((exact_log_z(&aug.model).unwrap() - log_sum_exp(&members)).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_posterior_is_point_mass() {
        let m = gen_grid(3, 2, -5.0).unwrap();
        let c = cfg(&[0, 1, 1, 0, 1, 0, 0, 0, 1]);
        let post = constrained_posterior(&m, &HammingBall::new(c.clone(), 0), &BPSettings::default())
            .unwrap();
        for (i, row) in post.node_marginals.iter().enumerate() {
            assert_eq!(row[c[i]], 1.0);
        }
        assert!((post.log_mass - m.log_gibbs_weight(&c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oracle_small_cases() {
        let mut b = GraphBuilder::new();
        for _ in 0..3 {
            b.add_variable(2);
        }
        let m = GibbsModel::new(b.build().unwrap(), 1.0).unwrap();
        let post = exact_constrained_oracle(&m, &HammingBall::new(cfg(&[0, 0, 0]), 1)).unwrap();
        assert!((post.log_mass - 4f64.ln()).abs() < 1e-15);
        for row in &post.node_marginals {
            assert!((row[0] - 0.75).abs() < 1e-15);
        }
        let g = gen_grid(2, 3, -2.0).unwrap();
        let c = cfg(&[1, 1, 0, 1]);
        let point = exact_constrained_oracle(&g, &HammingBall::new(c.clone(), 0)).unwrap();
        assert_eq!(point.log_mass, g.log_gibbs_weight(&c).unwrap());
        let full = exact_constrained_oracle(&g, &HammingBall::new(c, 4)).unwrap();
        assert_eq!(full.log_mass, exact_log_z(&g).unwrap());
    }

    #[test]
    fn empty_ball_is_reported() {
        let mut b = GraphBuilder::new();
        b.add_variable(2);
        b.add_variable(2);
        b.add_table(vec![0], vec![f64::NEG_INFINITY, 0.0]);
        let m = GibbsModel::new(b.build().unwrap(), 1.0).unwrap();
        let ball = HammingBall::new(cfg(&[0, 0]), 0);
        assert_eq!(exact_constrained_oracle(&m, &ball), Err(Error::EmptyBall));
        assert_eq!(
            constrained_posterior(&m, &ball, &BPSettings::default()),
            Err(Error::EmptyBall)
        );
    }

    #[test]
    fn sampler_degenerate_cases() {
        let mut b = GraphBuilder::new();
        for _ in 0..5 {
            b.add_variable(3);
        }
        let flat = GibbsModel::new(b.build().unwrap(), 1.0).unwrap();
        let ball = HammingBall::new(cfg(&[0, 1, 2, 0, 1]), 2);
        let est = sample_mass_uniform_ball(&flat, &ball, 17, 3).unwrap();
        assert_eq!(est, (ball_volume(5, 3, 2).unwrap() as f64).ln());
        let g = gen_grid(3, 8, -5.0).unwrap();
        let c = cfg(&[1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let est = sample_mass_uniform_ball(&g, &HammingBall::new(c.clone(), 0), 33, 1).unwrap();
        assert_eq!(est, g.log_gibbs_weight(&c).unwrap());
    }
}
