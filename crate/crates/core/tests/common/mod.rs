//! Brute-force oracles and random model generators shared by the
//! integration tests. Nothing here calls the library's inference code.

#![allow(dead_code)]

use c3rf::graph::{for_each_assignment, Configuration, GibbsModel, GraphBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every configuration with its raw score.
pub fn all_scores(model: &GibbsModel) -> Vec<(Configuration, f64)> {
    let mut out = Vec::new();
    for_each_assignment(model.graph().cardinalities(), |y| {
        let y = Configuration::new(y.to_vec());
        let s = model.score(&y).unwrap();
        out.push((y, s));
    });
    out
}

pub fn hamming(a: &Configuration, b: &Configuration) -> usize {
    a.labels().iter().zip(b.labels()).filter(|(x, y)| x != y).count()
}

fn lse(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ exp(S/T)` over configurations accepted by `keep`.
pub fn brute_log_z_where(model: &GibbsModel, keep: impl Fn(&Configuration) -> bool) -> f64 {
    let t = model.temperature();
    lse(all_scores(model).into_iter().filter(|(y, _)| keep(y)).map(|(_, s)| s / t))
}

pub fn brute_log_z(model: &GibbsModel) -> f64 {
    brute_log_z_where(model, |_| true)
}

/// Node marginals of the distribution restricted to `keep`.
pub fn brute_marginals_where(model: &GibbsModel, keep: impl Fn(&Configuration) -> bool) -> Vec<Vec<f64>> {
    let t = model.temperature();
    let log_z = brute_log_z_where(model, &keep);
    let mut node: Vec<Vec<f64>> = model.graph().cardinalities().iter().map(|&k| vec![0.0; k]).collect();
    for (y, s) in all_scores(model) {
        if !keep(&y) {
            continue;
        }
        let p = (s / t - log_z).exp();
        for (i, &l) in y.labels().iter().enumerate() {
            node[i][l] += p;
        }
    }
    node
}

pub fn brute_marginals(model: &GibbsModel) -> Vec<Vec<f64>> {
    brute_marginals_where(model, |_| true)
}

/// `(y, P(y))` over configurations accepted by `keep`, renormalised.
pub fn brute_distribution_where(model: &GibbsModel, keep: impl Fn(&Configuration) -> bool) -> Vec<(Configuration, f64)> {
    let t = model.temperature();
    let log_z = brute_log_z_where(model, &keep);
    all_scores(model)
        .into_iter()
        .filter(|(y, _)| keep(y))
        .map(|(y, s)| (y, (s / t - log_z).exp()))
        .collect()
}

/// Hand-written IOU loss: `1 − mean_k |y=k ∧ ŷ=k| / |y=k ∨ ŷ=k|` over
/// classes with a non-empty union.
pub fn iou_loss_oracle(y: &Configuration, yhat: &Configuration, classes: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for k in 0..classes {
        let inter = y.labels().iter().zip(yhat.labels()).filter(|(&a, &b)| a == k && b == k).count();
        let union = y.labels().iter().zip(yhat.labels()).filter(|(&a, &b)| a == k || b == k).count();
        if union > 0 {
            sum += inter as f64 / union as f64;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        1.0 - sum / count as f64
    }
}

pub fn hamming_loss_oracle(y: &Configuration, yhat: &Configuration) -> f64 {
    hamming(y, yhat) as f64 / y.len() as f64
}

fn table(rng: &mut impl Rng, len: usize, low: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(low..=0.0)).collect()
}

/// Random tree (each variable after the first hangs off an earlier one)
/// with unary and pairwise factors. The joint space stays at most `max_space`.
pub fn random_tree(rng: &mut impl Rng, max_vars: usize, max_card: usize, max_space: u128, temperature: f64) -> GibbsModel {
    let n = rng.gen_range(1..=max_vars);
    let mut b = GraphBuilder::new();
    let mut space: u128 = 1;
    let mut cards = Vec::new();
    for _ in 0..n {
        let mut k = rng.gen_range(2..=max_card);
        while k > 2 && space * k as u128 > max_space {
            k -= 1;
        }
        if space * k as u128 > max_space {
            break;
        }
        space *= k as u128;
        cards.push(k);
        b.add_variable(k);
    }
    for (v, &k) in cards.iter().enumerate() {
        b.add_table(vec![v], table(rng, k, -3.0));
    }
    for v in 1..cards.len() {
        let parent = rng.gen_range(0..v);
        let scope = if rng.gen_bool(0.5) { vec![parent, v] } else { vec![v, parent] };
        b.add_table(scope, table(rng, cards[parent] * cards[v], -3.0));
    }
    GibbsModel::new(b.build().unwrap(), temperature).unwrap()
}

/// `n` variables of cardinality `k` with unary factors only.
pub fn random_unary(rng: &mut impl Rng, n: usize, k: usize, low: f64) -> GibbsModel {
    let mut b = GraphBuilder::new();
    for v in 0..n {
        b.add_variable(k);
        b.add_table(vec![v], table(rng, k, low));
    }
    GibbsModel::new(b.build().unwrap(), 1.0).unwrap()
}

/// Loopy multi-label model with unary, pairwise and one triple factor.
pub fn random_multilabel(rng: &mut impl Rng, max_space: u128) -> GibbsModel {
    loop {
        let n = rng.gen_range(2..=6);
        let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=4)).collect();
        let space: u128 = cards.iter().map(|&k| k as u128).product();
        if space > max_space {
            continue;
        }
        let mut b = GraphBuilder::new();
        for &k in &cards {
            b.add_variable(k);
        }
        for (v, &k) in cards.iter().enumerate() {
            b.add_table(vec![v], table(rng, k, -4.0));
        }
        for v in 0..n {
            let u = (v + 1) % n;
            if u != v && !(n == 2 && v == 1) {
                b.add_table(vec![v, u], table(rng, cards[v] * cards[u], -4.0));
            }
        }
        if n >= 3 {
            b.add_table(vec![0, 1, 2], table(rng, cards[0] * cards[1] * cards[2], -2.0));
        }
        return GibbsModel::new(b.build().unwrap(), rng.gen_range(0.5..2.0)).unwrap();
    }
}

pub fn random_configuration(rng: &mut impl Rng, model: &GibbsModel) -> Configuration {
    Configuration::new(model.graph().cardinalities().iter().map(|&k| rng.gen_range(0..k)).collect())
}
