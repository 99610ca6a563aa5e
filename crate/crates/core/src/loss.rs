//! Losses over configurations and their factorised expected-loss
//! approximations (functions of node marginals only).
//!
//! All losses are normalised to `[0, 1]`. For IOU, a class contributes to
//! the class mean only when its union (or approximate union) is non-empty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Configuration, GibbsModel};
use crate::hamming::HammingBall;
use crate::infer::{Enumerator, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LossKind {
    Hamming,
    Iou { classes: usize },
}

impl LossKind {
    pub fn loss(&self, y: &Configuration, yhat: &Configuration) -> Result<f64> {
        match *self {
            LossKind::Hamming => hamming_loss(y, yhat),
            LossKind::Iou { classes } => iou_loss(y, yhat, classes),
        }
    }

    pub fn fela(&self, marginals: &[Vec<f64>], yhat: &Configuration) -> Result<f64> {
        match *self {
            LossKind::Hamming => fela_hamming(marginals, yhat),
            LossKind::Iou { classes } => fela_iou(marginals, yhat, classes),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Hamming => "hamming",
            LossKind::Iou { .. } => "iou",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    /// `hamming`, `iou` (two classes) or `iou:K`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(LossKind::Hamming),
            "iou" => Ok(LossKind::Iou { classes: 2 }),
            other => match other.strip_prefix("iou:").map(str::parse::<usize>) {
                Some(Ok(classes)) if classes >= 2 => Ok(LossKind::Iou { classes }),
                _ => Err(Error::InvalidParameter(format!("unknown loss {other:?}"))),
            },
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    Ok(())
}

/// Fraction of disagreeing positions.
pub fn hamming_loss(y: &Configuration, yhat: &Configuration) -> Result<f64> {
    let d = crate::hamming::hamming_distance(y, yhat)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(d as f64 / y.len() as f64)
}

/// Per-class intersection and union sizes of two labellings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IouCounts {
    pub intersection: Vec<usize>,
    pub union: Vec<usize>,
}

impl IouCounts {
    pub fn new(y: &Configuration, yhat: &Configuration, classes: usize) -> Result<Self> {
        check_lengths(y.len(), yhat.len())?;
        let mut counts = IouCounts {
            intersection: vec![0; classes],
            union: vec![0; classes],
        };
        for (&a, &b) in y.labels().iter().zip(yhat.labels()) {
            if a >= classes || b >= classes {
                return Err(Error::InvalidConfiguration(format!(
                    "label {} is not below the class count {classes}",
                    a.max(b)
                )));
            }
            if a == b {
                counts.intersection[a] += 1;
                counts.union[a] += 1;
            } else {
                counts.union[a] += 1;
                counts.union[b] += 1;
            }
        }
        Ok(counts)
    }

    pub fn accumulate(&mut self, other: &IouCounts) {
        if self.union.is_empty() {
            *self = other.clone();
            return;
        }
        for (a, b) in self.intersection.iter_mut().zip(&other.intersection) {
            *a += b;
        }
        for (a, b) in self.union.iter_mut().zip(&other.union) {
            *a += b;
        }
    }

    /// Mean intersection-over-union over classes with a non-empty union.
    pub fn mean_iou(&self) -> f64 {
        let (sum, n) = self
            .intersection
            .iter()
            .zip(&self.union)
            .filter(|(_, &u)| u > 0)
            .fold((0.0, 0usize), |(s, n), (&i, &u)| (s + i as f64 / u as f64, n + 1));
        if n == 0 {
            1.0
        } else {
            sum / n as f64
        }
    }
}

/// `1 − mean IOU` over classes with a non-empty union.
pub fn iou_loss(y: &Configuration, yhat: &Configuration, classes: usize) -> Result<f64> {
    Ok(1.0 - IouCounts::new(y, yhat, classes)?.mean_iou())
}

fn check_marginals(marginals: &[Vec<f64>], yhat: &Configuration) -> Result<()> {
    if marginals.len() != yhat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} marginal vectors for a configuration of length {}",
            marginals.len(),
            yhat.len()
        )));
    }
    for (i, (row, &l)) in marginals.iter().zip(yhat.labels()).enumerate() {
        if l >= row.len() {
            return Err(Error::DimensionMismatch(format!(
                "label {l} of variable {i} has no marginal entry"
            )));
        }
    }
    Ok(())
}

/// `(1/n) Σ_i (1 − P_i(ŷ_i))`, the exact expected normalised Hamming loss.
pub fn fela_hamming(marginals: &[Vec<f64>], yhat: &Configuration) -> Result<f64> {
    check_marginals(marginals, yhat)?;
    if yhat.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = marginals
        .iter()
        .zip(yhat.labels())
        .map(|(row, &l)| 1.0 - row[l])
        .sum();
    Ok(total / yhat.len() as f64)
}

/// Marginal-based IOU approximation: for each class `k`,
/// `Σ_i P_i(k)·1{ŷ_i = k} / Σ_i (1{ŷ_i = k} + P_i(k)·1{ŷ_i ≠ k})`,
/// averaged over classes with a positive denominator.
pub fn fela_iou(marginals: &[Vec<f64>], yhat: &Configuration, classes: usize) -> Result<f64> {
    check_marginals(marginals, yhat)?;
    let mut num = vec![0.0; classes];
    let mut den = vec![0.0; classes];
    for (row, &l) in marginals.iter().zip(yhat.labels()) {
        if l >= classes || row.len() > classes {
            return Err(Error::DimensionMismatch(format!(
                "marginals over {} labels with {classes} classes",
                row.len()
            )));
        }
        for (k, &p) in row.iter().enumerate() {
            if k == l {
                num[k] += p;
                den[k] += 1.0;
            } else {
                den[k] += p;
            }
        }
    }
    let (sum, n) = num
        .iter()
        .zip(&den)
        .filter(|(_, &d)| d > 0.0)
        .fold((0.0, 0usize), |(s, n), (&a, &d)| (s + a / d, n + 1));
    Ok(if n == 0 { 0.0 } else { 1.0 - sum / n as f64 })
}

/// `Σ_y P(y) ℓ(y, ŷ)` by enumeration, optionally over the renormalised
/// distribution restricted to a Hamming ball.
pub fn expected_loss_exact(
    model: &GibbsModel,
    yhat: &Configuration,
    kind: LossKind,
    ball: Option<&HammingBall>,
) -> Result<f64> {
    let graph = model.graph();
    graph.check_configuration(yhat)?;
    let mut en = Enumerator::new(graph, DEFAULT_ENUMERATION_CAP);
    if let Some(b) = ball {
        graph.check_configuration(&b.center)?;
        en = en.within_ball(b.center.labels(), b.radius);
    }
    let t = model.temperature();
    let mut max = f64::NEG_INFINITY;
    en.run(|_, s| max = max.max(s / t))?;
    if max == f64::NEG_INFINITY {
        return Err(if ball.is_some() {
            Error::EmptyBall
        } else {
            Error::AllConfigurationsForbidden
        });
    }
    let mut z = 0.0;
    let mut acc = 0.0;
    let mut failure = None;
    en.run(|labels, s| {
        let w = (s / t - max).exp();
        z += w;
        match kind.loss(&Configuration::new(labels.to_vec()), yhat) {
            Ok(l) => acc += w * l,
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(acc / z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_grid, GraphBuilder};
    use crate::infer::exact_marginals;

    fn cfg(v: &[usize]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn hamming_values() {
        assert_eq!(hamming_loss(&cfg(&[0, 1, 1]), &cfg(&[0, 1, 1])).unwrap(), 0.0);
        assert_eq!(hamming_loss(&cfg(&[0, 0, 0, 0]), &cfg(&[1, 1, 1, 1])).unwrap(), 1.0);
        assert_eq!(hamming_loss(&cfg(&[0, 1, 0, 1]), &cfg(&[0, 1, 1, 1])).unwrap(), 0.25);
        assert!(hamming_loss(&cfg(&[0]), &cfg(&[0, 1])).is_err());
    }

    #[test]
    fn iou_values() {
        assert_eq!(iou_loss(&cfg(&[1, 0, 2]), &cfg(&[1, 0, 2]), 3).unwrap(), 0.0);
        let l = iou_loss(&cfg(&[1, 1, 0, 0]), &cfg(&[1, 0, 0, 0]), 2).unwrap();
        assert!((l - (1.0 - 7.0 / 12.0)).abs() < 1e-15);
        assert_eq!(iou_loss(&cfg(&[1, 0]), &cfg(&[0, 1]), 2).unwrap(), 1.0);
    }

    #[test]
    fn fela_hamming_values() {
        let uniform = vec![vec![0.5, 0.5]; 2];
        assert_eq!(fela_hamming(&uniform, &cfg(&[0, 1])).unwrap(), 0.5);
        let y = cfg(&[1, 0, 1]);
        let delta: Vec<Vec<f64>> = y.labels().iter().map(|&l| {
            let mut r = vec![0.0; 2];
            r[l] = 1.0;
            r
        }).collect();
        assert_eq!(
            fela_hamming(&delta, &cfg(&[1, 1, 1])).unwrap(),
            hamming_loss(&y, &cfg(&[1, 1, 1])).unwrap()
        );
        assert!(matches!(
            fela_hamming(&uniform, &cfg(&[0])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn fela_iou_values() {
        // Class 0 keeps its denominator 0.2 through the off-prediction term.
        let l = fela_iou(&[vec![0.2, 0.8]], &cfg(&[1]), 2).unwrap();
        assert!((l - 0.6).abs() < 1e-15);
        let l = fela_iou(&[vec![0.0, 1.0]], &cfg(&[1]), 2).unwrap();
        assert_eq!(l, 0.0);
        let l = fela_iou(&vec![vec![0.5, 0.5]; 2], &cfg(&[0, 1]), 2).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn expected_loss_degenerate_cases() {
        let mut b = GraphBuilder::new();
        b.add_variable(2);
        b.add_variable(2);
        b.add_table(vec![0, 1], vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        let m = GibbsModel::new(b.build().unwrap(), 1.0).unwrap();
        let yhat = cfg(&[1, 1]);
        assert_eq!(
            expected_loss_exact(&m, &yhat, LossKind::Hamming, None).unwrap(),
            hamming_loss(&cfg(&[0, 1]), &yhat).unwrap()
        );
        let g = gen_grid(2, 4, -3.0).unwrap();
        let c = cfg(&[0, 1, 1, 0]);
        let ball = HammingBall::new(c.clone(), 0);
        let kind = LossKind::Iou { classes: 2 };
        let yh = cfg(&[1, 1, 1, 0]);
        assert_eq!(
            expected_loss_exact(&g, &yh, kind, Some(&ball)).unwrap(),
            iou_loss(&c, &yh, 2).unwrap()
        );
        let exact = exact_marginals(&g).unwrap();
        let a = expected_loss_exact(&g, &yh, LossKind::Hamming, None).unwrap();
        assert!((a - fela_hamming(&exact.node, &yh).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("hamming".parse::<LossKind>().unwrap(), LossKind::Hamming);
        assert_eq!("iou".parse::<LossKind>().unwrap(), LossKind::Iou { classes: 2 });
        assert_eq!("iou:5".parse::<LossKind>().unwrap(), LossKind::Iou { classes: 5 });
        assert!("iou:1".parse::<LossKind>().is_err());
    }

    #[test]
    fn corpus_counts() {
        let mut total = IouCounts::default();
        total.accumulate(&IouCounts::new(&cfg(&[1, 1]), &cfg(&[1, 0]), 2).unwrap());
        total.accumulate(&IouCounts::new(&cfg(&[0, 0]), &cfg(&[0, 0]), 2).unwrap());
        assert_eq!(total.intersection, vec![2, 1]);
        assert_eq!(total.union, vec![3, 2]);
        assert!((total.mean_iou() - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
    }
}
