//! Log-domain arithmetic helpers.

/// Streaming log-sum-exp. `-inf` terms are skipped, so they never perturb
/// the running sum.
#[derive(Debug, Clone, Copy)]
pub struct LogAccumulator {
    max: f64,
    sum: f64,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogAccumulator {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            self.max = x;
            self.sum = 1.0;
        } else if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    /// Running maximum and `Σ exp(x_i − max)`.
    pub fn parts(&self) -> (f64, f64) {
        (self.max, self.sum)
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `log Σ exp(x_i)` with max subtraction; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `exp(x_i - max x)` for every entry, plus the max that was subtracted.
pub fn shifted_exp(xs: &[f64]) -> (Vec<f64>, f64) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (vec![0.0; xs.len()], max);
    }
    (xs.iter().map(|&x| (x - max).exp()).collect(), max)
}
