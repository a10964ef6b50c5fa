//! Edge recovery scores and out-of-sample prediction error.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::var::{default_burn_in, simulate, SeriesMatrix, VarModel};

/// Threshold on `|ln tr Sigma_v|` below which the log ratio is undefined.
pub const LRE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// Counts over the `n (n - 1)` ordered off-diagonal pairs.
pub fn confusion(truth: &DirectedGraph, est: &DirectedGraph) -> Result<ConfusionCounts> {
    if truth.n() != est.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            found: est.n(),
        });
    }
    let n = truth.n();
    let mut c = ConfusionCounts::default();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            match (truth.has_edge(i, j), est.has_edge(i, j)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

impl ConfusionCounts {
    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if den == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / den.sqrt()
    }

    /// False discovery proportion, 0 for an empty estimate.
    pub fn fdp(&self) -> f64 {
        let pos = self.tp + self.fp;
        if pos == 0 {
            0.0
        } else {
            self.fp as f64 / pos as f64
        }
    }
}

pub fn mcc(truth: &DirectedGraph, est: &DirectedGraph) -> Result<f64> {
    Ok(confusion(truth, est)?.mcc())
}

pub fn fdp(truth: &DirectedGraph, est: &DirectedGraph) -> Result<f64> {
    Ok(confusion(truth, est)?.fdp())
}

/// Sum over nodes of the mean squared one-step prediction error of `est`
/// on `test`, scored on rows `est.p()..T`.
pub fn prediction_error_trace(est: &VarModel, test: &SeriesMatrix) -> Result<f64> {
    if est.n() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: est.n(),
            found: test.dim(),
        });
    }
    let p = est.p();
    if test.len() <= p {
        return Err(Error::InsufficientSamples {
            needed: p + 1,
            available: test.len(),
        });
    }
    let rows = est.sparse_rows();
    let mut total = 0.0;
    for t in p..test.len() {
        for (i, row) in rows.iter().enumerate() {
            let pred: f64 = row.iter().map(|&(j, tau, w)| w * test.get(t - tau, j)).sum();
            let e = test.get(t, i) - pred;
            total += e * e;
        }
    }
    let tr = total / (test.len() - p) as f64;
    if !tr.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(tr)
}

/// `ln tr Sigma_hat / ln tr Sigma_v` with `Sigma_hat` the
/// one-step error covariance of `est` on `test` and `Sigma_v` the noise
/// covariance of `truth`.
pub fn lre_on_series(truth: &VarModel, est: &VarModel, test: &SeriesMatrix) -> Result<f64> {
    let tr_v: f64 = truth.noise_vars().iter().sum();
    let denom = tr_v.ln();
    if denom.abs() < LRE_EPS {
        return Err(Error::LreDegenerate(tr_v));
    }
    let tr_hat = prediction_error_trace(est, test)?;
    Ok(tr_hat.ln() / denom)
}

/// Draws `t_out` fresh samples from `truth` (plus `est.p()` warm-up rows)
/// and scores `est` on them.
pub fn lre<R: Rng + ?Sized>(
    truth: &VarModel,
    est: &VarModel,
    t_out: usize,
    rng: &mut R,
) -> Result<f64> {
    let test = simulate(truth, t_out + est.p(), default_burn_in(truth.n(), truth.p()), rng)?;
    lre_on_series(truth, est, &test)
}
