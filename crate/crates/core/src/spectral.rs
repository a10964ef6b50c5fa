//! Autocovariance estimation and recursive Yule-Walker fitting.
//!
//! The sample autocovariance uses the biased (`1/T`, window starting at
//! `tau + 1`) estimator, which keeps the block-Toeplitz matrix positive
//! semidefinite so that both recursions below stay well defined.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::var::{SeriesMatrix, VarModel};

/// Floor applied to error variances before taking logarithms.
pub const XI_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovSource {
    Sample,
    Population,
}

/// `R(0), ..., R(max_lag)` with `R(tau) = E x(t) x(t - tau)^T`.
#[derive(Clone, Debug)]
pub struct AutocovSeq {
    lags: Vec<DMatrix<f64>>,
    source: CovSource,
}

impl AutocovSeq {
    pub fn new(lags: Vec<DMatrix<f64>>, source: CovSource) -> Self {
        assert!(!lags.is_empty(), "autocovariance needs R(0)");
        Self { lags, source }
    }

    pub fn n(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn source(&self) -> CovSource {
        self.source
    }

    pub fn lag(&self, tau: usize) -> &DMatrix<f64> {
        &self.lags[tau]
    }

    /// Autocovariance of component `i` alone.
    pub fn scalar(&self, i: usize) -> Vec<f64> {
        self.lags.iter().map(|r| r[(i, i)]).collect()
    }

    /// Autocovariance of the pair `(x_i, x_j)`, in that order.
    pub fn pair(&self, i: usize, j: usize) -> Vec<Matrix2<f64>> {
        self.lags
            .iter()
            .map(|r| Matrix2::new(r[(i, i)], r[(i, j)], r[(j, i)], r[(j, j)]))
            .collect()
    }

    /// Covariance of `[x(t); x(t-1); ...; x(t-L)]`: block `(a, b)` is
    /// `R(b - a)`, with `R(-tau) = R(tau)^T`.
    pub fn block_toeplitz(&self, blocks: usize) -> DMatrix<f64> {
        let n = self.n();
        let l = blocks.min(self.lags.len());
        let mut m = DMatrix::zeros(n * l, n * l);
        for a in 0..l {
            for b in 0..l {
                let block = if b >= a {
                    self.lags[b - a].clone()
                } else {
                    self.lags[a - b].transpose()
                };
                m.view_mut((a * n, b * n), (n, n)).copy_from(&block);
            }
        }
        m
    }

    /// Smallest eigenvalue of the full block-Toeplitz matrix.
    pub fn min_toeplitz_eigenvalue(&self) -> f64 {
        let m = self.block_toeplitz(self.lags.len());
        let m = (&m + m.transpose()) * 0.5;
        SymmetricEigen::new(m).eigenvalues.min()
    }
}

/// `R(tau) = (1/T) sum_{t = tau+1..T} x(t) x(t - tau)^T`, no centering.
pub fn estimate_autocovariance(x: &SeriesMatrix, p_max: usize) -> Result<AutocovSeq> {
    let (t, n) = (x.len(), x.dim());
    if p_max >= t {
        return Err(Error::InsufficientSamples {
            needed: p_max,
            available: t,
        });
    }
    let cols: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let scale = 1.0 / t as f64;
    let lags = (0..=p_max)
        .map(|tau| {
            DMatrix::from_fn(n, n, |a, b| {
                let (lead, lagged) = (&cols[a][tau..], &cols[b][..t - tau]);
                lead.iter().zip(lagged).map(|(u, v)| u * v).sum::<f64>() * scale
            })
        })
        .collect();
    Ok(AutocovSeq::new(lags, CovSource::Sample))
}

/// Scalar AR fits of every order `0..=p_max`.
///
/// `xi[p]` is the error variance of the order-`p` predictor
/// `x(t) = sum_k a(k) x(t - k)`. Only the reflection coefficients are kept;
/// [`ScalarCurve::coeffs`] rebuilds `a(1..p)` for one order.
#[derive(Clone, Debug)]
pub struct ScalarCurve {
    pub xi: Vec<f64>,
    pub reflection: Vec<f64>,
}

/// One step of the scalar order update, in place.
fn step_up(a: &mut Vec<f64>, kappa: f64) {
    let m = a.len();
    for k in 0..m / 2 {
        let (u, v) = (a[k], a[m - 1 - k]);
        a[k] = u - kappa * v;
        a[m - 1 - k] = v - kappa * u;
    }
    if m % 2 == 1 {
        a[m / 2] -= kappa * a[m / 2];
    }
    a.push(kappa);
}

impl ScalarCurve {
    /// `a(1..p)` of the order-`p` predictor, in `O(p^2)`.
    pub fn coeffs(&self, p: usize) -> Vec<f64> {
        let mut a = Vec::with_capacity(p);
        for &kappa in &self.reflection[..p] {
            step_up(&mut a, kappa);
        }
        a
    }
}

/// Bivariate VAR fits of every order `0..=p_max`.
///
/// `sigma[p]` is the forward error covariance of the order-`p` predictor
/// `x(t) = sum_k A(k) x(t - k)`; `sigma[p][(0,0)]` is the error of the first
/// series given both histories. [`BivariateCurve::coeffs`] rebuilds
/// `A(1..p)` from the stored forward and backward reflection matrices.
#[derive(Clone, Debug)]
pub struct BivariateCurve {
    pub sigma: Vec<Matrix2<f64>>,
    pub forward_reflection: Vec<Matrix2<f64>>,
    pub backward_reflection: Vec<Matrix2<f64>>,
}

/// One step of the two-sided order update; `fwd` and `bwd` are replaced.
fn block_step_up(
    fwd: &mut Vec<Matrix2<f64>>,
    bwd: &mut Vec<Matrix2<f64>>,
    scratch: &mut Vec<Matrix2<f64>>,
    kf: Matrix2<f64>,
    kb: Matrix2<f64>,
) {
    scratch.clear();
    scratch.extend(bwd.iter().zip(fwd.iter().rev()).map(|(b, a)| b - kb * a));
    scratch.push(kb);
    for (a, b) in fwd.iter_mut().zip(bwd.iter().rev()) {
        *a -= kf * b;
    }
    fwd.push(kf);
    std::mem::swap(bwd, scratch);
}

impl BivariateCurve {
    /// `A(1..p)` of the order-`p` forward predictor, in `O(p^2)`.
    pub fn coeffs(&self, p: usize) -> Vec<Matrix2<f64>> {
        let mut fwd = Vec::with_capacity(p);
        let mut bwd = Vec::with_capacity(p);
        let mut scratch = Vec::with_capacity(p);
        for (kf, kb) in self.forward_reflection[..p].iter().zip(&self.backward_reflection) {
            block_step_up(&mut fwd, &mut bwd, &mut scratch, *kf, *kb);
        }
        fwd
    }
}

/// Durbin's recursion. Cost is `O(p_max^2)`, memory `O(p_max)`.
pub fn levinson_durbin(r: &[f64]) -> Result<ScalarCurve> {
    let Some(&r0) = r.first() else {
        return Err(Error::InvalidParameter("empty autocovariance".into()));
    };
    if !(r0 > 0.0) {
        return Err(Error::Degenerate {
            what: "zero-lag variance",
            order: 0,
        });
    }
    let p_max = r.len() - 1;
    let mut xi = Vec::with_capacity(p_max + 1);
    let mut reflection = Vec::with_capacity(p_max);
    let mut a: Vec<f64> = Vec::with_capacity(p_max);
    xi.push(r0);
    for m in 1..=p_max {
        let acc = r[m] - a.iter().zip(r[..m].iter().rev()).map(|(c, v)| c * v).sum::<f64>();
        let kappa = acc / xi[m - 1];
        if !(kappa.abs() < 1.0) {
            return Err(Error::Degenerate {
                what: "reflection coefficient",
                order: m,
            });
        }
        step_up(&mut a, kappa);
        xi.push(xi[m - 1] * (1.0 - kappa * kappa));
        reflection.push(kappa);
    }
    Ok(ScalarCurve { xi, reflection })
}

fn checked_inverse(v: &Matrix2<f64>, what: &'static str, order: usize) -> Result<Matrix2<f64>> {
    let det = v.determinant();
    // relative to the diagonal: a correlation of 1 - 1e-14 counts as singular
    if !(det > 1e-14 * v[(0, 0)].abs() * v[(1, 1)].abs()) {
        return Err(Error::Degenerate { what, order });
    }
    v.try_inverse().ok_or(Error::Degenerate { what, order })
}

/// Whittle's multichannel Levinson recursion for a 2-channel sequence.
///
/// Runs forward and backward predictors side by side with separate error
/// covariances, since the block Toeplitz matrix is not symmetric blockwise.
pub fn whittle_bivariate(r: &[Matrix2<f64>]) -> Result<BivariateCurve> {
    let Some(&r0) = r.first() else {
        return Err(Error::InvalidParameter("empty autocovariance".into()));
    };
    let p_max = r.len() - 1;
    let mut sigma = Vec::with_capacity(p_max + 1);
    let mut forward_reflection = Vec::with_capacity(p_max);
    let mut backward_reflection = Vec::with_capacity(p_max);
    let mut fwd: Vec<Matrix2<f64>> = Vec::with_capacity(p_max);
    let mut bwd: Vec<Matrix2<f64>> = Vec::with_capacity(p_max);
    let mut scratch: Vec<Matrix2<f64>> = Vec::with_capacity(p_max);
    let mut vf = r0;
    let mut vb = r0;
    sigma.push(vf);
    for m in 0..p_max {
        let mut delta = r[m + 1];
        for (a, v) in fwd.iter().zip(r[1..=m].iter().rev()) {
            delta -= a * v;
        }
        let kf = delta * checked_inverse(&vb, "backward error covariance", m)?;
        let kb = delta.transpose() * checked_inverse(&vf, "forward error covariance", m)?;
        block_step_up(&mut fwd, &mut bwd, &mut scratch, kf, kb);
        vf -= kf * delta.transpose();
        vb -= kb * delta;
        vf = (vf + vf.transpose()) * 0.5;
        vb = (vb + vb.transpose()) * 0.5;
        sigma.push(vf);
        forward_reflection.push(kf);
        backward_reflection.push(kb);
    }
    Ok(BivariateCurve {
        sigma,
        forward_reflection,
        backward_reflection,
    })
}

/// Error curve over model orders, scored by BIC.
pub trait OrderCurve {
    fn max_order(&self) -> usize;

    /// `ln xi(p)` or `ln det Sigma(p)`, floored at [`XI_FLOOR`].
    fn log_error(&self, p: usize) -> f64;

    /// Free parameters added per lag: 1 univariate, 4 bivariate.
    fn params_per_lag(&self) -> f64;

    fn bic(&self, p: usize, t: usize) -> f64 {
        let t = t as f64;
        self.log_error(p) + self.params_per_lag() * p as f64 * t.ln() / t
    }
}

impl OrderCurve for ScalarCurve {
    fn max_order(&self) -> usize {
        self.xi.len() - 1
    }

    fn log_error(&self, p: usize) -> f64 {
        self.xi[p].max(XI_FLOOR).ln()
    }

    fn params_per_lag(&self) -> f64 {
        1.0
    }
}

impl OrderCurve for BivariateCurve {
    fn max_order(&self) -> usize {
        self.sigma.len() - 1
    }

    fn log_error(&self, p: usize) -> f64 {
        self.sigma[p].determinant().max(XI_FLOOR).ln()
    }

    fn params_per_lag(&self) -> f64 {
        4.0
    }
}

/// BIC-minimising order in `0..=max_order`; ties go to the smaller order.
pub fn select_order<C: OrderCurve + ?Sized>(curve: &C, t: usize) -> usize {
    let mut best = 0;
    let mut best_score = curve.bic(0, t);
    for p in 1..=curve.max_order() {
        let score = curve.bic(p, t);
        if score < best_score {
            best = p;
            best_score = score;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct RefitModel {
    pub model: VarModel,
    /// Some per-node design was rank deficient; those rows hold the
    /// minimum-norm least-squares solution.
    pub rank_deficient: bool,
}

/// Conditional least squares on a fixed sparsity pattern: node `i` is
/// regressed on lags `1..=p` of its parents and itself over rows
/// `p..T`.
pub fn ols_refit(x: &SeriesMatrix, g: &DirectedGraph, p: usize) -> Result<RefitModel> {
    let (t, n) = (x.len(), x.dim());
    if g.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.n(),
        });
    }
    if p == 0 {
        return Err(Error::InvalidParameter("refit order must be at least 1".into()));
    }
    if t <= p {
        return Err(Error::InsufficientSamples {
            needed: p,
            available: t,
        });
    }
    let rows = t - p;
    let mut coeffs = vec![DMatrix::zeros(n, n); p];
    let mut noise_vars = vec![0.0; n];
    let mut rank_deficient = false;
    let (_, inc) = g.adjacency();
    for i in 0..n {
        let mut regs = inc[i].clone();
        regs.push(i);
        regs.sort_unstable();
        let cols = regs.len() * p;
        let design = DMatrix::from_fn(rows, cols, |r, c| {
            let (j, tau) = (regs[c / p], c % p + 1);
            x.get(r + p - tau, j)
        });
        let y = DVector::from_fn(rows, |r, _| x.get(r + p, i));
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * 1e-10 * rows.max(cols) as f64;
        if rows < cols || svd.singular_values.min() <= eps {
            rank_deficient = true;
        }
        let beta = svd
            .solve(&y, eps)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for (c, b) in beta.iter().enumerate() {
            coeffs[c % p][(i, regs[c / p])] = *b;
        }
        let resid = &y - &design * &beta;
        let s2 = resid.norm_squared() / rows as f64;
        noise_vars[i] = if s2 > 0.0 { s2 } else { f64::MIN_POSITIVE };
    }
    Ok(RefitModel {
        model: VarModel::new(coeffs, noise_vars, g.clone())?,
        rank_deficient,
    })
}
