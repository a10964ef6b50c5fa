//! Pairwise Granger-causality statistics, Benjamini-Hochberg thresholding
//! and the exact population-level oracle.

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{
    estimate_autocovariance, levinson_durbin, select_order, whittle_bivariate, AutocovSeq,
    BivariateCurve, ScalarCurve,
};
use crate::var::{population_autocovariance, SeriesMatrix, VarModel};

/// `F = (T / p) (xi_restricted / xi_full - 1)`, clamped at zero.
pub fn gc_statistic(xi_restricted: f64, xi_full: f64, p: usize, t: usize) -> Result<f64> {
    if !(xi_full > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "unrestricted error variance {xi_full} is not positive"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("statistic needs order >= 1".into()));
    }
    let f = (t as f64 / p as f64) * (xi_restricted / xi_full - 1.0);
    Ok(f.max(0.0))
}

/// Chi-squared CDF with `dof` degrees of freedom.
pub fn chi2_cdf(f: f64, dof: usize) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    statrs::function::gamma::gamma_lr(dof as f64 / 2.0, f / 2.0)
}

/// Accept an edge with probability `p` at threshold `delta`:
/// `1 - p <= delta`.
///
/// Written on the p-value scale so that `delta` returned by
/// [`bh_threshold`] keeps exactly the step-up selection, including its
/// largest member.
pub fn passes(p: f64, delta: f64) -> bool {
    1.0 - p <= delta
}

/// Which order the restricted (univariate) model is evaluated at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RestrictedOrder {
    /// The bivariate BIC order `p_ij` for both models.
    #[default]
    Bivariate,
    /// `max(p_ij, p_i)` with `p_i` the univariate BIC order.
    MaxOfBoth,
}

#[derive(Clone, Debug)]
pub struct PairwiseStats {
    n: usize,
    t: usize,
    orders: DMatrix<usize>,
    f: DMatrix<f64>,
    p: DMatrix<f64>,
    degenerate: DMatrix<bool>,
}

impl PairwiseStats {
    /// Assembles statistics directly; entry `(i, j)` is about `j -> i`.
    pub fn from_parts(
        t: usize,
        orders: DMatrix<usize>,
        f: DMatrix<f64>,
        p: DMatrix<f64>,
    ) -> Result<Self> {
        let n = f.nrows();
        for (r, c) in [orders.shape(), f.shape(), p.shape()] {
            if r != n || c != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.max(c),
                });
            }
        }
        if f.iter().any(|v| !(*v >= 0.0)) || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "statistics must be nonnegative and probabilities in [0, 1]".into(),
            ));
        }
        Ok(Self {
            n,
            t,
            orders,
            f,
            p,
            degenerate: DMatrix::from_element(n, n, false),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample_len(&self) -> usize {
        self.t
    }

    /// Selected lag order for the `(i, j)` pair.
    pub fn order(&self, i: usize, j: usize) -> usize {
        self.orders[(i, j)]
    }

    /// Statistic for "`j` causes `i`".
    pub fn f(&self, i: usize, j: usize) -> f64 {
        self.f[(i, j)]
    }

    /// Edge probability for "`j` causes `i`".
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn is_degenerate(&self, i: usize, j: usize) -> bool {
        self.degenerate[(i, j)]
    }

    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn f_matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn degenerate_count(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i < j && self.degenerate[(i, j)])
            .count()
    }
}

/// Boolean pairwise relation, `holds(i, j)` iff `j` pairwise-causes `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseRelations {
    pw: DMatrix<bool>,
}

impl PairwiseRelations {
    pub fn new(n: usize) -> Self {
        Self {
            pw: DMatrix::from_element(n, n, false),
        }
    }

    pub fn n(&self) -> usize {
        self.pw.nrows()
    }

    pub fn holds(&self, i: usize, j: usize) -> bool {
        self.pw[(i, j)]
    }

    /// Sets "`j` pairwise-causes `i`". The diagonal stays false.
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i != j {
            self.pw[(i, j)] = value;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseConfig {
    pub p_max: usize,
    pub restricted_order: RestrictedOrder,
}

impl PairwiseConfig {
    pub fn new(p_max: usize) -> Self {
        Self {
            p_max,
            restricted_order: RestrictedOrder::default(),
        }
    }
}

struct PairResult {
    order: usize,
    f_ij: f64,
    f_ji: f64,
    degenerate: bool,
}

fn fit_pair(
    r: &AutocovSeq,
    uni: &[std::result::Result<(ScalarCurve, usize), ()>],
    i: usize,
    j: usize,
    t: usize,
    mode: RestrictedOrder,
) -> PairResult {
    let failed = PairResult {
        order: 0,
        f_ij: 0.0,
        f_ji: 0.0,
        degenerate: true,
    };
    let (Ok((ci, pi)), Ok((cj, pj))) = (&uni[i], &uni[j]) else {
        return failed;
    };
    let Ok(bi): std::result::Result<BivariateCurve, _> = whittle_bivariate(&r.pair(i, j)) else {
        return failed;
    };
    let p_ij = select_order(&bi, t);
    let stat = |restricted: &ScalarCurve, p_own: usize, diag: usize| -> (usize, f64) {
        let p = match mode {
            RestrictedOrder::Bivariate => p_ij,
            RestrictedOrder::MaxOfBoth => p_ij.max(p_own),
        };
        if p == 0 {
            return (0, 0.0);
        }
        let full = bi.sigma[p][(diag, diag)];
        match gc_statistic(restricted.xi[p], full, p, t) {
            Ok(f) => (p, f),
            Err(_) => (p, 0.0),
        }
    };
    let (order, f_ij) = stat(ci, *pi, 0);
    let (_, f_ji) = stat(cj, *pj, 1);
    PairResult {
        order,
        f_ij,
        f_ji,
        degenerate: false,
    }
}

/// All pairwise statistics from one autocovariance estimate.
///
/// Each unordered pair gets one Whittle fit whose BIC order serves both
/// directions; the restricted errors come from the per-node Levinson
/// curves. Degenerate pairs get `F = 0, P = 0` and are flagged. Pairs run
/// in parallel on the current rayon pool; the result does not depend on
/// scheduling.
pub fn compute_pairwise_matrix(x: &SeriesMatrix, config: PairwiseConfig) -> Result<PairwiseStats> {
    if config.p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be at least 1".into()));
    }
    let (t, n) = (x.len(), x.dim());
    let r = estimate_autocovariance(x, config.p_max)?;
    let uni: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            levinson_durbin(&r.scalar(i))
                .map(|c| {
                    let p = select_order(&c, t);
                    (c, p)
                })
                .map_err(|_| ())
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<PairResult> = pairs
        .par_iter()
        .map(|&(i, j)| fit_pair(&r, &uni, i, j, t, config.restricted_order))
        .collect();

    let mut orders = DMatrix::zeros(n, n);
    let mut f = DMatrix::zeros(n, n);
    let mut p = DMatrix::zeros(n, n);
    let mut degenerate = DMatrix::from_element(n, n, false);
    for (&(i, j), res) in pairs.iter().zip(&results) {
        for (a, b, stat) in [(i, j, res.f_ij), (j, i, res.f_ji)] {
            orders[(a, b)] = res.order;
            f[(a, b)] = stat;
            p[(a, b)] = if res.order == 0 { 0.0 } else { chi2_cdf(stat, res.order) };
            degenerate[(a, b)] = res.degenerate;
        }
    }
    Ok(PairwiseStats {
        n,
        t,
        orders,
        f,
        p,
        degenerate,
    })
}

/// Benjamini-Hochberg step-up threshold over the off-diagonal cells.
///
/// With `q = 1 - P`, sorted ascending over `m = n(n-1)` cells, returns
/// `q_(k)` for the largest `k` with `q_(k) <= alpha k / m`, or 0 when no
/// `k` qualifies. Use with [`passes`].
pub fn bh_threshold(p: &DMatrix<f64>, alpha: f64) -> f64 {
    let n = p.nrows();
    let mut q: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| 1.0 - p[(i, j)])
        .collect();
    let m = q.len();
    if m == 0 {
        return 0.0;
    }
    q.sort_by(f64::total_cmp);
    let mut delta = 0.0;
    for (k, &qk) in q.iter().enumerate() {
        if qk <= alpha * (k + 1) as f64 / m as f64 {
            delta = qk;
        }
    }
    delta
}

/// Oracle defaults: starting prewhitening order multiplier over the model
/// order, and the gap threshold.
pub const ORACLE_ORDER_FACTOR: usize = 4;
pub const ORACLE_TOL: f64 = 1e-18;
/// Floor on the starting prewhitening order.
pub const ORACLE_MIN_ORDER: usize = 200;
/// Cap on the prewhitening order reached by doubling.
pub const ORACLE_MAX_ORDER: usize = 3200;
/// Whitening is accepted once [`OracleGaps::residual`] is at most this.
pub const ORACLE_WHITENESS: f64 = 1e-17;
/// Cross lags used after prewhitening, as a fraction of the prewhitening order.
pub const ORACLE_CROSS_DIVISOR: usize = 5;

/// `max(ORACLE_ORDER_FACTOR * p, ORACLE_MIN_ORDER)`.
pub fn default_oracle_order(p: usize) -> usize {
    (ORACLE_ORDER_FACTOR * p).max(ORACLE_MIN_ORDER)
}

/// Autocovariance lags needed by [`oracle_gaps`] at a given order.
pub fn oracle_lags(p_oracle: usize) -> usize {
    p_oracle + (p_oracle / ORACLE_CROSS_DIVISOR).max(1)
}

/// Exact pairwise relations of a model.
///
/// Starts prewhitening at order `p_oracle` and doubles it, up to
/// [`ORACLE_MAX_ORDER`], until every whitened series is white to within
/// [`ORACLE_WHITENESS`]. Relations are then read off with
/// [`relations_from_gaps`].
pub fn oracle_pairwise(m: &VarModel, p_oracle: usize, tol: f64) -> Result<PairwiseRelations> {
    let mut order = p_oracle.max(1);
    loop {
        let r = population_autocovariance(m, oracle_lags(order))?;
        let gaps = oracle_gaps(&r, order)?;
        if gaps.residual <= ORACLE_WHITENESS || order >= ORACLE_MAX_ORDER {
            return Ok(relations_from_gaps(&gaps.gaps, tol));
        }
        order = (2 * order).min(ORACLE_MAX_ORDER);
    }
}

/// [`oracle_pairwise`] at a fixed order on a precomputed autocovariance.
pub fn oracle_from_autocov(r: &AutocovSeq, p_oracle: usize, tol: f64) -> Result<PairwiseRelations> {
    Ok(relations_from_gaps(&oracle_gaps(r, p_oracle)?.gaps, tol))
}

/// `j` pairwise-causes `i` iff `gaps[(i, j)] > tol / (1 - gaps[(j, i)])^2`.
///
/// Rounding in a pair's gaps grows with how strongly the pair is coupled,
/// so the threshold is raised by the reverse-direction gap.
pub fn relations_from_gaps(gaps: &DMatrix<f64>, tol: f64) -> PairwiseRelations {
    let n = gaps.nrows();
    let mut pw = PairwiseRelations::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let slack = (1.0 - gaps[(j, i)]).max(f64::EPSILON);
                pw.set(i, j, gaps[(i, j)] * slack * slack > tol);
            }
        }
    }
    pw
}

fn cov(r: &AutocovSeq, i: usize, j: usize, h: isize) -> f64 {
    if h >= 0 {
        r.lag(h as usize)[(i, j)]
    } else {
        r.lag(h.unsigned_abs())[(j, i)]
    }
}

/// `E e_i(t) e_j(t - tau)` for `tau` in `-q..=q`, where `e_k = f_k * x_k`.
fn filtered_cross(r: &AutocovSeq, fi: &[f64], fj: &[f64], i: usize, j: usize, q: usize) -> Vec<f64> {
    let q = q as isize;
    let lo = -q - (fi.len() as isize - 1);
    let g: Vec<f64> = (lo..=q)
        .map(|h| fj.iter().enumerate().map(|(l, f)| f * cov(r, i, j, h + l as isize)).sum())
        .collect();
    (-q..=q)
        .map(|tau| fi.iter().enumerate().map(|(k, f)| f * g[(tau - k as isize - lo) as usize]).sum())
        .collect()
}

/// Total decrease of both forward error variances along Whittle's recursion,
/// summed from the per-order quadratic forms.
fn whittle_decrease(rr: &[Matrix2<f64>]) -> Result<(f64, f64)> {
    let mut fwd: Vec<Matrix2<f64>> = Vec::new();
    let mut bwd: Vec<Matrix2<f64>> = Vec::new();
    let mut vf = rr[0];
    let mut vb = rr[0];
    let (mut dec0, mut dec1) = (0.0, 0.0);
    for m in 0..rr.len() - 1 {
        let mut delta = rr[m + 1];
        for (k, a) in fwd.iter().enumerate() {
            delta -= a * rr[m - k];
        }
        let vb_inv = vb.try_inverse().ok_or(Error::Degenerate {
            what: "backward error covariance",
            order: m,
        })?;
        let vf_inv = vf.try_inverse().ok_or(Error::Degenerate {
            what: "forward error covariance",
            order: m,
        })?;
        let det = vb[(0, 0)] * vb[(1, 1)] - vb[(0, 1)] * vb[(1, 0)];
        if !(det > 0.0) {
            return Err(Error::Degenerate {
                what: "backward error covariance",
                order: m,
            });
        }
        let quad = |a: f64, b: f64| (a * a * vb[(1, 1)] - a * b * (vb[(0, 1)] + vb[(1, 0)]) + b * b * vb[(0, 0)]) / det;
        dec0 += quad(delta[(0, 0)], delta[(0, 1)]);
        dec1 += quad(delta[(1, 0)], delta[(1, 1)]);
        let kf = delta * vb_inv;
        let kb = delta.transpose() * vf_inv;
        let mut next_f: Vec<Matrix2<f64>> = (0..m).map(|k| fwd[k] - kf * bwd[m - 1 - k]).collect();
        next_f.push(kf);
        let mut next_b: Vec<Matrix2<f64>> = (0..m).map(|k| bwd[k] - kb * fwd[m - 1 - k]).collect();
        next_b.push(kb);
        vf -= kf * delta.transpose();
        vb -= kb * delta;
        vf = (vf + vf.transpose()) * 0.5;
        vb = (vb + vb.transpose()) * 0.5;
        fwd = next_f;
        bwd = next_b;
    }
    Ok((dec0, dec1))
}

#[derive(Clone, Debug)]
pub struct OracleGaps {
    pub gaps: DMatrix<f64>,
    /// Prewhitening order used.
    pub order: usize,
    /// Largest relative variance any whitened series still loses to its own
    /// past; zero for perfect whitening.
    pub residual: f64,
}

/// Relative prediction-error reduction for every ordered pair; entry
/// `(i, j)` is how much `j`'s history helps predict `i`.
///
/// Each series is first whitened by its own order-`p_oracle` predictor.
/// The bivariate recursion then runs on the whitened pair over
/// `p_oracle / ORACLE_CROSS_DIVISOR` lags, and the gap is accumulated as a
/// sum of nonnegative per-order terms, less the univariate terms. This keeps
/// relative precision on gaps far below the error variance itself, where
/// differencing two separately computed variances would not.
pub fn oracle_gaps(r: &AutocovSeq, p_oracle: usize) -> Result<OracleGaps> {
    let need = oracle_lags(p_oracle);
    if r.max_lag() < need {
        return Err(Error::InvalidParameter(format!(
            "autocovariance has {} lags, oracle needs {need}",
            r.max_lag()
        )));
    }
    let q = need - p_oracle;
    let n = r.n();
    let filters: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = levinson_durbin(&r.scalar(i)[..=p_oracle])?;
            Ok(std::iter::once(1.0).chain(c.coeffs(p_oracle).iter().map(|a| -a)).collect())
        })
        .collect::<Result<_>>()?;
    let own: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| filtered_cross(r, &filters[i], &filters[i], i, i, q))
        .collect();
    let own_decrease: Vec<f64> = own
        .iter()
        .map(|c| {
            let lev = levinson_durbin(&c[q..])?;
            Ok((0..q).map(|m| lev.xi[m] * lev.reflection[m] * lev.reflection[m]).sum())
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let fits: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let cij = filtered_cross(r, &filters[i], &filters[j], i, j, q);
            let (cii, cjj) = (&own[i], &own[j]);
            let rr: Vec<Matrix2<f64>> = (0..=q)
                .map(|t| Matrix2::new(cii[q + t], cij[q + t], cij[q - t], cjj[q + t]))
                .collect();
            whittle_decrease(&rr)
        })
        .collect();
    let mut gaps = DMatrix::zeros(n, n);
    for (&(i, j), fit) in pairs.iter().zip(fits) {
        let (di, dj) = fit?;
        gaps[(i, j)] = ((di - own_decrease[i]) / own[i][q]).max(0.0);
        gaps[(j, i)] = ((dj - own_decrease[j]) / own[j][q]).max(0.0);
    }
    let residual = (0..n).map(|i| own_decrease[i] / own[i][q]).fold(0.0, f64::max);
    Ok(OracleGaps {
        gaps,
        order: p_oracle,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_examples() {
        assert_eq!(gc_statistic(1.0, 1.0, 3, 100).unwrap(), 0.0);
        assert!((gc_statistic(1.2, 1.0, 2, 100).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(gc_statistic(0.9, 1.0, 2, 100).unwrap(), 0.0);
        assert!(gc_statistic(1.0, 0.0, 2, 100).is_err());
    }

    #[test]
    fn chi2_examples() {
        assert_eq!(chi2_cdf(0.0, 3), 0.0);
        assert!((chi2_cdf(3.841, 1) - 0.95).abs() < 5e-4);
        let f = 5.991;
        assert!((chi2_cdf(f, 2) - (1.0 - (-f / 2.0).exp())).abs() < 1e-12);
    }

    fn padded(q: &[f64], n: usize) -> DMatrix<f64> {
        let mut p = DMatrix::from_element(n, n, 0.0);
        let mut it = q.iter();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p[(i, j)] = 1.0 - it.next().copied().unwrap_or(1.0);
                }
            }
        }
        p
    }

    #[test]
    fn bh_hand_example() {
        // n = 4 gives m = 12 off-diagonal cells
        let p = padded(&[0.001, 0.002, 0.2, 0.9], 4);
        let delta = bh_threshold(&p, 0.05);
        assert!((delta - 0.002).abs() < 1e-12);
        let kept = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && passes(p[(i, j)], delta))
            .count();
        assert_eq!(kept, 2);
    }

    #[test]
    fn bh_extremes() {
        let none = padded(&[], 3);
        assert_eq!(bh_threshold(&none, 0.05), 0.0);
        assert!(!passes(none[(0, 1)], 0.0));
        let all = DMatrix::from_element(3, 3, 1.0);
        let delta = bh_threshold(&all, 0.05);
        assert_eq!(delta, 0.0);
        assert!(passes(all[(0, 1)], delta));
    }

    #[test]
    fn stats_from_parts_validates() {
        let z = DMatrix::zeros(2, 2);
        assert!(PairwiseStats::from_parts(10, DMatrix::zeros(2, 2), z.clone(), z.clone()).is_ok());
        let bad = DMatrix::from_element(2, 2, 1.5);
        assert!(PairwiseStats::from_parts(10, DMatrix::zeros(2, 2), z.clone(), bad).is_err());
        assert!(PairwiseStats::from_parts(10, DMatrix::zeros(3, 3), z.clone(), z).is_err());
    }

    #[test]
    fn relations_keep_diagonal_false() {
        let mut pw = PairwiseRelations::new(3);
        pw.set(1, 1, true);
        pw.set(1, 0, true);
        assert!(!pw.holds(1, 1));
        assert!(pw.holds(1, 0) && !pw.holds(0, 1));
    }
}
