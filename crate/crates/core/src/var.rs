//! Finite-order VAR models: construction over a topology, stability,
//! simulation, Wold (MA) expansion, persistence and exact autocovariance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::spectral::{AutocovSeq, CovSource};

/// Spectral radius margin used by [`VarModel::is_stable`].
pub const STABILITY_EPS: f64 = 1e-9;

/// Pole radius used for the random filters of [`build_var_model`].
pub const POLE_RADIUS: f64 = 0.75;

/// `x(t) = sum_{tau=1..p} B(tau) x(t - tau) + v(t)` with independent
/// innovations `v_i(t)` of variance `noise_vars[i]`.
///
/// Entry `(i, j)` of `B(tau)` weights `x_j(t - tau)` in `x_i(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarModel {
    coeffs: Vec<DMatrix<f64>>,
    noise_vars: Vec<f64>,
    topology: DirectedGraph,
}

impl VarModel {
    /// Validates dimensions, noise variances and that every nonzero
    /// off-diagonal coefficient is backed by an edge of `topology`.
    pub fn new(
        coeffs: Vec<DMatrix<f64>>,
        noise_vars: Vec<f64>,
        topology: DirectedGraph,
    ) -> Result<Self> {
        let n = topology.n();
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("lag order must be at least 1".into()));
        }
        if noise_vars.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: noise_vars.len(),
            });
        }
        for b in &coeffs {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: b.nrows().max(b.ncols()),
                });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        if let Some(s) = noise_vars.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "noise variance {s} is not positive"
            )));
        }
        for (tau, b) in coeffs.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if i != j && b[(i, j)] != 0.0 && !topology.has_edge(j, i) {
                        return Err(Error::InvalidParameter(format!(
                            "coefficient ({i}, {j}) at lag {} is nonzero but {j} -> {i} is not an edge",
                            tau + 1
                        )));
                    }
                }
            }
        }
        Ok(Self {
            coeffs,
            noise_vars,
            topology,
        })
    }

    /// Builds a model whose topology is read off the nonzero off-diagonal
    /// pattern of the coefficients.
    pub fn from_coefficients(coeffs: Vec<DMatrix<f64>>, noise_vars: Vec<f64>) -> Result<Self> {
        let n = noise_vars.len();
        let mut g = DirectedGraph::new(n);
        for b in &coeffs {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: b.nrows(),
                });
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j && b[(i, j)] != 0.0 {
                        g.add_edge(j, i)?;
                    }
                }
            }
        }
        Self::new(coeffs, noise_vars, g)
    }

    pub fn n(&self) -> usize {
        self.noise_vars.len()
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    /// `B(1), ..., B(p)`.
    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// `B(tau)` for `tau` in `1..=p`.
    pub fn lag(&self, tau: usize) -> &DMatrix<f64> {
        &self.coeffs[tau - 1]
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_vars
    }

    pub fn topology(&self) -> &DirectedGraph {
        &self.topology
    }

    /// The `np x np` companion matrix of the stacked state
    /// `[x(t); x(t-1); ...; x(t-p+1)]`.
    pub fn companion(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut f = DMatrix::zeros(n * p, n * p);
        for (tau, b) in self.coeffs.iter().enumerate() {
            f.view_mut((0, tau * n), (n, n)).copy_from(b);
        }
        for k in 1..p {
            for d in 0..n {
                f[(k * n + d, (k - 1) * n + d)] = 1.0;
            }
        }
        f
    }

    pub fn spectral_radius(&self) -> f64 {
        self.companion()
            .schur()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0 - STABILITY_EPS
    }

    fn require_stable(&self) -> Result<()> {
        let rho = self.spectral_radius();
        if rho < 1.0 - STABILITY_EPS {
            Ok(())
        } else {
            Err(Error::Unstable {
                spectral_radius: rho,
            })
        }
    }

    /// Nonzero coefficients grouped by target row: `(source, lag, weight)`.
    pub(crate) fn sparse_rows(&self) -> Vec<Vec<(usize, usize, f64)>> {
        let n = self.n();
        let mut rows = vec![Vec::new(); n];
        for (tau, b) in self.coeffs.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let w = b[(i, j)];
                    if w != 0.0 {
                        rows[i].push((j, tau + 1, w));
                    }
                }
            }
        }
        rows
    }
}

/// `T x n` sample, row `t` is `x(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMatrix {
    t: usize,
    n: usize,
    values: Vec<f64>,
}

impl SeriesMatrix {
    /// `values` is row-major with `t * n` entries.
    pub fn new(t: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if t == 0 || n == 0 {
            return Err(Error::InvalidParameter("series must be non-empty".into()));
        }
        if values.len() != t * n {
            return Err(Error::DimensionMismatch {
                expected: t * n,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { t, n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), n, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.n + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.get(t, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Wold coefficients `A(0) = I, A(1), ..., A(K)`.
#[derive(Clone, Debug)]
pub struct MaExpansion {
    mats: Vec<DMatrix<f64>>,
}

impl MaExpansion {
    pub fn order(&self) -> usize {
        self.mats.len() - 1
    }

    pub fn get(&self, k: usize) -> &DMatrix<f64> {
        &self.mats[k]
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }
}

/// Real coefficients `b(1..p)` of the monic polynomial
/// `z^p - b(1) z^(p-1) - ... - b(p)` whose roots are drawn uniformly from
/// the open disc of the given radius: `p / 2` conjugate pairs plus one real
/// root on `(-radius, radius)` when `p` is odd.
pub fn random_filter_from_poles<R: Rng + ?Sized>(p: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    assert!(p >= 1, "filter order must be positive");
    assert!(radius > 0.0 && radius < 1.0, "pole radius must lie in (0, 1)");
    // poly[k] is the coefficient of z^(p-k) as the product grows
    let mut poly = vec![1.0];
    let mut mul = |factor: &[f64]| {
        let mut next = vec![0.0; poly.len() + factor.len() - 1];
        for (a, pa) in poly.iter().enumerate() {
            for (b, fb) in factor.iter().enumerate() {
                next[a + b] += pa * fb;
            }
        }
        poly = next;
    };
    for _ in 0..p / 2 {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        // (z - r e^{i theta})(z - r e^{-i theta})
        mul(&[1.0, -2.0 * r * theta.cos(), r * r]);
    }
    if p % 2 == 1 {
        let r = rng.random_range(-radius..radius);
        mul(&[1.0, -r]);
    }
    poly[1..].iter().map(|c| -c).collect()
}

/// Random VAR(p) over a DAG: every edge and every self loop receives an
/// independent filter from [`random_filter_from_poles`] at radius 3/4, and
/// `noise_vars[i] = 1/2 + r_i` with `r_i` exponential of mean 1/2.
pub fn build_var_model<R: Rng + ?Sized>(
    g: &DirectedGraph,
    p: usize,
    rng: &mut R,
) -> Result<VarModel> {
    if !g.is_dag() {
        return Err(Error::NotDag);
    }
    if p == 0 {
        return Err(Error::InvalidParameter("lag order must be at least 1".into()));
    }
    let n = g.n();
    let mut coeffs = vec![DMatrix::zeros(n, n); p];
    let mut place = |i: usize, j: usize, filter: Vec<f64>| {
        for (tau, b) in filter.into_iter().enumerate() {
            coeffs[tau][(i, j)] = b;
        }
    };
    for i in 0..n {
        place(i, i, random_filter_from_poles(p, POLE_RADIUS, rng));
    }
    for (from, to) in g.edges() {
        place(to, from, random_filter_from_poles(p, POLE_RADIUS, rng));
    }
    let exp = Exp::new(2.0).expect("positive rate");
    let noise_vars = (0..n).map(|_| 0.5 + exp.sample(rng)).collect();
    let model = VarModel::new(coeffs, noise_vars, g.clone())?;
    model.require_stable()?;
    Ok(model)
}

pub fn default_burn_in(n: usize, p: usize) -> usize {
    (10 * n * p).max(1000)
}

/// Runs the recursion from a zero state with Gaussian innovations, drops
/// the first `burn_in` samples and returns the next `t`.
pub fn simulate<R: Rng + ?Sized>(
    m: &VarModel,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<SeriesMatrix> {
    if t == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    m.require_stable()?;
    let values = simulate_raw(m, t, burn_in, rng);
    SeriesMatrix::new(t, m.n(), values)
}

/// Unchecked simulation kernel; callers guarantee stability.
pub(crate) fn simulate_raw<R: Rng + ?Sized>(
    m: &VarModel,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Vec<f64> {
    let n = m.n();
    let rows = m.sparse_rows();
    let sd: Vec<f64> = m.noise_vars.iter().map(|s| s.sqrt()).collect();
    let total = burn_in + t;
    let mut x = vec![0.0; total * n];
    for step in 0..total {
        for i in 0..n {
            let mut acc = sd[i] * rng.sample::<f64, _>(StandardNormal);
            for &(j, tau, w) in &rows[i] {
                if tau <= step {
                    acc += w * x[(step - tau) * n + j];
                }
            }
            x[step * n + i] = acc;
        }
    }
    x.split_off(burn_in * n)
}

/// `A(k) = sum_{tau=1..min(k,p)} B(tau) A(k - tau)`, `A(0) = I`.
pub fn ma_expansion(m: &VarModel, order: usize) -> Result<MaExpansion> {
    m.require_stable()?;
    Ok(ma_expansion_unchecked(m, order))
}

fn ma_expansion_unchecked(m: &VarModel, order: usize) -> MaExpansion {
    let n = m.n();
    let mut mats = Vec::with_capacity(order + 1);
    mats.push(DMatrix::identity(n, n));
    for k in 1..=order {
        let mut a = DMatrix::zeros(n, n);
        for tau in 1..=k.min(m.p()) {
            a.gemm(1.0, m.lag(tau), &mats[k - tau], 1.0);
        }
        mats.push(a);
    }
    MaExpansion { mats }
}

/// Truncation window for [`is_persistent`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersistenceWindow {
    /// Number of MA lags inspected.
    pub horizon: usize,
    /// Width of the window at the end of the horizon that must still carry
    /// a nonzero response.
    pub tail: usize,
    /// `A_ik(tau)` counts as zero when its magnitude is at most `tol` times
    /// the absolute sum of the terms that produced it,
    /// `sum_s sum_a |B_ia(s)| |A_ak(tau - s)|`.
    pub tol: f64,
}

impl Default for PersistenceWindow {
    fn default() -> Self {
        Self {
            horizon: 200,
            tail: 50,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PersistenceReport {
    pub persistent: bool,
    /// `(i, k)` with `k` an ancestor of `i` whose filter `A_ik` starts too
    /// late or dies out inside the window.
    pub failures: Vec<(usize, usize)>,
}

/// Truncated check that every ancestor filter `A_ik` has a finite first
/// nonzero lag and is still nonzero in the tail of the window.
///
/// Zero is judged against the size of the summands rather than absolutely,
/// so exact cancellations are caught while ordinary geometric decay is not
/// mistaken for them.
pub fn is_persistent(m: &VarModel, window: PersistenceWindow) -> Result<PersistenceReport> {
    m.require_stable()?;
    if window.tail == 0 || window.tail > window.horizon {
        return Err(Error::InvalidParameter(
            "persistence tail must be in 1..=horizon".into(),
        ));
    }
    let ma = ma_expansion_unchecked(m, window.horizon);
    let abs_b: Vec<DMatrix<f64>> = m.coeffs.iter().map(|b| b.abs()).collect();
    let mut mass = vec![DMatrix::zeros(m.n(), m.n())];
    for k in 1..=window.horizon {
        let mut s = DMatrix::zeros(m.n(), m.n());
        for tau in 1..=k.min(m.p()) {
            s.gemm(1.0, &abs_b[tau - 1], &ma.mats[k - tau].abs(), 1.0);
        }
        mass.push(s);
    }
    let alive = |i: usize, k: usize, tau: usize| {
        let v = ma.mats[tau][(i, k)].abs();
        v > 0.0 && v > window.tol * mass[tau][(i, k)]
    };
    let tail_start = window.horizon + 1 - window.tail;
    let mut failures = Vec::new();
    for i in 0..m.n() {
        for k in m.topology.ancestors(i)? {
            if k == i {
                continue;
            }
            let starts = (1..=window.horizon).any(|tau| alive(i, k, tau));
            let persists = (tail_start..=window.horizon).any(|tau| alive(i, k, tau));
            if !(starts && persists) {
                failures.push((i, k));
            }
        }
    }
    Ok(PersistenceReport {
        persistent: failures.is_empty(),
        failures,
    })
}

/// Exact `R(tau) = E x(t) x(t - tau)^T` for `tau = 0..=max_lag`.
///
/// Solves `S = F S F^T + Q` for the companion-state covariance with the
/// doubling iteration, reads `R(0..p-1)` off the first block row and
/// propagates `R(tau) = sum_k B(k) R(tau - k)` beyond that.
pub fn population_autocovariance(m: &VarModel, max_lag: usize) -> Result<AutocovSeq> {
    m.require_stable()?;
    let (n, p) = (m.n(), m.p());
    let np = n * p;
    let mut a = m.companion();
    let mut x = DMatrix::zeros(np, np);
    for (i, s) in m.noise_vars.iter().enumerate() {
        x[(i, i)] = *s;
    }
    for _ in 0..200 {
        let inc = &a * &x * a.transpose();
        let size = x.amax();
        x += &inc;
        if inc.amax() <= 1e-17 * size {
            break;
        }
        a = &a * &a;
    }
    let x = (&x + x.transpose()) * 0.5;

    let mut lags: Vec<DMatrix<f64>> = Vec::with_capacity(max_lag + 1);
    for tau in 0..=max_lag {
        let r = if tau < p {
            x.view((0, tau * n), (n, n)).into_owned()
        } else {
            let mut acc = DMatrix::zeros(n, n);
            for k in 1..=p {
                acc.gemm(1.0, m.lag(k), &lags[tau - k], 1.0);
            }
            acc
        };
        lags.push(r);
    }
    Ok(AutocovSeq::new(lags, CovSource::Population))
}
