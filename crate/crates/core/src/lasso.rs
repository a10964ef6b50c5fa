//! Adaptive LASSO baseline: one weighted-L1 regression per node on the
//! stacked lags of every series, with the penalty picked by BIC.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::spectral::XI_FLOOR;
use crate::var::{SeriesMatrix, VarModel};

/// Convergence threshold on the largest coefficient change in a full sweep.
pub const CD_TOL: f64 = 1e-7;
pub const CD_MAX_SWEEPS: usize = 10_000;

/// Pilot ridge penalty (on the standardized Gram matrix).
pub const PILOT_RIDGE: f64 = 1e-4;
/// Adaptive weight exponent.
pub const GAMMA: f64 = 1.0;
pub const PATH_POINTS: usize = 50;
pub const PATH_RATIO: f64 = 1e-4;
/// The path stops once the active set exceeds this fraction of the rows.
pub const PATH_DF_FRACTION: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct LassoSolution {
    pub coef: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective value after each sweep.
    pub objective: Vec<f64>,
}

/// Quadratic form of a least-squares problem: `gram = X^T X / m`,
/// `xty = X^T y / m`, `yy = y^T y / m`.
struct Quadratic<'a> {
    gram: &'a DMatrix<f64>,
    xty: &'a [f64],
    yy: f64,
}

impl Quadratic<'_> {
    /// Mean squared residual given `h = gram * b`.
    fn mse(&self, b: &[f64], h: &[f64]) -> f64 {
        let lin: f64 = self.xty.iter().zip(b).map(|(c, v)| c * v).sum();
        let quad: f64 = b.iter().zip(h).map(|(v, g)| v * g).sum();
        self.yy - 2.0 * lin + quad
    }

    fn objective(&self, b: &[f64], h: &[f64], lambda: f64, weights: &[f64]) -> f64 {
        let pen: f64 = b.iter().zip(weights).map(|(v, w)| w * v.abs()).sum();
        self.mse(b, h) + lambda * pen
    }

    /// One cyclic pass over `coords`; returns the largest coefficient change.
    fn sweep(&self, coords: &[usize], b: &mut [f64], h: &mut [f64], lambda: f64, weights: &[f64]) -> f64 {
        let mut max_change = 0.0f64;
        for &c in coords {
            let g = self.gram[(c, c)];
            let old = b[c];
            let new = if g > 0.0 {
                let rho = self.xty[c] - h[c] + g * old;
                soft_threshold(rho, 0.5 * lambda * weights[c]) / g
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                b[c] = new;
                for (hr, gr) in h.iter_mut().zip(self.gram.column(c).iter()) {
                    *hr += gr * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Minimises over the nonzero coordinates of `b` with their signs held
    /// fixed. When the sign-fixed solution would flip a coordinate, steps
    /// only as far as the first zero crossing, drops that coordinate and
    /// retries. The objective never increases. Returns whether `b` moved.
    fn sign_fixed_step(&self, active: &[usize], b: &mut [f64], h: &mut [f64], lambda: f64, weights: &[f64]) -> bool {
        let mut active = active.to_vec();
        let mut moved = false;
        while !active.is_empty() {
            let a = active.len();
            let sub = DMatrix::from_fn(a, a, |r, c| self.gram[(active[r], active[c])]);
            let rhs = DVector::from_fn(a, |r, _| {
                let k = active[r];
                self.xty[k] - 0.5 * lambda * weights[k] * b[k].signum()
            });
            let Some(chol) = Cholesky::new(sub) else {
                break;
            };
            let sol = chol.solve(&rhs);
            let mut step = 1.0;
            let mut hit = None;
            for (r, &k) in active.iter().enumerate() {
                if sol[r].signum() != b[k].signum() || sol[r] == 0.0 {
                    let t = b[k] / (b[k] - sol[r]);
                    if t < step {
                        step = t;
                        hit = Some(r);
                    }
                }
            }
            for (r, &k) in active.iter().enumerate() {
                b[k] += step * (sol[r] - b[k]);
            }
            moved = true;
            match hit {
                Some(r) => {
                    b[active[r]] = 0.0;
                    active.remove(r);
                }
                None => break,
            }
        }
        if moved {
            let nz: Vec<usize> = (0..b.len()).filter(|&k| b[k] != 0.0).collect();
            for (r, hr) in h.iter_mut().enumerate() {
                *hr = nz.iter().map(|&k| self.gram[(r, k)] * b[k]).sum();
            }
        }
        moved
    }

    /// Coordinate descent from `b` (with `h = gram * b` kept in sync) on
    /// `mse(b) + lambda * sum w_k |b_k|`.
    ///
    /// After each full sweep the nonzero coordinates are solved for directly
    /// with their signs fixed, falling back to sweeps over just those
    /// coordinates when a sign would flip. It stops after a full sweep in
    /// which no coefficient moves by `CD_TOL`.
    fn descend(
        &self,
        b: &mut [f64],
        h: &mut [f64],
        lambda: f64,
        weights: &[f64],
        record: bool,
    ) -> (usize, bool, Vec<f64>) {
        let all: Vec<usize> = (0..b.len()).collect();
        let mut objective = Vec::new();
        let mut last = self.objective(b, h, lambda, weights);
        let mut sweeps = 0;
        let mut full = true;
        let mut active = Vec::new();
        while sweeps < CD_MAX_SWEEPS {
            let change = if full {
                self.sweep(&all, b, h, lambda, weights)
            } else if self.sign_fixed_step(&active, b, h, lambda, weights) {
                0.0
            } else {
                self.sweep(&active, b, h, lambda, weights)
            };
            sweeps += 1;
            let obj = self.objective(b, h, lambda, weights);
            debug_assert!(
                obj <= last + 1e-9 * last.abs().max(1.0),
                "objective increased from {last} to {obj}"
            );
            last = obj;
            if record {
                objective.push(obj);
            }
            if change < CD_TOL {
                if full {
                    return (sweeps, true, objective);
                }
                full = true;
            } else if full {
                active = (0..b.len()).filter(|&c| b[c] != 0.0).collect();
                full = false;
            }
        }
        (sweeps, false, objective)
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Smallest penalty at which the all-zero vector is optimal:
/// `max_k 2 |xty_k| / w_k`.
pub fn lambda_max(xty: &[f64], weights: &[f64]) -> f64 {
    xty.iter()
        .zip(weights)
        .map(|(c, w)| 2.0 * c.abs() / w)
        .fold(0.0, f64::max)
}

/// Minimises `(1/T) ||target - design b||^2 + lambda sum_k w_k |b_k|` by
/// cyclic coordinate descent, `T` being the number of rows.
pub fn lasso_cd(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    lambda: f64,
    weights: &[f64],
) -> Result<LassoSolution> {
    let (m, k) = design.shape();
    if target.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: target.len(),
        });
    }
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: weights.len(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("penalty {lambda} must be finite and >= 0")));
    }
    if design.iter().chain(target.iter()).chain(weights).any(|v| !v.is_finite())
        || weights.iter().any(|w| *w < 0.0)
    {
        return Err(Error::NonFinite);
    }
    let scale = 1.0 / m as f64;
    let gram = design.tr_mul(design) * scale;
    let xty: Vec<f64> = (design.tr_mul(target) * scale).iter().copied().collect();
    let q = Quadratic {
        gram: &gram,
        xty: &xty,
        yy: target.norm_squared() * scale,
    };
    let mut b = vec![0.0; k];
    let mut h = vec![0.0; k];
    let (sweeps, converged, objective) = q.descend(&mut b, &mut h, lambda, weights, true);
    Ok(LassoSolution {
        coef: DVector::from_vec(b),
        sweeps,
        converged,
        objective,
    })
}

/// Selected adaptive-LASSO fit for one node.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub node: usize,
    /// `coeffs[(j, tau - 1)]` weights `x_j(t - tau)`, natural units.
    pub coeffs: DMatrix<f64>,
    pub lambda: f64,
    pub lambda_max: f64,
    pub bic: f64,
    /// Residual mean square at the selected penalty.
    pub xi: f64,
    /// Sources `j` with any nonzero coefficient (may include the node).
    pub active: BTreeSet<usize>,
}

/// Lagged regressors shared by every node: rows `t = p_max..T`, column
/// `j * p_max + (tau - 1)` holding `x_j(t - tau)` scaled to unit mean
/// square.
pub struct LagDesign {
    n: usize,
    p_max: usize,
    rows: usize,
    scales: Vec<f64>,
    gram: DMatrix<f64>,
    /// Column `i` is `X^T y_i / m` for target node `i`.
    xty: DMatrix<f64>,
    yy: Vec<f64>,
    pilot: DMatrix<f64>,
    /// Unpenalized least-squares mean square per node when the design has
    /// full column rank; a floor on every fit's residual.
    ols_mse: Option<Vec<f64>>,
}

impl LagDesign {
    pub fn new(x: &SeriesMatrix, p_max: usize) -> Result<Self> {
        let (t, n) = (x.len(), x.dim());
        if p_max == 0 {
            return Err(Error::InvalidParameter("p_max must be at least 1".into()));
        }
        if t <= p_max + 1 {
            return Err(Error::InsufficientSamples {
                needed: p_max + 1,
                available: t,
            });
        }
        if t <= n * p_max {
            log::warn!(
                "adaptive lasso: {t} samples for {} lagged regressors",
                n * p_max
            );
        }
        let rows = t - p_max;
        let k = n * p_max;
        let mut design = DMatrix::from_fn(rows, k, |r, c| {
            let (j, tau) = (c / p_max, c % p_max + 1);
            x.get(r + p_max - tau, j)
        });
        let scales: Vec<f64> = design
            .column_iter()
            .map(|col| {
                let s = (col.norm_squared() / rows as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        for (mut col, s) in design.column_iter_mut().zip(&scales) {
            col /= *s;
        }
        let targets = DMatrix::from_fn(rows, n, |r, i| x.get(r + p_max, i));
        let inv_m = 1.0 / rows as f64;
        let gram = design.tr_mul(&design) * inv_m;
        let xty = design.tr_mul(&targets) * inv_m;
        let yy: Vec<f64> = targets
            .column_iter()
            .map(|c| c.norm_squared() * inv_m)
            .collect();
        let ols_mse = if rows > k {
            Cholesky::new(gram.clone()).map(|c| {
                let beta = c.solve(&xty);
                (0..n)
                    .map(|i| yy[i] - xty.column(i).dot(&beta.column(i)))
                    .collect()
            })
        } else {
            None
        };
        let ridge = &gram + DMatrix::identity(k, k) * PILOT_RIDGE;
        let pilot = Cholesky::new(ridge)
            .ok_or(Error::Degenerate {
                what: "ridge pilot system",
                order: p_max,
            })?
            .solve(&xty);
        Ok(Self {
            n,
            p_max,
            rows,
            scales,
            gram,
            xty,
            yy,
            pilot,
            ols_mse,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Weighted LASSO path for node `i`, BIC selection.
    ///
    /// The path runs from `lambda_max` down to `PATH_RATIO * lambda_max` on
    /// a geometric grid with warm starts. It stops early once the active set
    /// exceeds `PATH_DF_FRACTION * rows` (such points are not eligible), or
    /// once even the unpenalized residual at the current `df` could not beat
    /// the best BIC so far.
    pub fn fit_node(&self, i: usize) -> Result<LassoFit> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { node: i, n: self.n });
        }
        let k = self.n * self.p_max;
        let xty: Vec<f64> = self.xty.column(i).iter().copied().collect();
        if xty.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let weights: Vec<f64> = self
            .pilot
            .column(i)
            .iter()
            .map(|b| 1.0 / (b.abs().powf(GAMMA) + 1e-8))
            .collect();
        let q = Quadratic {
            gram: &self.gram,
            xty: &xty,
            yy: self.yy[i],
        };
        let lmax = lambda_max(&xty, &weights);
        let m = self.rows as f64;
        let bic_of = |mse: f64, df: usize| mse.max(XI_FLOOR).ln() + df as f64 * m.ln() / m;

        let mut b = vec![0.0; k];
        let mut h = vec![0.0; k];
        let mut best = (lmax, bic_of(q.yy, 0), b.clone(), q.yy);
        if lmax > 0.0 {
            for s in 0..PATH_POINTS {
                let frac = s as f64 / (PATH_POINTS - 1) as f64;
                let lambda = lmax * PATH_RATIO.powf(frac);
                q.descend(&mut b, &mut h, lambda, &weights, false);
                let df = b.iter().filter(|v| **v != 0.0).count();
                if df as f64 > PATH_DF_FRACTION * m {
                    break;
                }
                let mse = q.mse(&b, &h);
                let score = bic_of(mse, df);
                if score < best.1 {
                    best = (lambda, score, b.clone(), mse);
                }
                if let Some(floor) = &self.ols_mse {
                    if bic_of(floor[i], df) > best.1 {
                        break;
                    }
                }
            }
        }
        let (lambda, bic, coef, xi) = best;
        let mut coeffs = DMatrix::zeros(self.n, self.p_max);
        let mut active = BTreeSet::new();
        for (c, v) in coef.iter().enumerate() {
            if *v != 0.0 {
                let (j, lag) = (c / self.p_max, c % self.p_max);
                coeffs[(j, lag)] = v / self.scales[c];
                active.insert(j);
            }
        }
        Ok(LassoFit {
            node: i,
            coeffs,
            lambda,
            lambda_max: lmax,
            bic,
            xi: xi.max(0.0),
            active,
        })
    }
}

/// Adaptive LASSO fit of node `i` on lags `1..=p_max` of every series.
pub fn adalasso_node(x: &SeriesMatrix, i: usize, p_max: usize) -> Result<LassoFit> {
    LagDesign::new(x, p_max)?.fit_node(i)
}

#[derive(Clone, Debug)]
pub struct AdaLassoGraph {
    pub graph: DirectedGraph,
    pub model: VarModel,
    pub fits: Vec<LassoFit>,
    /// Nodes whose fit failed; their rows are left at zero.
    pub failures: Vec<(usize, String)>,
}

/// Per-node adaptive LASSO; `j -> i` is an edge iff `j != i` is active in
/// node `i`'s fit.
pub fn adalasso_graph(x: &SeriesMatrix, p_max: usize) -> Result<AdaLassoGraph> {
    let design = LagDesign::new(x, p_max)?;
    let n = x.dim();
    let results: Vec<Result<LassoFit>> = (0..n).into_par_iter().map(|i| design.fit_node(i)).collect();
    let mut graph = DirectedGraph::new(n);
    let mut coeffs = vec![DMatrix::zeros(n, n); p_max];
    let mut noise_vars = design.yy.clone();
    let mut fits = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(fit) => {
                for &j in fit.active.iter().filter(|&&j| j != i) {
                    graph.add_edge(j, i)?;
                }
                for j in 0..n {
                    for lag in 0..p_max {
                        coeffs[lag][(i, j)] = fit.coeffs[(j, lag)];
                    }
                }
                noise_vars[i] = fit.xi;
                fits.push(fit);
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    for s in &mut noise_vars {
        if !(*s > 0.0) {
            *s = f64::MIN_POSITIVE;
        }
    }
    let model = VarModel::new(coeffs, noise_vars, graph.clone())?;
    Ok(AdaLassoGraph {
        graph,
        model,
        fits,
        failures,
    })
}
