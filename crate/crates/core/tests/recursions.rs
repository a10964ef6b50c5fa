use gcnet::spectral::{estimate_autocovariance, levinson_durbin, whittle_bivariate, AutocovSeq};
use gcnet::var::{ma_expansion, population_autocovariance};
use gcnet::{build_var_model, random_dag, simulate, SeriesMatrix, VarModel};
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise_series(t: usize, n: usize, rng: &mut ChaCha8Rng) -> SeriesMatrix {
    // mildly coloured so the fits are not trivially zero
    let mut v = vec![0.0; t * n];
    for r in 0..t {
        for c in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let prev = if r > 0 { v[(r - 1) * n + c] } else { 0.0 };
            let cross = if c > 0 { 0.3 * v[r * n + c - 1] } else { 0.0 };
            v[r * n + c] = 0.5 * prev + cross + e;
        }
    }
    SeriesMatrix::new(t, n, v).unwrap()
}

/// Dense Yule-Walker solve for the scalar predictor of order `p`.
fn scalar_yule_walker(r: &[f64], p: usize) -> (Vec<f64>, f64) {
    if p == 0 {
        return (vec![], r[0]);
    }
    let toeplitz = DMatrix::from_fn(p, p, |a, b| r[a.abs_diff(b)]);
    let rhs = DVector::from_fn(p, |a, _| r[a + 1]);
    let a = toeplitz.lu().solve(&rhs).unwrap();
    let xi = r[0] - a.iter().zip(&r[1..=p]).map(|(u, v)| u * v).sum::<f64>();
    (a.iter().copied().collect(), xi)
}

/// Dense block Yule-Walker solve: `sum_k A_k R(l - k) = R(l)`, `l = 1..p`.
fn block_yule_walker(r: &[Matrix2<f64>], p: usize) -> (Vec<Matrix2<f64>>, Matrix2<f64>) {
    if p == 0 {
        return (vec![], r[0]);
    }
    let cov = |h: isize| if h >= 0 { r[h as usize] } else { r[(-h) as usize].transpose() };
    // unknown row block [A_1 .. A_p] solves X G = H with G(k, l) = R(l - k)
    let g = DMatrix::from_fn(2 * p, 2 * p, |a, b| {
        let (k, l) = (a / 2, b / 2);
        cov(l as isize - k as isize)[(a % 2, b % 2)]
    });
    let h = DMatrix::from_fn(2, 2 * p, |a, b| r[b / 2 + 1][(a, b % 2)]);
    let x = g.transpose().lu().solve(&h.transpose()).unwrap().transpose();
    let coeffs: Vec<Matrix2<f64>> = (0..p)
        .map(|k| Matrix2::new(x[(0, 2 * k)], x[(0, 2 * k + 1)], x[(1, 2 * k)], x[(1, 2 * k + 1)]))
        .collect();
    let mut sigma = r[0];
    for (k, a) in coeffs.iter().enumerate() {
        sigma -= a * r[k + 1].transpose();
    }
    (coeffs, sigma)
}

#[test]
fn levinson_matches_dense_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let t = rng.random_range(80..400);
        let p_max = 1 + case % 16;
        let x = noise_series(t, 1, &mut rng);
        let r = estimate_autocovariance(&x, p_max).unwrap().scalar(0);
        let curve = levinson_durbin(&r).unwrap();
        for p in 0..=p_max {
            let (a, xi) = scalar_yule_walker(&r, p);
            assert!((curve.xi[p] - xi).abs() < 1e-8, "case {case} order {p}");
            for (u, v) in curve.coeffs(p).iter().zip(&a) {
                assert!((u - v).abs() < 1e-8, "case {case} order {p}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn whittle_matches_dense_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..200 {
        let t = rng.random_range(80..400);
        let p_max = 1 + case % 12;
        let x = noise_series(t, 2, &mut rng);
        let r = estimate_autocovariance(&x, p_max).unwrap().pair(0, 1);
        let curve = whittle_bivariate(&r).unwrap();
        for p in 0..=p_max {
            let (a, sigma) = block_yule_walker(&r, p);
            assert!((curve.sigma[p] - sigma).amax() < 1e-8, "case {case} order {p}");
            for (u, v) in curve.coeffs(p).iter().zip(&a) {
                assert!((u - v).amax() < 1e-8, "case {case} order {p}");
            }
        }
    }
}

#[test]
fn levinson_recovers_ar2() {
    // x(t) = 0.5 x(t-1) - 0.3 x(t-2) + e, unit noise
    let (a1, a2) = (0.5f64, -0.3f64);
    let r1_over_r0 = a1 / (1.0 - a2);
    let r0 = 1.0 / (1.0 - a1 * r1_over_r0 - a2 * (a1 * r1_over_r0 + a2));
    let r1 = r1_over_r0 * r0;
    let r2 = a1 * r1 + a2 * r0;
    let r3 = a1 * r2 + a2 * r1;
    let curve = levinson_durbin(&[r0, r1, r2, r3]).unwrap();
    assert!((curve.coeffs(2)[0] - a1).abs() < 1e-12);
    assert!((curve.coeffs(2)[1] - a2).abs() < 1e-12);
    assert!((curve.xi[2] - 1.0).abs() < 1e-12);
    assert!(curve.coeffs(3)[2].abs() < 1e-12);
}

#[test]
fn sample_autocovariance_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..1000 {
        let n = rng.random_range(1..4);
        let t = rng.random_range(5..60);
        let p_max = rng.random_range(0..t.min(8));
        let values: Vec<f64> = (0..t * n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let x = SeriesMatrix::new(t, n, values).unwrap();
        let r = estimate_autocovariance(&x, p_max).unwrap();
        assert!(r.min_toeplitz_eigenvalue() >= -1e-8, "case {case}");
    }
}

fn random_model(n: usize, p: usize, rng: &mut ChaCha8Rng) -> VarModel {
    let g = random_dag(n, 0.3, rng).unwrap();
    build_var_model(&g, p, rng).unwrap()
}

/// `R(tau) = sum_k A(k + tau) D A(k)^T` truncated far out.
fn ma_autocovariance(m: &VarModel, max_lag: usize, terms: usize) -> AutocovSeq {
    let ma = ma_expansion(m, terms + max_lag).unwrap();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(m.noise_vars()));
    let lags = (0..=max_lag)
        .map(|tau| {
            (0..=terms).fold(DMatrix::zeros(m.n(), m.n()), |acc, k| {
                acc + ma.get(k + tau) * &d * ma.get(k).transpose()
            })
        })
        .collect();
    AutocovSeq::new(lags, gcnet::spectral::CovSource::Population)
}

#[test]
fn population_autocovariance_matches_ma_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let n = rng.random_range(2..6);
        let p = rng.random_range(1..4);
        let m = random_model(n, p, &mut rng);
        let exact = population_autocovariance(&m, 6).unwrap();
        let summed = ma_autocovariance(&m, 6, 600);
        for tau in 0..=6 {
            let scale = exact.lag(0).amax();
            assert!((exact.lag(tau) - summed.lag(tau)).amax() < 1e-9 * scale, "lag {tau}");
        }
    }
}

#[test]
fn population_autocovariance_matches_long_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let m = random_model(3, 2, &mut rng);
    let x = simulate(&m, 200_000, 1000, &mut rng).unwrap();
    let est = estimate_autocovariance(&x, 3).unwrap();
    let exact = population_autocovariance(&m, 3).unwrap();
    let scale = exact.lag(0).amax();
    for tau in 0..=3 {
        assert!((est.lag(tau) - exact.lag(tau)).amax() < 0.05 * scale, "lag {tau}");
    }
}
