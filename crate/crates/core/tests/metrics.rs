use gcnet::metrics::{confusion, lre, ConfusionCounts};
use gcnet::{build_var_model, random_scg, DirectedGraph, Error, VarModel};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn mcc_is_symmetric(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        let a = ConfusionCounts { tp, fp, tn, fn_ };
        let b = ConfusionCounts { tp: tn, fp: fn_, tn: tp, fn_: fp };
        prop_assert!((a.mcc() - b.mcc()).abs() < 1e-12);
        prop_assert!(a.mcc().abs() <= 1.0 + 1e-12);
    }
}

#[test]
fn random_estimate_has_mcc_near_zero() {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let slots: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut scores: Vec<f64> = (0..200)
        .map(|_| {
            let truth = random_scg(n, &mut rng);
            let picks: Vec<_> = slots.choose_multiple(&mut rng, truth.edge_count()).copied().collect();
            let est = DirectedGraph::from_edges(n, picks).unwrap();
            confusion(&truth, &est).unwrap().mcc()
        })
        .collect();
    scores.sort_by(f64::total_cmp);
    let median = 0.5 * (scores[99] + scores[100]);
    assert!(median.abs() < 0.1, "median MCC {median}");
}

#[test]
fn counts_cover_every_slot() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for n in 2..12 {
        let a = random_scg(n, &mut rng);
        let b = random_scg(n, &mut rng);
        let c = confusion(&a, &b).unwrap();
        assert_eq!(c.tp + c.fp + c.tn + c.fn_, (n * (n - 1)) as u64);
        assert!((confusion(&a, &a).unwrap().mcc() - 1.0).abs() < 1e-12);
    }
    assert!(confusion(&DirectedGraph::new(3), &DirectedGraph::new(4)).is_err());
}

#[test]
fn lre_of_true_model_tends_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let mut checked = 0;
    while checked < 5 {
        let g = random_scg(6, &mut rng);
        let m = build_var_model(&g, 2, &mut rng).unwrap();
        let trace: f64 = m.noise_vars().iter().sum();
        if (trace.ln()).abs() < 0.5 {
            continue;
        }
        let ratio = lre(&m, &m, 100_000, &mut rng).unwrap();
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio} with tr {trace}");
        checked += 1;
    }
}

#[test]
fn lre_undefined_for_unit_trace() {
    let m = VarModel::from_coefficients(vec![DMatrix::from_element(2, 2, 0.0)], vec![0.5, 0.5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    assert!(matches!(lre(&m, &m, 100, &mut rng), Err(Error::LreDegenerate(_))));
}
