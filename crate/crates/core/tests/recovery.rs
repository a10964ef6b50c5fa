use gcnet::fixtures::{six_node_graph, six_node_model};
use gcnet::pairwise::{default_oracle_order, ORACLE_TOL};
use gcnet::recovery::finite_candidates;
use gcnet::{oracle_pairwise, recover_finite, recover_oracle, PairwiseRelations, PairwiseStats};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stats(n: usize, rng: &mut ChaCha8Rng) -> PairwiseStats {
    let orders = DMatrix::from_fn(n, n, |i, j| if i == j { 0 } else { rng.random_range(1..6) });
    let f = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random::<f64>() * 40.0 });
    // most cells near 1 so the graph is dense enough to stress the tracker
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 - rng.random::<f64>().powi(3) * 0.2 });
    PairwiseStats::from_parts(500, orders, f, p).unwrap()
}

#[test]
fn finite_recovery_is_always_strongly_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..1000 {
        let n = rng.random_range(2..16);
        let stats = random_stats(n, &mut rng);
        let delta = rng.random::<f64>() * 0.2;
        let (g, trace) = recover_finite(&stats, delta).unwrap();
        assert!(g.is_strongly_causal(), "case {case}");
        let candidates = finite_candidates(&stats, delta);
        assert!(g.edges().all(|e| candidates.contains(&e)), "case {case}");
        assert_eq!(trace.candidates(), candidates);
    }
}

#[test]
fn finite_recovery_rejects_bad_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let stats = random_stats(4, &mut rng);
    assert!(recover_finite(&stats, 1.0).is_err());
    assert!(recover_finite(&stats, -0.1).is_err());
}

#[test]
fn oracle_recovers_six_node_example() {
    let m = six_node_model();
    let pw = oracle_pairwise(&m, default_oracle_order(m.p()), ORACLE_TOL).unwrap();
    let (g, trace) = recover_oracle(&pw).unwrap();
    assert_eq!(g, six_node_graph());
    assert_eq!(trace.layers()[0], vec![0, 1]);
}

#[test]
fn oracle_recovery_from_chain_relations() {
    // 0 -> 1 -> 2: ancestors pairwise-cause descendants, nothing reverse
    let mut pw = PairwiseRelations::new(3);
    for (i, j) in [(1, 0), (2, 1), (2, 0)] {
        pw.set(i, j, true);
    }
    let (g, _) = recover_oracle(&pw).unwrap();
    assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
}

#[test]
fn oracle_recovery_rejects_cyclic_relations() {
    let mut pw = PairwiseRelations::new(3);
    for (i, j) in [(1, 0), (2, 1), (0, 2)] {
        pw.set(i, j, true);
    }
    assert!(recover_oracle(&pw).is_err());
}
