//! Small hand-built systems with known pairwise behaviour, and the random
//! strongly causal oracle-recovery trial.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{random_scg, DirectedGraph};
use crate::pairwise::{default_oracle_order, oracle_pairwise, ORACLE_TOL};
use crate::recovery::recover_oracle;
use crate::var::{build_var_model, is_persistent, PersistenceWindow, VarModel};

fn lag_matrix(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for &(i, j, w) in entries {
        b[(i, j)] = w;
    }
    b
}

/// Diamond `0 -> {1, 2} -> 3` whose two paths cancel at node 3.
pub fn diamond_cancellation(a: f64) -> VarModel {
    let b = lag_matrix(4, &[(1, 0, a), (2, 0, -a), (3, 1, 1.0), (3, 2, 1.0)]);
    VarModel::from_coefficients(vec![b], vec![1.0; 4]).expect("valid fixture")
}

/// Chain `0 -> 1 -> 2` plus a direct lag-2 edge `0 -> 2` that cancels it.
pub fn lag_cancellation(a: f64) -> VarModel {
    let b1 = lag_matrix(3, &[(1, 0, -a), (2, 1, 1.0)]);
    let b2 = lag_matrix(3, &[(2, 0, a)]);
    VarModel::from_coefficients(vec![b1, b2], vec![1.0; 3]).expect("valid fixture")
}

/// Fork `1 <- 0 -> 2`, optionally with autoregressive memory `b` on node 0.
pub fn fork(a: f64, memory: Option<f64>) -> VarModel {
    let mut entries = vec![(1, 0, a), (2, 0, a)];
    if let Some(b) = memory {
        entries.push((0, 0, b));
    }
    VarModel::from_coefficients(vec![lag_matrix(3, &entries)], vec![1.0; 3]).expect("valid fixture")
}

/// Six-node strongly causal example graph.
pub fn six_node_graph() -> DirectedGraph {
    DirectedGraph::from_one_based(6, [(1, 3), (3, 4), (2, 4), (3, 5), (4, 6)]).expect("valid fixture")
}

/// Order-1 system on [`six_node_graph`] with self memory on every node.
pub fn six_node_model() -> VarModel {
    let g = six_node_graph();
    let mut entries: Vec<(usize, usize, f64)> = (0..6).map(|i| (i, i, 0.5)).collect();
    entries.extend(g.edges().map(|(from, to)| (to, from, 0.4)));
    VarModel::new(vec![lag_matrix(6, &entries)], vec![1.0; 6], g).expect("valid fixture")
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl FixtureOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// `(source, target)` in 0-based indices: does `source` pairwise-cause
/// `target` under the population oracle?
fn oracle_holds(m: &VarModel, source: usize, target: usize) -> Result<bool> {
    let pw = oracle_pairwise(m, default_oracle_order(m.p()), ORACLE_TOL)?;
    Ok(pw.holds(target, source))
}

fn expect_relation(name: &str, m: &VarModel, source: usize, target: usize, want: bool) -> FixtureOutcome {
    match oracle_holds(m, source, target) {
        Ok(got) => FixtureOutcome::new(
            name,
            got == want,
            format!("{} -> {} pairwise: got {got}, want {want}", source + 1, target + 1),
        ),
        Err(e) => FixtureOutcome::new(name, false, e.to_string()),
    }
}

/// The hand-built systems and the relation each is known to have.
pub fn fixture_battery() -> Vec<FixtureOutcome> {
    let mut out = vec![
        expect_relation("diamond cancellation", &diamond_cancellation(0.5), 0, 3, false),
        expect_relation("lag cancellation", &lag_cancellation(0.5), 0, 2, false),
        expect_relation("fork without memory", &fork(0.5, None), 1, 2, false),
        expect_relation("fork with memory", &fork(0.5, Some(0.5)), 1, 2, true),
    ];
    let m = six_node_model();
    let outcome = oracle_pairwise(&m, default_oracle_order(m.p()), ORACLE_TOL)
        .and_then(|pw| recover_oracle(&pw))
        .map(|(g, _)| g == *m.topology());
    out.push(match outcome {
        Ok(ok) => FixtureOutcome::new("six-node recovery", ok, "oracle recovery of the six-node graph"),
        Err(e) => FixtureOutcome::new("six-node recovery", false, e.to_string()),
    });
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleTrial {
    pub n: usize,
    pub p: usize,
    /// Models discarded as non-persistent before this one.
    pub redraws: usize,
    pub exact: bool,
    pub missing: usize,
    pub extra: usize,
}

/// Redraw limit for a persistent model in [`oracle_trial`].
pub const MAX_REDRAWS: usize = 100;

/// Draws a random strongly causal graph and a persistent VAR(p) on it,
/// then compares oracle recovery with the truth.
pub fn oracle_trial<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<OracleTrial> {
    for redraws in 0..MAX_REDRAWS {
        let g = random_scg(n, rng);
        let m = build_var_model(&g, p, rng)?;
        if !is_persistent(&m, PersistenceWindow::default())?.persistent {
            continue;
        }
        let pw = oracle_pairwise(&m, default_oracle_order(p), ORACLE_TOL)?;
        let (est, _) = recover_oracle(&pw)?;
        let missing = g.edges().filter(|&(a, b)| !est.has_edge(a, b)).count();
        let extra = est.edges().filter(|&(a, b)| !g.has_edge(a, b)).count();
        return Ok(OracleTrial {
            n,
            p,
            redraws,
            exact: missing == 0 && extra == 0,
            missing,
            extra,
        });
    }
    Err(Error::InvalidParameter(format!(
        "no persistent model in {MAX_REDRAWS} draws (n = {n}, p = {p})"
    )))
}
