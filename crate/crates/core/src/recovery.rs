//! Graph recovery from pairwise relations.
//!
//! [`recover_oracle`] peels parent-less layers off exact pairwise relations
//! and links each layer to earlier ones, nearest layer first, skipping
//! pairs already joined by a path. [`recover_finite`] is the sample
//! version: it scores layers by incident edge probability and admits
//! candidate edges by descending statistic while the graph stays strongly
//! causal.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, StrongCausalityTracker};
use crate::pairwise::{bh_threshold, compute_pairwise_matrix, passes, PairwiseConfig, PairwiseRelations, PairwiseStats};
use crate::spectral::{ols_refit, RefitModel};
use crate::var::SeriesMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    RejectedByPath,
    RejectedBySc,
}

/// One recorded step of a recovery run. Nodes are 0-based in memory; the
/// JSON-lines form written by [`RecoveryTrace::write_jsonl`] is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// `(from, to)` entered the candidate set.
    Candidate { from: usize, to: usize },
    /// Both directions held, so neither entered the candidate set.
    DroppedBidirectional { a: usize, b: usize },
    /// Layer `k` of the peeling.
    Layer { k: usize, nodes: Vec<usize> },
    /// Verdict on a candidate edge while processing layer `k`. `r` is the
    /// backward layer offset (exact recovery); `f` the edge statistic
    /// (finite-sample recovery).
    Edge {
        k: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        r: Option<usize>,
        from: usize,
        to: usize,
        decision: Decision,
        #[serde(skip_serializing_if = "Option::is_none")]
        f: Option<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecoveryTrace {
    pub events: Vec<TraceEvent>,
}

impl RecoveryTrace {
    pub fn layers(&self) -> Vec<Vec<usize>> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Layer { nodes, .. } => Some(nodes.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn candidates(&self) -> BTreeSet<(usize, usize)> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                TraceEvent::Candidate { from, to } => Some((from, to)),
                _ => None,
            })
            .collect()
    }

    /// Edge verdicts as `(from, to, decision)`.
    pub fn decisions(&self) -> Vec<(usize, usize, Decision)> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                TraceEvent::Edge {
                    from, to, decision, ..
                } => Some((from, to, decision)),
                _ => None,
            })
            .collect()
    }

    /// One JSON object per line, nodes 1-based.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, &one_based(e))?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<TraceEvent>(l).map(|e| zero_based(&e)))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { events })
    }

    fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }
}

fn shift(e: &TraceEvent, up: bool) -> TraceEvent {
    let s = |v: usize| if up { v + 1 } else { v - 1 };
    match e.clone() {
        TraceEvent::Candidate { from, to } => TraceEvent::Candidate {
            from: s(from),
            to: s(to),
        },
        TraceEvent::DroppedBidirectional { a, b } => TraceEvent::DroppedBidirectional { a: s(a), b: s(b) },
        TraceEvent::Layer { k, nodes } => TraceEvent::Layer {
            k,
            nodes: nodes.into_iter().map(s).collect(),
        },
        TraceEvent::Edge {
            k,
            r,
            from,
            to,
            decision,
            f,
        } => TraceEvent::Edge {
            k,
            r,
            from: s(from),
            to: s(to),
            decision,
            f,
        },
    }
}

fn one_based(e: &TraceEvent) -> TraceEvent {
    shift(e, true)
}

fn zero_based(e: &TraceEvent) -> TraceEvent {
    shift(e, false)
}

fn has_path(g: &DirectedGraph, from: usize, to: usize) -> bool {
    let (out, _) = g.adjacency();
    let mut seen = vec![false; g.n()];
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &w in &out[v] {
            if w == to {
                return true;
            }
            if !std::mem::replace(&mut seen[w], true) {
                queue.push_back(w);
            }
        }
    }
    false
}

/// Exact recovery from pairwise relations of a strongly causal,
/// persistent DAG system.
///
/// Candidates are the one-directional relations; layers are peeled off
/// as the nodes with no remaining candidate parent; layer `k` is linked
/// to layers `k-1, k-2, ..., 0` in that order, each batch checked against
/// the paths known before it.
pub fn recover_oracle(pw: &PairwiseRelations) -> Result<(DirectedGraph, RecoveryTrace)> {
    let n = pw.n();
    let mut trace = RecoveryTrace::default();
    let mut w = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // pw.holds(j, i): i pairwise-causes j
            let fwd = pw.holds(j, i);
            let back = pw.holds(i, j);
            if fwd && !back {
                w.insert((i, j));
                trace.push(TraceEvent::Candidate { from: i, to: j });
            } else if fwd && back && i < j {
                trace.push(TraceEvent::DroppedBidirectional { a: i, b: j });
            }
        }
    }

    let parentless = |s: &BTreeSet<usize>| -> Vec<usize> {
        s.iter()
            .copied()
            .filter(|&i| !s.iter().any(|&src| w.contains(&(src, i))))
            .collect()
    };

    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut layers: Vec<Vec<usize>> = vec![parentless(&remaining)];
    let mut edges = DirectedGraph::new(n);
    if layers[0].is_empty() && !remaining.is_empty() {
        return Err(Error::NonDagPairwise {
            remaining: remaining.len(),
        });
    }
    trace.push(TraceEvent::Layer {
        k: 0,
        nodes: layers[0].clone(),
    });

    let mut k = 1;
    while !remaining.is_empty() {
        for i in &layers[k - 1] {
            remaining.remove(i);
        }
        let current = parentless(&remaining);
        if current.is_empty() && !remaining.is_empty() {
            return Err(Error::NonDagPairwise {
                remaining: remaining.len(),
            });
        }
        if !current.is_empty() {
            trace.push(TraceEvent::Layer {
                k,
                nodes: current.clone(),
            });
        }
        for r in 1..=k {
            let known = edges.clone();
            let mut batch = Vec::new();
            for &i in &layers[k - r] {
                for &j in &current {
                    if !w.contains(&(i, j)) {
                        continue;
                    }
                    let decision = if has_path(&known, i, j) {
                        Decision::RejectedByPath
                    } else {
                        batch.push((i, j));
                        Decision::Accepted
                    };
                    trace.push(TraceEvent::Edge {
                        k,
                        r: Some(r),
                        from: i,
                        to: j,
                        decision,
                        f: None,
                    });
                }
            }
            for (i, j) in batch {
                edges.add_edge(i, j)?;
            }
        }
        layers.push(current);
        k += 1;
    }
    Ok((edges, trace))
}

/// Candidate edges `(from, to)` of the finite-sample recovery: the edge
/// passes the threshold and its statistic strictly beats the reverse one.
pub fn finite_candidates(stats: &PairwiseStats, delta: f64) -> BTreeSet<(usize, usize)> {
    let n = stats.n();
    let mut w = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && passes(stats.p(j, i), delta) && stats.f(j, i) > stats.f(i, j) {
                w.insert((i, j));
            }
        }
    }
    w
}

/// Finite-sample recovery; the result is always a strongly causal DAG.
pub fn recover_finite(stats: &PairwiseStats, delta: f64) -> Result<(DirectedGraph, RecoveryTrace)> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "threshold {delta} outside [0, 1)"
        )));
    }
    let n = stats.n();
    let w = finite_candidates(stats, delta);
    let mut trace = RecoveryTrace::default();
    for &(from, to) in &w {
        trace.push(TraceEvent::Candidate { from, to });
    }

    let next_layer = |s: &BTreeSet<usize>| -> Vec<usize> {
        if s.is_empty() {
            return Vec::new();
        }
        let score: Vec<(usize, f64)> = s
            .iter()
            .map(|&i| {
                let total = s
                    .iter()
                    .filter(|&&j| w.contains(&(j, i)))
                    .map(|&j| stats.p(i, j))
                    .sum::<f64>();
                (i, total)
            })
            .collect();
        let cutoff = score.iter().map(|s| s.1).fold(f64::INFINITY, f64::min).ceil();
        let strict: Vec<usize> = score.iter().filter(|s| s.1 < cutoff).map(|s| s.0).collect();
        if strict.is_empty() {
            score.iter().filter(|s| s.1 <= cutoff).map(|s| s.0).collect()
        } else {
            strict
        }
    };

    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut processed: Vec<usize> = Vec::new();
    let mut layer = next_layer(&remaining);
    trace.push(TraceEvent::Layer {
        k: 0,
        nodes: layer.clone(),
    });
    let mut tracker = StrongCausalityTracker::new(n);
    let mut k = 1;
    while !remaining.is_empty() {
        for i in &layer {
            remaining.remove(i);
        }
        processed.extend(layer.iter().copied());
        layer = next_layer(&remaining);
        if layer.is_empty() {
            break;
        }
        trace.push(TraceEvent::Layer {
            k,
            nodes: layer.clone(),
        });
        let mut cands: Vec<(usize, usize, f64)> = processed
            .iter()
            .flat_map(|&i| layer.iter().map(move |&j| (i, j)))
            .filter(|e| w.contains(e))
            .map(|(i, j)| (i, j, stats.f(j, i)))
            .collect();
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        for (i, j, f) in cands {
            let decision = if tracker.try_add(i, j) {
                Decision::Accepted
            } else {
                Decision::RejectedBySc
            };
            trace.push(TraceEvent::Edge {
                k,
                r: None,
                from: i,
                to: j,
                decision,
                f: Some(f),
            });
        }
        k += 1;
    }
    Ok((tracker.into_graph(), trace))
}

#[derive(Clone, Debug)]
pub struct PwgcFit {
    pub stats: PairwiseStats,
    pub delta: f64,
    pub graph: DirectedGraph,
    pub trace: RecoveryTrace,
    pub refit_order: usize,
    pub refit: RefitModel,
}

/// Pairwise statistics, BH threshold, finite-sample recovery and a least
/// squares refit on the recovered pattern.
///
/// The refit order is the largest selected pair order among accepted
/// edges, or 1 for an edgeless graph.
pub fn pwgc_pipeline(x: &SeriesMatrix, config: PairwiseConfig, alpha: f64) -> Result<PwgcFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if x.len() <= config.p_max {
        return Err(Error::InsufficientSamples {
            needed: config.p_max,
            available: x.len(),
        });
    }
    let stats = compute_pairwise_matrix(x, config)?;
    let delta = bh_threshold(stats.p_matrix(), alpha);
    let (graph, trace) = recover_finite(&stats, delta)?;
    let refit_order = graph
        .edges()
        .map(|(from, to)| stats.order(to, from))
        .max()
        .unwrap_or(1)
        .max(1);
    let refit = ols_refit(x, &graph, refit_order)?;
    Ok(PwgcFit {
        stats,
        delta,
        graph,
        trace,
        refit_order,
        refit,
    })
}
