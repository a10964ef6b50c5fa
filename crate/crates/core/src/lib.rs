//! Sparse Granger-causality graph learning for vector autoregressions.
//!
//! The main estimator tests every ordered pair of series for pairwise
//! Granger causality, then assembles a strongly causal graph from those
//! relations. An adaptive LASSO regression serves as a comparison
//! baseline, and [`bench`] runs both against simulated ground truth.
//!
//! Node indices are 0-based in the API. Text formats in [`io`] are 1-based.

pub mod bench;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod lasso;
pub mod metrics;
pub mod pairwise;
pub mod recovery;
pub mod spectral;
pub mod var;

pub use error::{Error, Result};
pub use graph::{random_dag, random_scg, DirectedGraph, StrongCausalityTracker};
pub use pairwise::{compute_pairwise_matrix, oracle_pairwise, PairwiseConfig, PairwiseRelations, PairwiseStats};
pub use recovery::{pwgc_pipeline, recover_finite, recover_oracle, PwgcFit, RecoveryTrace};
pub use var::{build_var_model, simulate, SeriesMatrix, VarModel};
