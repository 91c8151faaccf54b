//! Laboratory for online bipartite matching.
//!
//! The crate covers the whole experimental loop: instance generation
//! ([`generators`]), the sequential decision process ([`env`]), feature
//! engineering ([`features`]), a small neural-network stack ([`nn`]), classical
//! and learned policies ([`policies`]), hindsight-optimal solvers ([`offline`]),
//! policy-gradient and behaviour-cloning training ([`training`]) and the
//! evaluation harness ([`eval`]).
//!
//! Three problem variants share one data model:
//!
//! * edge-weighted online bipartite matching (E-OBM),
//! * online submodular bipartite matching with weighted-coverage rewards (OSBM),
//! * Adwords, where fixed nodes carry budgets that bids deplete.

pub mod env;
pub mod error;
pub mod eval;
pub mod features;
pub mod generators;
pub mod graph;
pub mod nn;
pub mod offline;
pub mod policies;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use graph::{
    Arrival, BipartiteInstance, Decision, InstanceMeta, ProblemKind, ProblemPayload, Solution,
};
