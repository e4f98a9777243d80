//! Transfer-aware multi-objective architecture search over a small DAG
//! space.
//!
//! A knowledge base of benchmarked tasks trains a task-conditioned
//! architecture generator and a deep-kernel multi-output GP surrogate. On a
//! new task, generated candidates are scored by the surrogate and the
//! predicted non-dominated ones seed an NSGA-II population.

pub mod error;
pub mod neural;
pub mod pareto;
pub mod search_space;
pub mod benchmark;
pub mod moea;
pub mod knowledge;
pub mod dmogp;
pub mod data;
pub mod pipeline;

pub use error::{Error, Result};
pub use pareto::ObjectiveVector;
pub use search_space::{Encoding, SearchSpace};
