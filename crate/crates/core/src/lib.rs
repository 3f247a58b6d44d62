//! Shared-memory multilevel graph partitioner with unconstrained refinement.
//!
//! Refinement may temporarily violate the balance constraint. Label
//! propagation and FM local search make moves regardless of block weights,
//! and a parallel rebalancer restores the constraint afterwards. FM estimates
//! the cost of that repair with a penalty so that only moves worth it are
//! made.

pub mod bench;
pub mod error;
pub mod fm;
pub mod gain_table;
pub mod graph;
pub mod io;
pub mod lp;
pub mod multilevel;
pub mod partition;
pub mod pipeline;
pub mod rebalance;
pub mod runtime;
pub mod testkit;

pub use error::{Error, Result};
pub use gain_table::GainTable;
pub use graph::{BlockId, Graph, NodeId, Weight};
pub use partition::{cut_from_scratch, gain_of_move, BalanceLimit, Move, PartitionState, Snapshot};
pub use runtime::Runtime;
