//! Balance analysis and collaborative rebalancing for payment channel networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the network state and the balance metrics.
//! * [`ingestion`] loads snapshots, allocates funds and extracts the
//!   strongly connected core.
//! * [`cycles`] enumerates circular payment routes.
//! * [`rebalancer`] runs the greedy rebalancing heuristic.
//! * [`evaluation`] measures routing success, payment sizes and distribution distances.

pub mod cycles;
pub mod evaluation;
pub mod ingestion;
pub mod model;
pub mod rebalancer;

pub use cycles::{enumerate_cycles, foaf_node_set, Hop, RebalanceCycle, Strategy};
pub use model::{gini, Channel, ChannelId, ModelError, NetworkGraph, NodeId};
pub use rebalancer::{run_simulation, AgreementMode, FeeLedger, SimulationConfig, SimulationOutcome};
