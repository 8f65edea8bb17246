//! Time-indexed causal variables over an atomic causal graph.
//!
//! The core objects are an [`atomic::AtomicDag`] — point variables `(process,
//! tick)` with edges pointing strictly forward in time — and
//! [`composite::CompositeVariable`]s built on top of it: selections of a
//! single tick, random mixings over ticks, and deterministic aggregations of
//! several ticks. A [`composite::VariableSystem`] couples the variables
//! through a joint distribution over their realized time subsets.
//!
//! On such a system the crate can:
//!
//! * derive the induced graph between composite variables and classify each
//!   pair and the whole system as time-acyclic, acyclic, effect-acyclic, or
//!   total-effect-acyclic ([`acyclicity`]);
//! * split aggregated variables along time to break derived cycles
//!   ([`unroll`]);
//! * attach linear-Gaussian structural parameters to the atomic graph,
//!   compute exact composite covariances and conditional-independence
//!   verdicts, and sample reproducibly ([`scm`]);
//! * audit faithfulness of the derived graph against the exact independence
//!   oracle and run constraint-based structure discovery with temporal
//!   consistency checking ([`discovery`]).
//!
//! Systems are read from and written to the `tempodag/1` JSON format
//! ([`spec`]); [`report`] holds the stable output structures used by the
//! command-line front end.

pub mod acyclicity;
pub mod atomic;
pub mod composite;
pub mod discovery;
pub mod report;
pub mod scm;
pub mod spec;
pub mod unroll;

pub use atomic::{AtomicDag, AtomicNode, GraphError, ProcessId, TimePoint};
pub use composite::{Aggregation, CompositeError, CompositeVariable, VariableSystem};
pub use spec::{SpecError, SystemSpec};
