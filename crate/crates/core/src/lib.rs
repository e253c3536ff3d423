//! Core model for AI datacenter lifecycle cost analysis.
//!
//! The crate is organized around six concerns:
//!
//! - [`catalog`]: hardware SKUs and model releases, projected forward under
//!   growth regimes;
//! - [`perf`]: a roofline performance model for LLM inference that turns
//!   (model, workload, SKU) into latencies, SLO-bounded goodput, and replica
//!   counts;
//! - [`tco`]: the cost engine — amortized CapEx, utilization-driven OpEx,
//!   power stranding, cooling, and network design effects;
//! - [`lifecycle`]: a monthly fleet simulator that applies refresh and
//!   operation policies over a multi-year horizon;
//! - [`search`]: Monte Carlo evaluation over scenario uncertainty and
//!   exhaustive policy search;
//! - [`scenario`] / [`report`]: scenario file ingestion and table emission.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod lifecycle;
pub mod money;
pub mod perf;
pub mod report;
pub mod scenario;
pub mod search;
pub mod tco;
pub mod testing;
pub mod time;

pub use catalog::{
    Architecture, GrowthRegime, GrowthShape, HardwareSku, InterconnectClass, ModelSpec, SkuKind,
};
pub use money::Usd;
pub use time::Month;
