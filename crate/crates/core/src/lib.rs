//! Deterministic discrete-event simulation of wireless sensor network routing.
//!
//! The crate models a field of battery-powered radio nodes and runs two
//! routing protocols over the same PHY/MAC substrate:
//!
//! * **E2XLRADR** — a cross-layer scheme built on a per-hop
//!   r-request/ack1/data/ack2 handshake, farthest-progress next-hop selection
//!   with residual-energy tie-breaking, dynamic per-hop retransmission limits,
//!   and local route maintenance with bounded upstream recovery.
//! * **DSR baseline** — simplified dynamic source routing: flooded route
//!   discovery with duplicate suppression, source-routed data forwarding with
//!   a fixed per-hop retry limit, route error reporting and one rediscovery
//!   per payload.
//!
//! A run is a pure function of a [`scenario::Scenario`]: the same
//! configuration and seed produce byte-identical traces on any platform.
//! Single runs are strictly single-threaded; the [`runner`] module executes
//! independent runs of a batch in parallel when the `parallel` feature
//! (default) is enabled.

pub mod dsr;
pub mod engine;
pub mod mac;
pub mod metrics;
pub mod radio;
pub mod retry;
pub mod rng;
pub mod routing;
pub mod runner;
pub mod scenario;
pub mod trace;
pub mod types;

pub use scenario::{Protocol, Scenario, ScenarioError};
pub use types::{Frame, FrameKind, NodeId, Path, PayloadId, Position, SimTime};
