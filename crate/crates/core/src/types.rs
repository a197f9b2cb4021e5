//! Shared vocabulary types: identifiers, time, geometry, frames and paths.
//!
//! Everything here is plain data with no behaviour beyond validation and a
//! few exact-arithmetic helpers. Instants are integer ticks, so event
//! ordering never depends on float comparisons.

use thiserror::Error;

/// Index of a node in the field. Dense, assigned at placement time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulation instant in ticks. Tick length in seconds lives in the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn plus(self, ticks: u64) -> SimTime {
        SimTime(self.0 + ticks)
    }
}

impl std::fmt::Display for SimTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of one application payload, unique within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PayloadId(pub u64);

impl std::fmt::Display for PayloadId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Planar coordinates in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Euclidean distance. Written as sqrt(dx*dx + dy*dy) rather than hypot so
/// the result is bit-identical across platforms.
pub fn distance(a: Position, b: Position) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Distances are compared through this key; positions closer than a
/// nanometre count as ties and fall through to the next tie-breaker.
pub fn distance_key(d: f64) -> i64 {
    (d * 1e9).round() as i64
}

/// What the radio is doing at an instant. A node is in exactly one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioMode {
    Idle,
    Transmitting,
    Receiving,
    Sleeping,
}

/// Per-node snapshot the PHY and routing layers operate on.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub pos: Position,
    pub energy_j: f64,
    pub radio: RadioMode,
    pub range_m: f64,
    /// Collided receptions overheard so far; feeds route re-establishment.
    pub interference_count: u32,
}

/// On-air frame types for both protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Rrequest,
    Ack1,
    Data,
    Ack2,
    RouteRecover,
    DsrRreq,
    DsrRrep,
    DsrRerr,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Rrequest => "rrequest",
            FrameKind::Ack1 => "ack1",
            FrameKind::Data => "data",
            FrameKind::Ack2 => "ack2",
            FrameKind::RouteRecover => "route_recover",
            FrameKind::DsrRreq => "dsr_rreq",
            FrameKind::DsrRrep => "dsr_rrep",
            FrameKind::DsrRerr => "dsr_rerr",
        }
    }

    /// DATA frames carry the payload; everything else is control traffic.
    pub fn is_data(self) -> bool {
        matches!(self, FrameKind::Data)
    }
}

/// One frame as handed to the radio. `hop_rx = None` is a broadcast (only
/// DSR route requests use it). `seq` is assigned by the engine and strictly
/// increases over a run.
#[derive(Debug, Clone)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub hop_tx: NodeId,
    pub hop_rx: Option<NodeId>,
    pub size_bits: u64,
    pub payload_id: PayloadId,
    pub seq: u64,
    /// Residual energy the transmitter reports on ack1 frames.
    pub energy_report_j: Option<f64>,
    /// Accumulated or source route (DSR control and data frames).
    pub route: Option<Vec<NodeId>>,
    /// Remaining upstream-recovery budget carried by route_recover frames.
    pub recover_budget: Option<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("path must contain at least one node")]
    Empty,
    #[error("node {0} appears more than once in path")]
    Repeated(NodeId),
    #[error("node {0} is not on the path")]
    NotOnPath(NodeId),
}

/// An ordered, loop-free sequence of nodes. `hop_count` is the number of
/// links, i.e. `len - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Result<Path, PathError> {
        if nodes.is_empty() {
            return Err(PathError::Empty);
        }
        let mut seen = std::collections::HashSet::with_capacity(nodes.len());
        for &n in &nodes {
            if !seen.insert(n) {
                return Err(PathError::Repeated(n));
            }
        }
        Ok(Path { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn hop_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn first(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn last(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn index_of(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    /// Hops separating two nodes that both lie on the path, in either order.
    pub fn hops_between(&self, a: NodeId, b: NodeId) -> Result<usize, PathError> {
        let ia = self.index_of(a).ok_or(PathError::NotOnPath(a))?;
        let ib = self.index_of(b).ok_or(PathError::NotOnPath(b))?;
        Ok(ia.abs_diff(ib))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(ids: &[u32]) -> Path {
        Path::new(ids.iter().map(|&i| NodeId(i)).collect()).unwrap()
    }

    #[test]
    fn distance_of_identical_points_is_zero() {
        let p = Position { x: 0.0, y: 0.0 };
        assert_eq!(distance(p, p), 0.0);
    }

    #[test]
    fn distance_matches_3_4_5_triangle() {
        let a = Position { x: 0.0, y: 0.0 };
        let b = Position { x: 3.0, y: 4.0 };
        assert_eq!(distance(a, b), 5.0);
    }

    #[test]
    fn distance_along_axis_is_exact() {
        let a = Position { x: 100.0, y: 200.0 };
        let b = Position { x: 350.0, y: 200.0 };
        assert_eq!(distance(a, b), 250.0);
    }

    #[test]
    fn hops_between_counts_links() {
        let p = path(&[1, 2, 3, 4, 5]);
        assert_eq!(p.hops_between(NodeId(1), NodeId(4)).unwrap(), 3);
        assert_eq!(p.hops_between(NodeId(4), NodeId(1)).unwrap(), 3);
    }

    #[test]
    fn hops_between_same_node_is_zero() {
        let p = path(&[1, 2]);
        assert_eq!(p.hops_between(NodeId(1), NodeId(1)).unwrap(), 0);
    }

    #[test]
    fn hops_between_rejects_node_off_path() {
        let p = path(&[1, 2, 3]);
        assert_eq!(
            p.hops_between(NodeId(1), NodeId(9)),
            Err(PathError::NotOnPath(NodeId(9)))
        );
    }

    #[test]
    fn path_rejects_repeated_node() {
        let err = Path::new(vec![NodeId(1), NodeId(2), NodeId(1)]).unwrap_err();
        assert_eq!(err, PathError::Repeated(NodeId(1)));
    }

    #[test]
    fn path_rejects_empty() {
        assert_eq!(Path::new(vec![]).unwrap_err(), PathError::Empty);
    }

    proptest! {
        // hops_between is symmetric for any pair on any loop-free path.
        #[test]
        fn hops_between_symmetry(len in 1usize..12, ia in 0usize..12, ib in 0usize..12) {
            let ids: Vec<NodeId> = (0..len as u32).map(NodeId).collect();
            let p = Path::new(ids.clone()).unwrap();
            let a = ids[ia % len];
            let b = ids[ib % len];
            prop_assert_eq!(
                p.hops_between(a, b).unwrap(),
                p.hops_between(b, a).unwrap()
            );
        }
    }
}
