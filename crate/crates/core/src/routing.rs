//! Next-hop selection: farthest progress toward the destination, residual
//! energy as the tie-break, node id as the final arbiter.
//!
//! Selection sees only a local view: the alive nodes inside the selector's
//! radio range. If the destination itself is in view the hop is direct.
//! Otherwise the candidates are the in-view nodes strictly closer to the
//! destination than the selector; among them the one covering the greatest
//! distance from the selector wins. A node with no candidate is a void and
//! reports no progress, which the caller turns into route maintenance.
//!
//! Distances are compared through [`distance_key`], which quantizes to a
//! nanometre grid. Sub-nanometre differences are noise from floating-point
//! coordinates, not geometry; collapsing them keeps the energy tie-break
//! reachable and the choice stable across evaluation orders.

use std::collections::BTreeSet;

use crate::types::{distance, distance_key, NodeId, Position, SimTime};

/// What a selector knows about one reachable neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborInfo {
    pub id: NodeId,
    pub pos: Position,
    pub energy_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextHop {
    /// Destination is in view; hand the payload straight to it.
    Direct,
    Relay(NodeId),
    /// No in-view node makes strict progress.
    NoProgress,
}

/// Pick the next hop for a payload headed to `dst`.
///
/// `view` holds the alive neighbors inside the selector's range, self
/// excluded. `excluded` removes neighbors that already failed this payload.
pub fn select_next_hop(
    self_pos: Position,
    dst: NodeId,
    dst_pos: Position,
    view: &[NeighborInfo],
    excluded: &BTreeSet<NodeId>,
) -> NextHop {
    if view.iter().any(|nb| nb.id == dst && !excluded.contains(&nb.id)) {
        return NextHop::Direct;
    }
    let own_key = distance_key(distance(self_pos, dst_pos));
    let best = view
        .iter()
        .filter(|nb| !excluded.contains(&nb.id))
        .filter(|nb| distance_key(distance(nb.pos, dst_pos)) < own_key)
        .fold(None::<(&NeighborInfo, i64)>, |best, nb| {
            let key = distance_key(distance(self_pos, nb.pos));
            match best {
                None => Some((nb, key)),
                Some((cur, cur_key)) => {
                    let better = key > cur_key
                        || (key == cur_key && nb.energy_j > cur.energy_j)
                        || (key == cur_key && nb.energy_j == cur.energy_j && nb.id < cur.id);
                    if better { Some((nb, key)) } else { Some((cur, cur_key)) }
                }
            }
        });
    match best {
        Some((nb, _)) => NextHop::Relay(nb.id),
        None => NextHop::NoProgress,
    }
}

/// Point-in-time state of a node as the projection walker sees it.
#[derive(Debug, Clone, Copy)]
pub struct NodeSnapshot {
    pub id: NodeId,
    pub pos: Position,
    pub energy_j: f64,
    pub range_m: f64,
    pub alive: bool,
}

/// View construction shared by the live engine and the projection walker:
/// alive nodes reachable in both directions, self excluded, in id order.
/// Neighbors are known by having been heard, so a node whose radio cannot
/// cover the distance back was never a neighbor; admitting it would send
/// requests to a node whose replies can never arrive.
pub fn view_from(snaps: &[NodeSnapshot], self_id: NodeId, from: Position, range_m: f64) -> Vec<NeighborInfo> {
    snaps
        .iter()
        .filter(|s| s.alive && s.id != self_id)
        .filter(|s| {
            let d = distance(from, s.pos);
            d <= range_m && d <= s.range_m
        })
        .map(|s| NeighborInfo { id: s.id, pos: s.pos, energy_j: s.energy_j })
        .collect()
}

/// Greedy walk from `start` toward `dst` over a topology snapshot.
///
/// Returns the node sequence beginning at `start`; it ends at `dst` when the
/// walk completes and stops short at the last reachable selector when a void
/// is hit. Strict progress bounds the walk, so no visited set is needed.
pub fn project_route(
    start: NodeId,
    dst: NodeId,
    snaps: &[NodeSnapshot],
    excluded: &BTreeSet<NodeId>,
) -> Vec<NodeId> {
    let lookup = |id: NodeId| snaps.iter().find(|s| s.id == id).expect("node in snapshot");
    let dst_pos = lookup(dst).pos;
    let mut route = vec![start];
    let mut cur = *lookup(start);
    while cur.id != dst {
        let view = view_from(snaps, cur.id, cur.pos, cur.range_m);
        match select_next_hop(cur.pos, dst, dst_pos, &view, excluded) {
            NextHop::Direct => {
                route.push(dst);
                break;
            }
            NextHop::Relay(id) => {
                route.push(id);
                cur = *lookup(id);
            }
            NextHop::NoProgress => break,
        }
    }
    route
}

/// A route the origin remembers from its last projection.
#[derive(Debug, Clone)]
pub struct RouteCacheEntry {
    pub route: Vec<NodeId>,
    pub established_at: SimTime,
}
