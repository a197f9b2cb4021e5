//! Pure DSR bookkeeping: the per-node route cache and flood suppression.
//!
//! These structures hold no engine state, so their semantics (purge on a
//! failed link, at-most-once relay per request) are testable in isolation.
//! The event-driven part of the baseline lives in the engine's DSR driver.

use std::collections::{HashMap, HashSet};

use crate::types::{NodeId, SimTime};

/// Source routes a node has learned, newest kept per destination.
#[derive(Debug, Clone, Default)]
pub struct RouteCache {
    routes: HashMap<NodeId, (Vec<NodeId>, SimTime)>,
}

impl RouteCache {
    pub fn insert(&mut self, dst: NodeId, route: Vec<NodeId>, at: SimTime) {
        debug_assert_eq!(route.last(), Some(&dst));
        self.routes.insert(dst, (route, at));
    }

    pub fn get(&self, dst: NodeId) -> Option<&Vec<NodeId>> {
        self.routes.get(&dst).map(|(r, _)| r)
    }

    /// Drop every cached route using the directed link `from -> to`.
    /// Returns how many routes were purged.
    pub fn purge_link(&mut self, from: NodeId, to: NodeId) -> usize {
        let before = self.routes.len();
        self.routes.retain(|_, (route, _)| {
            !route.windows(2).any(|w| w[0] == from && w[1] == to)
        });
        before - self.routes.len()
    }
}

/// Flood suppression: each node relays a given (origin, request) once.
#[derive(Debug, Clone, Default)]
pub struct DuplicateFilter {
    seen: HashSet<(NodeId, u64)>,
}

impl DuplicateFilter {
    /// True the first time this (origin, request) pair is observed.
    pub fn first_sighting(&mut self, origin: NodeId, request_id: u64) -> bool {
        self.seen.insert((origin, request_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(raw: &[u32]) -> Vec<NodeId> {
        raw.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn cache_returns_latest_route_per_destination() {
        let mut c = RouteCache::default();
        c.insert(NodeId(4), ids(&[0, 1, 4]), SimTime(10));
        c.insert(NodeId(4), ids(&[0, 2, 4]), SimTime(20));
        assert_eq!(c.get(NodeId(4)), Some(&ids(&[0, 2, 4])));
        assert_eq!(c.get(NodeId(9)), None);
    }

    #[test]
    fn purge_removes_only_routes_with_the_directed_link() {
        let mut c = RouteCache::default();
        c.insert(NodeId(4), ids(&[0, 1, 2, 4]), SimTime(0));
        c.insert(NodeId(5), ids(&[0, 2, 1, 5]), SimTime(0)); // reverse order 2->1
        c.insert(NodeId(6), ids(&[0, 3, 6]), SimTime(0));
        assert_eq!(c.purge_link(NodeId(1), NodeId(2)), 1);
        assert_eq!(c.get(NodeId(4)), None);
        // The reversed link survives: direction matters.
        assert_eq!(c.get(NodeId(5)), Some(&ids(&[0, 2, 1, 5])));
        assert_eq!(c.get(NodeId(6)), Some(&ids(&[0, 3, 6])));
    }

    #[test]
    fn duplicate_filter_is_first_come_only() {
        let mut f = DuplicateFilter::default();
        assert!(f.first_sighting(NodeId(0), 7));
        assert!(!f.first_sighting(NodeId(0), 7));
        assert!(f.first_sighting(NodeId(0), 8));
        assert!(f.first_sighting(NodeId(1), 7));
    }
}
