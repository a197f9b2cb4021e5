//! Dynamic per-hop retransmission limits for DATA frames.
//!
//! When a route is established the sender learns the hop count `m` to the
//! destination and uses it as the initial retransmission limit. As the
//! payload advances, each transmitter recomputes its own limit ("Kmax") from
//! its position on the route. Two modes exist:
//!
//! * `Formula` — Kmax is the transmitter's distance from the source plus the
//!   receiver's distance from the destination, in hops. On any fixed route
//!   this sum is the same for every link: `hop_count`.
//! * `Progressive` — the initial `m` grows by one at every intermediate
//!   transmitter, so limits increase strictly toward the destination.

use crate::types::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmaxMode {
    Formula,
    Progressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KmaxPolicy {
    pub mode: KmaxMode,
    /// Lower bound applied after the mode arithmetic; at least 1.
    pub floor: u32,
}

/// Where a retransmission decision is being made: the route, the
/// transmitter's index on it (source = 0) and how many retransmissions this
/// payload has already used on this hop.
#[derive(Debug, Clone, Copy)]
pub struct RetryContext<'a> {
    pub path: &'a Path,
    pub transmitter_index: usize,
    pub retry_count: u32,
}

/// Initial retransmission limit for a fresh route: hops from the first
/// receiver to the destination, i.e. `hop_count`. Requires at least one hop.
pub fn initial_m(path: &Path) -> u32 {
    debug_assert!(path.hop_count() >= 1);
    let first_receiver = path.nodes()[1];
    path.hops_between(first_receiver, path.last()).unwrap() as u32
}

/// Retransmission limit for the link `path[i] -> path[i+1]`.
pub fn kmax_for_link(ctx: &RetryContext<'_>, policy: &KmaxPolicy) -> u32 {
    let path = ctx.path;
    let i = ctx.transmitter_index;
    debug_assert!(i + 1 <= path.hop_count());
    let raw = match policy.mode {
        KmaxMode::Formula => {
            let transmitter = path.nodes()[i];
            let receiver = path.nodes()[i + 1];
            let from_source = path.hops_between(path.first(), transmitter).unwrap();
            let to_destination = path.hops_between(receiver, path.last()).unwrap();
            (from_source + to_destination) as u32
        }
        KmaxMode::Progressive => initial_m(path) + i as u32,
    };
    raw.max(policy.floor)
}

/// A payload is dropped on this hop once its retransmissions reach the
/// link's Kmax; one original transmission plus up to Kmax retries may occur.
pub fn should_drop(ctx: &RetryContext<'_>, policy: &KmaxPolicy) -> bool {
    ctx.retry_count >= kmax_for_link(ctx, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::NodeId;
    use proptest::prelude::*;

    fn chain(len: usize) -> Path {
        Path::new((0..len as u32).map(NodeId).collect()).unwrap()
    }

    fn formula() -> KmaxPolicy {
        KmaxPolicy {
            mode: KmaxMode::Formula,
            floor: 1,
        }
    }

    fn progressive() -> KmaxPolicy {
        KmaxPolicy {
            mode: KmaxMode::Progressive,
            floor: 1,
        }
    }

    #[test]
    fn initial_m_counts_hops_from_first_receiver() {
        // Five-node chain: the first receiver is three hops from the end.
        assert_eq!(initial_m(&chain(5)), 3);
        // Single hop: the first receiver is the destination. The floor is
        // what keeps the effective limit at least 1.
        assert_eq!(initial_m(&chain(2)), 0);
    }

    #[test]
    fn formula_limit_on_third_link_of_five_node_chain() {
        // Transmitter two hops from the source, receiver one hop from the
        // destination: 2 + 1 = 3.
        let p = chain(5);
        let ctx = RetryContext {
            path: &p,
            transmitter_index: 2,
            retry_count: 0,
        };
        assert_eq!(kmax_for_link(&ctx, &formula()), 3);
    }

    #[test]
    fn formula_limit_is_constant_over_the_route() {
        let p = chain(5);
        for i in 0..p.hop_count() {
            let ctx = RetryContext {
                path: &p,
                transmitter_index: i,
                retry_count: 0,
            };
            assert_eq!(kmax_for_link(&ctx, &formula()), 3);
        }
    }

    #[test]
    fn progressive_limit_grows_by_one_per_hop() {
        let p = chain(5); // m = 3
        let expect = [3, 4, 5, 6];
        for (i, want) in expect.iter().enumerate() {
            let ctx = RetryContext {
                path: &p,
                transmitter_index: i,
                retry_count: 0,
            };
            assert_eq!(kmax_for_link(&ctx, &progressive()), *want);
        }
    }

    #[test]
    fn floor_applies_to_single_hop_routes() {
        let p = chain(2); // m = 1; a floor of 2 must win
        let ctx = RetryContext {
            path: &p,
            transmitter_index: 0,
            retry_count: 0,
        };
        let policy = KmaxPolicy {
            mode: KmaxMode::Formula,
            floor: 2,
        };
        assert_eq!(kmax_for_link(&ctx, &policy), 2);
    }

    #[test]
    fn drop_happens_exactly_at_the_limit() {
        let p = chain(5); // Kmax = 3 everywhere in formula mode
        let policy = formula();
        for (count, want) in [(0, false), (2, false), (3, true), (4, true)] {
            let ctx = RetryContext {
                path: &p,
                transmitter_index: 1,
                retry_count: count,
            };
            assert_eq!(should_drop(&ctx, &policy), want, "retry_count={count}");
        }
    }

    proptest! {
        // Formula mode always evaluates to one less than the route's hop
        // count before the floor; checked against an index-arithmetic oracle
        // that never calls the path helpers.
        #[test]
        fn formula_is_constant_at_hop_count_minus_one(len in 2usize..21) {
            let p = chain(len);
            let policy = KmaxPolicy { mode: KmaxMode::Formula, floor: 1 };
            for i in 0..len - 1 {
                let ctx = RetryContext { path: &p, transmitter_index: i, retry_count: 0 };
                let oracle = i + ((len - 1) - (i + 1));
                prop_assert_eq!(oracle, len - 2);
                prop_assert_eq!(kmax_for_link(&ctx, &policy), (oracle as u32).max(policy.floor));
            }
        }

        // Progressive limits strictly increase along the route.
        #[test]
        fn progressive_is_strictly_increasing(len in 3usize..21) {
            let p = chain(len);
            let policy = progressive();
            let limits: Vec<u32> = (0..len - 1)
                .map(|i| {
                    let ctx = RetryContext { path: &p, transmitter_index: i, retry_count: 0 };
                    kmax_for_link(&ctx, &policy)
                })
                .collect();
            for w in limits.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
