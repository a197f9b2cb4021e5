//! First-order radio model: reachability, reception outcomes and the energy
//! ledger.
//!
//! Loss has exactly one cause here: collision. Any two transmissions whose
//! intervals overlap at an in-range receiver destroy each other there, even
//! if the overlap is a single tick. A node that is transmitting or sleeping
//! for any part of a frame's airtime cannot receive it (half-duplex). There
//! is no carrier sensing, no capture effect and no propagation loss inside
//! the transmitter's range.

use crate::types::{distance, Frame, NodeState, Position, SimTime};
#[cfg(test)]
use crate::types::RadioMode;

/// Fixed transmit power. The model uses one power level for every frame;
/// reach is governed by `range_m` and energy by [`tx_energy`].
pub const TX_POWER_W: f64 = 1.0;
pub const PMAX_W: f64 = 1.0;

/// Energy cost parameters: electronics per bit plus amplifier per bit per
/// square metre of link distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub e_elec_j_per_bit: f64,
    pub eps_amp_j_per_bit_m2: f64,
}

/// Energy to transmit `bits` over distance `d` metres:
/// `e_elec * bits + eps_amp * bits * d^2`. Debited at transmission start.
pub fn tx_energy(model: &EnergyModel, bits: u64, d: f64) -> f64 {
    let b = bits as f64;
    model.e_elec_j_per_bit * b + model.eps_amp_j_per_bit_m2 * b * d * d
}

/// Energy to receive `bits`: `e_elec * bits`. Debited on every reception
/// attempt, including collided ones; sleeping nodes never attempt reception.
pub fn rx_energy(model: &EnergyModel, bits: u64) -> f64 {
    model.e_elec_j_per_bit * bits as f64
}

/// `b` is reachable from `a` iff their distance does not exceed `a`'s range.
/// The boundary is inclusive, and ranges may be asymmetric between the two.
pub fn in_range(a: &NodeState, b: &NodeState) -> bool {
    distance(a.pos, b.pos) <= a.range_m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebitResult {
    /// Amount actually drained; never more than the node had left.
    pub applied_j: f64,
    /// True exactly on the transition to zero energy.
    pub died: bool,
}

/// Drain `amount_j` from the node, clamping at zero. The returned
/// `applied_j` is what the trace must record so that the per-node ledger
/// (initial minus residual equals the sum of applied debits) stays exact.
pub fn debit(node: &mut NodeState, amount_j: f64) -> DebitResult {
    debug_assert!(amount_j >= 0.0);
    if node.energy_j <= 0.0 {
        return DebitResult {
            applied_j: 0.0,
            died: false,
        };
    }
    let applied = amount_j.min(node.energy_j);
    node.energy_j -= applied;
    DebitResult {
        applied_j: applied,
        died: node.energy_j == 0.0,
    }
}

/// One frame on the air. `start`/`end` bound the airtime as a half-open
/// interval `[start, end)`; `tx_pos` and `tx_range_m` are snapshots taken at
/// transmission start so reception stays well-defined under mobility.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub frame: Frame,
    pub start: SimTime,
    pub end: SimTime,
    pub tx_pos: Position,
    pub tx_range_m: f64,
    pub tx_power_w: f64,
}

impl Transmission {
    fn overlaps(&self, start: SimTime, end: SimTime) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceptionOutcome {
    Delivered,
    Collided,
    RxBusy,
    OutOfRange,
}

impl ReceptionOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceptionOutcome::Delivered => "delivered",
            ReceptionOutcome::Collided => "collided",
            ReceptionOutcome::RxBusy => "rx_busy",
            ReceptionOutcome::OutOfRange => "out_of_range",
        }
    }
}

/// Ticks inside `window` during which some other in-range transmission than
/// `seq` was on the air at `rx`. Collided receptions are billed for these
/// bits rather than the whole frame; a one-tick graze costs one tick's worth.
pub fn interference_overlap_ticks(
    rx: &NodeState,
    active: &[Transmission],
    window: (SimTime, SimTime),
    seq: u64,
) -> u64 {
    // `active` is sorted by start, so clipped intervals are too and the
    // union folds up in one pass.
    let mut total = 0u64;
    let mut cur: Option<(u64, u64)> = None;
    for t in active {
        if t.frame.seq == seq || t.frame.hop_tx == rx.id || !t.overlaps(window.0, window.1) {
            continue;
        }
        if distance(t.tx_pos, rx.pos) > t.tx_range_m {
            continue;
        }
        let lo = t.start.0.max(window.0 .0);
        let hi = t.end.0.min(window.1 .0);
        match cur {
            Some((s, e)) if lo <= e => cur = Some((s, e.max(hi))),
            Some((s, e)) => {
                total += e - s;
                cur = Some((lo, hi));
            }
            None => cur = Some((lo, hi)),
        }
    }
    if let Some((s, e)) = cur {
        total += e - s;
    }
    total
}

/// Resolve what `rx` heard of each transmission intersecting the window.
///
/// Returns `(frame seq, outcome)` pairs in input order. Outcomes, applied
/// per frame against that frame's own airtime:
///
/// * transmitter out of `rx`'s reach -> `OutOfRange`;
/// * `rx` slept or transmitted during any part of the airtime -> `RxBusy`
///   (its own transmissions are recognised inside `active`);
/// * another in-range transmission overlapped the airtime -> `Collided`;
/// * otherwise -> `Delivered`.
///
/// `rx_sleep` is the receiver's most recent sleep interval, if any. The
/// function is pure: permuting `active` never changes any frame's outcome.
pub fn resolve_reception(
    rx: &NodeState,
    rx_sleep: Option<(SimTime, SimTime)>,
    active: &[Transmission],
    window: (SimTime, SimTime),
) -> Vec<(u64, ReceptionOutcome)> {
    let in_window: Vec<&Transmission> = active
        .iter()
        .filter(|t| t.overlaps(window.0, window.1))
        .collect();

    let mut out = Vec::with_capacity(in_window.len());
    for t in &in_window {
        if t.frame.hop_tx == rx.id {
            // A node's own frame is not something it can receive; it only
            // contributes to the busy check below.
            continue;
        }
        let reachable = distance(t.tx_pos, rx.pos) <= t.tx_range_m;
        if !reachable {
            out.push((t.frame.seq, ReceptionOutcome::OutOfRange));
            continue;
        }

        let slept = rx_sleep.is_some_and(|(from, until)| from < t.end && t.start < until);
        let self_tx = in_window
            .iter()
            .any(|o| o.frame.hop_tx == rx.id && o.overlaps(t.start, t.end));
        if slept || self_tx {
            out.push((t.frame.seq, ReceptionOutcome::RxBusy));
            continue;
        }

        let collided = in_window.iter().any(|o| {
            o.frame.seq != t.frame.seq
                && o.frame.hop_tx != rx.id
                && o.overlaps(t.start, t.end)
                && distance(o.tx_pos, rx.pos) <= o.tx_range_m
        });
        out.push((
            t.frame.seq,
            if collided {
                ReceptionOutcome::Collided
            } else {
                ReceptionOutcome::Delivered
            },
        ));
    }
    out
}
