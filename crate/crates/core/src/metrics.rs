//! Run metrics computed from a finished trace.
//!
//! Everything here is a pure fold over the record list, so the same trace
//! always yields the same numbers and a metrics bug can never perturb a run.
//!
//! Network lifetime is the instant the 30% death threshold is crossed. A run
//! that ends with fewer deaths than that reports a censored lifetime equal
//! to the tick the run ended (the horizon, or the last source death when
//! traffic ceased early); consumers must treat that as a lower bound, not an
//! observation.

use crate::trace::{TraceLog, TraceRecord};
use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifetime {
    Reached(SimTime),
    Censored(SimTime),
}

impl Lifetime {
    pub fn ticks(&self) -> u64 {
        match self {
            Lifetime::Reached(t) | Lifetime::Censored(t) => t.0,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Lifetime::Censored(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub lifetime: Lifetime,
    /// Delivered payload bits over the whole simulated wall time.
    pub throughput_bps: f64,
    /// Mean generation-to-delivery latency; None when nothing arrived.
    pub mean_delay_ticks: Option<f64>,
    /// Delivered over generated; a run with no traffic lost nothing.
    pub delivery_ratio: f64,
    pub generated: u64,
    pub delivered: u64,
    pub lost: u64,
    pub total_energy_j: f64,
    pub retransmissions: u64,
    pub death_times: Vec<(SimTime, NodeId)>,
}

/// Deaths needed to cross the 30% threshold, rounding against the network.
fn death_threshold(node_count: u32) -> u64 {
    ((3 * node_count as u64) + 9) / 10
}

pub fn compute(log: &TraceLog) -> RunMetrics {
    let mut generated = 0u64;
    let mut delivered = 0u64;
    let mut lost = 0u64;
    let mut retransmissions = 0u64;
    let mut delay_sum = 0f64;
    let mut gen_tick: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
    let mut death_times: Vec<(SimTime, NodeId)> = Vec::new();

    for r in &log.records {
        match r {
            TraceRecord::Gen { tick, payload, .. } => {
                generated += 1;
                gen_tick.insert(payload.0, tick.0);
            }
            TraceRecord::Deliver { tick, payload, .. } => {
                delivered += 1;
                let born = gen_tick.get(&payload.0).copied().unwrap_or(tick.0);
                delay_sum += (tick.0 - born) as f64;
            }
            TraceRecord::Loss { .. } => lost += 1,
            TraceRecord::Tx { resend: true, .. } => retransmissions += 1,
            TraceRecord::Death { tick, node } => death_times.push((*tick, *node)),
            _ => {}
        }
    }

    let threshold = death_threshold(log.node_count) as usize;
    let lifetime = if threshold >= 1 && death_times.len() >= threshold {
        Lifetime::Reached(death_times[threshold - 1].0)
    } else {
        Lifetime::Censored(SimTime(log.ended_tick))
    };

    let wall_seconds = log.ended_tick as f64 * log.tick_seconds;
    let throughput_bps = if wall_seconds > 0.0 {
        delivered as f64 * log.payload_size_bits as f64 / wall_seconds
    } else {
        0.0
    };

    let total_energy_j = log
        .initial_energy
        .iter()
        .zip(&log.final_energy)
        .map(|(i, f)| i - f)
        .sum();

    RunMetrics {
        lifetime,
        throughput_bps,
        mean_delay_ticks: (delivered > 0).then(|| delay_sum / delivered as f64),
        delivery_ratio: if generated == 0 { 1.0 } else { delivered as f64 / generated as f64 },
        generated,
        delivered,
        lost,
        total_energy_j,
        retransmissions,
        death_times,
    }
}

/// Replays every recorded debit in order and returns the worst per-node
/// relative gap between the replayed residual and the recorded one.
///
/// The engine writes debits in the exact order it applies them, so the
/// replay reproduces the same float operations and the gap of a healthy
/// trace is exactly zero.
pub fn ledger_mismatch(log: &TraceLog) -> f64 {
    let mut residual = log.initial_energy.clone();
    for r in &log.records {
        let (actor, debit) = match r {
            TraceRecord::Tx { actor, debit_j, .. } => (*actor, *debit_j),
            TraceRecord::Rx { actor, debit_j, .. } => (*actor, *debit_j),
            _ => continue,
        };
        residual[actor.index()] -= debit;
    }
    let mut worst = 0f64;
    for i in 0..residual.len() {
        let scale = log.initial_energy[i].max(1e-30);
        let gap = (residual[i] - log.final_energy[i]).abs() / scale;
        worst = worst.max(gap);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{LossCause, RxOutcome};
    use crate::types::{FrameKind, PayloadId};

    fn empty_log(nodes: u32, sim_ticks: u64) -> TraceLog {
        TraceLog {
            sim_time_ticks: sim_ticks,
            ended_tick: sim_ticks,
            tick_seconds: 1e-3,
            node_count: nodes,
            payload_size_bits: 1024,
            initial_energy: vec![0.5; nodes as usize],
            final_energy: vec![0.5; nodes as usize],
            records: Vec::new(),
        }
    }

    fn gen(tick: u64, payload: u64) -> TraceRecord {
        TraceRecord::Gen {
            tick: SimTime(tick),
            payload: PayloadId(payload),
            src: NodeId(0),
            dst: NodeId(1),
        }
    }

    fn deliver(tick: u64, payload: u64) -> TraceRecord {
        TraceRecord::Deliver {
            tick: SimTime(tick),
            payload: PayloadId(payload),
            actor: NodeId(1),
            src: NodeId(0),
        }
    }

    #[test]
    fn threshold_is_thirty_percent_rounded_up() {
        assert_eq!(death_threshold(50), 15);
        assert_eq!(death_threshold(10), 3);
        assert_eq!(death_threshold(1), 1);
        assert_eq!(death_threshold(3), 1);
        assert_eq!(death_threshold(4), 2);
    }

    #[test]
    fn lifetime_reaches_on_the_threshold_death() {
        let mut log = empty_log(10, 1000);
        log.records = vec![
            TraceRecord::Death { tick: SimTime(100), node: NodeId(4) },
            TraceRecord::Death { tick: SimTime(250), node: NodeId(2) },
            TraceRecord::Death { tick: SimTime(700), node: NodeId(9) },
        ];
        let m = compute(&log);
        assert_eq!(m.lifetime, Lifetime::Reached(SimTime(700)));
        assert!(!m.lifetime.is_censored());
    }

    #[test]
    fn lifetime_censors_at_the_horizon_when_too_few_die() {
        let mut log = empty_log(10, 1000);
        log.records = vec![
            TraceRecord::Death { tick: SimTime(100), node: NodeId(4) },
            TraceRecord::Death { tick: SimTime(250), node: NodeId(2) },
        ];
        let m = compute(&log);
        assert_eq!(m.lifetime, Lifetime::Censored(SimTime(1000)));
        assert!(m.lifetime.is_censored());
    }

    #[test]
    fn delay_averages_only_delivered_payloads() {
        let mut log = empty_log(2, 1000);
        log.records = vec![
            gen(0, 1),
            gen(10, 2),
            gen(20, 3),
            deliver(30, 1),
            deliver(50, 2),
            TraceRecord::Loss {
                tick: SimTime(60),
                payload: PayloadId(3),
                actor: NodeId(0),
                cause: LossCause::Unreachable,
            },
        ];
        let m = compute(&log);
        assert_eq!(m.generated, 3);
        assert_eq!(m.delivered, 2);
        assert_eq!(m.lost, 1);
        assert_eq!(m.mean_delay_ticks, Some(35.0));
        assert!((m.delivery_ratio - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_traffic_run_has_vacuous_full_delivery() {
        let m = compute(&empty_log(5, 100));
        assert_eq!(m.delivery_ratio, 1.0);
        assert_eq!(m.mean_delay_ticks, None);
        assert_eq!(m.throughput_bps, 0.0);
    }

    #[test]
    fn throughput_counts_delivered_bits_over_wall_time() {
        let mut log = empty_log(2, 1000);
        log.records = vec![gen(0, 1), deliver(5, 1)];
        let m = compute(&log);
        // 1024 bits over one simulated second.
        assert!((m.throughput_bps - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn ledger_replay_matches_recorded_residuals() {
        let mut log = empty_log(2, 100);
        log.records = vec![
            TraceRecord::Tx {
                tick: SimTime(1),
                kind: FrameKind::Data,
                actor: NodeId(0),
                peer: Some(NodeId(1)),
                payload: Some(PayloadId(1)),
                resend: false,
                debit_j: 0.1,
            },
            TraceRecord::Rx {
                tick: SimTime(2),
                kind: FrameKind::Data,
                actor: NodeId(1),
                peer: NodeId(0),
                payload: Some(PayloadId(1)),
                outcome: RxOutcome::Delivered,
                debit_j: 0.03,
            },
        ];
        log.final_energy = vec![0.5 - 0.1, 0.5 - 0.03];
        assert_eq!(ledger_mismatch(&log), 0.0);

        log.final_energy[1] += 1e-6;
        assert!(ledger_mismatch(&log) > 1e-7);
    }

    #[test]
    fn retransmissions_count_only_resends() {
        let mut log = empty_log(2, 100);
        let tx = |resend| TraceRecord::Tx {
            tick: SimTime(1),
            kind: FrameKind::Data,
            actor: NodeId(0),
            peer: Some(NodeId(1)),
            payload: Some(PayloadId(1)),
            resend,
            debit_j: 0.0,
        };
        log.records = vec![tx(false), tx(true), tx(true)];
        assert_eq!(compute(&log).retransmissions, 2);
    }
}
