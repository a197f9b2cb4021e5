//! The run trace: every energy-bearing or payload-relevant event, in order.
//!
//! The trace is the run's complete observable history. Metrics are computed
//! from it alone, and the energy ledger it implies must replay to exactly
//! the engine's debits; that redundancy is what the conservation check
//! leans on.
//!
//! One record kind never reaches trace.csv: `Sample` rows are periodic
//! alive-count observations and feed lifetime_curve.csv instead.

use crate::types::{FrameKind, NodeId, PayloadId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCause {
    /// Per-hop DATA retransmission limit reached.
    KmaxDrop,
    /// Upstream recovery ran out of budget or lost its frame.
    RecoveryExhausted,
    /// No route after maintenance and re-establishment.
    Unreachable,
    /// The custodian died holding the payload.
    SourceDeath,
    /// DSR: discovery produced no route in time.
    DiscoveryTimeout,
    /// DSR: source route broke and rediscovery was already spent.
    LinkFailure,
}

impl LossCause {
    pub fn as_str(self) -> &'static str {
        match self {
            LossCause::KmaxDrop => "kmax_drop",
            LossCause::RecoveryExhausted => "recovery_exhausted",
            LossCause::Unreachable => "unreachable",
            LossCause::SourceDeath => "source_death",
            LossCause::DiscoveryTimeout => "discovery_timeout",
            LossCause::LinkFailure => "link_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxOutcome {
    Delivered,
    Collided,
    RxBusy,
}

impl RxOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RxOutcome::Delivered => "delivered",
            RxOutcome::Collided => "collided",
            RxOutcome::RxBusy => "rx_busy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    /// A source created a payload addressed to `dst`.
    Gen { tick: SimTime, payload: PayloadId, src: NodeId, dst: NodeId },
    /// A frame went on the air; `peer` is None for broadcast.
    Tx {
        tick: SimTime,
        kind: FrameKind,
        actor: NodeId,
        peer: Option<NodeId>,
        payload: Option<PayloadId>,
        resend: bool,
        debit_j: f64,
    },
    /// A frame arrived (or failed to) at a listening node.
    Rx {
        tick: SimTime,
        kind: FrameKind,
        actor: NodeId,
        peer: NodeId,
        payload: Option<PayloadId>,
        outcome: RxOutcome,
        debit_j: f64,
    },
    /// End-to-end delivery of a payload at its destination.
    Deliver { tick: SimTime, payload: PayloadId, actor: NodeId, src: NodeId },
    /// Terminal loss of a payload; `actor` held it last.
    Loss { tick: SimTime, payload: PayloadId, actor: NodeId, cause: LossCause },
    /// A node's energy reached zero.
    Death { tick: SimTime, node: NodeId },
    /// Periodic alive-count sample for the lifetime curve.
    Sample { tick: SimTime, alive: u32 },
}

impl TraceRecord {
    pub fn tick(&self) -> SimTime {
        match self {
            TraceRecord::Gen { tick, .. }
            | TraceRecord::Tx { tick, .. }
            | TraceRecord::Rx { tick, .. }
            | TraceRecord::Deliver { tick, .. }
            | TraceRecord::Loss { tick, .. }
            | TraceRecord::Death { tick, .. }
            | TraceRecord::Sample { tick, .. } => *tick,
        }
    }

    /// One trace.csv line (no terminator), or None for records that do not
    /// belong in that file. Columns:
    /// tick,seq,kind,actor,peer,frame_kind,outcome,energy_debit_j
    pub fn csv_line(&self, seq: u64) -> Option<String> {
        let ptag = |p: &Option<PayloadId>| p.map_or("-".to_string(), |p| p.to_string());
        let (kind, actor, peer, frame, outcome, debit) = match self {
            TraceRecord::Gen { payload, src, dst, .. } => {
                ("gen", *src, dst.to_string(), payload.to_string(), "generated".to_string(), 0.0)
            }
            TraceRecord::Tx { kind, actor, peer, payload, resend, debit_j, .. } => (
                "tx",
                *actor,
                peer.map_or("*".to_string(), |p| p.to_string()),
                format!("{}:{}", kind.as_str(), ptag(payload)),
                if *resend { "resent" } else { "sent" }.to_string(),
                *debit_j,
            ),
            TraceRecord::Rx { kind, actor, peer, payload, outcome, debit_j, .. } => (
                "rx",
                *actor,
                peer.to_string(),
                format!("{}:{}", kind.as_str(), ptag(payload)),
                outcome.as_str().to_string(),
                *debit_j,
            ),
            TraceRecord::Deliver { payload, actor, src, .. } => {
                ("deliver", *actor, src.to_string(), payload.to_string(), "delivered".to_string(), 0.0)
            }
            TraceRecord::Loss { payload, actor, cause, .. } => {
                ("loss", *actor, "-".to_string(), payload.to_string(), cause.as_str().to_string(), 0.0)
            }
            TraceRecord::Death { node, .. } => {
                ("death", *node, "-".to_string(), "-".to_string(), "dead".to_string(), 0.0)
            }
            TraceRecord::Sample { .. } => return None,
        };
        Some(format!(
            "{},{},{},{},{},{},{},{}",
            self.tick(),
            seq,
            kind,
            actor,
            peer,
            frame,
            outcome,
            fmt_e9(debit)
        ))
    }
}

/// Fixed 9-significant-digit rendering used by every CSV float field.
pub fn fmt_e9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Complete history of one run.
#[derive(Debug, Clone)]
pub struct TraceLog {
    pub sim_time_ticks: u64,
    /// Tick the run actually ended: the horizon, or earlier if every source
    /// died first and nothing could generate traffic anymore.
    pub ended_tick: u64,
    pub tick_seconds: f64,
    pub node_count: u32,
    pub payload_size_bits: u64,
    pub initial_energy: Vec<f64>,
    pub final_energy: Vec<f64>,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    /// All trace.csv lines including the header row.
    pub fn csv_lines(&self) -> Vec<String> {
        let mut out = vec!["tick,seq,kind,actor,peer,frame_kind,outcome,energy_debit_j".to_string()];
        let mut seq = 0u64;
        for rec in &self.records {
            if let Some(line) = rec.csv_line(seq) {
                out.push(line);
                seq += 1;
            }
        }
        out
    }

    /// lifetime_curve.csv lines: header plus one row per sample.
    pub fn lifetime_curve_lines(&self) -> Vec<String> {
        let mut out = vec!["tick,alive_fraction".to_string()];
        for rec in &self.records {
            if let TraceRecord::Sample { tick, alive } = rec {
                out.push(format!(
                    "{},{}",
                    tick,
                    fmt_e9(*alive as f64 / self.node_count as f64)
                ));
            }
        }
        out
    }
}
