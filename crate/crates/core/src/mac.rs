//! Per-hop handshake state machine: r-request, ack1, data, ack2.
//!
//! A hop moves a payload from one custodian to the next through the exact
//! sequence RREQUEST -> ACK1 -> DATA -> ACK2; there is no shortcut. The
//! sender owns every timer: it waits `tf` ticks for ack1 (re-requesting up
//! to `max_rrequest_retries` times) and `tf` ticks for ack2 (retransmitting
//! DATA under the retry policy's limit, which the caller enforces). The
//! receiver side holds no timer at all; a receiver stuck waiting for DATA is
//! released lazily by its owner once the engagement is clearly stale.
//!
//! The machine is pure: events go in, actions come out, and the caller maps
//! actions onto the radio and the routing layer. That keeps every corner of
//! the exchange checkable by exhaustive enumeration in the tests below.
//!
//! Sender and receiver roles never share state, so a node runs one instance
//! per role: initiating a hop must not deafen the node to r-requests aimed
//! at it, or chains of relays end up waiting on each other in lockstep.

use crate::types::{NodeId, PayloadId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandshakeConfig {
    pub tf_ticks: u64,
    pub max_rrequest_retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    /// Sender: r-request out, waiting for ack1.
    AwaitAck1,
    /// Sender: data out, waiting for ack2.
    AwaitAck2,
    /// Receiver: ack1 out, committed to receive data.
    AwaitData,
}

#[derive(Debug, Clone)]
pub struct HandshakeState {
    pub phase: Phase,
    pub peer: Option<NodeId>,
    pub payload: Option<PayloadId>,
    /// Sender-side reply deadline; armed exactly in AwaitAck1 and AwaitAck2.
    pub timer_deadline: Option<SimTime>,
    pub rrequest_retries: u32,
    /// When the current engagement began; drives lazy receiver release.
    pub engaged_at: SimTime,
}

impl Default for HandshakeState {
    fn default() -> Self {
        HandshakeState {
            phase: Phase::Idle,
            peer: None,
            payload: None,
            timer_deadline: None,
            rrequest_retries: 0,
            engaged_at: SimTime::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacEvent {
    /// Routing asks this node to move `payload` to `peer`.
    Initiate { peer: NodeId, payload: PayloadId },
    Rrequest { peer: NodeId, payload: PayloadId },
    Ack1 { peer: NodeId, payload: PayloadId },
    Data { peer: NodeId, payload: PayloadId },
    Ack2 { peer: NodeId, payload: PayloadId },
    /// The armed reply deadline elapsed.
    ReplyTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacAction {
    SendRrequest { to: NodeId, payload: PayloadId, resend: bool },
    /// Carries the replier's residual energy when built into a frame.
    SendAck1 { to: NodeId, payload: PayloadId },
    SendData { to: NodeId, payload: PayloadId, resend: bool },
    SendAck2 { to: NodeId, payload: PayloadId },
    ArmReplyTimer { deadline: SimTime },
    /// Receiver side: the data frame arrived; custody passes to this node.
    PayloadReceived { payload: PayloadId, from: NodeId },
    /// Sender side: ack2 arrived; the hop is complete.
    HopComplete { payload: PayloadId, to: NodeId },
    /// Sender side: r-request retries exhausted without an ack1.
    HopAborted { payload: PayloadId, to: NodeId },
    /// Sender side: ack2 deadline passed; caller consults the retry policy
    /// and either calls [`HandshakeState::grant_data_retry`] or abandons.
    DataRetryWanted { payload: PayloadId, to: NodeId },
}

impl HandshakeState {
    pub fn is_engaged(&self) -> bool {
        self.phase != Phase::Idle
    }

    /// True when a receiver-side engagement has outlived any plausible
    /// sender. `hold_ticks` covers the sender's full retry schedule plus one
    /// data round; the scenario derives it.
    pub fn receiver_engagement_stale(&self, now: SimTime, hold_ticks: u64) -> bool {
        self.phase == Phase::AwaitData && now.0 >= self.engaged_at.0 + hold_ticks
    }

    /// Drop the current engagement without emitting anything.
    pub fn abandon(&mut self) {
        *self = HandshakeState::default();
    }

    /// Re-send DATA after the caller's retry policy allowed another attempt.
    pub fn grant_data_retry(&mut self, now: SimTime, cfg: &HandshakeConfig) -> Vec<MacAction> {
        debug_assert_eq!(self.phase, Phase::AwaitAck2);
        let deadline = now.plus(cfg.tf_ticks);
        self.timer_deadline = Some(deadline);
        vec![
            MacAction::SendData {
                to: self.peer.unwrap(),
                payload: self.payload.unwrap(),
                resend: true,
            },
            MacAction::ArmReplyTimer { deadline },
        ]
    }

    pub fn step(&mut self, now: SimTime, cfg: &HandshakeConfig, ev: MacEvent) -> Vec<MacAction> {
        match (self.phase, ev) {
            (Phase::Idle, MacEvent::Initiate { peer, payload }) => {
                let deadline = now.plus(cfg.tf_ticks);
                self.phase = Phase::AwaitAck1;
                self.peer = Some(peer);
                self.payload = Some(payload);
                self.timer_deadline = Some(deadline);
                self.rrequest_retries = 0;
                self.engaged_at = now;
                vec![
                    MacAction::SendRrequest {
                        to: peer,
                        payload,
                        resend: false,
                    },
                    MacAction::ArmReplyTimer { deadline },
                ]
            }

            // A free node always agrees to receive.
            (Phase::Idle, MacEvent::Rrequest { peer, payload }) => {
                self.phase = Phase::AwaitData;
                self.peer = Some(peer);
                self.payload = Some(payload);
                self.timer_deadline = None;
                self.engaged_at = now;
                vec![MacAction::SendAck1 { to: peer, payload }]
            }

            // The committed sender asked again (its ack1 was lost): re-ack.
            (Phase::AwaitData, MacEvent::Rrequest { peer, payload })
                if self.peer == Some(peer) && self.payload == Some(payload) =>
            {
                vec![MacAction::SendAck1 { to: peer, payload }]
            }

            (Phase::AwaitAck1, MacEvent::Ack1 { peer, payload })
                if self.peer == Some(peer) && self.payload == Some(payload) =>
            {
                let deadline = now.plus(cfg.tf_ticks);
                self.phase = Phase::AwaitAck2;
                self.timer_deadline = Some(deadline);
                vec![
                    MacAction::SendData {
                        to: peer,
                        payload,
                        resend: false,
                    },
                    MacAction::ArmReplyTimer { deadline },
                ]
            }

            (Phase::AwaitAck1, MacEvent::ReplyTimeout) => {
                self.rrequest_retries += 1;
                if self.rrequest_retries > cfg.max_rrequest_retries {
                    let (to, payload) = (self.peer.unwrap(), self.payload.unwrap());
                    self.abandon();
                    vec![MacAction::HopAborted { payload, to }]
                } else {
                    let deadline = now.plus(cfg.tf_ticks);
                    self.timer_deadline = Some(deadline);
                    vec![
                        MacAction::SendRrequest {
                            to: self.peer.unwrap(),
                            payload: self.payload.unwrap(),
                            resend: true,
                        },
                        MacAction::ArmReplyTimer { deadline },
                    ]
                }
            }

            (Phase::AwaitData, MacEvent::Data { peer, payload })
                if self.peer == Some(peer) && self.payload == Some(payload) =>
            {
                self.abandon();
                vec![
                    MacAction::SendAck2 { to: peer, payload },
                    MacAction::PayloadReceived { payload, from: peer },
                ]
            }

            (Phase::AwaitAck2, MacEvent::Ack2 { peer, payload })
                if self.peer == Some(peer) && self.payload == Some(payload) =>
            {
                self.abandon();
                vec![MacAction::HopComplete { payload, to: peer }]
            }

            (Phase::AwaitAck2, MacEvent::ReplyTimeout) => {
                vec![MacAction::DataRetryWanted {
                    payload: self.payload.unwrap(),
                    to: self.peer.unwrap(),
                }]
            }

            // Everything else is a stale or foreign frame, or an r-request
            // at a node that is already engaged: silence.
            _ => vec![],
        }
    }
}
