//! Discrete-event core: clock, event queue, node state, the radio board and
//! the trace ledger. Protocol behaviour lives in the drivers; the core only
//! moves frames, debits energy, fires timers and records what happened.
//!
//! Determinism contract: a run is a pure function of (scenario, overrides).
//! Events are processed in (tick, schedule order); all randomness comes from
//! seeded substreams; no hash-map iteration ever decides behaviour.

mod dsr_drv;
mod xl;

pub(crate) use dsr_drv::DsrDriver;
pub(crate) use xl::XlDriver;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::radio::{self, EnergyModel, ReceptionOutcome, Transmission, TX_POWER_W};
use crate::rng::{substream, DOMAIN_MOBILITY, DOMAIN_PLACEMENT, DOMAIN_TIEBREAK, DOMAIN_TRAFFIC};
use crate::routing::NodeSnapshot;
use crate::scenario::{MobilityKind, Scenario};
use crate::trace::{LossCause, RxOutcome, TraceLog, TraceRecord};
use crate::types::{
    distance, Frame, NodeId, NodeState, PayloadId, Position, RadioMode, SimTime,
};

/// Lifetime samples and driver housekeeping sweeps run on this cadence.
pub(crate) const SAMPLE_INTERVAL_TICKS: u64 = 100;
/// Mobile nodes advance on this cadence.
pub(crate) const MOBILITY_STEP_TICKS: u64 = 100;
/// Radios are not tick-synchronised: keying up costs a small random
/// turnaround, drawn per frame. Without it, two senders whose frames once
/// collided would retry in permanent phase lock, an artifact of quantising
/// sub-tick airtimes onto the tick grid.
pub(crate) const TURNAROUND_JITTER_TICKS: u64 = 3;

/// Externally fixed placement and traffic, for tests that need exact
/// topologies. `None` fields fall back to the seeded generators.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub placement: Option<Vec<PlacedNode>>,
    pub traffic: Option<Vec<TrafficEvent>>,
}

#[derive(Debug, Clone)]
pub struct PlacedNode {
    pub pos: Position,
    pub range_m: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone)]
pub struct TrafficEvent {
    pub at: SimTime,
    pub src: NodeId,
    pub dst: NodeId,
}

#[derive(Debug, Clone)]
enum Event {
    FrameArrival { tx_index: usize, rx: NodeId },
    TxStart { frame: Frame, resend: bool },
    TxEnd { node: NodeId },
    TimerFire { node: NodeId, token: u64 },
    Wake { node: NodeId },
    PacketGeneration { src: NodeId, payload: PayloadId, dst: NodeId },
    MobilityStep,
    MetricsSample,
}

#[derive(Debug)]
struct ScheduledEvent {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for ScheduledEvent {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for ScheduledEvent {}
impl PartialOrd for ScheduledEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ScheduledEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Movement state under random waypoint. Targets are drawn lazily so dead
/// nodes never consume their substream.
#[derive(Debug, Clone, Copy)]
enum Waypoint {
    Pausing { until: SimTime },
    Moving { target: Position },
}

/// One random-waypoint step: walk toward the target at most `step_len`,
/// drawing a fresh target when the pause has expired.
fn advance_waypoint(
    pos: Position,
    state: Waypoint,
    step_len: f64,
    area: (f64, f64),
    pause_ticks: u64,
    now: SimTime,
    rng: &mut ChaCha8Rng,
) -> (Position, Waypoint) {
    let mut state = state;
    if let Waypoint::Pausing { until } = state {
        if now < until {
            return (pos, state);
        }
        let target = Position {
            x: rng.gen_range(0.0..area.0),
            y: rng.gen_range(0.0..area.1),
        };
        state = Waypoint::Moving { target };
    }
    let Waypoint::Moving { target } = state else {
        unreachable!()
    };
    let d = distance(pos, target);
    if d <= step_len {
        (target, Waypoint::Pausing { until: now.plus(pause_ticks) })
    } else {
        let scale = step_len / d;
        let next = Position {
            x: (pos.x + (target.x - pos.x) * scale).clamp(0.0, area.0),
            y: (pos.y + (target.y - pos.y) * scale).clamp(0.0, area.1),
        };
        (next, state)
    }
}

/// Protocol hooks. Every callback gets the core so it can send frames, arm
/// timers and write the ledger; the core never calls back into the driver
/// directly (frame starts and deaths are queued and drained between events).
pub(crate) trait ProtocolDriver {
    fn on_generate(&mut self, core: &mut EngineCore, src: NodeId, payload: PayloadId, dst: NodeId);
    /// A frame addressed to `rx` (or broadcast) was delivered to it intact.
    fn on_frame(&mut self, core: &mut EngineCore, frame: &Frame, rx: NodeId);
    fn on_timer(&mut self, core: &mut EngineCore, node: NodeId, token: u64);
    fn on_wake(&mut self, _core: &mut EngineCore, _node: NodeId) {}
    fn on_death(&mut self, core: &mut EngineCore, node: NodeId);
    /// A frame actually left `frame.hop_tx`'s radio this tick.
    fn on_tx_started(&mut self, _core: &mut EngineCore, _frame: &Frame) {}
    /// Periodic housekeeping, once per sample interval.
    fn pump(&mut self, core: &mut EngineCore);
}

pub(crate) struct EngineCore {
    pub(crate) scenario: Scenario,
    pub(crate) nodes: Vec<NodeState>,
    pub(crate) died_at: Vec<Option<SimTime>>,
    sleep_until: Vec<SimTime>,
    /// Past sleep intervals still young enough to overlap an in-flight
    /// frame; consulted when that frame's arrival resolves.
    sleep_history: Vec<Vec<(SimTime, SimTime)>>,
    tx_busy_until: Vec<SimTime>,
    tx_queue: Vec<VecDeque<(Frame, bool)>>,
    /// Append-only, start-monotone; arrival events index into it.
    transmissions: Vec<Transmission>,
    max_airtime: u64,
    events: BinaryHeap<Reverse<ScheduledEvent>>,
    event_seq: u64,
    frame_seq: u64,
    timer_token: u64,
    pub(crate) now: SimTime,
    pub(crate) records: Vec<TraceRecord>,
    delivered: HashSet<PayloadId>,
    lost: HashSet<PayloadId>,
    payload_src: HashMap<PayloadId, NodeId>,
    /// Frames whose transmission started during the current event; drained
    /// into `ProtocolDriver::on_tx_started` by the simulation loop.
    pending_started: Vec<Frame>,
    /// Nodes that died during the current event; drained into `on_death`.
    pending_deaths: Vec<NodeId>,
    mobility_rngs: Vec<ChaCha8Rng>,
    waypoints: Vec<Waypoint>,
    initial_energy: Vec<f64>,
    model: EnergyModel,
    tiebreak: ChaCha8Rng,
    alive_sources: u32,
    /// Tick the run ended; stays at the horizon unless every source died
    /// first, which ends the run because nothing can generate anymore.
    ended_tick: u64,
}

impl EngineCore {
    pub(crate) fn new(scenario: Scenario, overrides: &RunOverrides) -> EngineCore {
        let n = scenario.node_count as usize;
        let model = EnergyModel {
            e_elec_j_per_bit: scenario.e_elec_j_per_bit,
            eps_amp_j_per_bit_m2: scenario.eps_amp_j_per_bit_m2,
        };

        let nodes: Vec<NodeState> = match &overrides.placement {
            Some(placed) => {
                assert_eq!(placed.len(), n, "placement override must cover every node");
                placed
                    .iter()
                    .enumerate()
                    .map(|(i, p)| NodeState {
                        id: NodeId(i as u32),
                        pos: p.pos,
                        energy_j: p.energy_j,
                        radio: RadioMode::Idle,
                        range_m: p.range_m,
                        interference_count: 0,
                    })
                    .collect()
            }
            None => {
                let mut rng = substream(scenario.seed, DOMAIN_PLACEMENT, 0);
                (0..n)
                    .map(|i| {
                        let x = rng.gen_range(0.0..scenario.area_w_m);
                        let y = rng.gen_range(0.0..scenario.area_h_m);
                        let range = rng.gen_range(scenario.range_min_m..=scenario.range_max_m);
                        NodeState {
                            id: NodeId(i as u32),
                            pos: Position { x, y },
                            energy_j: scenario.initial_energy_j,
                            radio: RadioMode::Idle,
                            range_m: range,
                            interference_count: 0,
                        }
                    })
                    .collect()
            }
        };

        let initial_energy: Vec<f64> = nodes.iter().map(|nd| nd.energy_j).collect();
        let max_airtime = scenario
            .data_airtime_ticks()
            .max(scenario.control_airtime_ticks());

        let mut core = EngineCore {
            nodes,
            died_at: vec![None; n],
            sleep_until: vec![SimTime::ZERO; n],
            sleep_history: vec![Vec::new(); n],
            tx_busy_until: vec![SimTime::ZERO; n],
            tx_queue: vec![VecDeque::new(); n],
            transmissions: Vec::new(),
            max_airtime,
            events: BinaryHeap::new(),
            event_seq: 0,
            frame_seq: 0,
            timer_token: 0,
            now: SimTime::ZERO,
            records: Vec::new(),
            delivered: HashSet::new(),
            lost: HashSet::new(),
            payload_src: HashMap::new(),
            pending_started: Vec::new(),
            pending_deaths: Vec::new(),
            mobility_rngs: Vec::new(),
            waypoints: Vec::new(),
            initial_energy,
            model,
            tiebreak: substream(scenario.seed, DOMAIN_TIEBREAK, 0),
            alive_sources: scenario.source_count.min(scenario.node_count),
            ended_tick: scenario.sim_time_ticks,
            scenario,
        };

        for i in 0..n {
            if core.nodes[i].energy_j <= 0.0 {
                core.mark_death(NodeId(i as u32));
            }
        }

        core.schedule_traffic(overrides);
        core.schedule(SimTime::ZERO, Event::MetricsSample);
        if core.scenario.mobility_kind == MobilityKind::RandomWaypoint {
            core.mobility_rngs = (0..n as u64)
                .map(|i| substream(core.scenario.seed, DOMAIN_MOBILITY, i))
                .collect();
            core.waypoints = vec![Waypoint::Pausing { until: SimTime::ZERO }; n];
            if MOBILITY_STEP_TICKS < core.scenario.sim_time_ticks {
                core.schedule(SimTime(MOBILITY_STEP_TICKS), Event::MobilityStep);
            }
        }
        core
    }

    /// First `source_count` ids generate; destinations are non-sources.
    fn schedule_traffic(&mut self, overrides: &RunOverrides) {
        let mut arrivals: Vec<(u64, NodeId, NodeId)> = Vec::new();
        match &overrides.traffic {
            Some(events) => {
                arrivals.extend(events.iter().map(|e| (e.at.0, e.src, e.dst)));
            }
            None => {
                let s = &self.scenario;
                if s.traffic_rate_pps > 0.0 && s.source_count > 0 {
                    let non_sources: Vec<NodeId> =
                        (s.source_count..s.node_count).map(NodeId).collect();
                    if non_sources.is_empty() {
                        return;
                    }
                    let base = 1.0 / (s.traffic_rate_pps * s.tick_seconds);
                    for src in 0..s.source_count {
                        let mut rng = substream(s.seed, DOMAIN_TRAFFIC, src as u64);
                        let mut t = (base * rng.gen::<f64>()).round() as u64;
                        while t < s.sim_time_ticks {
                            let dst = non_sources[rng.gen_range(0..non_sources.len())];
                            arrivals.push((t, NodeId(src), dst));
                            let gap = (base * rng.gen_range(0.9..1.1)).round() as u64;
                            t += gap.max(1);
                        }
                    }
                }
            }
        }
        arrivals.sort_by_key(|&(t, src, _)| (t, src.0));
        for (i, (t, src, dst)) in arrivals.into_iter().enumerate() {
            let payload = PayloadId(i as u64 + 1);
            self.schedule(SimTime(t), Event::PacketGeneration { src, payload, dst });
        }
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        debug_assert!(at >= self.now, "never schedule into the past");
        self.event_seq += 1;
        self.events.push(Reverse(ScheduledEvent { at, seq: self.event_seq, event }));
    }

    pub(crate) fn alive(&self, node: NodeId) -> bool {
        self.died_at[node.index()].is_none()
    }

    pub(crate) fn alive_count(&self) -> u32 {
        self.died_at.iter().filter(|d| d.is_none()).count() as u32
    }

    pub(crate) fn node_pos(&self, node: NodeId) -> Position {
        self.nodes[node.index()].pos
    }

    pub(crate) fn node_energy(&self, node: NodeId) -> f64 {
        self.nodes[node.index()].energy_j
    }

    pub(crate) fn initial_node_energy(&self, node: NodeId) -> f64 {
        self.initial_energy[node.index()]
    }

    pub(crate) fn interference(&self, node: NodeId) -> u32 {
        self.nodes[node.index()].interference_count
    }

    pub(crate) fn reset_interference(&mut self, node: NodeId) {
        self.nodes[node.index()].interference_count = 0;
    }

    /// Boundary-inclusive reachability from `a`'s radio toward `b`.
    pub(crate) fn reaches(&self, a: NodeId, b: NodeId) -> bool {
        radio::in_range(&self.nodes[a.index()], &self.nodes[b.index()])
    }

    pub(crate) fn snapshots(&self) -> Vec<NodeSnapshot> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, nd)| NodeSnapshot {
                id: nd.id,
                pos: nd.pos,
                energy_j: nd.energy_j,
                range_m: nd.range_m,
                alive: self.died_at[i].is_none(),
            })
            .collect()
    }

    /// Queue or start a frame. Dead senders drop silently; busy or sleeping
    /// senders queue and flush at tx end / wake.
    pub(crate) fn send_frame(&mut self, frame: Frame, resend: bool) {
        let tx = frame.hop_tx;
        if !self.alive(tx) {
            return;
        }
        let busy = self.now < self.tx_busy_until[tx.index()]
            || self.now < self.sleep_until[tx.index()];
        if busy {
            self.tx_queue[tx.index()].push_back((frame, resend));
        } else {
            self.key_up(frame, resend);
        }
    }

    /// Claim the radio and put the frame on the air after the turnaround
    /// draw. The claim is immediate so a second send queues behind it.
    fn key_up(&mut self, frame: Frame, resend: bool) {
        let turnaround = self.tiebreak.gen_range(0..=TURNAROUND_JITTER_TICKS);
        if turnaround == 0 {
            self.transmit_now(frame, resend);
            return;
        }
        let tx = frame.hop_tx;
        let start = self.now.plus(turnaround);
        let airtime = self.scenario.airtime_ticks(frame.size_bits);
        self.tx_busy_until[tx.index()] = start.plus(airtime);
        self.schedule(start, Event::TxStart { frame, resend });
    }

    fn handle_tx_start(&mut self, frame: Frame, resend: bool) {
        if !self.alive(frame.hop_tx) {
            return;
        }
        self.transmit_now(frame, resend);
    }

    fn transmit_now(&mut self, mut frame: Frame, resend: bool) {
        let tx = frame.hop_tx;
        debug_assert!(self.alive(tx));
        let airtime = self.scenario.airtime_ticks(frame.size_bits);
        let start = self.now;
        let end = self.now.plus(airtime);

        // Fixed transmit power: every frame goes out at the node's full
        // range, addressed or broadcast alike. Reachability uses the same
        // radius, so paying by link distance would undercharge interference.
        let d = self.nodes[tx.index()].range_m;
        let cost = radio::tx_energy(&self.model, frame.size_bits, d);
        let res = radio::debit(&mut self.nodes[tx.index()], cost);

        self.frame_seq += 1;
        frame.seq = self.frame_seq;
        self.records.push(TraceRecord::Tx {
            tick: start,
            kind: frame.kind,
            actor: tx,
            peer: frame.hop_rx,
            payload: Some(frame.payload_id),
            resend,
            debit_j: res.applied_j,
        });

        self.transmissions.push(Transmission {
            frame: frame.clone(),
            start,
            end,
            tx_pos: self.nodes[tx.index()].pos,
            tx_range_m: self.nodes[tx.index()].range_m,
            tx_power_w: TX_POWER_W,
        });
        let tx_index = self.transmissions.len() - 1;

        self.tx_busy_until[tx.index()] = end;
        self.nodes[tx.index()].radio = RadioMode::Transmitting;
        self.schedule(end, Event::TxEnd { node: tx });

        // Arrivals resolve at tx end for everyone reachable right now; the
        // outcome (delivered, collided, busy) is decided then.
        for i in 0..self.nodes.len() {
            let rx = NodeId(i as u32);
            if rx == tx || !self.alive(rx) {
                continue;
            }
            if radio::in_range(&self.nodes[tx.index()], &self.nodes[i]) {
                self.schedule(end, Event::FrameArrival { tx_index, rx });
            }
        }

        self.pending_started.push(frame);
        if res.died {
            // The capacitor drains but the frame is already on the air.
            self.mark_death(tx);
        }
    }

    fn handle_tx_end(&mut self, node: NodeId) {
        if !self.alive(node) {
            return;
        }
        if self.now < self.tx_busy_until[node.index()] {
            // A later transmission owns the radio already.
            return;
        }
        if self.now < self.sleep_until[node.index()] {
            self.nodes[node.index()].radio = RadioMode::Sleeping;
            return;
        }
        self.nodes[node.index()].radio = RadioMode::Idle;
        if let Some((frame, resend)) = self.tx_queue[node.index()].pop_front() {
            self.key_up(frame, resend);
        }
    }

    /// True when this wake event is current (not superseded by a longer
    /// sleep) and the node is alive; flushes any queued frame.
    fn handle_wake(&mut self, node: NodeId) -> bool {
        if !self.alive(node) || self.now < self.sleep_until[node.index()] {
            return false;
        }
        if self.nodes[node.index()].radio != RadioMode::Sleeping {
            return false;
        }
        self.nodes[node.index()].radio = RadioMode::Idle;
        if let Some((frame, resend)) = self.tx_queue[node.index()].pop_front() {
            self.key_up(frame, resend);
        }
        true
    }

    /// Power the radio down until `until` (extends, never shortens). The
    /// interval is kept so in-flight frames still resolve as busy.
    pub(crate) fn sleep_node(&mut self, node: NodeId, until: SimTime) {
        if !self.alive(node) || until <= self.now || until <= self.sleep_until[node.index()] {
            return;
        }
        self.sleep_until[node.index()] = until;
        let horizon = self.now;
        let max_airtime = self.max_airtime;
        self.sleep_history[node.index()]
            .retain(|&(_, u)| u.plus(max_airtime) > horizon);
        self.sleep_history[node.index()].push((self.now, until));
        if self.now >= self.tx_busy_until[node.index()] {
            self.nodes[node.index()].radio = RadioMode::Sleeping;
        }
        self.schedule(until, Event::Wake { node });
    }

    pub(crate) fn has_queued_tx(&self, node: NodeId) -> bool {
        !self.tx_queue[node.index()].is_empty()
            || self.now < self.tx_busy_until[node.index()]
    }

    pub(crate) fn arm_timer(&mut self, node: NodeId, at: SimTime) -> u64 {
        self.timer_token += 1;
        let token = self.timer_token;
        self.schedule(at, Event::TimerFire { node, token });
        token
    }

    fn mark_death(&mut self, node: NodeId) {
        debug_assert!(self.died_at[node.index()].is_none());
        self.died_at[node.index()] = Some(self.now);
        self.records.push(TraceRecord::Death { tick: self.now, node });
        self.pending_deaths.push(node);
        if node.0 < self.scenario.source_count {
            self.alive_sources -= 1;
        }
    }

    /// True once every source is dead (and there were sources to begin
    /// with); the run stops here since no further traffic can exist.
    fn sources_exhausted(&self) -> bool {
        self.scenario.source_count > 0 && self.alive_sources == 0
    }

    /// Decide what `rx` heard of transmission `tx_index`, debit and record.
    /// Returns the frame only when it was delivered, addressed to `rx` (or
    /// broadcast) and `rx` survived the reception.
    fn resolve_arrival(&mut self, tx_index: usize, rx: NodeId) -> Option<Frame> {
        if !self.alive(rx) {
            return None;
        }
        let (window, seq) = {
            let t = &self.transmissions[tx_index];
            ((t.start, t.end), t.frame.seq)
        };
        let max_airtime = self.max_airtime;
        let lo = self
            .transmissions
            .partition_point(|t| t.start.plus(max_airtime) <= window.0);
        let hi = self.transmissions.partition_point(|t| t.start < window.1);
        let sleep = self.sleep_history[rx.index()]
            .iter()
            .rev()
            .find(|&&(from, until)| from < window.1 && window.0 < until)
            .copied();
        let outcomes = radio::resolve_reception(
            &self.nodes[rx.index()],
            sleep,
            &self.transmissions[lo..hi],
            window,
        );
        let outcome = outcomes.iter().find(|(s, _)| *s == seq).map(|&(_, o)| o)?;

        let frame = self.transmissions[tx_index].frame.clone();
        let addressed = frame.hop_rx.is_none() || frame.hop_rx == Some(rx);
        match outcome {
            ReceptionOutcome::OutOfRange => None,
            ReceptionOutcome::RxBusy => {
                // Nothing heard, nothing spent; recorded only for the
                // intended receiver so failed hops stay diagnosable.
                if addressed {
                    self.records.push(TraceRecord::Rx {
                        tick: self.now,
                        kind: frame.kind,
                        actor: rx,
                        peer: frame.hop_tx,
                        payload: Some(frame.payload_id),
                        outcome: RxOutcome::RxBusy,
                        debit_j: 0.0,
                    });
                }
                None
            }
            ReceptionOutcome::Collided => {
                // Billed for the garbage actually listened to, capped at the
                // frame's own length.
                let overlap = radio::interference_overlap_ticks(
                    &self.nodes[rx.index()],
                    &self.transmissions[lo..hi],
                    window,
                    seq,
                );
                let garbage_bits = overlap as f64 * self.scenario.bits_per_tick();
                let cost = radio::rx_energy(&self.model, frame.size_bits)
                    .min(self.model.e_elec_j_per_bit * garbage_bits);
                let res = radio::debit(&mut self.nodes[rx.index()], cost);
                self.nodes[rx.index()].interference_count += 1;
                self.records.push(TraceRecord::Rx {
                    tick: self.now,
                    kind: frame.kind,
                    actor: rx,
                    peer: frame.hop_tx,
                    payload: Some(frame.payload_id),
                    outcome: RxOutcome::Collided,
                    debit_j: res.applied_j,
                });
                if res.died {
                    self.mark_death(rx);
                }
                None
            }
            ReceptionOutcome::Delivered => {
                let cost = radio::rx_energy(&self.model, frame.size_bits);
                let res = radio::debit(&mut self.nodes[rx.index()], cost);
                self.records.push(TraceRecord::Rx {
                    tick: self.now,
                    kind: frame.kind,
                    actor: rx,
                    peer: frame.hop_tx,
                    payload: Some(frame.payload_id),
                    outcome: RxOutcome::Delivered,
                    debit_j: res.applied_j,
                });
                if res.died {
                    // Received with its dying breath; nobody acts on it.
                    self.mark_death(rx);
                    return None;
                }
                addressed.then_some(frame)
            }
        }
    }

    pub(crate) fn record_delivery(&mut self, payload: PayloadId, dst: NodeId) -> bool {
        if self.is_terminal(payload) {
            return false;
        }
        self.delivered.insert(payload);
        let src = self.payload_src.get(&payload).copied().unwrap_or(dst);
        self.records.push(TraceRecord::Deliver { tick: self.now, payload, actor: dst, src });
        true
    }

    pub(crate) fn record_loss(&mut self, payload: PayloadId, actor: NodeId, cause: LossCause) -> bool {
        if self.is_terminal(payload) {
            return false;
        }
        self.lost.insert(payload);
        self.records.push(TraceRecord::Loss { tick: self.now, payload, actor, cause });
        true
    }

    pub(crate) fn is_terminal(&self, payload: PayloadId) -> bool {
        self.delivered.contains(&payload) || self.lost.contains(&payload)
    }

    fn step_mobility(&mut self) {
        let speed = self.scenario.mobility_speed_mps;
        let step_len = speed * (MOBILITY_STEP_TICKS as f64 * self.scenario.tick_seconds);
        if step_len <= 0.0 {
            return;
        }
        let area = (self.scenario.area_w_m, self.scenario.area_h_m);
        let pause = self.scenario.mobility_pause_ticks;
        for i in 0..self.nodes.len() {
            if self.died_at[i].is_some() {
                continue;
            }
            let (pos, wp) = advance_waypoint(
                self.nodes[i].pos,
                self.waypoints[i],
                step_len,
                area,
                pause,
                self.now,
                &mut self.mobility_rngs[i],
            );
            debug_assert!(distance(self.nodes[i].pos, pos) <= step_len + 1e-9);
            self.nodes[i].pos = pos;
            self.waypoints[i] = wp;
        }
    }

    pub(crate) fn finalize(self) -> TraceLog {
        TraceLog {
            sim_time_ticks: self.scenario.sim_time_ticks,
            ended_tick: self.ended_tick,
            tick_seconds: self.scenario.tick_seconds,
            node_count: self.scenario.node_count,
            payload_size_bits: self.scenario.packet_size_bits as u64,
            initial_energy: self.initial_energy,
            final_energy: self.nodes.iter().map(|n| n.energy_j).collect(),
            records: self.records,
        }
    }
}

pub(crate) struct Simulation<D: ProtocolDriver> {
    pub(crate) core: EngineCore,
    pub(crate) driver: D,
}

impl<D: ProtocolDriver> Simulation<D> {
    pub(crate) fn run(&mut self) {
        self.drain();
        while let Some(Reverse(ev)) = self.core.events.pop() {
            if ev.at.0 >= self.core.scenario.sim_time_ticks {
                break;
            }
            if self.core.sources_exhausted() {
                self.core.ended_tick = self.core.now.0;
                break;
            }
            self.core.now = ev.at;
            match ev.event {
                Event::FrameArrival { tx_index, rx } => {
                    if let Some(frame) = self.core.resolve_arrival(tx_index, rx) {
                        self.driver.on_frame(&mut self.core, &frame, rx);
                    }
                }
                Event::TxStart { frame, resend } => self.core.handle_tx_start(frame, resend),
                Event::TxEnd { node } => self.core.handle_tx_end(node),
                Event::TimerFire { node, token } => {
                    if self.core.alive(node) {
                        self.driver.on_timer(&mut self.core, node, token);
                    }
                }
                Event::Wake { node } => {
                    if self.core.handle_wake(node) {
                        self.driver.on_wake(&mut self.core, node);
                    }
                }
                Event::PacketGeneration { src, payload, dst } => {
                    if self.core.alive(src) {
                        self.core.payload_src.insert(payload, src);
                        self.core.records.push(TraceRecord::Gen {
                            tick: self.core.now,
                            payload,
                            src,
                            dst,
                        });
                        self.driver.on_generate(&mut self.core, src, payload, dst);
                    }
                }
                Event::MobilityStep => {
                    self.core.step_mobility();
                    let next = self.core.now.plus(MOBILITY_STEP_TICKS);
                    if next.0 < self.core.scenario.sim_time_ticks {
                        self.core.schedule(next, Event::MobilityStep);
                    }
                }
                Event::MetricsSample => {
                    let alive = self.core.alive_count();
                    self.core
                        .records
                        .push(TraceRecord::Sample { tick: self.core.now, alive });
                    self.driver.pump(&mut self.core);
                    let next = self.core.now.plus(SAMPLE_INTERVAL_TICKS);
                    if next.0 < self.core.scenario.sim_time_ticks {
                        self.core.schedule(next, Event::MetricsSample);
                    }
                }
            }
            self.drain();
        }
    }

    /// Frame starts and deaths accumulate while the core holds the borrow;
    /// the loop hands them to the driver once the core is free again.
    fn drain(&mut self) {
        loop {
            let started = std::mem::take(&mut self.core.pending_started);
            let deaths = std::mem::take(&mut self.core.pending_deaths);
            if started.is_empty() && deaths.is_empty() {
                break;
            }
            for frame in started {
                self.driver.on_tx_started(&mut self.core, &frame);
            }
            for node in deaths {
                self.driver.on_death(&mut self.core, node);
            }
        }
    }
}
