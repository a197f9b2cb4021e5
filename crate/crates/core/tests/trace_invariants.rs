//! Whole-trace invariants that hold for any scenario: dead nodes stay
//! silent, data only ever moves closer to its destination while nodes are
//! static, generation follows the configured rate, and the energy ledger
//! replays to the recorded residuals without error.

use wsnsim_core::metrics::ledger_mismatch;
use wsnsim_core::rng::substream;
use wsnsim_core::runner::{run, run_with_overrides, PlacedNode, RunOverrides, TrafficEvent};
use wsnsim_core::scenario::Protocol;
use wsnsim_core::trace::TraceRecord;
use wsnsim_core::types::{distance, Position};
use wsnsim_core::{NodeId, PayloadId, Scenario, SimTime};

use rand::Rng;

use std::collections::HashMap;

#[test]
fn nodes_never_act_after_their_death_record() {
    // Tiny batteries force deaths well before the horizon.
    for protocol in [Protocol::E2xlradr, Protocol::Dsr] {
        let s = Scenario {
            node_count: 15,
            source_count: 3,
            initial_energy_j: 0.003,
            sim_time_ticks: 30_000,
            protocol,
            seed: 5,
            ..Scenario::default()
        };
        let log = run(&s).unwrap();
        let mut dead: Vec<bool> = vec![false; s.node_count as usize];
        let mut death_count = 0;
        for r in &log.records {
            match r {
                TraceRecord::Death { node, .. } => {
                    assert!(!dead[node.index()], "double death: {node:?}");
                    dead[node.index()] = true;
                    death_count += 1;
                }
                TraceRecord::Gen { src, .. } => {
                    assert!(!dead[src.index()], "dead source generated: {r:?}")
                }
                TraceRecord::Tx { actor, .. } => {
                    assert!(!dead[actor.index()], "dead node transmitted: {r:?}")
                }
                TraceRecord::Rx { actor, .. } => {
                    assert!(!dead[actor.index()], "dead node received: {r:?}")
                }
                _ => {}
            }
        }
        assert!(death_count > 0, "scenario too gentle to exercise death");
    }
}

#[test]
fn static_data_transmissions_always_make_progress_toward_the_destination() {
    let mut rng = substream(99, "test-topology", 0);
    let placement: Vec<PlacedNode> = (0..40)
        .map(|_| PlacedNode {
            pos: Position { x: rng.gen_range(0.0..1000.0), y: rng.gen_range(0.0..1000.0) },
            range_m: rng.gen_range(250.0..350.0),
            energy_j: 0.5,
        })
        .collect();
    let traffic: Vec<TrafficEvent> = (0..30)
        .map(|i| TrafficEvent {
            at: SimTime(i * 900),
            src: NodeId((i % 5) as u32),
            dst: NodeId(rng.gen_range(5..40u32)),
        })
        .collect();
    let s = Scenario {
        node_count: 40,
        source_count: 5,
        sim_time_ticks: 40_000,
        seed: 99,
        ..Scenario::default()
    };
    let overrides = RunOverrides { placement: Some(placement.clone()), traffic: Some(traffic) };
    let log = run_with_overrides(&s, &overrides).unwrap();

    let mut dst_of: HashMap<PayloadId, NodeId> = HashMap::new();
    let mut data_tx = 0;
    for r in &log.records {
        match r {
            TraceRecord::Gen { payload, dst, .. } => {
                dst_of.insert(*payload, *dst);
            }
            TraceRecord::Tx {
                kind: wsnsim_core::FrameKind::Data,
                actor,
                peer: Some(peer),
                payload: Some(payload),
                ..
            } => {
                data_tx += 1;
                let dst = dst_of[payload];
                let d_tx = distance(placement[actor.index()].pos, placement[dst.index()].pos);
                let d_rx = distance(placement[peer.index()].pos, placement[dst.index()].pos);
                assert!(
                    d_rx < d_tx,
                    "data moved away from its destination: {actor:?} -> {peer:?} for {payload}"
                );
            }
            _ => {}
        }
    }
    assert!(data_tx > 20, "too little data traffic to be meaningful: {data_tx}");
}

#[test]
fn generation_count_tracks_the_configured_rate() {
    // Batteries sized so no source dies inside the window; this measures
    // the generation process, not survival.
    let s = Scenario {
        node_count: 30,
        source_count: 5,
        traffic_rate_pps: 3.0,
        initial_energy_j: 50.0,
        sim_time_ticks: 10_000,
        seed: 21,
        ..Scenario::default()
    };
    let log = run(&s).unwrap();
    let mut per_source: HashMap<NodeId, u32> = HashMap::new();
    for r in &log.records {
        if let TraceRecord::Gen { src, dst, .. } = r {
            assert!(src.0 < 5, "non-source generated: {src:?}");
            assert!(dst.0 >= 5, "a source was chosen as destination: {dst:?}");
            *per_source.entry(*src).or_default() += 1;
        }
    }
    assert_eq!(per_source.len(), 5);
    for (src, n) in per_source {
        // 3 pps over 10 simulated seconds with ±10% jittered gaps.
        assert!((24..=36).contains(&n), "{src:?} generated {n} packets");
    }
}

#[test]
fn energy_ledger_replays_to_recorded_residuals_exactly() {
    for protocol in [Protocol::E2xlradr, Protocol::Dsr] {
        for seed in 1..=6u64 {
            let s = Scenario {
                node_count: 20,
                source_count: 3,
                sim_time_ticks: 12_000,
                initial_energy_j: 0.01,
                protocol,
                seed,
                ..Scenario::default()
            };
            let log = run(&s).unwrap();
            assert_eq!(ledger_mismatch(&log), 0.0, "protocol {protocol:?} seed {seed}");
        }
    }
}

#[test]
fn residual_energy_never_exceeds_initial_or_goes_negative() {
    let s = Scenario {
        node_count: 20,
        source_count: 4,
        initial_energy_j: 0.004,
        sim_time_ticks: 25_000,
        seed: 9,
        ..Scenario::default()
    };
    let log = run(&s).unwrap();
    for (i, f) in log.initial_energy.iter().zip(&log.final_energy) {
        assert!(*f >= 0.0);
        assert!(f <= i);
    }
}
