use std::collections::HashMap;
use std::time::Duration;

use eclipse_core::attacker::{prepare_attack_with, AttackConfig};
use eclipse_core::ident::NodeId;
use eclipse_core::peermgr::{Direction, SlotConfig};
use eclipse_core::rng::rng_from_seed;
use eclipse_core::simnet::{
    run_scenario, run_scenario_with, AttackSpec, EventKind, LatencyModel, MessageKind, Outcome,
    PoolCache, ScenarioConfig, TraceDetail,
};

fn small(preset: &str, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(preset).unwrap();
    cfg.seed = seed;
    cfg.honest_count = 400;
    if let Some(a) = cfg.attack.as_mut() {
        a.config.pool_size = 20_000;
    }
    cfg
}

#[test]
fn honest_only_run_never_eclipses() {
    for seed in 0..3 {
        let mut cfg = small("geth-1.8", seed);
        cfg.attack = None;
        cfg.duration_limit_secs = 12.0 * 3600.0;
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.outcome(), Outcome::Timeout);
        let slots = SlotConfig::new(25);
        let mut max_out = 0;
        for e in &trace.events {
            if let EventKind::Checkpoint {
                eclipsed,
                outbound,
                adversarial_outbound,
                ..
            } = e.kind
            {
                assert!(!eclipsed);
                assert_eq!(adversarial_outbound, 0);
                assert!(outbound <= slots.outbound_slots);
                max_out = max_out.max(outbound);
            }
            assert!(!matches!(
                e.kind,
                EventKind::Eclipsed | EventKind::AttackStart
            ));
        }
        assert!(max_out > 0, "victim never held an outbound connection");
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = small("geth-1.9", 11);
    let pools = PoolCache::new();
    let a = run_scenario_with(&cfg, &pools).unwrap().to_jsonl();
    let b = run_scenario(&cfg).unwrap().to_jsonl();
    assert_eq!(a, b);
    let other = run_scenario(&small("geth-1.9", 12)).unwrap().to_jsonl();
    assert_ne!(a, other);
}

#[test]
fn trace_times_are_ordered_and_outcome_is_last() {
    let mut cfg = small("geth-1.8", 3);
    cfg.trace_detail = TraceDetail::Messages;
    cfg.duration_limit_secs = 3600.0;
    let trace = run_scenario(&cfg).unwrap();
    assert!(trace
        .events
        .windows(2)
        .all(|w| w[0].time_ns <= w[1].time_ns));
    let text = String::from_utf8(trace.to_jsonl()).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last.as_object().unwrap().len(), 3);
    assert_eq!(last["seed"], 3);
    match trace.outcome() {
        Outcome::Eclipsed => assert!(last["eclipse_time_ns"].is_u64()),
        Outcome::Timeout => assert!(last["eclipse_time_ns"].is_null()),
    }
}

#[test]
fn every_disconnect_closes_exactly_one_connect() {
    let mut cfg = small("geth-1.8", 5);
    cfg.attack = None;
    cfg.duration_limit_secs = 24.0 * 3600.0;
    let trace = run_scenario(&cfg).unwrap();
    let mut open: HashMap<NodeId, Direction> = HashMap::new();
    let mut closed = 0;
    for e in trace.connection_events() {
        match e.kind {
            EventKind::Connect {
                peer, direction, ..
            } => {
                assert!(open.insert(peer, direction).is_none(), "double connect");
            }
            EventKind::Disconnect { peer, direction } => {
                assert_eq!(open.remove(&peer), Some(direction));
                closed += 1;
            }
            _ => unreachable!(),
        }
    }
    assert!(closed > 0);
}

#[test]
fn ping_round_trip_is_twice_the_latency() {
    let mut cfg = small("geth-1.8", 8);
    cfg.latency_model = LatencyModel {
        mean_ms: 180.0,
        jitter_ms: 0.0,
    };
    cfg.trace_detail = TraceDetail::Messages;
    cfg.duration_limit_secs = 600.0;
    let trace = run_scenario(&cfg).unwrap();
    let victim = trace.events[0].node;
    let mut sent: HashMap<NodeId, Vec<u64>> = HashMap::new();
    let mut checked = 0;
    for e in &trace.events {
        if let EventKind::Message { kind, from, to } = e.kind {
            match kind {
                MessageKind::Ping if from == victim => sent.entry(to).or_default().push(e.time_ns),
                MessageKind::Pong if to == victim => {
                    let t = sent.get(&from).expect("pong without ping");
                    assert!(t.contains(&(e.time_ns - 360_000_000)));
                    checked += 1;
                }
                _ => {}
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn restart_attack_on_small_network() {
    let pools = PoolCache::new();
    let wins = (0..6)
        .filter(|&s| {
            run_scenario_with(&small("geth-1.8", s), &pools)
                .unwrap()
                .outcome()
                == Outcome::Eclipsed
        })
        .count();
    assert!(wins >= 4, "{wins}/6");
}

#[test]
fn eclipse_means_every_slot_is_adversarial() {
    let trace = run_scenario(&small("pre-1.8", 2)).unwrap();
    assert_eq!(trace.outcome(), Outcome::Eclipsed);
    let mut live: HashMap<NodeId, bool> = HashMap::new();
    for e in trace.connection_events() {
        match e.kind {
            EventKind::Connect {
                peer, adversarial, ..
            } => {
                live.insert(peer, adversarial);
            }
            EventKind::Disconnect { peer, .. } => {
                live.remove(&peer);
            }
            _ => {}
        }
    }
    assert_eq!(live.len(), 25);
    assert!(live.values().all(|&a| a));
    assert!(matches!(
        trace.events.last().unwrap().kind,
        EventKind::Eclipsed
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small("geth-1.8", 0);
    cfg.dial_failure_prob = -0.1;
    assert!(run_scenario(&cfg).is_err());
    let mut cfg = small("geth-1.8", 0);
    cfg.attack.as_mut().unwrap().config.pool_size = 0;
    assert!(run_scenario(&cfg).is_err());
}

#[test]
fn mined_plan_file_drives_the_attack() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_from_seed(40);
    let victim = eclipse_core::ident::generate_id(&mut rng);
    let mut plan = prepare_attack_with(
        victim,
        &AttackConfig {
            pool_size: 5_000,
            ..AttackConfig::default()
        },
        &mut rng,
    )
    .unwrap();
    let plan_path = dir.path().join("plan.json");
    plan.save(&plan_path, dir.path().join("pool.bin")).unwrap();

    let mut cfg = small("geth-1.8", 1);
    cfg.attack = Some(AttackSpec {
        plan_file: Some(plan_path),
        ..AttackSpec::default()
    });
    cfg.duration_limit_secs = 3600.0;
    let trace = run_scenario(&cfg).unwrap();
    assert_eq!(trace.events[0].node, victim);
    assert!(trace
        .events
        .iter()
        .any(|e| matches!(e.kind, EventKind::AttackStart)));
}

#[test]
fn warmup_delays_the_attack() {
    let mut cfg = small("geth-1.8", 4);
    cfg.restart_victim = false;
    cfg.warmup_secs = 6.0 * 3600.0;
    cfg.duration_limit_secs = 3600.0;
    let trace = run_scenario(&cfg).unwrap();
    let start = trace
        .events
        .iter()
        .find(|e| matches!(e.kind, EventKind::AttackStart))
        .unwrap()
        .time_ns;
    assert_eq!(Duration::from_nanos(start), Duration::from_secs(6 * 3600));
    // Connections made during warmup are all honest.
    for e in trace.connection_events() {
        if let EventKind::Connect { adversarial, .. } = e.kind {
            if e.time_ns < start {
                assert!(!adversarial);
            }
        }
    }
}
