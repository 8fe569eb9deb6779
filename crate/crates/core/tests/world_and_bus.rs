use proptest::prelude::*;
use swarmlog_core::bus::{robot_topic, Bus, Namespace, Payload, Qos};
use swarmlog_core::geometry::Twist2D;
use swarmlog_core::rng::{RngStreams, StreamPurpose};
use swarmlog_core::sensing::LatencyQueue;
use swarmlog_core::world::{ArenaConfig, CarrierParams, RobotParams, SpawnConfig, WorldState, Zone};

fn spawn(seed: u64) -> WorldState {
    let mut rng = RngStreams::new(seed).global(StreamPurpose::Spawn);
    WorldState::spawn(ArenaConfig::default(), RobotParams::default(), CarrierParams::default(), &SpawnConfig::default(), &mut rng)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spawn_respects_zones(seed in any::<u64>()) {
        let w = spawn(seed);
        prop_assert_eq!(w.robots.len(), 5);
        prop_assert_eq!(w.carriers.len(), 5);
        for r in &w.robots {
            prop_assert_eq!(w.arena.zone(r.pose.x), Zone::Drop);
        }
        for c in &w.carriers {
            prop_assert_eq!(w.arena.zone(c.pose.x), Zone::Search);
        }
        for (i, a) in w.carriers.iter().enumerate() {
            for b in &w.carriers[i + 1..] {
                prop_assert!(a.pose.distance(&b.pose) >= 0.9 - 1e-12);
            }
        }
        prop_assert!(w.max_overlap() <= 0.0);
    }

    #[test]
    fn random_driving_stays_inside(seed in any::<u64>(), cmds in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -3.0..3.0f64), 5)) {
        let mut w = spawn(seed);
        for _ in 0..4 {
            for (k, &(vx, vy, om)) in cmds.iter().enumerate() {
                w.set_setpoint(k, Twist2D::new(vx, vy, om)).unwrap();
            }
            for _ in 0..50 {
                w.step(0.01);
            }
        }
        let r = w.robot_params.radius;
        for robot in &w.robots {
            prop_assert!(robot.pose.x.abs() <= w.arena.x_max() - r + 0.01);
            prop_assert!(robot.pose.y.abs() <= w.arena.y_max() - r + 0.01);
        }
        prop_assert!(w.max_overlap() < 0.01, "overlap {}", w.max_overlap());
    }

    #[test]
    fn latency_queue_keeps_order(mean in 0.0..0.2f64, sigma in 0.0..0.05f64, rho in 0.0..0.99f64, rate in 5.0..120.0f64, seed in any::<u64>()) {
        let mut q = LatencyQueue::with_correlation(mean, sigma, rho);
        let mut rng = RngStreams::new(seed).global(StreamPurpose::Latency);
        let mut out = Vec::new();
        for k in 0..300 {
            let t = k as f64 / rate;
            q.push(t, k, &mut rng);
            out.extend(q.delayed(t));
        }
        out.extend(q.delayed(f64::INFINITY));
        prop_assert_eq!(out.len(), 300);
        for (k, d) in out.iter().enumerate() {
            prop_assert_eq!(d.payload, k);
            prop_assert!(d.delivery >= d.emitted);
        }
        prop_assert!(out.windows(2).all(|w| w[0].delivery <= w[1].delivery));
    }
}

#[test]
fn reliable_topics_deliver_everything_in_order() {
    let mut bus = Bus::new(RngStreams::new(1).global(StreamPurpose::Bus));
    bus.register_robot(0).unwrap();
    bus.register_robot(1).unwrap();
    let topic = robot_topic(0, "compass");
    let sub = bus.subscribe(&topic, Namespace::Robot(0)).unwrap();
    let spy = bus.subscribe(&topic, Namespace::Sim).unwrap();
    assert!(bus.subscribe(&topic, Namespace::Robot(1)).is_err());
    assert!(bus.publish(&topic, Namespace::Robot(1), Payload::Compass(0.0), 0.0).is_err());
    assert!(bus.publish(&topic, Namespace::Sim, Payload::Zone(Zone::Search), 0.0).is_err());
    for k in 0..100 {
        assert!(bus.publish(&topic, Namespace::Sim, Payload::Compass(k as f64), k as f64 * 0.02).unwrap());
    }
    let early = bus.poll(&sub, 0.99);
    assert_eq!(early.len(), 50);
    let rest = bus.poll(&sub, 10.0);
    let all: Vec<f64> = early.iter().chain(&rest).map(|e| match e.payload {
        Payload::Compass(c) => c,
        _ => unreachable!(),
    }).collect();
    assert_eq!(all, (0..100).map(f64::from).collect::<Vec<_>>());
    assert_eq!(bus.poll(&spy, 10.0).len(), 100);
    assert_eq!(bus.dropped(), 0);
}

#[test]
fn best_effort_drops_at_the_configured_rate() {
    let mut bus = Bus::new(RngStreams::new(2).global(StreamPurpose::Bus));
    assert!(bus.register("swarm/chatter", "Text", Qos::Reliable).is_err());
    assert!(bus.register("robot_0/chatter", "Text", Qos::BestEffort { drop_prob: 0.1 }).is_err());
    bus.register("swarm/chatter", "Text", Qos::BestEffort { drop_prob: 0.25 }).unwrap();
    let sub = bus.subscribe("swarm/chatter", Namespace::Robot(3)).unwrap();
    let n = 20_000;
    for k in 0..n {
        bus.publish("swarm/chatter", Namespace::Robot(k % 5), Payload::Text(String::new()), 0.0).unwrap();
    }
    let got = bus.poll(&sub, 0.0).len();
    assert_eq!(got as u64 + bus.dropped(), n as u64);
    let rate = bus.dropped() as f64 / n as f64;
    assert!((rate - 0.25).abs() < 0.015, "{rate}");
}
