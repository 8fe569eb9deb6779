//! Topic bus between controllers and the simulated hardware.
//!
//! Topics under `robot_k/` belong to robot `k`, are always reliable, and are
//! invisible to other robots' controllers. Topics outside any robot
//! namespace are shared and best effort.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Twist2D;
use crate::rng::SimRng;
use crate::sensing::{FiducialDetection, MarkermapDetection, OdometryDelta, PoseFixReading, RangeScan};
use crate::world::{LiftOutcome, LifterState, Zone};

pub const DEFAULT_DROP_PROB: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Qos {
    Reliable,
    BestEffort { drop_prob: f64 },
}

impl std::fmt::Display for Qos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Qos::Reliable => write!(f, "RELIABLE"),
            Qos::BestEffort { drop_prob } => write!(f, "BEST_EFFORT(drop_prob={drop_prob})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifterCommand {
    Raise,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifterStatus {
    pub state: LifterState,
    /// Whether the platform holds a load.
    pub loaded: bool,
    /// Most recent lift attempt and when it happened.
    pub last_outcome: Option<(f64, LiftOutcome)>,
}

impl Default for LifterStatus {
    fn default() -> Self {
        Self { state: LifterState::Lowered, loaded: false, last_outcome: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    RangeScan(RangeScan),
    Odometry(OdometryDelta),
    Compass(f64),
    Zone(Zone),
    Fiducials(Vec<FiducialDetection>),
    Markermap(MarkermapDetection),
    PoseFix(PoseFixReading),
    Twist(Twist2D),
    Lifter(LifterCommand),
    LifterStatus(LifterStatus),
    Text(String),
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::RangeScan(_) => "RangeScan",
            Payload::Odometry(_) => "OdometryDelta",
            Payload::Compass(_) => "Compass",
            Payload::Zone(_) => "Zone",
            Payload::Fiducials(_) => "FiducialDetections",
            Payload::Markermap(_) => "MarkermapDetection",
            Payload::PoseFix(_) => "PoseFix",
            Payload::Twist(_) => "Twist2D",
            Payload::Lifter(_) => "LifterCommand",
            Payload::LifterStatus(_) => "LifterStatus",
            Payload::Text(_) => "Text",
        }
    }
}

/// Who is asking: a robot's controller or the simulator itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Namespace {
    Robot(usize),
    Sim,
}

pub fn robot_topic(robot: usize, leaf: &str) -> String {
    format!("robot_{robot}/{leaf}")
}

fn topic_owner(name: &str) -> Option<usize> {
    let (head, _) = name.split_once('/')?;
    head.strip_prefix("robot_")?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicInfo {
    pub name: String,
    pub type_name: String,
    pub qos: Qos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub topic: String,
    pub publisher: Namespace,
    pub seq: u64,
    pub emitted: f64,
    pub payload: Payload,
}

#[derive(Debug)]
struct TopicState {
    info: TopicInfo,
    queues: Vec<VecDeque<Envelope>>,
}

/// Handle returned by [`Bus::subscribe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    topic: String,
    slot: usize,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }
}

#[derive(Debug)]
pub struct Bus {
    topics: BTreeMap<String, TopicState>,
    rng: SimRng,
    seq: u64,
    dropped: u64,
}

impl Bus {
    pub fn new(rng: SimRng) -> Self {
        Self { topics: BTreeMap::new(), rng, seq: 0, dropped: 0 }
    }

    pub fn register(&mut self, name: &str, type_name: &str, qos: Qos) -> Result<()> {
        match (topic_owner(name), qos) {
            (Some(_), Qos::BestEffort { .. }) => {
                return Err(Error::InvalidArgument(format!("intra-robot topic {name} must be RELIABLE")))
            }
            (None, Qos::Reliable) => {
                return Err(Error::InvalidArgument(format!("inter-robot topic {name} must be BEST_EFFORT")))
            }
            (_, Qos::BestEffort { drop_prob }) if !(0.0..=1.0).contains(&drop_prob) => {
                return Err(Error::InvalidArgument(format!("drop probability {drop_prob} outside [0,1]")))
            }
            _ => {}
        }
        let info = TopicInfo { name: name.to_owned(), type_name: type_name.to_owned(), qos };
        self.topics.entry(name.to_owned()).or_insert(TopicState { info, queues: Vec::new() });
        Ok(())
    }

    /// Register the standard per-robot topic set.
    pub fn register_robot(&mut self, robot: usize) -> Result<()> {
        for (leaf, ty) in [
            ("range_scan", "RangeScan"),
            ("odometry", "OdometryDelta"),
            ("compass", "Compass"),
            ("zone", "Zone"),
            ("fiducials", "FiducialDetections"),
            ("markermap", "MarkermapDetection"),
            ("pose_fix", "PoseFix"),
            ("cmd_vel", "Twist2D"),
            ("lifter_cmd", "LifterCommand"),
            ("lifter_state", "LifterStatus"),
        ] {
            self.register(&robot_topic(robot, leaf), ty, Qos::Reliable)?;
        }
        Ok(())
    }

    pub fn topics(&self) -> impl Iterator<Item = &TopicInfo> {
        self.topics.values().map(|t| &t.info)
    }

    /// Envelopes lost to best-effort delivery so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn subscribe(&mut self, topic: &str, who: Namespace) -> Result<Subscription> {
        let owner = topic_owner(topic);
        let state = self.topics.get_mut(topic).ok_or_else(|| Error::UnknownTopic(topic.to_owned()))?;
        if let (Namespace::Robot(k), Some(o)) = (who, owner) {
            if k != o {
                return Err(Error::TopicAccess { topic: topic.to_owned(), namespace: format!("robot_{k}") });
            }
        }
        state.queues.push(VecDeque::new());
        Ok(Subscription { topic: topic.to_owned(), slot: state.queues.len() - 1 })
    }

    /// Publish on behalf of `who`. Returns whether the message was
    /// enqueued (best-effort topics may drop it).
    pub fn publish(&mut self, topic: &str, who: Namespace, payload: Payload, now: f64) -> Result<bool> {
        let owner = topic_owner(topic);
        let state = self.topics.get_mut(topic).ok_or_else(|| Error::UnknownTopic(topic.to_owned()))?;
        if let (Namespace::Robot(k), Some(o)) = (who, owner) {
            if k != o {
                return Err(Error::TopicAccess { topic: topic.to_owned(), namespace: format!("robot_{k}") });
            }
        }
        if payload.type_name() != state.info.type_name {
            return Err(Error::PayloadType {
                topic: topic.to_owned(),
                expected: state.info.type_name.clone(),
                got: payload.type_name(),
            });
        }
        if let Qos::BestEffort { drop_prob } = state.info.qos {
            let u: f64 = self.rng.random();
            if u < drop_prob {
                self.dropped += 1;
                return Ok(false);
            }
        }
        self.seq += 1;
        let env = Envelope { topic: topic.to_owned(), publisher: who, seq: self.seq, emitted: now, payload };
        if let Some((last, rest)) = state.queues.split_last_mut() {
            for q in rest {
                q.push_back(env.clone());
            }
            last.push_back(env);
        }
        Ok(true)
    }

    /// Take everything emitted up to `now` on this subscription.
    pub fn poll(&mut self, sub: &Subscription, now: f64) -> Vec<Envelope> {
        let Some(state) = self.topics.get_mut(&sub.topic) else {
            return Vec::new();
        };
        let q = &mut state.queues[sub.slot];
        let mut out = Vec::new();
        while q.front().is_some_and(|e| e.emitted <= now) {
            out.extend(q.pop_front());
        }
        out
    }

    /// Human-readable topic table.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for t in self.topics.values() {
            let _ = writeln!(s, "{}\t{}\t{}\t{} subscriber(s)", t.info.name, t.info.type_name, t.info.qos, t.queues.len());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStreams, StreamPurpose};

    fn bus() -> Bus {
        Bus::new(RngStreams::new(3).global(StreamPurpose::Bus))
    }

    #[test]
    fn reliable_delivers_everything_in_order() {
        let mut b = bus();
        b.register_robot(0).unwrap();
        let t = robot_topic(0, "compass");
        let sub = b.subscribe(&t, Namespace::Robot(0)).unwrap();
        assert!(b.poll(&sub, 0.0).is_empty());
        for i in 0..1000 {
            assert!(b.publish(&t, Namespace::Sim, Payload::Compass(i as f64), i as f64 * 0.01).unwrap());
        }
        let got = b.poll(&sub, 100.0);
        assert_eq!(got.len(), 1000);
        for (i, e) in got.iter().enumerate() {
            assert_eq!(e.payload, Payload::Compass(i as f64));
        }
        assert!(b.poll(&sub, 100.0).is_empty());
    }

    #[test]
    fn best_effort_drop_rates() {
        let mut b = bus();
        b.register("swarm/all", "Text", Qos::BestEffort { drop_prob: 1.0 }).unwrap();
        b.register("swarm/some", "Text", Qos::BestEffort { drop_prob: 0.3 }).unwrap();
        let all = b.subscribe("swarm/all", Namespace::Robot(1)).unwrap();
        let some = b.subscribe("swarm/some", Namespace::Robot(1)).unwrap();
        for _ in 0..10_000 {
            b.publish("swarm/all", Namespace::Robot(0), Payload::Text("x".into()), 0.0).unwrap();
            b.publish("swarm/some", Namespace::Robot(0), Payload::Text("x".into()), 0.0).unwrap();
        }
        assert!(b.poll(&all, 1.0).is_empty());
        let frac = b.poll(&some, 1.0).len() as f64 / 10_000.0;
        assert!((frac - 0.7).abs() <= 0.03, "fraction {frac}");
    }

    #[test]
    fn interleaved_publishers_keep_order() {
        let mut b = bus();
        b.register("swarm/chat", "Text", Qos::BestEffort { drop_prob: 0.0 }).unwrap();
        let sub = b.subscribe("swarm/chat", Namespace::Robot(2)).unwrap();
        for i in 0..50 {
            b.publish("swarm/chat", Namespace::Robot(0), Payload::Text(format!("a{i}")), 0.0).unwrap();
            b.publish("swarm/chat", Namespace::Robot(1), Payload::Text(format!("b{i}")), 0.0).unwrap();
        }
        let got = b.poll(&sub, 0.0);
        for who in [0, 1] {
            let seqs: Vec<String> = got
                .iter()
                .filter(|e| e.publisher == Namespace::Robot(who))
                .map(|e| match &e.payload {
                    Payload::Text(s) => s.clone(),
                    _ => unreachable!(),
                })
                .collect();
            let prefix = if who == 0 { "a" } else { "b" };
            let want: Vec<String> = (0..50).map(|i| format!("{prefix}{i}")).collect();
            assert_eq!(seqs, want);
        }
    }

    #[test]
    fn namespace_isolation_and_errors() {
        let mut b = bus();
        b.register_robot(0).unwrap();
        b.register_robot(1).unwrap();
        assert!(matches!(b.subscribe("robot_1/range_scan", Namespace::Robot(0)), Err(Error::TopicAccess { .. })));
        assert!(b.subscribe("robot_1/range_scan", Namespace::Sim).is_ok());
        assert!(matches!(b.publish("nowhere", Namespace::Sim, Payload::Compass(0.0), 0.0), Err(Error::UnknownTopic(_))));
        assert!(matches!(
            b.publish("robot_0/compass", Namespace::Sim, Payload::Text("x".into()), 0.0),
            Err(Error::PayloadType { ref expected, got: "Text", .. }) if expected == "Compass"
        ));
        assert!(b.register("robot_0/chat", "Text", Qos::BestEffort { drop_prob: 0.1 }).is_err());
        assert!(b.register("swarm/chat", "Text", Qos::Reliable).is_err());
    }

    #[test]
    fn poll_respects_time() {
        let mut b = bus();
        b.register_robot(0).unwrap();
        let sub = b.subscribe("robot_0/zone", Namespace::Robot(0)).unwrap();
        b.publish("robot_0/zone", Namespace::Sim, Payload::Zone(Zone::Drop), 1.0).unwrap();
        assert!(b.poll(&sub, 0.5).is_empty());
        assert_eq!(b.poll(&sub, 1.0).len(), 1);
    }

    #[test]
    fn describe_lists_topics() {
        let mut b = bus();
        b.register_robot(0).unwrap();
        let d = b.describe();
        assert!(d.contains("robot_0/cmd_vel\tTwist2D\tRELIABLE"));
        assert_eq!(d.lines().count(), 10);
    }
}
