//! Named random streams derived from one master seed.
//!
//! Every robot gets its own stream per purpose, so adding a robot or drawing
//! more numbers for one purpose never shifts any other stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Spawn,
    Motion,
    RangeSensor,
    Camera,
    Odometry,
    Compass,
    Latency,
    Behaviour,
    Bus,
}

impl StreamPurpose {
    fn code(self) -> u64 {
        match self {
            StreamPurpose::Spawn => 1,
            StreamPurpose::Motion => 2,
            StreamPurpose::RangeSensor => 3,
            StreamPurpose::Camera => 4,
            StreamPurpose::Odometry => 5,
            StreamPurpose::Compass => 6,
            StreamPurpose::Latency => 7,
            StreamPurpose::Behaviour => 8,
            StreamPurpose::Bus => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for a purpose that belongs to the world rather than a robot.
    pub fn global(&self, purpose: StreamPurpose) -> SimRng {
        self.make(0, purpose)
    }

    pub fn robot(&self, robot: usize, purpose: StreamPurpose) -> SimRng {
        self.make(robot as u64 + 1, purpose)
    }

    fn make(&self, owner: u64, purpose: StreamPurpose) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream((owner << 8) | purpose.code());
        rng
    }
}
