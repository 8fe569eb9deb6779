//! Simulation and control library for a swarm of holonomic robots that find,
//! lift and deliver cargo carriers using only on-board sensing.

pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod trajectory;
pub mod collision_map;
pub mod rng;
pub mod world;
pub mod sensing;
pub mod localization;
pub mod bus;
pub mod bt;
pub mod navigator;
pub mod behaviour;
pub mod controller;

pub use error::{Error, Result};
