//! Sensorless direct torque control of a brushless DC motor with
//! trapezoidal back-EMF: plant, inverter, estimators, controllers and a
//! simulation engine.

pub mod control;
pub mod dtc;
pub mod error;
pub mod inverter;
pub mod observer;
pub mod plant;
pub mod rls;
pub mod sim;
pub mod smo;
pub mod waveform;

pub use error::{DriveError, Result};
