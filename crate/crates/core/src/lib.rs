//! Centre-of-pressure estimation from raw wearable IMU signals.
//!
//! The crate covers the whole pipeline: orientation kinematics and GAM
//! synthesis ([`kinematics`]), recording I/O, synchronization, splitting and
//! feature assembly ([`dataio`]), the linear and LSTM regressors ([`models`]),
//! the evaluation suites ([`experiments`]) and a deterministic synthetic gait
//! generator used as ground truth ([`synthgait`]).

pub mod dataio;
pub mod error;
pub mod experiments;
pub mod kinematics;
mod linalg;
pub mod models;
pub mod seed;
pub mod synthgait;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    validate, CopSample, Constellation, Frame, GamTriplet, Manifest, ProtocolStep, Quaternion,
    Recording, SensorId, Source, Vec3, SAMPLE_RATE_HZ,
};
