//! Rate-splitting versus conventional downlink transmission in massive MISO
//! systems with residual transceiver hardware impairments.
//!
//! Two engines evaluate the same system model:
//!
//! * [`link_sim`] draws channels, phase-noise trajectories and pilot
//!   observations and averages instantaneous SINRs over many blocks;
//! * [`rmt`] evaluates the large-system deterministic equivalents of the same
//!   SINRs from covariance statistics alone.
//!
//! [`experiment`] drives both over parameter grids from a TOML manifest.

pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod impairments;
pub mod link_sim;
pub mod linalg;
pub mod precoding;
pub mod rmt;
pub mod training;

pub use config::{
    validate, Csit, Engine, Geometry, ImpairmentProfile, PowerSplit, RateReport, Strategy,
    SystemConfig, Topology,
};
pub use error::{Error, Result};
pub use link_sim::{run_monte_carlo, McOptions};
pub use rmt::{de_rates, DeOptions, DeReport};
