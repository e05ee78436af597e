//! Age of information (AoI) and peak AoI for a single-source M/G/1/1 queue in
//! which an arrival finding the server busy replaces the packet in service
//! with probability `θ` and is discarded otherwise.
//!
//! * [`distributions`]: service-time laws and their exponential transforms.
//! * [`analytic`]: transforms, means and moments of the AoI, peak AoI,
//!   system time and interdeparture time.
//! * [`simulator`]: an event-driven simulator used as an independent check.
//! * [`optimizer`]: sweeps and minimization over `θ`.
//! * [`validation`]: end-to-end consistency checks between the two.

pub mod analytic;
pub mod distributions;
pub mod error;
pub mod optimizer;
pub mod quadrature;
pub mod simulator;
pub mod stats;
pub mod validation;

pub use analytic::{AnalyticSummary, SystemConfig};
pub use distributions::{Family, ServiceDistribution, TransformDomain};
pub use error::{AoiError, Result};
pub use optimizer::{Objective, Optimum, SweepRow};
pub use simulator::{DeliveryRecord, SimConfig, SimSummary, Trajectory};
