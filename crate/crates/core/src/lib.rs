//! Multicell massive-MIMO uplink simulator for IoT pilot allocation.
//!
//! Devices in every cell are grouped by spatial correlation (a capped
//! FasterPAM variant), each cluster gets one orthogonal pilot, and pilots are
//! matched across cells by a greedy max-k-cut over average-gain interference
//! weights. Devices of a cluster take turns on the shared pilot; the scheduler
//! turns the resulting spectral efficiencies into transmit times and counts
//! the devices that miss their reporting period.
//!
//! Pipeline: [`netgen`] -> [`clusterer`] -> [`pilotgraph`] ->
//! [`chanest`] / [`receiver`] -> [`scheduler`], orchestrated by [`sim`] and
//! driven from files and the command line by [`simcli`].
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod chanest;
pub mod clusterer;
pub mod error;
pub mod linalg;
pub mod netgen;
pub mod oracle;
pub mod pilotgraph;
pub mod receiver;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod simcli;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Complex64 = num_complex::Complex<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type CVector64 = linalg::CVector<f64>;
pub type CorrelationSet64 = netgen::CorrelationSet<f64>;
pub type PilotBook64 = chanest::PilotBook<f64>;
pub type ChannelRealization64 = chanest::ChannelRealization<f64>;
pub type ChannelEstimate64 = chanest::ChannelEstimate<f64>;
pub type SimilarityMatrix64 = clusterer::SimilarityMatrix<f64>;
pub type InterferenceWeights64 = pilotgraph::InterferenceWeights<f64>;
