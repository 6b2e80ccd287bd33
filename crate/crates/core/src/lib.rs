//! Anticipation, response and circadian rhythm around attention peaks of
//! planned events: model, ingestion, fitting, forecasting, baselines,
//! clustering and outcome classification.

pub mod baselines;
pub mod classify;
pub mod cluster;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod predict;
pub mod synth;

pub use error::{Error, Result};
pub use fit::{fit_peak, fit_prepeak, r_squared, PeakFit, PrepeakFit};
pub use ingest::{Category, EventRecord, PeakLocation, TimeSeries};
pub use model::{decompose_circadian, PeakParams, RegionMix};
