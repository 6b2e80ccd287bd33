//! Comparison forecasters: SpikeM, power law and log-cumulative regression.

pub mod lr;
pub mod powerlaw;
pub mod spikem;

pub use lr::{lr_forecast, lr_predict, lr_train, LrRow, LrTable};
pub use powerlaw::{powerlaw_fit, powerlaw_fit_values, powerlaw_forecast, powerlaw_predict, PowerLawFit, PowerLawParams};
pub use spikem::{spikem_fit, spikem_fit_values, spikem_forecast, spikem_simulate, SpikeMFit, SpikeMParams};
