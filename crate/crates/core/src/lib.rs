//! County-level outbreak analytics and forecasting.
//!
//! The crate is organised around a joined county × date [`FeaturePanel`]:
//!
//! - [`dataset`] loads snapshot CSVs, derives regional metrics and builds panels
//!   (or generates seeded synthetic ones).
//! - [`stats`] computes Pearson, Spearman, Kendall, histogram intersection and
//!   mutual information between static features and outbreak outcomes.
//! - [`pca`] ranks features by variance-weighted principal-component loadings.
//! - [`forecast`] is the double-window LSTM predictor: dynamic and static
//!   projections around an LSTM core with a regression head, trained by exact
//!   backpropagation through time.
//! - [`arima`] provides the ARIMA(1,2,0) and ADF/AIC-selected ARIMA baselines.
//! - [`eval`] builds leakage-free windows and computes the RMSE protocols.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are what the panel-level pipeline uses.

pub mod arima;
pub mod dataset;
pub mod eval;
pub mod forecast;
pub mod pca;
pub mod scalar;
pub mod special;
pub mod stats;

mod error;
mod linalg;

pub use dataset::{CountyKey, FeaturePanel};
pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

/// Correlation result over `f64`.
pub type CorrelationResult64 = stats::CorrelationResult<f64>;
/// Principal-component model over `f64`.
pub type PcaModel64 = pca::PcaModel<f64>;
/// Principal-component model over `f32`.
pub type PcaModel32 = pca::PcaModel<f32>;
/// Double-window LSTM model over `f64`.
pub type DwlstmModel64 = forecast::DwlstmModel<f64>;
/// Double-window LSTM model over `f32`.
pub type DwlstmModel32 = forecast::DwlstmModel<f32>;
/// Fitted ARIMA model over `f64`.
pub type ArimaModel64 = arima::ArimaModel<f64>;
/// Fitted ARIMA model over `f32`.
pub type ArimaModel32 = arima::ArimaModel<f32>;
