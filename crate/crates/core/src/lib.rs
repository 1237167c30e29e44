//! Sub-national cholera forecasting: data preparation, windowed feature
//! extraction, statistical feature selection, gradient-boosted trees tuned
//! with a Parzen-estimator search, and rolling-window evaluation against a
//! linear baseline.

pub mod baseline;
pub mod cv;
pub mod error;
pub mod featurex;
pub mod gbtree;
pub mod ingest;
pub mod matrix;
pub mod pipeline;
pub mod plot;
pub mod prep;
pub mod seed;
pub mod simulate;
pub mod select;
pub mod series;
pub mod tpe;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use series::{Horizon, SeriesKind};
