//! Tooling for measuring whether a block of exogenous features improves
//! short-horizon return forecasts.
//!
//! The pipeline is:
//!
//! 1. [`ingest`] loads prices and indicator tables, derives log returns and
//!    calendar encodings, and aligns everything on a shared daily index with
//!    a forward target.
//! 2. [`featwin`] turns `(series, offset, length, function code)` window
//!    specifications into feature columns.
//! 3. [`booster`] is a histogram-based, leaf-wise gradient-boosted regression
//!    tree learner with `gbdt`, `dart` and `goss` variants.
//! 4. [`gaopt`] runs a genetic search over learner hyperparameters and up to
//!    six window features.
//! 5. [`metrics`] holds R², MAE, RMSE, permutation importance, the
//!    Mann–Whitney U test and histogram overlap.
//! 6. [`experiment`] repeats the search for a baseline and an augmented
//!    feature pool, compares the resulting metric distributions and writes
//!    JSON records and SVG plots.

pub mod booster;
pub mod experiment;
pub mod featwin;
pub mod gaopt;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use booster::{BoostedModel, BoostingType, HyperParams};
pub use featwin::{FeatureFn, FeatureMatrix, FeatureSpec};
pub use ingest::{AlignedDataset, PoolTag, SplitIndices};
pub use matrix::DenseMatrix;
pub use metrics::{MetricSet, PfiEntry, UTestResult};
