//! Toolkit for forecasting *significant* daily stock-price moves.
//!
//! The pipeline: ingest adjusted-close CSVs, convert to log returns, label
//! returns that exceed a fraction of the training-period standard deviation,
//! build sliding-window datasets, train classifiers (from-scratch MLP / CNN /
//! LSTM and a random forest) against a Wilder-RSI benchmark, and score every
//! model with ROC/AUC over a (ticker x model x window x fraction x direction)
//! experiment grid.
//!
//! Modules follow the pipeline stages:
//!
//! - [`market_data`]: price CSV ingestion and validation
//! - [`features`]: log returns, significance labeling, window datasets
//! - [`indicators`]: Wilder RSI signal and score
//! - [`neuralnet`]: tensors, layers, backprop, Adam, training
//! - [`forest`]: bootstrapped Gini decision trees
//! - [`metrics`]: ROC curves and AUC (trapezoid + pairwise oracle)
//! - [`harness`]: experiment grid, synthetic fixtures, CSV/SVG reports

pub mod features;
pub mod forest;
pub mod harness;
pub mod indicators;
pub mod market_data;
pub mod metrics;
pub mod neuralnet;
pub mod seeding;

pub use features::{Direction, LabeledDataset, ReturnSeries, SignificanceSpec};
pub use market_data::{PriceSeries, ValidationReport};
pub use metrics::RocResult;
