//! Core library for a tick-data research pipeline.
//!
//! The pipeline turns a trade tape into labeled square windows of sequential
//! trades, trains a small convolutional classifier on them, searches its
//! hyper-parameters with a tree-structured Parzen estimator, extracts
//! per-trade influence scores from input gradients, and regresses those
//! scores on trade attributes with cluster-robust standard errors.
//!
//! Modules:
//! - [`market`]: tape parsing, synthesis, windowing, labeling, normalization.
//! - [`net`]: the classifier (forward, exact reverse-mode gradients, training).
//! - [`tpe`]: sequential model-based hyper-parameter search.
//! - [`influence`]: gradient-saliency scores per trade.
//! - [`regression`]: OLS with window-clustered sandwich standard errors.

pub mod influence;
pub mod market;
pub mod net;
pub mod regression;
pub mod seed;
pub mod tensor;
pub mod tpe;

pub use tensor::Tensor3;
