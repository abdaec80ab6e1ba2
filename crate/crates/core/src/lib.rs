//! Generative subspace selection for high-dimensional data.
//!
//! A small generator network learns a distribution over feature masks (a
//! "lens") whose projections are indistinguishable from the data under a
//! kernel two-sample statistic. The learned lens feeds a permutation test
//! for myopicity and weighted subspace outlier-detection ensembles.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod kernel;
pub mod kernel_learning;
pub mod lens;
pub mod model;
pub mod nn;
pub mod od;
pub mod synthetic;

pub use data::{DataMatrix, LabeledData};
pub use error::{Error, Result};
pub use generator::{train_vgan, GeneratorNet, TrainConfig, TrainOutcome};
pub use kernel::{mmd2, myopicity_test, permutation_test, KernelSpec, MmdEstimate, MmdTestResult, MmdVariant};
pub use lens::{LensDistribution, LensEntry, SubspaceMask};
pub use od::{auc, ensemble_scores, Detector, LabeledSplit, OdScores};
