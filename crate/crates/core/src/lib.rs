#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod estimator;
pub mod lmo;
pub mod optimizer;
pub mod quadrature;
pub mod rng;
pub mod root;
pub mod utility;
pub mod verify;

pub use distributions::{DistributionModel, SampleVector};
pub use error::{Result, UbsrError};
pub use estimator::{estimate_ubsr, q_n, Estimate, SrProblem, TailSpec};
pub use lmo::{LinearModel, LmoResult, LmoSettings, RegressionDataset};
pub use optimizer::{train, BisectionConfig, BisectionTrace, Branch};
pub use root::Bracket;
pub use utility::Utility;
pub use verify::VerificationReport;
