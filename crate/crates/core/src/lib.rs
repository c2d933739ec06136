//! Numerical lab for the LME recursion of inverse participation ratios in
//! critical power-law random band matrices.

pub mod analytics;
pub mod brw;
pub mod config;
pub mod error;
pub mod laplace;
pub mod linalg;
pub mod lme;
pub mod moments;
pub mod output;
pub mod prbm;
pub mod quadrature;
pub mod rgchain;
pub mod rng;
pub mod roots;
pub mod runner;
pub mod scalar;
pub mod special;
pub mod stats;
pub mod theta;

pub use error::{LabError, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type ThetaLaw64 = theta::ThetaLaw<f64>;
