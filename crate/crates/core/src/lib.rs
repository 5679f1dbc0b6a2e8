//! Kernel outlier detection.
//!
//! Data are mapped into an RBF (or linear) kernel feature space, reduced to
//! approximate feature vectors by a truncated spectral factorization of the
//! centered kernel matrix, and scored by robust projection outlyingness over
//! four families of directions: through the L1-median and each point, through
//! pairs of points, along the principal axes, and uniformly at random. The
//! families are combined by median normalization into a single kernel
//! outlyingness (KO), and points with KO above a log-normal robust cutoff are
//! flagged.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below are the usual entry points.

pub mod datasets;
pub mod detector;
pub mod directions;
pub mod error;
pub mod evaluation;
pub mod feature;
pub mod kernel;
pub mod outlyingness;
pub mod persist;
pub mod robust;
pub mod scalar;

pub use detector::{fit, FamilyScores, KernelChoice, KodConfig, KodModel, ScoreReport, StageTimings};
pub use directions::{DirectionSet, Family};
pub use error::{KodError, Result, Stage};
pub use feature::FeatureModel;
pub use kernel::{DataMatrix, KernelSpec};
pub use scalar::Real;

pub use nalgebra;

pub type DataMatrixF64 = DataMatrix<f64>;
pub type DataMatrixF32 = DataMatrix<f32>;
pub type KodModelF64 = KodModel<f64>;
pub type KodModelF32 = KodModel<f32>;
pub type ScoreReportF64 = ScoreReport<f64>;
pub type ScoreReportF32 = ScoreReport<f32>;
pub type FeatureModelF64 = FeatureModel<f64>;
pub type DirectionSetF64 = DirectionSet<f64>;
pub type KernelSpecF64 = KernelSpec<f64>;
