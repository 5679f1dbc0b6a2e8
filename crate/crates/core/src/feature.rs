//! Spectral factorization of the centered kernel matrix into approximate
//! feature vectors, and the out-of-sample embedding.

use nalgebra::DMatrix;

use crate::error::{KodError, Result};
use crate::scalar::Real;

pub const DEFAULT_RETENTION: f64 = 0.99;
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;

/// Retained eigensystem of the centered kernel matrix.
///
/// `features = V_q Λ_q^{1/2}`, `transform = V_q Λ_q^{-1/2}`, so that
/// `features = K̃ · transform` and `features · featuresᵀ ≈ K̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureModel<T: Real> {
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<T>,
    /// All eigenvalues above the floor, descending (length `rank_full`).
    pub spectrum: Vec<T>,
    pub eigenvectors: DMatrix<T>,
    pub transform: DMatrix<T>,
    pub features: DMatrix<T>,
    pub rank_full: usize,
}

impl<T: Real> FeatureModel<T> {
    /// Retained dimension.
    pub fn q(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of training points.
    pub fn n(&self) -> usize {
        self.transform.nrows()
    }

    /// Multiplies column `j` of the eigenvectors, transform and features by -1.
    pub fn flip_sign(&mut self, j: usize) {
        self.eigenvectors.column_mut(j).neg_mut();
        self.transform.column_mut(j).neg_mut();
        self.features.column_mut(j).neg_mut();
    }
}

/// Eigen-decomposes `K̃` and keeps the smallest number of leading
/// eigenvalues whose share of the positive spectrum reaches `retention`.
///
/// Eigenvalues at or below `eig_floor` (absolute) are discarded before the
/// ratio is taken.
pub fn decompose<T: Real>(k_tilde: &DMatrix<T>, retention: f64, eig_floor: f64) -> Result<FeatureModel<T>> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(KodError::InvalidInput(format!(
            "retention must lie in (0, 1], got {retention}"
        )));
    }
    if !(eig_floor > 0.0) {
        return Err(KodError::InvalidInput("eigenvalue floor must be positive".into()));
    }
    let n = k_tilde.nrows();
    if n == 0 || k_tilde.ncols() != n {
        return Err(KodError::InvalidInput("centered kernel matrix must be square and non-empty".into()));
    }
    let (values, vectors) = T::symmetric_eigen(k_tilde)
        .ok_or_else(|| KodError::Degenerate("symmetric eigendecomposition failed".into()))?;
    let floor = T::lit(eig_floor);
    let spectrum: Vec<T> = values.iter().copied().take_while(|&v| v > floor).collect();
    let r = spectrum.len();
    if r == 0 {
        return Err(KodError::Degenerate(
            "centered kernel matrix has no eigenvalue above the floor".into(),
        ));
    }
    let total = spectrum.iter().fold(T::zero(), |a, &v| a + v);
    let target = T::lit(retention);
    let mut cum = T::zero();
    let mut q = r;
    for (j, &v) in spectrum.iter().enumerate() {
        cum += v;
        if cum / total >= target {
            q = j + 1;
            break;
        }
    }
    let eigenvectors = vectors.columns(0, q).into_owned();
    let mut transform = eigenvectors.clone();
    let mut features = eigenvectors.clone();
    for j in 0..q {
        let root = spectrum[j].sqrt();
        transform.column_mut(j).unscale_mut(root);
        features.column_mut(j).scale_mut(root);
    }
    Ok(FeatureModel {
        eigenvalues: spectrum[..q].to_vec(),
        spectrum,
        eigenvectors,
        transform,
        features,
        rank_full: r,
    })
}

/// `F̂^y = K̃^{yx} T_q`.
pub fn embed<T: Real>(k_yx_tilde: &DMatrix<T>, model: &FeatureModel<T>) -> Result<DMatrix<T>> {
    if k_yx_tilde.ncols() != model.n() {
        return Err(KodError::DimensionMismatch {
            expected: model.n(),
            actual: k_yx_tilde.ncols(),
        });
    }
    Ok(k_yx_tilde * &model.transform)
}
