//! Kernel evaluation, bandwidth selection and kernel-matrix centering.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KodError, Result};
use crate::robust::{median_in_place, median_mad_in_place};
use crate::scalar::Real;

/// Per-column centre and scale used to standardize inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization<T> {
    pub center: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Standardization<T> {
    /// Applies the stored centre/scale to new rows.
    pub fn apply(&self, rows: &DMatrix<T>) -> Result<DMatrix<T>> {
        if rows.ncols() != self.center.len() {
            return Err(KodError::DimensionMismatch {
                expected: self.center.len(),
                actual: rows.ncols(),
            });
        }
        Ok(DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| {
            (rows[(i, j)] - self.center[j]) / self.scale[j]
        }))
    }
}

/// `n x p` observations, optionally carrying the standardization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T: Real> {
    rows: DMatrix<T>,
    standardization: Option<Standardization<T>>,
}

impl<T: Real> DataMatrix<T> {
    pub fn new(rows: DMatrix<T>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(KodError::InvalidInput("data contains non-finite entries".into()));
        }
        Ok(DataMatrix {
            rows,
            standardization: None,
        })
    }

    /// Builds a matrix from row-major values.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(KodError::InvalidInput(format!(
                "row {i} has {} values, expected {p}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> &DMatrix<T> {
        &self.rows
    }

    pub fn into_rows(self) -> DMatrix<T> {
        self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn standardization(&self) -> Option<&Standardization<T>> {
        self.standardization.as_ref()
    }
}

/// Subtracts the columnwise median and divides by the columnwise MAD.
///
/// A zero-MAD column falls back to its standard deviation; a constant
/// column is only centered (scale 1) and a warning is logged.
pub fn standardize<T: Real>(data: &DataMatrix<T>) -> Result<DataMatrix<T>> {
    let (n, p) = data.rows.shape();
    if n == 0 {
        return Err(KodError::InvalidInput("cannot standardize an empty matrix".into()));
    }
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<T> = data.rows.column(j).iter().copied().collect();
        let (med, mad) = median_mad_in_place(&mut col.clone());
        let s = if mad > T::zero() {
            mad
        } else {
            let mean = col.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(n);
            let var = col.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                / T::from_count(n.saturating_sub(1).max(1));
            let sd = var.sqrt();
            if sd > T::zero() {
                warn!("column {j} has zero MAD; scaling by its standard deviation");
                sd
            } else {
                warn!("column {j} is constant; centering without scaling");
                T::one()
            }
        };
        center.push(med);
        scale.push(s);
    }
    let record = Standardization { center, scale };
    let rows = record.apply(&data.rows)?;
    Ok(DataMatrix {
        rows,
        standardization: Some(record),
    })
}

/// Kernel family and its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec<T> {
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Rbf { sigma: T },
    Linear,
}

impl<T: Real> KernelSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { sigma } if !(sigma.is_finite() && *sigma > T::zero()) => Err(
                KodError::InvalidInput(format!("rbf bandwidth must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match self {
            KernelSpec::Rbf { sigma } => {
                let d2 = sq_dist(x, y);
                (-d2 / (T::lit(2.0) * *sigma * *sigma)).exp()
            }
            KernelSpec::Linear => x.iter().zip(y).fold(T::zero(), |a, (&u, &v)| a + u * v),
        }
    }
}

fn sq_dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |a, (&u, &v)| {
        let d = u - v;
        a + d * d
    })
}

fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Bandwidth from the median heuristic: `sigma^2 = med_{i<j} |x_i - x_j|^2`.
pub fn median_heuristic_sigma<T: Real>(data: &DataMatrix<T>) -> Result<T> {
    let n = data.n();
    if n < 2 {
        return Err(KodError::InvalidInput(
            "median heuristic needs at least two observations".into(),
        ));
    }
    let rows = row_major(&data.rows);
    let mut d2: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..n).map(move |j| sq_dist(&rows[i], &rows[j]))
        })
        .collect();
    let med = median_in_place(&mut d2);
    if med <= T::zero() {
        return Err(KodError::Degenerate(
            "median pairwise distance is zero (too many identical points)".into(),
        ));
    }
    Ok(med.sqrt())
}

/// Cross kernel matrix with entries `k(y_i, x_j)`.
pub fn cross_kernel<T: Real>(y: &DMatrix<T>, x: &DMatrix<T>, spec: &KernelSpec<T>) -> Result<DMatrix<T>> {
    spec.validate()?;
    if y.ncols() != x.ncols() {
        return Err(KodError::DimensionMismatch {
            expected: x.ncols(),
            actual: y.ncols(),
        });
    }
    let yr = row_major(y);
    let xr = row_major(x);
    let row_vals: Vec<Vec<T>> = yr
        .par_iter()
        .map(|yi| xr.iter().map(|xj| spec.eval(yi, xj)).collect())
        .collect();
    Ok(DMatrix::from_fn(y.nrows(), x.nrows(), |i, j| row_vals[i][j]))
}

/// Training kernel matrix `K[i][j] = k(x_i, x_j)`.
pub fn kernel_matrix<T: Real>(data: &DataMatrix<T>, spec: &KernelSpec<T>) -> Result<DMatrix<T>> {
    cross_kernel(&data.rows, &data.rows, spec)
}

/// Column means and grand mean of a training kernel matrix; all that the
/// out-of-sample centering needs from `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringStats<T> {
    pub col_means: Vec<T>,
    pub grand_mean: T,
}

impl<T: Real> CenteringStats<T> {
    pub fn from_kernel(k: &DMatrix<T>) -> Self {
        let n = k.nrows();
        let inv = T::one() / T::from_count(n.max(1));
        let col_means: Vec<T> = (0..k.ncols())
            .map(|j| k.column(j).iter().fold(T::zero(), |a, &v| a + v) * inv)
            .collect();
        let grand_mean = col_means.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(col_means.len().max(1));
        CenteringStats { col_means, grand_mean }
    }

    /// `K^yx - K^yx 1_nn - 1_mn K + 1_mn K 1_nn`.
    pub fn center_cross(&self, k_yx: &DMatrix<T>) -> Result<DMatrix<T>> {
        let n = self.col_means.len();
        if k_yx.ncols() != n {
            return Err(KodError::DimensionMismatch {
                expected: n,
                actual: k_yx.ncols(),
            });
        }
        let inv = T::one() / T::from_count(n.max(1));
        let row_means: Vec<T> = (0..k_yx.nrows())
            .map(|i| k_yx.row(i).iter().fold(T::zero(), |a, &v| a + v) * inv)
            .collect();
        Ok(DMatrix::from_fn(k_yx.nrows(), n, |i, j| {
            k_yx[(i, j)] - row_means[i] - self.col_means[j] + self.grand_mean
        }))
    }
}

/// `K - 1_nn K - K 1_nn + 1_nn K 1_nn`.
pub fn center_kernel<T: Real>(k: &DMatrix<T>) -> Result<DMatrix<T>> {
    if k.nrows() != k.ncols() {
        return Err(KodError::InvalidInput(format!(
            "kernel matrix must be square, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let centered = CenteringStats::from_kernel(k).center_cross(k)?;
    // Symmetrize away rounding asymmetry.
    let n = k.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        (centered[(i, j)] + centered[(j, i)]) * T::lit(0.5)
    }))
}

/// Out-of-sample centering against a training kernel matrix `K`.
pub fn center_cross_kernel<T: Real>(k_yx: &DMatrix<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    if k.nrows() != k.ncols() {
        return Err(KodError::InvalidInput("training kernel matrix must be square".into()));
    }
    CenteringStats::from_kernel(k).center_cross(k_yx)
}
