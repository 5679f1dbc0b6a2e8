//! The four families of unit projection directions in feature coordinates.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KodError, Result};
use crate::robust::{l1_median, median_mad_in_place};
use crate::scalar::Real;

pub const DEFAULT_RANDOM_COUNT: usize = 1000;
pub const DEFAULT_TWO_POINT_CAP: usize = 5000;

/// Candidate directions shorter than this are dropped.
const MIN_DIRECTION_NORM: f64 = 1e-12;
const TWO_POINT_ATTEMPTS_PER_SLOT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    OnePoint,
    TwoPoint,
    Basis,
    Random,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::OnePoint, Family::TwoPoint, Family::Basis, Family::Random];

    pub fn name(self) -> &'static str {
        match self {
            Family::OnePoint => "one_point",
            Family::TwoPoint => "two_point",
            Family::Basis => "basis",
            Family::Random => "random",
        }
    }

    /// ChaCha stream used for this family's sampling.
    fn stream(self) -> u64 {
        match self {
            Family::OnePoint => 1,
            Family::TwoPoint => 2,
            Family::Basis => 3,
            Family::Random => 4,
        }
    }

    /// Generator for this family derived from the root seed.
    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.stream());
        rng
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = KodError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one" | "one_point" | "one-point" => Ok(Family::OnePoint),
            "two" | "two_point" | "two-point" => Ok(Family::TwoPoint),
            "basis" => Ok(Family::Basis),
            "random" => Ok(Family::Random),
            other => Err(KodError::InvalidInput(format!("unknown direction family '{other}'"))),
        }
    }
}

/// A family of unit directions (rows of `vectors`) with the robust centre and
/// scale of the training projections on each.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet<T: Real> {
    pub family: Family,
    /// `d x q`, unit rows.
    pub vectors: DMatrix<T>,
    /// Median of the training projections per direction.
    pub centers: Vec<T>,
    /// MAD of the training projections per direction, before flooring.
    pub raw_scales: Vec<T>,
    /// `max(raw_scale, c_d)`.
    pub scales: Vec<T>,
}

impl<T: Real> DirectionSet<T> {
    pub fn new(family: Family, vectors: DMatrix<T>) -> Self {
        DirectionSet {
            family,
            vectors,
            centers: Vec::new(),
            raw_scales: Vec::new(),
            scales: Vec::new(),
        }
    }

    fn from_rows(family: Family, q: usize, rows: Vec<DVector<T>>) -> Self {
        let vectors = DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]);
        Self::new(family, vectors)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Computes per-direction median and MAD of the projected `features`.
    pub fn fit_statistics(&mut self, features: &DMatrix<T>) -> Result<()> {
        if features.ncols() != self.dim() {
            return Err(KodError::DimensionMismatch {
                expected: self.dim(),
                actual: features.ncols(),
            });
        }
        let rows = row_major(features);
        let dirs = row_major(&self.vectors);
        let stats: Vec<(T, T)> = dirs
            .par_iter()
            .map(|v| {
                let mut proj: Vec<T> = rows.iter().map(|f| dot(v, f)).collect();
                median_mad_in_place(&mut proj)
            })
            .collect();
        self.centers = stats.iter().map(|s| s.0).collect();
        self.raw_scales = stats.iter().map(|s| s.1).collect();
        self.scales = self.raw_scales.clone();
        Ok(())
    }

    /// Floors every scale at `c_d`.
    pub fn apply_floor(&mut self, c_d: T) {
        self.scales = self.raw_scales.iter().map(|&s| s.max(c_d)).collect();
    }

    /// Multiplies column `j` of every direction by `signs[j]`.
    pub fn reflect_columns(&mut self, signs: &[T]) {
        for (j, &s) in signs.iter().enumerate() {
            self.vectors.column_mut(j).scale_mut(s);
        }
    }
}

pub(crate) fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn normalized<T: Real>(v: DVector<T>) -> Option<DVector<T>> {
    let n = v.norm();
    (n >= T::lit(MIN_DIRECTION_NORM)).then(|| v.unscale(n))
}

/// Sign of the largest-magnitude entry of each feature column.
///
/// Flipping a feature column flips its entry here, so directions reflected
/// by this frame follow sign changes of the eigenvectors.
pub fn sign_frame<T: Real>(features: &DMatrix<T>) -> Vec<T> {
    features
        .column_iter()
        .map(|col| {
            let mut best = T::zero();
            for &v in col.iter() {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            if best < T::zero() {
                -T::one()
            } else {
                T::one()
            }
        })
        .collect()
}

/// Directions from the L1-median of the features through every feature vector.
pub fn gen_one_point<T: Real>(features: &DMatrix<T>) -> Result<DirectionSet<T>> {
    let (n, q) = features.shape();
    if n < 2 {
        return Err(KodError::InvalidInput("one-point directions need n >= 2".into()));
    }
    let center = l1_median(features)?;
    let rows: Vec<DVector<T>> = (0..n)
        .filter_map(|i| normalized(features.row(i).transpose() - &center))
        .collect();
    if rows.is_empty() {
        warn!("all feature vectors coincide with their L1-median; one-point family is empty");
    }
    Ok(DirectionSet::from_rows(Family::OnePoint, q, rows))
}

/// Directions through pairs of feature vectors.
///
/// All pairs when there are at most `cap` of them; otherwise `cap` distinct
/// pairs drawn uniformly. Zero-length pairs are skipped and replaced by
/// further draws, within a bounded number of attempts.
pub fn gen_two_point<T: Real, R: Rng>(features: &DMatrix<T>, cap: usize, rng: &mut R) -> Result<DirectionSet<T>> {
    let (n, q) = features.shape();
    if n < 2 {
        return Err(KodError::InvalidInput("two-point directions need n >= 2".into()));
    }
    let pair = |i: usize, j: usize| normalized(features.row(i).transpose() - features.row(j).transpose());
    let total = n * (n - 1) / 2;
    let mut rows = Vec::with_capacity(total.min(cap));
    if total <= cap {
        for i in 0..n {
            for j in i + 1..n {
                rows.extend(pair(i, j));
            }
        }
    } else {
        let mut seen = HashSet::with_capacity(cap);
        let mut attempts = 0;
        let limit = cap.saturating_mul(TWO_POINT_ATTEMPTS_PER_SLOT);
        while rows.len() < cap && seen.len() < total && attempts < limit {
            attempts += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                rows.extend(pair(key.0, key.1));
            }
        }
    }
    if rows.is_empty() {
        warn!("all feature vectors are identical; two-point family is empty");
    }
    Ok(DirectionSet::from_rows(Family::TwoPoint, q, rows))
}

/// The `q` coordinate axes of the feature space.
pub fn gen_basis<T: Real>(q: usize) -> Result<DirectionSet<T>> {
    if q == 0 {
        return Err(KodError::InvalidInput("basis directions need q >= 1".into()));
    }
    Ok(DirectionSet::new(Family::Basis, DMatrix::identity(q, q)))
}

/// `count` directions uniform on the unit sphere in `q` dimensions
/// (normalized standard normal vectors).
pub fn gen_random<T: Real, R: Rng>(q: usize, count: usize, rng: &mut R) -> Result<DirectionSet<T>> {
    if q == 0 {
        return Err(KodError::InvalidInput("random directions need q >= 1".into()));
    }
    let mut rows = Vec::with_capacity(count);
    while rows.len() < count {
        let g = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Some(u) = normalized(g) {
            rows.push(u.map(T::lit));
        }
    }
    Ok(DirectionSet::from_rows(Family::Random, q, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn assert_unit_rows(set: &DirectionSet<f64>) {
        for row in set.vectors.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn one_point_examples() {
        let f = m(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let set = gen_one_point(&f).unwrap();
        assert_eq!(set.vectors, m(2, 2, &[1.0, 0.0, -1.0, 0.0]));

        let f = m(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.1, 0.2, -1.5]);
        let set = gen_one_point(&f).unwrap();
        assert_eq!(set.len(), 4);
        assert_unit_rows(&set);

        // The centre of a symmetric star is a data point and gets no direction.
        let f = m(5, 2, &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        assert_eq!(gen_one_point(&f).unwrap().len(), 4);
    }

    #[test]
    fn two_point_examples() {
        let mut rng = Family::TwoPoint.rng(1);
        let f = m(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        assert_eq!(gen_two_point(&f, 5000, &mut rng).unwrap().len(), 3);

        let f = DMatrix::from_fn(200, 3, |i, j| ((i * 7 + j * 13) % 17) as f64 + i as f64 * 0.01);
        let set = gen_two_point(&f, 5000, &mut rng).unwrap();
        assert_eq!(set.len(), 5000);
        assert_unit_rows(&set);

        // Rows 0 and 2 coincide: their pair is dropped.
        let f = m(3, 2, &[1.0, 1.0, 0.0, 2.0, 1.0, 1.0]);
        let set = gen_two_point(&f, 5000, &mut rng).unwrap();
        assert_eq!(set.len(), 2);

        let same = m(3, 1, &[2.0, 2.0, 2.0]);
        assert!(gen_two_point(&same, 5000, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn two_point_uncapped_enumerates_each_pair_once() {
        let f = DMatrix::from_fn(12, 2, |i, j| (i as f64).powi(2) * 0.1 + j as f64 * i as f64);
        let set = gen_two_point(&f, 5000, &mut Family::TwoPoint.rng(0)).unwrap();
        assert_eq!(set.len(), 66);
        let mut expected = Vec::new();
        for i in 0..12 {
            for j in i + 1..12 {
                let d = f.row(i) - f.row(j);
                let norm = d.norm();
                expected.push(d / norm);
            }
        }
        for (row, e) in set.vectors.row_iter().zip(&expected) {
            assert!((row - e).norm() < 1e-14);
        }
    }

    #[test]
    fn two_point_capped_is_deterministic() {
        let f = DMatrix::from_fn(150, 2, |i, j| ((i * 31 + j * 17) % 101) as f64);
        let a = gen_two_point(&f, 500, &mut Family::TwoPoint.rng(9)).unwrap();
        let b = gen_two_point(&f, 500, &mut Family::TwoPoint.rng(9)).unwrap();
        assert_eq!(a.vectors, b.vectors);
        assert_eq!(a.len(), 500);
    }

    #[test]
    fn basis_examples() {
        let set = gen_basis::<f64>(3).unwrap();
        assert_eq!(set.vectors, DMatrix::identity(3, 3));
        let f = m(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let proj = &f * set.vectors.transpose();
        assert_eq!(proj, f);
        assert!(gen_basis::<f64>(0).is_err());
    }

    #[test]
    fn random_examples() {
        let set = gen_random::<f64, _>(5, 1000, &mut Family::Random.rng(3)).unwrap();
        assert_eq!(set.len(), 1000);
        assert_unit_rows(&set);
        let line = gen_random::<f64, _>(1, 50, &mut Family::Random.rng(3)).unwrap();
        assert!(line.vectors.iter().all(|v| v.abs() == 1.0));
        let big = gen_random::<f64, _>(3, 10_000, &mut Family::Random.rng(4)).unwrap();
        let mean = big.vectors.row_mean();
        assert!(mean.iter().all(|v| v.abs() < 0.05), "{mean}");
        let again = gen_random::<f64, _>(5, 1000, &mut Family::Random.rng(3)).unwrap();
        assert_eq!(set.vectors, again.vectors);
    }

    #[test]
    fn statistics_and_floor() {
        let f = m(4, 1, &[0.0, 1.0, 2.0, 10.0]);
        let mut set = gen_basis::<f64>(1).unwrap();
        set.fit_statistics(&f).unwrap();
        assert_eq!(set.centers, vec![1.5]);
        assert!((set.raw_scales[0] - 1.483).abs() < 1e-12);
        set.apply_floor(3.0);
        assert_eq!(set.scales, vec![3.0]);
        assert!(set.fit_statistics(&m(1, 2, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("one".parse::<Family>().unwrap(), Family::OnePoint);
        assert_eq!("two_point".parse::<Family>().unwrap(), Family::TwoPoint);
        assert!("three".parse::<Family>().is_err());
    }

    proptest! {
        #[test]
        fn one_point_rotates_with_features(data in prop::collection::vec(-3.0..3.0f64, 20..60), theta in 0.0..6.3f64) {
            let n = data.len() / 2;
            let f = DMatrix::from_row_slice(n, 2, &data[..2 * n]);
            let r = m(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
            let a = gen_one_point(&f).unwrap();
            let b = gen_one_point(&(&f * &r)).unwrap();
            prop_assert_eq!(a.len(), b.len());
            prop_assert!((&a.vectors * &r - &b.vectors).abs().max() < 1e-6);
        }
    }
}
