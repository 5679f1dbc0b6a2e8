//! Per-family projection outlyingness, the denominator floor, median
//! normalized aggregation and the flagging cutoff.

use std::sync::OnceLock;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::directions::{dot, row_major, DirectionSet, Family};
use crate::error::{KodError, Result};
use crate::robust::{huber_location, median, qn_scale};
use crate::scalar::Real;

/// Shift inside the log transform, `LO = ln(SHIFT + KO)`.
pub const LOG_SHIFT: f64 = 0.1;
/// The floor is this fraction of the median random-direction MAD.
pub const FLOOR_FRACTION: f64 = 0.2;
pub const CUTOFF_QUANTILE: f64 = 0.99;

/// Standard normal quantile at `CUTOFF_QUANTILE`.
pub fn z_cutoff() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| {
        Normal::new(0.0, 1.0)
            .expect("standard normal")
            .inverse_cdf(CUTOFF_QUANTILE)
    })
}

/// `c_d = med_v MAD(vᵀf̂) / 5` over the random directions' unfloored MADs.
pub fn denom_floor<T: Real>(random: &DirectionSet<T>) -> Result<T> {
    if random.raw_scales.is_empty() {
        return Err(KodError::InvalidInput(
            "denominator floor needs fitted random directions".into(),
        ));
    }
    let c_d = median(&random.raw_scales)? * T::lit(FLOOR_FRACTION);
    if c_d <= T::zero() {
        return Err(KodError::Degenerate(
            "median MAD over random directions is zero (feature vectors coincide)".into(),
        ));
    }
    Ok(c_d)
}

/// `max_v |vᵀf - center_v| / max(scale_v, c_d)` for each row of `points`.
pub fn outl_per_type<T: Real>(points: &DMatrix<T>, dirs: &DirectionSet<T>, c_d: T) -> Result<Vec<T>> {
    if dirs.is_empty() {
        return Err(KodError::InvalidInput(format!("{} family has no directions", dirs.family)));
    }
    if dirs.centers.len() != dirs.len() || dirs.scales.len() != dirs.len() {
        return Err(KodError::InvalidInput(format!(
            "{} directions have no training statistics",
            dirs.family
        )));
    }
    if points.ncols() != dirs.dim() {
        return Err(KodError::DimensionMismatch {
            expected: dirs.dim(),
            actual: points.ncols(),
        });
    }
    let rows = row_major(points);
    let vecs = row_major(&dirs.vectors);
    let denoms: Vec<T> = dirs.scales.iter().map(|&s| s.max(c_d)).collect();
    Ok(rows
        .par_iter()
        .map(|f| {
            vecs.iter()
                .zip(&dirs.centers)
                .zip(&denoms)
                .fold(T::zero(), |acc, ((v, &c), &s)| acc.max((dot(v, f) - c).abs() / s))
        })
        .collect())
}

/// Raw outlyingness of one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOutlyingness<T> {
    pub family: Family,
    pub values: Vec<T>,
}

/// `KO_i = max_type outl_type(i) / median_type`.
///
/// Families missing from `medians` are ignored.
pub fn combine_ko<T: Real>(per_type: &[FamilyOutlyingness<T>], medians: &[(Family, T)]) -> Result<Vec<T>> {
    let used: Vec<(&FamilyOutlyingness<T>, T)> = per_type
        .iter()
        .filter_map(|f| medians.iter().find(|(fam, _)| *fam == f.family).map(|(_, m)| (f, *m)))
        .collect();
    let Some((first, _)) = used.first() else {
        return Err(KodError::InvalidInput("no direction family available to score".into()));
    };
    let m = first.values.len();
    if used.iter().any(|(f, _)| f.values.len() != m) {
        return Err(KodError::InvalidInput("family outlyingness vectors differ in length".into()));
    }
    Ok((0..m)
        .map(|i| {
            used.iter()
                .fold(T::zero(), |acc, (f, med)| acc.max(f.values[i] / *med))
        })
        .collect())
}

/// Flagging threshold on the KO scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff<T> {
    pub value: T,
    /// Huber location of the log outlyingness.
    pub location: T,
    /// Qn scale of the log outlyingness.
    pub scale: T,
}

pub fn log_outlyingness<T: Real>(ko: T) -> T {
    (T::lit(LOG_SHIFT) + ko).ln()
}

/// `c = exp(μ_M(LO) + z_0.99 σ_Qn(LO)) - 0.1` with `LO = ln(0.1 + KO)`.
///
/// A zero Qn scale (all values equal) gives the location-only cutoff.
pub fn compute_cutoff<T: Real>(ko: &[T]) -> Result<Cutoff<T>> {
    if ko.len() < 2 {
        return Err(KodError::InvalidInput("cutoff needs at least two values".into()));
    }
    let lo: Vec<T> = ko.iter().map(|&k| log_outlyingness(k)).collect();
    let location = huber_location(&lo)?;
    let scale = qn_scale(&lo)?;
    if scale <= T::zero() {
        warn!("Qn scale of log outlyingness is zero; using location-only cutoff");
    }
    let value = (location + T::lit(z_cutoff()) * scale).exp() - T::lit(LOG_SHIFT);
    Ok(Cutoff { value, location, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::{gen_random, Family};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// erf by its Maclaurin series (converges for all x; fine for |x| < 4).
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn z_matches_series_quantile() {
        let cdf = |z: f64| 0.5 * (1.0 + erf_series(z / 2f64.sqrt()));
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.99 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((z_cutoff() - lo).abs() < 1e-9);
        assert!((z_cutoff() - 2.326348).abs() < 1e-5);
    }

    fn set_with(scales: &[f64]) -> DirectionSet<f64> {
        let mut s = DirectionSet::new(Family::Random, DMatrix::from_element(scales.len(), 1, 1.0));
        s.centers = vec![0.0; scales.len()];
        s.raw_scales = scales.to_vec();
        s.scales = scales.to_vec();
        s
    }

    #[test]
    fn denom_floor_examples() {
        assert!((denom_floor(&set_with(&[2.0; 7])).unwrap() - 0.4).abs() < 1e-15);
        assert!((denom_floor(&set_with(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(denom_floor(&set_with(&[0.0, 0.0])), Err(KodError::Degenerate(_))));
    }

    #[test]
    fn denom_floor_isotropic_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = DMatrix::from_fn(1000, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut dirs = gen_random::<f64, _>(2, 1000, &mut Family::Random.rng(5)).unwrap();
        dirs.fit_statistics(&f).unwrap();
        let c_d = denom_floor(&dirs).unwrap();
        assert!((c_d - 0.2).abs() < 0.02, "c_d = {c_d}");
    }

    #[test]
    fn outl_per_type_examples() {
        let mut one = set_with(&[2.0]);
        one.centers = vec![0.0];
        let pts = DMatrix::from_row_slice(2, 1, &[5.0, 0.0]);
        let v = outl_per_type(&pts, &one, 0.1).unwrap();
        assert_eq!(v, vec![2.5, 0.0]);
        // floor binds
        let v = outl_per_type(&pts, &one, 10.0).unwrap();
        assert_eq!(v[0], 0.5);
        let empty = DirectionSet::<f64>::new(Family::Basis, DMatrix::zeros(0, 1));
        assert!(outl_per_type(&pts, &empty, 1.0).is_err());
    }

    #[test]
    fn outl_monotone_in_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = DMatrix::from_fn(80, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut dirs = gen_random::<f64, _>(3, 60, &mut Family::Random.rng(8)).unwrap();
        dirs.fit_statistics(&f).unwrap();
        let mut subset = DirectionSet::new(Family::Random, dirs.vectors.rows(0, 20).into_owned());
        subset.fit_statistics(&f).unwrap();
        let a = outl_per_type(&f, &subset, 0.1).unwrap();
        let b = outl_per_type(&f, &dirs, 0.1).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
    }

    #[test]
    fn combine_examples() {
        let per = vec![
            FamilyOutlyingness { family: Family::OnePoint, values: vec![2.0, 1.0] },
            FamilyOutlyingness { family: Family::Random, values: vec![3.0, 6.0] },
        ];
        let medians = [(Family::OnePoint, 1.0), (Family::Random, 6.0)];
        assert_eq!(combine_ko(&per, &medians).unwrap(), vec![2.0, 1.0]);
        // scaling one family end to end leaves KO unchanged
        let doubled = vec![
            per[0].clone(),
            FamilyOutlyingness { family: Family::Random, values: vec![6.0, 12.0] },
        ];
        assert_eq!(
            combine_ko(&doubled, &[(Family::OnePoint, 1.0), (Family::Random, 12.0)]).unwrap(),
            vec![2.0, 1.0]
        );
        assert!(combine_ko::<f64>(&per, &[]).is_err());
    }

    #[test]
    fn cutoff_degenerate_branch() {
        let c = compute_cutoff(&[1.0f64; 10]).unwrap();
        assert!((c.value - 1.0).abs() < 1e-12);
        assert_eq!(c.scale, 0.0);
        assert!(compute_cutoff(&[1.0]).is_err());
    }

    #[test]
    fn cutoff_flags_about_one_percent_of_lognormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mu, s) = (0.3, 0.4);
        let ko: Vec<f64> = (0..10_000)
            .map(|_| (mu + s * rng.sample::<f64, _>(StandardNormal)).exp() - LOG_SHIFT)
            .collect();
        let c = compute_cutoff(&ko).unwrap();
        let rate = ko.iter().filter(|&&k| k >= c.value).count() as f64 / ko.len() as f64;
        assert!((0.005..=0.016).contains(&rate), "rate {rate}");
    }
}
