//! Univariate and multivariate robust estimators.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{KodError, Result};
use crate::scalar::Real;

/// Normal-consistency factor applied to the raw median absolute deviation.
pub const MAD_CONSTANT: f64 = 1.483;

/// Normal-consistency factor for Qn (no small-sample correction).
pub const QN_CONSTANT: f64 = 2.2219;

/// Truncation constant of the Huber psi function.
pub const HUBER_K: f64 = 1.5;

const HUBER_TOL: f64 = 1e-10;
const HUBER_MAX_ITER: usize = 100;
const L1_TOL: f64 = 1e-8;
const L1_MAX_ITER: usize = 500;

fn cmp<T: Real>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn check_sample<T: Real>(sample: &[T], min_len: usize, what: &str) -> Result<()> {
    if sample.len() < min_len {
        return Err(KodError::InvalidInput(format!(
            "{what} needs at least {min_len} value(s), got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(KodError::InvalidInput(format!("{what}: non-finite value in sample")));
    }
    Ok(())
}

/// Median of a scratch buffer, reordering it. The buffer must be non-empty.
pub(crate) fn median_in_place<T: Real>(buf: &mut [T]) -> T {
    let n = buf.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (left, upper, _) = buf.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().max_by(cmp).expect("even n >= 2");
        (lower + upper) * T::lit(0.5)
    }
}

/// Median and scaled MAD of a scratch buffer, reordering it.
pub(crate) fn median_mad_in_place<T: Real>(buf: &mut [T]) -> (T, T) {
    let med = median_in_place(buf);
    for v in buf.iter_mut() {
        *v = (*v - med).abs();
    }
    let mad = median_in_place(buf) * T::lit(MAD_CONSTANT);
    (med, mad)
}

/// Sample median; even lengths average the two middle order statistics.
pub fn median<T: Real>(sample: &[T]) -> Result<T> {
    check_sample(sample, 1, "median")?;
    Ok(median_in_place(&mut sample.to_vec()))
}

/// Median absolute deviation around the median, times 1.483.
pub fn mad<T: Real>(sample: &[T]) -> Result<T> {
    check_sample(sample, 1, "mad")?;
    Ok(median_mad_in_place(&mut sample.to_vec()).1)
}

/// Qn scale estimator of Rousseeuw and Croux.
///
/// Returns `2.2219` times the `C(h, 2)`-th smallest pairwise absolute
/// difference, `h = n/2 + 1`. The order statistic is found exactly without
/// materialising all pairs when `n` is large.
pub fn qn_scale<T: Real>(sample: &[T]) -> Result<T> {
    check_sample(sample, 2, "qn_scale")?;
    let mut x = sample.to_vec();
    x.sort_unstable_by(cmp);
    let n = x.len();
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    Ok(kth_pairwise_difference(&x, k) * T::lit(QN_CONSTANT))
}

/// Number of pairs `i < j` of a sorted sample with `x[j] - x[i] <= t`.
fn count_diffs_le<T: Real>(sorted: &[T], t: T) -> usize {
    let mut count = 0;
    let mut i = 0;
    for j in 0..sorted.len() {
        while sorted[j] - sorted[i] > t {
            i += 1;
        }
        count += j - i;
    }
    count
}

/// The `k`-th smallest (1-based) of all pairwise differences of a sorted sample.
fn kth_pairwise_difference<T: Real>(sorted: &[T], k: usize) -> T {
    let n = sorted.len();
    let budget = (4 * n).max(1 << 16);
    let mut lo = T::zero();
    let mut count_lo = count_diffs_le(sorted, lo);
    if count_lo >= k {
        return T::zero();
    }
    let mut hi = sorted[n - 1] - sorted[0];
    let mut count_hi = n * (n - 1) / 2;
    // Invariant: count_lo < k <= count_hi.
    while count_hi - count_lo > budget {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            // No representable value strictly between: every difference in (lo, hi] equals hi.
            return hi;
        }
        let c = count_diffs_le(sorted, mid);
        if c >= k {
            hi = mid;
            count_hi = c;
        } else {
            lo = mid;
            count_lo = c;
        }
    }
    let mut window = Vec::with_capacity(count_hi - count_lo);
    let (mut a, mut b) = (0, 0);
    for j in 0..n {
        while sorted[j] - sorted[a] > hi {
            a += 1;
        }
        while sorted[j] - sorted[b] > lo {
            b += 1;
        }
        window.extend((a..b).map(|i| sorted[j] - sorted[i]));
    }
    let rank = k - count_lo - 1;
    *window.select_nth_unstable_by(rank, cmp).1
}

/// Huber M-estimator of location with the MAD as fixed auxiliary scale.
///
/// Iteratively reweighted means from the median start; falls back to the
/// median when the MAD is zero.
pub fn huber_location<T: Real>(sample: &[T]) -> Result<T> {
    check_sample(sample, 1, "huber_location")?;
    let mut buf = sample.to_vec();
    let med = median_in_place(&mut buf);
    buf.copy_from_slice(sample);
    let (_, scale) = median_mad_in_place(&mut buf);
    if scale <= T::zero() {
        return Ok(med);
    }
    let k = T::lit(HUBER_K);
    let tol = T::lit(HUBER_TOL) * scale;
    let mut mu = med;
    for _ in 0..HUBER_MAX_ITER {
        let (mut num, mut den) = (T::zero(), T::zero());
        for &y in sample {
            let r = ((y - mu) / scale).abs();
            let w = if r <= k { T::one() } else { k / r };
            num += w * y;
            den += w;
        }
        let next = num / den;
        let step = (next - mu).abs();
        mu = next;
        if step <= tol {
            break;
        }
    }
    Ok(mu)
}

fn row_dist<T: Real>(points: &DMatrix<T>, i: usize, y: &DVector<T>) -> T {
    let mut s = T::zero();
    for c in 0..points.ncols() {
        let d = points[(i, c)] - y[c];
        s += d * d;
    }
    s.sqrt()
}

/// Sum of Euclidean distances from `m` to every row of `points`.
pub fn l1_objective<T: Real>(points: &DMatrix<T>, m: &DVector<T>) -> T {
    (0..points.nrows()).fold(T::zero(), |acc, i| acc + row_dist(points, i, m))
}

/// Spatial (L1) median of the rows of `points`.
///
/// Weiszfeld iteration started at the mean, with the Vardi-Zhang step when
/// the iterate lands on a data point.
pub fn l1_median<T: Real>(points: &DMatrix<T>) -> Result<DVector<T>> {
    let (n, q) = points.shape();
    if n == 0 || q == 0 {
        return Err(KodError::InvalidInput("l1_median needs a non-empty matrix".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(KodError::InvalidInput("l1_median: non-finite entry".into()));
    }
    let mut y: DVector<T> = points.row_mean().transpose();
    if n == 1 {
        return Ok(y);
    }
    let spread = (0..n).fold(T::zero(), |acc, i| acc.max(row_dist(points, i, &y)));
    if spread <= T::zero() {
        return Ok(y);
    }
    let coincide = T::lit(1e-12) * spread;
    let tol = T::lit(L1_TOL);

    for _ in 0..L1_MAX_ITER {
        let mut num = DVector::<T>::zeros(q);
        let mut pull = DVector::<T>::zeros(q);
        let mut den = T::zero();
        let mut total = T::zero();
        let mut eta = 0usize;
        for i in 0..n {
            let d = row_dist(points, i, &y);
            total += d;
            if d <= coincide {
                eta += 1;
                continue;
            }
            let w = T::one() / d;
            den += w;
            for c in 0..q {
                num[c] += points[(i, c)] * w;
                pull[c] += (points[(i, c)] - y[c]) * w;
            }
        }
        if den <= T::zero() {
            return Ok(y);
        }
        let weiszfeld = num / den;
        let next = if eta == 0 {
            weiszfeld
        } else {
            let r = pull.norm();
            let eta = T::from_count(eta);
            if r <= eta {
                // The coincident data point is itself the minimiser.
                return Ok(y);
            }
            let gamma = eta / r;
            weiszfeld * (T::one() - gamma) + &y * gamma
        };
        let step = (&next - &y).norm();
        y = next;
        let scale = total / T::from_count(n);
        if step <= tol * scale.max(y.norm()) {
            break;
        }
    }
    // Near a data-point minimiser the iteration creeps in sublinearly; snap
    // onto the closest point when it satisfies the optimality condition.
    let nearest = (0..n)
        .map(|i| (i, row_dist(points, i, &y)))
        .fold((0, T::max_value().unwrap()), |a, b| if b.1 < a.1 { b } else { a })
        .0;
    let candidate: DVector<T> = points.row(nearest).transpose();
    let mut pull = DVector::<T>::zeros(q);
    let mut mult = 0usize;
    for i in 0..n {
        let d = row_dist(points, i, &candidate);
        if d <= coincide {
            mult += 1;
            continue;
        }
        for c in 0..q {
            pull[c] += (points[(i, c)] - candidate[c]) / d;
        }
    }
    // A margin keeps boundary cases (e.g. two points) on the iterate.
    if pull.norm() < T::from_count(mult) * (T::one() - T::lit(1e-9)) {
        return Ok(candidate);
    }
    Ok(y)
}
