//! Fitting and scoring: the full kernel outlier detection pipeline.

use std::time::{Duration, Instant};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::directions::{
    gen_basis, gen_one_point, gen_random, gen_two_point, sign_frame, DirectionSet, Family,
    DEFAULT_RANDOM_COUNT, DEFAULT_TWO_POINT_CAP,
};
use crate::error::{KodError, Result, Stage};
use crate::feature::{decompose, embed, FeatureModel, DEFAULT_EIG_FLOOR, DEFAULT_RETENTION};
use crate::kernel::{
    cross_kernel, kernel_matrix, median_heuristic_sigma, standardize, CenteringStats, DataMatrix,
    KernelSpec, Standardization,
};
use crate::outlyingness::{
    combine_ko, compute_cutoff, denom_floor, log_outlyingness, outl_per_type, Cutoff,
    FamilyOutlyingness,
};
use crate::robust::median;
use crate::scalar::Real;

/// How the kernel is chosen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sigma", rename_all = "snake_case")]
pub enum KernelChoice {
    /// RBF with the median-heuristic bandwidth.
    RbfAuto,
    Rbf(f64),
    Linear,
}

/// Fit-time settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KodConfig {
    pub kernel: KernelChoice,
    pub retention: f64,
    pub eig_floor: f64,
    /// Families entering the KO maximum. The random family is always
    /// generated because it defines the denominator floor.
    pub families: Vec<Family>,
    pub random_count: usize,
    pub two_point_cap: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for KodConfig {
    fn default() -> Self {
        KodConfig {
            kernel: KernelChoice::RbfAuto,
            retention: DEFAULT_RETENTION,
            eig_floor: DEFAULT_EIG_FLOOR,
            families: Family::ALL.to_vec(),
            random_count: DEFAULT_RANDOM_COUNT,
            two_point_cap: DEFAULT_TWO_POINT_CAP,
            seed: 0,
            standardize: false,
        }
    }
}

impl KodConfig {
    /// Random-directions-only configuration (kernel random projection depth).
    pub fn random_only(random_count: usize) -> Self {
        KodConfig {
            families: vec![Family::Random],
            random_count,
            ..KodConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(KodError::InvalidInput("at least one direction family is required".into()));
        }
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return Err(KodError::InvalidInput(format!(
                "retention must lie in (0, 1], got {}",
                self.retention
            )));
        }
        if self.random_count == 0 {
            return Err(KodError::InvalidInput("random_count must be positive".into()));
        }
        if self.two_point_cap == 0 {
            return Err(KodError::InvalidInput("two_point_cap must be positive".into()));
        }
        if let KernelChoice::Rbf(s) = self.kernel {
            if !(s.is_finite() && s > 0.0) {
                return Err(KodError::InvalidInput(format!("rbf bandwidth must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn uses(&self, family: Family) -> bool {
        self.families.contains(&family)
    }
}

/// Wall-clock time spent in each fit stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub kernel: Duration,
    pub decompose: Duration,
    pub directions: Duration,
    pub outlyingness: Duration,
    pub cutoff: Duration,
    pub total: Duration,
}

/// Per-family scores for a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScores<T> {
    pub family: Family,
    pub raw: Vec<T>,
    /// `raw / training median`.
    pub normalized: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport<T> {
    pub families: Vec<FamilyScores<T>>,
    pub ko: Vec<T>,
    pub lo: Vec<T>,
    pub flagged: Vec<bool>,
    pub cutoff: T,
    pub q: usize,
    pub rank_full: usize,
    pub family_sizes: Vec<(Family, usize)>,
    pub timings: Option<StageTimings>,
}

impl<T: Real> ScoreReport<T> {
    pub fn len(&self) -> usize {
        self.ko.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ko.is_empty()
    }

    pub fn family(&self, family: Family) -> Option<&FamilyScores<T>> {
        self.families.iter().find(|f| f.family == family)
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    /// Threshold that the cutoff rule would give on one family's normalized
    /// values alone. Diagnostic only; flagging always uses the KO cutoff.
    pub fn family_cutoff(&self, family: Family) -> Option<Result<Cutoff<T>>> {
        self.family(family).map(|f| compute_cutoff(&f.normalized))
    }
}

/// Everything the outlyingness stage learns from training feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDirections<T: Real> {
    /// Non-empty families entering the KO maximum, with fitted statistics.
    pub sets: Vec<DirectionSet<T>>,
    pub c_d: T,
    pub type_medians: Vec<(Family, T)>,
    pub training: Vec<FamilyOutlyingness<T>>,
    pub ko: Vec<T>,
    pub cutoff: Cutoff<T>,
    /// Only the direction, outlyingness and cutoff slots are filled.
    pub timings: StageTimings,
}

fn build_family<T: Real>(family: Family, features: &DMatrix<T>, config: &KodConfig) -> Result<DirectionSet<T>> {
    let q = features.ncols();
    match family {
        Family::OnePoint => gen_one_point(features),
        Family::TwoPoint => gen_two_point(features, config.two_point_cap, &mut family.rng(config.seed)),
        Family::Basis => gen_basis(q),
        Family::Random => {
            let mut set = gen_random(q, config.random_count, &mut family.rng(config.seed))?;
            set.reflect_columns(&sign_frame(features));
            Ok(set)
        }
    }
}

/// Directions, floor, per-family outlyingness, KO and cutoff from the
/// training feature matrix (`n x q`).
pub fn train_directions<T: Real>(features: &DMatrix<T>, config: &KodConfig) -> Result<TrainedDirections<T>> {
    config.validate()?;
    if features.nrows() < 2 {
        return Err(KodError::InvalidInput("need at least two feature vectors".into()));
    }
    let mut timings = StageTimings::default();
    let clock = Instant::now();
    let mut random = build_family(Family::Random, features, config).map_err(|e| e.at(Stage::Directions))?;
    random.fit_statistics(features).map_err(|e| e.at(Stage::Directions))?;
    let c_d = denom_floor(&random).map_err(|e| e.at(Stage::DenominatorFloor))?;

    let mut sets = Vec::new();
    for &family in Family::ALL.iter().filter(|f| config.uses(**f)) {
        let mut set = if family == Family::Random {
            random.clone()
        } else {
            let mut s = build_family(family, features, config).map_err(|e| e.at(Stage::Directions))?;
            if s.is_empty() {
                warn!("{family} family is empty and is left out of the KO maximum");
                continue;
            }
            s.fit_statistics(features).map_err(|e| e.at(Stage::Directions))?;
            s
        };
        set.apply_floor(c_d);
        sets.push(set);
    }

    timings.directions = clock.elapsed();
    let clock = Instant::now();
    let mut training = Vec::with_capacity(sets.len());
    let mut type_medians = Vec::with_capacity(sets.len());
    let mut kept = Vec::with_capacity(sets.len());
    for set in sets {
        let values = outl_per_type(features, &set, c_d).map_err(|e| e.at(Stage::Outlyingness))?;
        let med = median(&values).map_err(|e| e.at(Stage::Outlyingness))?;
        if med <= T::zero() {
            warn!("{} family has zero median outlyingness and is left out", set.family);
            continue;
        }
        type_medians.push((set.family, med));
        training.push(FamilyOutlyingness { family: set.family, values });
        kept.push(set);
    }
    if kept.is_empty() {
        return Err(KodError::Degenerate("no usable direction family".into()).at(Stage::Outlyingness));
    }
    let ko = combine_ko(&training, &type_medians).map_err(|e| e.at(Stage::Outlyingness))?;
    timings.outlyingness = clock.elapsed();
    let clock = Instant::now();
    let cutoff = compute_cutoff(&ko).map_err(|e| e.at(Stage::Cutoff))?;
    timings.cutoff = clock.elapsed();
    Ok(TrainedDirections {
        sets: kept,
        c_d,
        type_medians,
        training,
        ko,
        cutoff,
        timings,
    })
}

/// A fitted detector.
#[derive(Debug, Clone, PartialEq)]
pub struct KodModel<T: Real> {
    pub config: KodConfig,
    pub standardization: Option<Standardization<T>>,
    pub kernel: KernelSpec<T>,
    /// Training rows after standardization.
    pub training: DMatrix<T>,
    pub centering: CenteringStats<T>,
    pub features: FeatureModel<T>,
    pub directions: Vec<DirectionSet<T>>,
    pub c_d: T,
    pub type_medians: Vec<(Family, T)>,
    pub cutoff: T,
    /// Median KO over the training points.
    pub median_ko: T,
}

fn timed<R>(slot: &mut Duration, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

/// Runs the whole pipeline on `data` and returns the model with the
/// training-set report.
pub fn fit<T: Real>(data: &DataMatrix<T>, config: &KodConfig) -> Result<(KodModel<T>, ScoreReport<T>)> {
    config.validate()?;
    if data.n() < 3 {
        return Err(KodError::InvalidInput(format!(
            "need at least 3 observations, got {}",
            data.n()
        )));
    }
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let (rows, standardization) = if config.standardize {
        let s = standardize(data).map_err(|e| e.at(Stage::Standardize))?;
        let record = s.standardization().cloned();
        (DataMatrix::new(s.into_rows())?, record)
    } else {
        (DataMatrix::new(data.rows().clone())?, None)
    };

    let kernel = match config.kernel {
        KernelChoice::RbfAuto => {
            let sigma = median_heuristic_sigma(&rows).map_err(|e| e.at(Stage::Bandwidth))?;
            KernelSpec::Rbf { sigma }
        }
        KernelChoice::Rbf(s) => KernelSpec::Rbf { sigma: T::lit(s) },
        KernelChoice::Linear => KernelSpec::Linear,
    };

    let (k, centering, k_tilde) = timed(&mut timings.kernel, || -> Result<_> {
        let k = kernel_matrix(&rows, &kernel).map_err(|e| e.at(Stage::Kernel))?;
        let centering = CenteringStats::from_kernel(&k);
        let k_tilde = centering.center_cross(&k).map_err(|e| e.at(Stage::Kernel))?;
        Ok((k, centering, k_tilde))
    })?;
    drop(k);
    let k_tilde = symmetrize(k_tilde);

    let features = timed(&mut timings.decompose, || {
        decompose(&k_tilde, config.retention, config.eig_floor).map_err(|e| e.at(Stage::Decompose))
    })?;
    drop(k_tilde);

    let trained = train_directions(&features.features, config)?;
    timings.directions = trained.timings.directions;
    timings.outlyingness = trained.timings.outlyingness;
    timings.cutoff = trained.timings.cutoff;
    timings.total = start.elapsed();

    let report = assemble_report(
        &trained.training,
        &trained.type_medians,
        trained.ko.clone(),
        trained.cutoff.value,
        &features,
        &trained.sets,
        Some(timings),
    );
    let median_ko = median(&trained.ko)?;
    let model = KodModel {
        config: config.clone(),
        standardization,
        kernel,
        training: rows.into_rows(),
        centering,
        features,
        directions: trained.sets,
        c_d: trained.c_d,
        type_medians: trained.type_medians,
        cutoff: trained.cutoff.value,
        median_ko,
    };
    Ok((model, report))
}

fn symmetrize<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)]) * T::lit(0.5))
}

fn assemble_report<T: Real>(
    per_type: &[FamilyOutlyingness<T>],
    medians: &[(Family, T)],
    ko: Vec<T>,
    cutoff: T,
    features: &FeatureModel<T>,
    sets: &[DirectionSet<T>],
    timings: Option<StageTimings>,
) -> ScoreReport<T> {
    let families = per_type
        .iter()
        .map(|f| {
            let med = medians
                .iter()
                .find(|(fam, _)| *fam == f.family)
                .map(|(_, m)| *m)
                .expect("median for every scored family");
            FamilyScores {
                family: f.family,
                raw: f.values.clone(),
                normalized: f.values.iter().map(|&v| v / med).collect(),
            }
        })
        .collect();
    let lo = ko.iter().map(|&k| log_outlyingness(k)).collect();
    let flagged = ko.iter().map(|&k| k >= cutoff).collect();
    ScoreReport {
        families,
        ko,
        lo,
        flagged,
        cutoff,
        q: features.q(),
        rank_full: features.rank_full,
        family_sizes: sets.iter().map(|s| (s.family, s.len())).collect(),
        timings,
    }
}

impl<T: Real> KodModel<T> {
    /// Input width the model expects.
    pub fn p(&self) -> usize {
        self.training.ncols()
    }

    pub fn q(&self) -> usize {
        self.features.q()
    }

    /// Approximate feature vectors of new (raw, unstandardized) rows.
    pub fn embed(&self, rows: &DMatrix<T>) -> Result<DMatrix<T>> {
        if rows.ncols() != self.p() {
            return Err(KodError::DimensionMismatch {
                expected: self.p(),
                actual: rows.ncols(),
            });
        }
        let y = match &self.standardization {
            Some(s) => s.apply(rows)?,
            None => rows.clone(),
        };
        let k_yx = cross_kernel(&y, &self.training, &self.kernel).map_err(|e| e.at(Stage::Kernel))?;
        let centered = self.centering.center_cross(&k_yx).map_err(|e| e.at(Stage::Kernel))?;
        embed(&centered, &self.features).map_err(|e| e.at(Stage::Embed))
    }

    /// Scores new rows against the training statistics.
    pub fn score(&self, rows: &DMatrix<T>) -> Result<ScoreReport<T>> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(KodError::InvalidInput("rows to score contain non-finite values".into()));
        }
        let f = self.embed(rows)?;
        self.score_features(&f)
    }

    /// Scores feature vectors that are already in the model's coordinates.
    pub fn score_features(&self, features: &DMatrix<T>) -> Result<ScoreReport<T>> {
        let mut per_type = Vec::with_capacity(self.directions.len());
        for set in &self.directions {
            let values = outl_per_type(features, set, self.c_d).map_err(|e| e.at(Stage::Outlyingness))?;
            per_type.push(FamilyOutlyingness { family: set.family, values });
        }
        let ko = combine_ko(&per_type, &self.type_medians).map_err(|e| e.at(Stage::Outlyingness))?;
        Ok(assemble_report(
            &per_type,
            &self.type_medians,
            ko,
            self.cutoff,
            &self.features,
            &self.directions,
            None,
        ))
    }
}
