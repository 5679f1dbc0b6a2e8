//! JSON model files.
//!
//! Every float is written with 17 significant digits so a reloaded model
//! reproduces the scores of the one that was saved.

use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detector::{KodConfig, KodModel};
use crate::directions::{DirectionSet, Family};
use crate::error::{KodError, Result};
use crate::feature::FeatureModel;
use crate::kernel::{CenteringStats, KernelSpec, Standardization};
use crate::scalar::Real;

pub const SCHEMA: &str = "kod-model";
pub const FORMAT_VERSION: u32 = 1;

/// Writes floats as `d.dddddddddddddddde±x`.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

#[derive(Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl Matrix {
    fn from<T: Real>(m: &DMatrix<T>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)].as_f64()))
            .collect();
        Matrix { rows: m.nrows(), cols: m.ncols(), data }
    }

    fn to<T: Real>(&self, what: &str) -> Result<DMatrix<T>> {
        if self.rows.checked_mul(self.cols) != Some(self.data.len()) {
            return Err(KodError::Integrity(format!(
                "{what}: {}x{} shape but {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&v| T::lit(v))))
    }
}

fn widen<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn narrow<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct StandardizationFile {
    center: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FeaturesFile {
    eigenvalues: Vec<f64>,
    spectrum: Vec<f64>,
    eigenvectors: Matrix,
    transform: Matrix,
    features: Matrix,
    rank_full: usize,
}

#[derive(Serialize, Deserialize)]
struct DirectionsFile {
    family: Family,
    vectors: Matrix,
    centers: Vec<f64>,
    raw_scales: Vec<f64>,
    scales: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    format_version: u32,
    scalar: String,
    config: KodConfig,
    standardization: Option<StandardizationFile>,
    kernel: KernelSpec<f64>,
    training: Matrix,
    centering_col_means: Vec<f64>,
    centering_grand_mean: f64,
    features: FeaturesFile,
    directions: Vec<DirectionsFile>,
    c_d: f64,
    type_medians: Vec<(Family, f64)>,
    cutoff: f64,
    median_ko: f64,
}

fn scalar_name<T: Real>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

impl ModelFile {
    fn from_model<T: Real>(m: &KodModel<T>) -> Self {
        ModelFile {
            schema: SCHEMA.into(),
            format_version: FORMAT_VERSION,
            scalar: scalar_name::<T>().into(),
            config: m.config.clone(),
            standardization: m.standardization.as_ref().map(|s| StandardizationFile {
                center: widen(&s.center),
                scale: widen(&s.scale),
            }),
            kernel: match m.kernel {
                KernelSpec::Rbf { sigma } => KernelSpec::Rbf { sigma: sigma.as_f64() },
                KernelSpec::Linear => KernelSpec::Linear,
            },
            training: Matrix::from(&m.training),
            centering_col_means: widen(&m.centering.col_means),
            centering_grand_mean: m.centering.grand_mean.as_f64(),
            features: FeaturesFile {
                eigenvalues: widen(&m.features.eigenvalues),
                spectrum: widen(&m.features.spectrum),
                eigenvectors: Matrix::from(&m.features.eigenvectors),
                transform: Matrix::from(&m.features.transform),
                features: Matrix::from(&m.features.features),
                rank_full: m.features.rank_full,
            },
            directions: m
                .directions
                .iter()
                .map(|d| DirectionsFile {
                    family: d.family,
                    vectors: Matrix::from(&d.vectors),
                    centers: widen(&d.centers),
                    raw_scales: widen(&d.raw_scales),
                    scales: widen(&d.scales),
                })
                .collect(),
            c_d: m.c_d.as_f64(),
            type_medians: m.type_medians.iter().map(|&(f, v)| (f, v.as_f64())).collect(),
            cutoff: m.cutoff.as_f64(),
            median_ko: m.median_ko.as_f64(),
        }
    }

    fn into_model<T: Real>(self) -> Result<KodModel<T>> {
        if self.scalar != scalar_name::<T>() {
            return Err(KodError::Integrity(format!(
                "model holds {} values, cannot load as {}",
                self.scalar,
                scalar_name::<T>()
            )));
        }
        let training: DMatrix<T> = self.training.to("training")?;
        let (n, p) = training.shape();
        let features = FeatureModel {
            eigenvalues: narrow(&self.features.eigenvalues),
            spectrum: narrow(&self.features.spectrum),
            eigenvectors: self.features.eigenvectors.to("eigenvectors")?,
            transform: self.features.transform.to("transform")?,
            features: self.features.features.to("features")?,
            rank_full: self.features.rank_full,
        };
        let q = features.eigenvalues.len();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(KodError::Integrity(format!("{what} has inconsistent dimensions")))
            }
        };
        check(q > 0, "eigenvalues")?;
        check(features.spectrum.len() == features.rank_full && features.rank_full >= q, "spectrum")?;
        check(features.eigenvectors.shape() == (n, q), "eigenvectors")?;
        check(features.transform.shape() == (n, q), "transform")?;
        check(features.features.shape() == (n, q), "features")?;
        check(self.centering_col_means.len() == n, "centering statistics")?;

        let mut directions = Vec::with_capacity(self.directions.len());
        for d in self.directions {
            let vectors: DMatrix<T> = d.vectors.to(d.family.name())?;
            let k = vectors.nrows();
            check(
                vectors.ncols() == q && d.centers.len() == k && d.raw_scales.len() == k && d.scales.len() == k,
                d.family.name(),
            )?;
            directions.push(DirectionSet {
                family: d.family,
                vectors,
                centers: narrow(&d.centers),
                raw_scales: narrow(&d.raw_scales),
                scales: narrow(&d.scales),
            });
        }
        check(!self.type_medians.is_empty(), "type medians")?;
        for (fam, med) in &self.type_medians {
            check(directions.iter().any(|d| d.family == *fam) && *med > 0.0, "type medians")?;
        }
        check(self.c_d > 0.0, "denominator floor")?;

        let standardization = match self.standardization {
            Some(s) => {
                check(s.center.len() == p && s.scale.len() == p, "standardization")?;
                Some(Standardization { center: narrow(&s.center), scale: narrow(&s.scale) })
            }
            None => None,
        };
        let kernel = match self.kernel {
            KernelSpec::Rbf { sigma } => KernelSpec::Rbf { sigma: T::lit(sigma) },
            KernelSpec::Linear => KernelSpec::Linear,
        };
        kernel.validate().map_err(|e| KodError::Integrity(e.to_string()))?;
        self.config.validate().map_err(|e| KodError::Integrity(e.to_string()))?;

        let model = KodModel {
            config: self.config,
            standardization,
            kernel,
            training,
            centering: CenteringStats {
                col_means: narrow(&self.centering_col_means),
                grand_mean: T::lit(self.centering_grand_mean),
            },
            features,
            directions,
            c_d: T::lit(self.c_d),
            type_medians: self.type_medians.iter().map(|&(f, v)| (f, T::lit(v))).collect(),
            cutoff: T::lit(self.cutoff),
            median_ko: T::lit(self.median_ko),
        };
        Ok(model)
    }
}

pub fn to_writer<T: Real, W: Write>(model: &KodModel<T>, writer: W) -> Result<()> {
    let file = ModelFile::from_model(model);
    let mut ser = serde_json::Serializer::with_formatter(writer, FullPrecision);
    file.serialize(&mut ser)
        .map_err(|e| KodError::Io(io::Error::other(e)))
}

pub fn to_string<T: Real>(model: &KodModel<T>) -> Result<String> {
    let mut buf = Vec::new();
    to_writer(model, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn from_str<T: Real>(text: &str) -> Result<KodModel<T>> {
    let header: Header = serde_json::from_str(text)
        .map_err(|e| KodError::Integrity(format!("not a model file: {e}")))?;
    if header.schema != SCHEMA {
        return Err(KodError::Integrity(format!("unexpected schema '{}'", header.schema)));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(KodError::Version {
            found: header.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| KodError::Integrity(e.to_string()))?;
    file.into_model()
}

pub fn from_reader<T: Real, R: Read>(mut reader: R) -> Result<KodModel<T>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    from_str(&text)
}

/// Writes the model next to `path` and renames it into place.
pub fn save<T: Real>(model: &KodModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    to_writer(model, io::BufWriter::new(tmp.as_file_mut()))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| KodError::Io(e.error))?;
    Ok(())
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<KodModel<T>> {
    from_reader(std::fs::File::open(path)?)
}
