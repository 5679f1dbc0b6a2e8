//! Seeded synthetic benchmark data and CSV ingestion.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{KodError, Result};
use crate::kernel::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyKind {
    /// Ring with outliers scattered uniformly over a disk around it, away
    /// from the ring band itself.
    SaltPepperRing,
    /// Ring with a compact cluster of outliers at its centre.
    CircleCluster,
    /// Ring with half the outliers clustered inside and half on a wider ring.
    InsideOutside,
    /// Two interleaving half circles; the lower one is the outlier class.
    Moons,
}

impl ToyKind {
    pub const ALL: [ToyKind; 4] = [
        ToyKind::SaltPepperRing,
        ToyKind::CircleCluster,
        ToyKind::InsideOutside,
        ToyKind::Moons,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::SaltPepperRing => "salt_pepper_ring",
            ToyKind::CircleCluster => "circle_cluster",
            ToyKind::InsideOutside => "inside_outside",
            ToyKind::Moons => "moons",
        }
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyKind {
    type Err = KodError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ToyKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| KodError::InvalidInput(format!("unknown dataset '{s}'")))
    }
}

/// Shape parameters shared by the toy generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub ring_radius: f64,
    /// Radial Gaussian noise of the rings.
    pub ring_noise: f64,
    /// Per-coordinate sd of the central cluster.
    pub cluster_sd: f64,
    pub outer_radius: f64,
    /// Radius of the uniform background disk of the salt-and-pepper data.
    pub background_radius: f64,
    /// Half-width of the empty annulus around the ring in that background.
    pub background_gap: f64,
    pub moons_noise: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            ring_radius: 1.0,
            ring_noise: 0.05,
            cluster_sd: 0.1,
            outer_radius: 1.8,
            background_radius: 1.5,
            background_gap: 0.2,
            moons_noise: 0.07,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySpec {
    pub kind: ToyKind,
    pub n: usize,
    pub contamination: f64,
    pub seed: u64,
    pub geometry: Geometry,
}

impl ToySpec {
    pub fn new(kind: ToyKind, n: usize, contamination: f64, seed: u64) -> Self {
        ToySpec {
            kind,
            n,
            contamination,
            seed,
            geometry: Geometry::default(),
        }
    }

    pub fn outlier_count(&self) -> usize {
        (self.n as f64 * self.contamination).round() as usize
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    std_normal: Normal<f64>,
}

impl Sampler {
    fn normal(&mut self) -> f64 {
        self.std_normal.sample(&mut self.rng)
    }

    fn angle(&mut self) -> f64 {
        self.rng.random_range(0.0..TAU)
    }

    fn ring(&mut self, radius: f64, noise: f64, accept: impl Fn(f64) -> bool) -> [f64; 2] {
        loop {
            let r = radius + noise * self.normal();
            if accept(r) {
                let t = self.angle();
                return [r * t.cos(), r * t.sin()];
            }
        }
    }

    fn cluster(&mut self, sd: f64, max_radius: f64) -> [f64; 2] {
        loop {
            let p = [sd * self.normal(), sd * self.normal()];
            if p[0].hypot(p[1]) < max_radius {
                return p;
            }
        }
    }

    /// Uniform on the disk, minus the open annulus `band`.
    fn disk(&mut self, radius: f64, band: (f64, f64)) -> [f64; 2] {
        loop {
            let r = radius * self.rng.random::<f64>().sqrt();
            if r > band.0 && r < band.1 {
                continue;
            }
            let t = self.angle();
            return [r * t.cos(), r * t.sin()];
        }
    }

    fn arc(&mut self, lower: bool, noise: f64) -> [f64; 2] {
        let t = self.rng.random_range(0.0..PI);
        let (x, y) = if lower {
            (1.0 - t.cos(), 0.5 - t.sin())
        } else {
            (t.cos(), t.sin())
        };
        [x + noise * self.normal(), y + noise * self.normal()]
    }
}

/// Draws a toy dataset. Regular points come first, outliers last; labels
/// are `true` for outliers.
pub fn generate(spec: &ToySpec) -> Result<(DataMatrix<f64>, Vec<bool>)> {
    if spec.n < 20 {
        return Err(KodError::InvalidInput(format!("toy datasets need n >= 20, got {}", spec.n)));
    }
    if !(spec.contamination > 0.0 && spec.contamination < 0.5) {
        return Err(KodError::InvalidInput(format!(
            "contamination must lie in (0, 0.5), got {}",
            spec.contamination
        )));
    }
    let g = spec.geometry;
    let n_out = spec.outlier_count();
    let n_reg = spec.n - n_out;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        std_normal: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let inner_limit = g.ring_radius - 3.0 * g.ring_noise;
    let outer_limit = g.ring_radius + 3.0 * g.ring_noise;
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(spec.n);

    match spec.kind {
        ToyKind::Moons => {
            points.extend((0..n_reg).map(|_| s.arc(false, g.moons_noise)));
            points.extend((0..n_out).map(|_| s.arc(true, g.moons_noise)));
        }
        kind => {
            points.extend((0..n_reg).map(|_| s.ring(g.ring_radius, g.ring_noise, |r| r > 0.0)));
            match kind {
                ToyKind::SaltPepperRing => {
                    points.extend(
                        (0..n_out).map(|_| s.disk(g.background_radius, (g.ring_radius - g.background_gap, g.ring_radius + g.background_gap))),
                    );
                }
                ToyKind::CircleCluster => {
                    points.extend((0..n_out).map(|_| s.cluster(g.cluster_sd, inner_limit)));
                }
                ToyKind::InsideOutside => {
                    let outer = n_out / 2;
                    let inner = n_out - outer;
                    points.extend((0..inner).map(|_| s.cluster(g.cluster_sd, inner_limit)));
                    points.extend(
                        (0..outer).map(|_| s.ring(g.outer_radius, g.ring_noise, |r| r > outer_limit)),
                    );
                }
                ToyKind::Moons => unreachable!(),
            }
        }
    }
    let labels = (0..spec.n).map(|i| i >= n_reg).collect();
    let rows = DMatrix::from_fn(spec.n, 2, |i, j| points[i][j]);
    Ok((DataMatrix::new(rows)?, labels))
}

/// Which column of a CSV file holds the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub header: bool,
    pub label_column: Option<LabelColumn>,
}

fn parse_label(cell: &str) -> Option<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "t" | "yes" | "outlier" => Some(true),
        "0" | "0.0" | "false" | "f" | "no" | "inlier" => Some(false),
        _ => None,
    }
}

/// Reads a numeric table; the optional label column is split off as booleans.
///
/// Row numbers in errors are 1-based line numbers of the file.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<(DataMatrix<f64>, Option<Vec<bool>>)> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<(DataMatrix<f64>, Option<Vec<bool>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let label_idx = match &options.label_column {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            if !options.header {
                return Err(KodError::InvalidInput(
                    "a named label column needs a header row".into(),
                ));
            }
            let headers = rdr.headers().map_err(|e| csv_error(&e, 1))?;
            Some(headers.iter().position(|h| h == name).ok_or_else(|| {
                KodError::InvalidInput(format!("label column '{name}' not found in header"))
            })?)
        }
    };

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e, rows + 1 + usize::from(options.header)))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(KodError::Parse {
                    row: line,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
            Some(_) => {}
        }
        if let Some(li) = label_idx {
            if li >= record.len() {
                return Err(KodError::Parse {
                    row: line,
                    column: li + 1,
                    message: "label column out of range".into(),
                });
            }
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(parse_label(cell).ok_or_else(|| KodError::Parse {
                    row: line,
                    column: j + 1,
                    message: format!("'{cell}' is not a 0/1 or boolean label"),
                })?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| KodError::Parse {
                row: line,
                column: j + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(KodError::Parse {
                    row: line,
                    column: j + 1,
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let Some(w) = width else {
        return Err(KodError::Parse {
            row: usize::from(options.header) + 1,
            column: 1,
            message: "no data rows".into(),
        });
    };
    let p = w - usize::from(label_idx.is_some());
    if p == 0 {
        return Err(KodError::InvalidInput("no feature columns".into()));
    }
    let matrix = DMatrix::from_row_slice(rows, p, &values);
    Ok((DataMatrix::new(matrix)?, label_idx.map(|_| labels)))
}

fn csv_error(e: &csv::Error, fallback_row: usize) -> KodError {
    let row = e.position().map_or(fallback_row, |p| p.line() as usize);
    KodError::Parse {
        row,
        column: 1,
        message: e.to_string(),
    }
}

/// Writes a matrix (and optional trailing label column) as CSV. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(
    writer: W,
    rows: &DMatrix<f64>,
    header: Option<&[String]>,
    labels: Option<&[bool]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| KodError::Io(std::io::Error::other(e));
    if let Some(h) = header {
        w.write_record(h).map_err(to_io)?;
    }
    for i in 0..rows.nrows() {
        let mut rec: Vec<String> = rows.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            rec.push(if l[i] { "1".into() } else { "0".into() });
        }
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Regular `nx x ny` lattice over a rectangle, x varying fastest.
pub fn lattice(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<DMatrix<f64>> {
    if !(x.0 < x.1 && y.0 < y.1) || !(x.0.is_finite() && x.1.is_finite() && y.0.is_finite() && y.1.is_finite()) {
        return Err(KodError::InvalidInput(format!(
            "grid bounds must satisfy min < max, got x {x:?}, y {y:?}"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(KodError::InvalidInput("grid resolution must be at least 2 per axis".into()));
    }
    let step = |lo: f64, hi: f64, k: usize, n: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    Ok(DMatrix::from_fn(nx * ny, 2, |i, j| {
        if j == 0 {
            step(x.0, x.1, i % nx, nx)
        } else {
            step(y.0, y.1, i / nx, ny)
        }
    }))
}
