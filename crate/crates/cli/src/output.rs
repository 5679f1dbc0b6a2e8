//! Report files and run summaries.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use kod::datasets::ToyKind;
use kod::nalgebra::DMatrix;
use kod::{KernelSpec, KodModelF64, ScoreReportF64};

/// Runs `f` against a temp file in the target directory and renames it into
/// place only if `f` succeeds.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// index, raw outlyingness per family, ko, lo, flagged.
pub fn write_report<W: Write>(w: W, report: &ScoreReportF64) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["index".to_string()];
    header.extend(report.families.iter().map(|f| format!("outl_{}", f.family.name())));
    header.extend(["ko", "lo", "flagged"].map(String::from));
    out.write_record(&header)?;
    for i in 0..report.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(report.families.iter().map(|f| num(f.raw[i])));
        rec.push(num(report.ko[i]));
        rec.push(num(report.lo[i]));
        rec.push(u8::from(report.flagged[i]).to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// x, y, median-normalized outlyingness per family, ko, below_median.
pub fn write_grid<W: Write>(w: W, points: &DMatrix<f64>, report: &ScoreReportF64, median_ko: f64) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(report.families.iter().map(|f| format!("outl_{}", f.family.name())));
    header.extend(["ko", "below_median"].map(String::from));
    out.write_record(&header)?;
    for i in 0..report.len() {
        let mut rec = vec![num(points[(i, 0)]), num(points[(i, 1)])];
        rec.extend(report.families.iter().map(|f| num(f.normalized[i])));
        rec.push(num(report.ko[i]));
        rec.push(u8::from(report.ko[i] < median_ko).to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct StageSeconds {
    pub kernel: f64,
    pub decompose: f64,
    pub directions: f64,
    pub outlyingness: f64,
    pub cutoff: f64,
    pub total: f64,
}

#[derive(Serialize)]
pub struct Summary {
    pub n: usize,
    pub p: usize,
    pub kernel: String,
    pub sigma: Option<f64>,
    pub rank: usize,
    pub q: usize,
    pub c_d: f64,
    pub cutoff: f64,
    pub median_ko: f64,
    pub flagged: usize,
    pub family_sizes: Vec<(String, usize)>,
    pub seconds: Option<StageSeconds>,
    pub precision_at_n: Option<f64>,
    pub mcc: Option<f64>,
}

impl Summary {
    pub fn new(model: &KodModelF64, report: &ScoreReportF64) -> Self {
        let (kernel, sigma) = match model.kernel {
            KernelSpec::Rbf { sigma } => ("rbf".to_string(), Some(sigma)),
            KernelSpec::Linear => ("linear".to_string(), None),
        };
        Summary {
            n: report.len(),
            p: model.p(),
            kernel,
            sigma,
            rank: report.rank_full,
            q: report.q,
            c_d: model.c_d,
            cutoff: model.cutoff,
            median_ko: model.median_ko,
            flagged: report.flagged_count(),
            family_sizes: report.family_sizes.iter().map(|(f, k)| (f.name().to_string(), *k)).collect(),
            seconds: report.timings.as_ref().map(|t| StageSeconds {
                kernel: t.kernel.as_secs_f64(),
                decompose: t.decompose.as_secs_f64(),
                directions: t.directions.as_secs_f64(),
                outlyingness: t.outlyingness.as_secs_f64(),
                cutoff: t.cutoff.as_secs_f64(),
                total: t.total.as_secs_f64(),
            }),
            precision_at_n: None,
            mcc: None,
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} p={} kernel={}", self.n, self.p, self.kernel)?;
        if let Some(s) = self.sigma {
            write!(f, " sigma={s:.6}")?;
        }
        writeln!(f)?;
        writeln!(f, "rank={} q={}", self.rank, self.q)?;
        writeln!(f, "c_d={:.6} cutoff={:.6} median_ko={:.6}", self.c_d, self.cutoff, self.median_ko)?;
        let sizes: Vec<String> = self.family_sizes.iter().map(|(n, k)| format!("{n}={k}")).collect();
        writeln!(f, "directions {}", sizes.join(" "))?;
        write!(f, "flagged={}", self.flagged)?;
        if let Some(t) = &self.seconds {
            write!(
                f,
                "\nseconds kernel={:.3} decompose={:.3} directions={:.3} outlyingness={:.3} cutoff={:.3} total={:.3}",
                t.kernel, t.decompose, t.directions, t.outlyingness, t.cutoff, t.total
            )?;
        }
        if let Some(p) = self.precision_at_n {
            write!(f, "\nP@N={p:.4}")?;
        }
        if let Some(m) = self.mcc {
            write!(f, "\nMCC={m:.4}")?;
        }
        Ok(())
    }
}

/// Running means for one dataset x contamination cell.
pub struct ExperimentRow {
    pub dataset: ToyKind,
    pub contamination: f64,
    pub replications: u64,
    pan: f64,
    mcc: f64,
    q: f64,
    rank: f64,
    seen: u64,
}

impl ExperimentRow {
    pub fn new(dataset: ToyKind, contamination: f64, replications: u64) -> Self {
        ExperimentRow { dataset, contamination, replications, pan: 0.0, mcc: 0.0, q: 0.0, rank: 0.0, seen: 0 }
    }

    pub fn add(&mut self, pan: f64, mcc: f64, q: usize, rank: usize) {
        self.pan += pan;
        self.mcc += mcc;
        self.q += q as f64;
        self.rank += rank as f64;
        self.seen += 1;
    }

    fn means(&self) -> [f64; 4] {
        let k = self.seen.max(1) as f64;
        [self.pan / k, self.mcc / k, self.q / k, self.rank / k]
    }

    pub fn finish_line(&self) -> String {
        let [pan, mcc, q, rank] = self.means();
        format!(
            "{} {:>5.1}%  P@N {pan:.3}  MCC {mcc:.3}  q {q:.1}  rank {rank:.1}",
            self.dataset,
            self.contamination * 100.0
        )
    }
}

pub fn write_experiment<W: Write>(w: W, rows: &[ExperimentRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["dataset", "contamination", "replications", "mean_pan", "mean_mcc", "mean_q", "mean_rank"])?;
    for r in rows {
        let [pan, mcc, q, rank] = r.means();
        out.write_record([
            r.dataset.name().to_string(),
            num(r.contamination),
            r.replications.to_string(),
            num(pan),
            num(mcc),
            num(q),
            num(rank),
        ])?;
    }
    out.flush()?;
    Ok(())
}
