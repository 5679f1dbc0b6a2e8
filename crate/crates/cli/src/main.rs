use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kod::datasets::{self, CsvOptions, LabelColumn, ToyKind, ToySpec};
use kod::evaluation::{mcc, precision_at_n};
use kod::{fit, persist, DataMatrixF64, Family, KernelChoice, KodConfig, KodModelF64, ScoreReportF64};

mod output;

use output::{write_atomic, write_report, Summary};

#[derive(Parser)]
#[command(name = "kod", version, about = "Kernel outlier detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV file and write the per-point report.
    Fit(FitCmd),
    /// Score new rows with a saved model.
    Score(ScoreCmd),
    /// Score a regular 2-D lattice for heatmaps.
    Grid(GridCmd),
    /// Draw a synthetic dataset.
    Generate(GenerateCmd),
    /// Mean P@N / MCC over seeded replications of the toy datasets.
    Experiment(ExperimentCmd),
    /// Wall-clock time per pipeline stage for growing n.
    Bench(BenchCmd),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// rbf:auto, rbf:<sigma> or linear.
    #[arg(long, default_value = "rbf:auto", value_parser = parse_kernel)]
    kernel: KernelChoice,
    #[arg(long, default_value_t = 0.99)]
    retention: f64,
    /// Comma-separated subset of one,two,basis,random.
    #[arg(long, value_delimiter = ',', default_value = "one,two,basis,random")]
    families: Vec<Family>,
    #[arg(long, default_value_t = 1000)]
    random_count: usize,
    #[arg(long, default_value_t = 5000)]
    two_point_cap: usize,
    #[arg(long, env = "KOD_SEED", default_value_t = 0)]
    seed: u64,
    /// Standardize columns by median and MAD before fitting.
    #[arg(long)]
    standardize: bool,
}

impl ConfigArgs {
    fn config(&self) -> KodConfig {
        KodConfig {
            kernel: self.kernel,
            retention: self.retention,
            families: self.families.clone(),
            random_count: self.random_count,
            two_point_cap: self.two_point_cap,
            seed: self.seed,
            standardize: self.standardize,
            ..KodConfig::default()
        }
    }
}

#[derive(Args)]
struct InputArgs {
    input: PathBuf,
    /// First line holds column names.
    #[arg(long)]
    header: bool,
    /// Column of 0/1 labels (name if --header, else 0-based index).
    #[arg(long)]
    label_column: Option<String>,
}

impl InputArgs {
    fn load(&self) -> Result<(DataMatrixF64, Option<Vec<bool>>)> {
        let label_column = self.label_column.as_ref().map(|c| match c.parse::<usize>() {
            Ok(i) if !self.header => LabelColumn::Index(i),
            _ => LabelColumn::Name(c.clone()),
        });
        let options = CsvOptions { header: self.header, label_column };
        datasets::load_csv(&self.input, &options)
            .with_context(|| format!("reading {}", self.input.display()))
    }
}

#[derive(Args)]
struct FitCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Also write the run summary as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreCmd {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct GridCmd {
    #[arg(long)]
    model: PathBuf,
    /// xmin,xmax,ymin,ymax; defaults to the training range plus 10%.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bounds: Option<Vec<f64>>,
    /// Points per axis.
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct GenerateCmd {
    #[arg(long, value_parser = parse_kind)]
    dataset: ToyKind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    contamination: f64,
    #[arg(long, env = "KOD_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentCmd {
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, required = true)]
    datasets: Vec<ToyKind>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
    contamination: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    replications: u64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long, value_parser = parse_kind, default_value = "inside_outside")]
    dataset: ToyKind,
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000")]
    sizes: Vec<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_kernel(s: &str) -> std::result::Result<KernelChoice, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "linear" => Ok(KernelChoice::Linear),
        "rbf" | "rbf:auto" => Ok(KernelChoice::RbfAuto),
        other => {
            let sigma = other
                .strip_prefix("rbf:")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| format!("expected rbf:auto, rbf:<sigma> or linear, got '{s}'"))?;
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(format!("rbf bandwidth must be positive, got {sigma}"));
            }
            Ok(KernelChoice::Rbf(sigma))
        }
    }
}

fn parse_kind(s: &str) -> std::result::Result<ToyKind, String> {
    s.parse().map_err(|e: kod::KodError| e.to_string())
}

fn print_summary(summary: &Summary) {
    println!("{summary}");
}

fn cmd_fit(cmd: &FitCmd) -> Result<()> {
    let (data, labels) = cmd.input.load()?;
    let config = cmd.config.config();
    let (model, report) = fit(&data, &config)?;
    let mut summary = Summary::new(&model, &report);
    if let Some(labels) = &labels {
        summary.precision_at_n = precision_at_n(&report.ko, labels).ok();
        summary.mcc = Some(mcc(&report.flagged, labels)?);
    }
    persist::save(&model, &cmd.model).with_context(|| format!("writing {}", cmd.model.display()))?;
    write_atomic(&cmd.report, |w| write_report(w, &report))?;
    if let Some(path) = &cmd.summary {
        write_atomic(path, |w| Ok(serde_json::to_writer_pretty(w, &summary)?))?;
    }
    print_summary(&summary);
    Ok(())
}

fn load_model(path: &Path) -> Result<KodModelF64> {
    persist::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_score(cmd: &ScoreCmd) -> Result<()> {
    let model = load_model(&cmd.model)?;
    let (data, labels) = cmd.input.load()?;
    let report = model.score(data.rows())?;
    write_atomic(&cmd.report, |w| write_report(w, &report))?;
    println!("scored {} rows, {} flagged (cutoff {})", report.len(), report.flagged_count(), report.cutoff);
    if let Some(labels) = labels {
        if let Ok(pan) = precision_at_n(&report.ko, &labels) {
            println!("P@N {pan:.4}");
        }
        println!("MCC {:.4}", mcc(&report.flagged, &labels)?);
    }
    Ok(())
}

fn grid_bounds(model: &KodModelF64, bounds: Option<&[f64]>) -> Vec<f64> {
    if let Some(b) = bounds {
        return b.to_vec();
    }
    // Bounds live in input units; undo standardization of the stored rows.
    let rows = match &model.standardization {
        Some(s) => unstandardize(&model.training, &s.center, &s.scale),
        None => model.training.clone(),
    };
    let mut out = Vec::with_capacity(4);
    for j in 0..2 {
        let col = rows.column(j);
        let (lo, hi) = (col.min(), col.max());
        let pad = 0.1 * (hi - lo).max(f64::EPSILON);
        out.extend([lo - pad, hi + pad]);
    }
    out
}

fn unstandardize(
    rows: &kod::nalgebra::DMatrix<f64>,
    center: &[f64],
    scale: &[f64],
) -> kod::nalgebra::DMatrix<f64> {
    kod::nalgebra::DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| rows[(i, j)] * scale[j] + center[j])
}

fn cmd_grid(cmd: &GridCmd) -> Result<()> {
    let model = load_model(&cmd.model)?;
    if model.p() != 2 {
        bail!("grid scoring needs a model trained on 2-D input, this one has p = {}", model.p());
    }
    if let Some(b) = &cmd.bounds {
        if b.len() != 4 {
            bail!("--bounds takes xmin,xmax,ymin,ymax, got {} values", b.len());
        }
    }
    let b = grid_bounds(&model, cmd.bounds.as_deref());
    let points = datasets::lattice((b[0], b[1]), (b[2], b[3]), cmd.resolution, cmd.resolution)?;
    let report = model.score(&points)?;
    write_atomic(&cmd.output, |w| output::write_grid(w, &points, &report, model.median_ko))?;
    let white = report.ko.iter().filter(|&&k| k < model.median_ko).count();
    println!(
        "scored {} grid points, {} below the training median KO {}",
        report.len(),
        white,
        model.median_ko
    );
    Ok(())
}

fn cmd_generate(cmd: &GenerateCmd) -> Result<()> {
    let spec = ToySpec::new(cmd.dataset, cmd.n, cmd.contamination, cmd.seed);
    let (data, labels) = datasets::generate(&spec)?;
    let header = ["x".to_string(), "y".to_string(), "label".to_string()];
    write_atomic(&cmd.output, |w| {
        Ok(datasets::write_csv(w, data.rows(), Some(&header), Some(&labels))?)
    })?;
    println!("wrote {} rows ({} outliers) to {}", data.n(), spec.outlier_count(), cmd.output.display());
    Ok(())
}

/// One replication: data seed and direction seed both derive from `seed`.
fn replicate(kind: ToyKind, n: usize, contamination: f64, seed: u64, config: &KodConfig) -> Result<(f64, f64, ScoreReportF64)> {
    let (data, labels) = datasets::generate(&ToySpec::new(kind, n, contamination, seed))?;
    let (_, report) = fit(&data, &config.clone().with_seed(seed))?;
    let pan = precision_at_n(&report.ko, &labels)?;
    let m = mcc(&report.flagged, &labels)?;
    Ok((pan, m, report))
}

fn cmd_experiment(cmd: &ExperimentCmd) -> Result<()> {
    if cmd.replications == 0 {
        bail!("replications must be positive");
    }
    let config = cmd.config.config();
    let mut rows = Vec::new();
    for &kind in &cmd.datasets {
        for &c in &cmd.contamination {
            let mut acc = output::ExperimentRow::new(kind, c, cmd.replications);
            for r in 0..cmd.replications {
                let seed = cmd.config.seed.wrapping_add(r);
                let (pan, m, report) = replicate(kind, cmd.n, c, seed, &config)?;
                acc.add(pan, m, report.q, report.rank_full);
            }
            println!("{}", acc.finish_line());
            rows.push(acc);
        }
    }
    if let Some(path) = &cmd.output {
        write_atomic(path, |w| output::write_experiment(w, &rows))?;
    }
    Ok(())
}

fn cmd_bench(cmd: &BenchCmd) -> Result<()> {
    let config = cmd.config.config();
    println!("n,kernel_s,decompose_s,directions_s,outlyingness_s,cutoff_s,total_s");
    for &n in &cmd.sizes {
        let (data, _) = datasets::generate(&ToySpec::new(cmd.dataset, n, 0.2, config.seed))?;
        let (_, report) = fit(&data, &config)?;
        let t = report.timings.expect("fit records timings");
        println!(
            "{n},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            t.kernel.as_secs_f64(),
            t.decompose.as_secs_f64(),
            t.directions.as_secs_f64(),
            t.outlyingness.as_secs_f64(),
            t.cutoff.as_secs_f64(),
            t.total.as_secs_f64()
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(c) => cmd_fit(c),
        Command::Score(c) => cmd_score(c),
        Command::Grid(c) => cmd_grid(c),
        Command::Generate(c) => cmd_generate(c),
        Command::Experiment(c) => cmd_experiment(c),
        Command::Bench(c) => cmd_bench(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
