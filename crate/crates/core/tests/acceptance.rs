//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::time::Instant;

use kod::datasets::{generate, read_csv, write_csv, CsvOptions, LabelColumn, ToyKind, ToySpec};
use kod::detector::train_directions;
use kod::evaluation::{mcc, precision_at_n};
use kod::kernel::{center_kernel, kernel_matrix};
use kod::nalgebra::DMatrix;
use kod::robust::{l1_median, l1_objective, qn_scale};
use kod::{feature, fit, persist, DataMatrixF64, Family, KernelChoice, KernelSpec, KodConfig, KodModelF64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const REPLICATIONS: u64 = 10;
const N: usize = 1000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

struct Cell {
    pan: f64,
    mcc: f64,
    q: f64,
}

fn run_cell(kind: ToyKind, contamination: f64, config: &KodConfig) -> Cell {
    let mut cell = Cell { pan: 0.0, mcc: 0.0, q: 0.0 };
    for r in 0..REPLICATIONS {
        let (data, labels) = generate(&ToySpec::new(kind, N, contamination, r)).unwrap();
        let (_, report) = fit(&data, &config.clone().with_seed(r)).unwrap();
        cell.pan += precision_at_n(&report.ko, &labels).unwrap();
        cell.mcc += mcc(&report.flagged, &labels).unwrap();
        cell.q += report.q as f64;
    }
    let k = REPLICATIONS as f64;
    Cell { pan: cell.pan / k, mcc: cell.mcc / k, q: cell.q / k }
}

fn table_one() -> Outcome {
    let targets = [
        (ToyKind::CircleCluster, [0.97, 0.97, 0.97]),
        (ToyKind::InsideOutside, [0.97, 0.97, 0.97]),
        (ToyKind::SaltPepperRing, [0.95, 0.95, 0.88]),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (kind, mins) in targets {
        let start = Instant::now();
        for (c, min) in [0.05, 0.10, 0.20].into_iter().zip(mins) {
            let cell = run_cell(kind, c, &KodConfig::default());
            passed &= cell.pan >= min;
            parts.push(format!("{kind}@{:.0}%={:.3}(>={min})", c * 100.0, cell.pan));
        }
        parts.push(format!("[{:.1}s]", start.elapsed().as_secs_f64()));
    }
    check(passed, parts.join(" "))
}

fn random_only_ablation() -> Outcome {
    let cell = run_cell(ToyKind::CircleCluster, 0.20, &KodConfig::random_only(8000));
    check(cell.pan <= 0.10, format!("circle_cluster@20% random-only P@N={:.3} (<=0.10)", cell.pan))
}

fn dimension_diagnostics() -> Outcome {
    let targets = [
        (ToyKind::SaltPepperRing, 6..=12),
        (ToyKind::CircleCluster, 3..=9),
        (ToyKind::InsideOutside, 5..=11),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (kind, range) in targets {
        let mut qs = Vec::new();
        for r in 0..REPLICATIONS {
            let (data, _) = generate(&ToySpec::new(kind, N, 0.2, r)).unwrap();
            let (_, report) = fit(&data, &KodConfig::default().with_seed(r)).unwrap();
            qs.push(report.q);
        }
        passed &= qs.iter().all(|q| range.contains(q));
        parts.push(format!(
            "{kind}: q in [{}, {}] (target {}..={})",
            qs.iter().min().unwrap(),
            qs.iter().max().unwrap(),
            range.start(),
            range.end()
        ));
    }
    check(passed, parts.join("; "))
}

fn median_sorted(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn angular_scan(x: &DMatrix<f64>, angles: usize) -> Vec<f64> {
    let n = x.nrows();
    let mut best = vec![0.0f64; n];
    for k in 0..angles {
        let t = std::f64::consts::PI * k as f64 / angles as f64;
        let proj: Vec<f64> = (0..n).map(|i| t.cos() * x[(i, 0)] + t.sin() * x[(i, 1)]).collect();
        let m = median_sorted(&mut proj.clone());
        let mad = 1.483 * median_sorted(&mut proj.iter().map(|p| (p - m).abs()).collect::<Vec<_>>());
        for i in 0..n {
            best[i] = best[i].max((proj[i] - m).abs() / mad);
        }
    }
    best
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = DMatrix::from_fn(200, 2, |i, j| {
            let z: f64 = rng.sample(StandardNormal);
            let s = if j == 0 { 1.0 } else { 0.6 };
            if i < 10 { s * z + 5.0 } else { s * z }
        });
        let data = DataMatrixF64::new(x.clone()).unwrap();
        let config = KodConfig {
            kernel: KernelChoice::Linear,
            retention: 1.0,
            ..KodConfig::random_only(10_000)
        }
        .with_seed(seed);
        let (_, report) = fit(&data, &config).unwrap();
        let got = &report.family(Family::Random).unwrap().raw;
        for (g, o) in got.iter().zip(angular_scan(&x, 10_000)) {
            worst = worst.max((g - o).abs() / o);
        }
    }
    check(worst <= 0.02, format!("max relative error {:.5} over 600 points (<=0.02)", worst))
}

fn property_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut note = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    // Factorization residual at full rank, zero column sums, F = K~ T.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = DMatrix::from_fn(40, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = DataMatrixF64::new(a).unwrap();
    let k = kernel_matrix(&data, &KernelSpec::Rbf { sigma: 1.3 }).unwrap();
    let kt = center_kernel(&k).unwrap();
    let fm = feature::decompose(&kt, 1.0, 1e-12).unwrap();
    let resid = (&fm.features * fm.features.transpose() - &kt).abs().max();
    note(resid <= 1e-8, "factorization residual");
    let colsum = fm.features.row_sum().abs().max();
    note(colsum <= 1e-8 * 40.0, "feature column sums");
    note((&kt * &fm.transform - &fm.features).abs().max() <= 1e-8, "F = K~ T");

    // Self-embedding, self-scoring and sign invariance on a toy model.
    let (toy, _) = generate(&ToySpec::new(ToyKind::InsideOutside, 400, 0.2, 5)).unwrap();
    let config = KodConfig::default().with_seed(5);
    let (model, report) = fit(&toy, &config).unwrap();
    let emb = model.embed(toy.rows()).unwrap();
    note((emb - &model.features.features).abs().max() <= 1e-8, "self-embedding");
    let again = model.score(toy.rows()).unwrap();
    let self_err = again.ko.iter().zip(&report.ko).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    note(self_err <= 1e-8, "self-scoring");
    let mut flipped = model.features.clone();
    for j in (0..flipped.q()).step_by(2) {
        flipped.flip_sign(j);
    }
    let trained = train_directions(&flipped.features, &config).unwrap();
    let sign_err = trained.ko.iter().zip(&report.ko).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    note(sign_err <= 1e-10, "basis-sign invariance");

    // Qn against all pairs for every n <= 50.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 2..=50 {
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut diffs: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map({
            let y = &y;
            move |j| (y[i] - y[j]).abs()
        })).collect();
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = n / 2 + 1;
        let naive = 2.2219 * diffs[h * (h - 1) / 2 - 1];
        note(qn_scale(&y).unwrap() == naive, "Qn vs all pairs");
    }

    // L1-median against a grid search.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let pts = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-2.0..2.0));
        let m = l1_median(&pts).unwrap();
        let (mut best, mut at) = (f64::INFINITY, (0.0, 0.0));
        let (mut cx, mut cy, mut half) = (0.0, 0.0, 2.5);
        for _ in 0..12 {
            for a in 0..=40 {
                for b in 0..=40 {
                    let p = kod::nalgebra::DVector::from_vec(vec![
                        cx - half + 2.0 * half * a as f64 / 40.0,
                        cy - half + 2.0 * half * b as f64 / 40.0,
                    ]);
                    let v = l1_objective(&pts, &p);
                    if v < best {
                        best = v;
                        at = (p[0], p[1]);
                    }
                }
            }
            (cx, cy) = at;
            half /= 4.0;
        }
        note((m[0] - at.0).abs() < 1e-4 && (m[1] - at.1).abs() < 1e-4, "L1-median vs grid");
    }

    // Model file round trip.
    let text = persist::to_string(&model).unwrap();
    let back: KodModelF64 = persist::from_str(&text).unwrap();
    let probe = generate(&ToySpec::new(ToyKind::SaltPepperRing, 100, 0.2, 6)).unwrap().0;
    let a = model.score(probe.rows()).unwrap();
    let b = back.score(probe.rows()).unwrap();
    let rt = a.ko.iter().zip(&b.ko).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    note(rt <= 1e-12, "model round trip");

    let detail = format!(
        "residual={resid:.1e} self-score={self_err:.1e} sign={sign_err:.1e} round-trip={rt:.1e}"
    );
    if failures.is_empty() {
        check(true, detail)
    } else {
        check(false, format!("{detail}; failed: {}", failures.join(", ")))
    }
}

fn moons() -> Outcome {
    let cell = run_cell(ToyKind::Moons, 0.10, &KodConfig::default());
    check(cell.mcc >= 0.6, format!("moons@10% mean MCC={:.3} (>=0.6), P@N={:.3}", cell.mcc, cell.pan))
}

fn csv_path() -> Outcome {
    // Real data tables are not bundled; the CSV path is exercised end to end.
    let (data, labels) = generate(&ToySpec::new(ToyKind::CircleCluster, 300, 0.1, 12)).unwrap();
    let header: Vec<String> = ["a", "b", "is_outlier"].map(String::from).to_vec();
    let mut buf = Vec::new();
    write_csv(&mut buf, data.rows(), Some(&header), Some(&labels)).unwrap();
    let opts = CsvOptions { header: true, label_column: Some(LabelColumn::Name("is_outlier".into())) };
    let (loaded, got) = read_csv(buf.as_slice(), &opts).unwrap();
    let (_, report) = fit(&loaded, &KodConfig::default()).unwrap();
    let pan = precision_at_n(&report.ko, got.as_ref().unwrap()).unwrap();
    check(
        &loaded == &data && got.as_deref() == Some(&labels[..]) && pan >= 0.97,
        format!("image/real-data tables out of scope; CSV ingestion round trip exact, P@N={pan:.3}"),
    )
}

fn supplementary_rank() -> String {
    let (data, _) = generate(&ToySpec::new(ToyKind::InsideOutside, N, 0.2, 0)).unwrap();
    let (_, report) = fit(&data, &KodConfig::default()).unwrap();
    let ok = (74..=84).contains(&report.rank_full);
    format!(
        "{} inside_outside centered-kernel rank {} (reference 79 +- 5, informational)",
        if ok { "PASS" } else { "FAIL" },
        report.rank_full
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 toy-data P@N table", table_one),
        ("2 random-only ablation", random_only_ablation),
        ("3 retained dimension", dimension_diagnostics),
        ("4 angular-scan oracle", oracle_equivalence),
        ("5 property suite", property_suite),
        ("6 moons MCC", moons),
        ("7 real-data path", csv_path),
    ];
    let mut all = true;
    for (name, run) in criteria {
        let start = Instant::now();
        let out = run();
        all &= out.passed;
        println!(
            "{} criterion {name}: {} ({:.1}s)",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{}", supplementary_rank());
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
