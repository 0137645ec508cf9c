//! Pipeline CLI: dataset preparation, ground-truth generation, training,
//! prediction, evaluation, and plot emission.
//!
//! Exit codes: 0 success, 1 runtime error (single-line diagnostic),
//! 2 argument error (usage text).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdnet::codec::{Frame, QP_MAX};
use rdnet::dataset::{
    atomic_write, generate_ground_truth, ingest_and_crop, load_luma, read_manifest, split,
    write_ground_truth, write_manifest, write_patch_store, write_pgm, Dataset, Split, SplitSpec,
};
use rdnet::metrics::{emit_report, evaluate_distortion_maps, evaluate_vectors, BlockPccReport,
    VectorReport};
use rdnet::networks::{
    build_f, build_g, infer_f, infer_g, load_model, normalize_inputs, save_weights, train,
    NetworkKind, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "rdnet",
    about = "Intra-frame rate/distortion estimation toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crop images into a patch dataset with train/val/test splits
    Prepare(PrepareArgs),
    /// Encode every patch with the toy codec and store ground truth
    Gentruth(GentruthArgs),
    /// Train a network on a prepared dataset
    Train(TrainArgs),
    /// Run a trained network on a single image
    Predict(PredictArgs),
    /// Evaluate trained networks on the test split and write CSV reports
    Eval(EvalArgs),
    /// Render per-frame ground-truth vs predicted curves as SVG
    Plot(PlotArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Directory of source images (png/jpeg/bmp/pgm)
    #[arg(long)]
    images: PathBuf,
    /// Patch side length in pixels
    #[arg(long, default_value_t = 128)]
    patch: usize,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Dataset name recorded in the manifest
    #[arg(long, default_value = "dataset")]
    name: String,
    /// QP ladder, comma separated
    #[arg(long, default_value = "22,27,32,37", value_delimiter = ',')]
    qps: Vec<u8>,
    /// Train/val/test ratios, comma separated
    #[arg(long, default_value = "0.5,0.25,0.25", value_delimiter = ',')]
    splits: Vec<f64>,
    /// Seed for the split shuffle (overridden by RD_SEED)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GentruthArgs {
    /// Prepared dataset directory
    #[arg(long)]
    dataset: PathBuf,
    /// QP ladder; defaults to the manifest's ladder
    #[arg(long, value_delimiter = ',')]
    qps: Option<Vec<u8>>,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory (with ground truth)
    #[arg(long)]
    dataset: PathBuf,
    /// Network: g, f-bits, or f-dist
    #[arg(long)]
    net: String,
    /// Output weights file
    #[arg(long)]
    out: PathBuf,
    /// Maximum number of epochs
    #[arg(long, default_value_t = 100)]
    epochs: u32,
    /// Batch size
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Learning rate
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Weight decay (ℓ2 coefficient)
    #[arg(long, default_value_t = 1e-4)]
    wd: f64,
    /// Stop after this many consecutive non-improving validation epochs
    #[arg(long, default_value_t = 10)]
    patience: u32,
    /// Seed for init and shuffling (overridden by RD_SEED)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Weights file
    #[arg(long)]
    weights: PathBuf,
    /// Input image; dimensions must be multiples of 4
    #[arg(long)]
    image: PathBuf,
    /// QP list. G takes exactly one; F requires its training ladder
    #[arg(long, value_delimiter = ',')]
    qps: Vec<u8>,
    /// Output PGM path for G's distortion map
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Prepared dataset directory (with ground truth)
    #[arg(long)]
    dataset: PathBuf,
    /// Weights files to evaluate (repeatable)
    #[arg(long, required = true)]
    weights: Vec<PathBuf>,
    /// Output directory for pcc.csv / vectors.csv / summary.csv
    #[arg(long)]
    out: PathBuf,
    /// Block sizes for the distortion-map correlation
    #[arg(long, default_value = "8,16,32,64", value_delimiter = ',')]
    blocks: Vec<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// vectors.csv produced by eval
    #[arg(long)]
    csv: PathBuf,
    /// Output directory for SVG files
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    /// Argument/usage error → exit 2
    Usage(String),
    /// Runtime failure → exit 1
    Runtime(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("usage: rdnet <prepare|gentruth|train|predict|eval|plot> --help");
            ExitCode::from(2)
        }
    }
}

/// RD_SEED environment variable overrides any --seed flag.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("RD_SEED") {
        Ok(s) => s
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("RD_SEED is not a valid u64: {s:?}"))),
        Err(_) => Ok(flag),
    }
}

fn validate_qps(qps: &[u8]) -> Result<(), CliError> {
    if qps.is_empty() {
        return usage("QP list is empty")?;
    }
    for &qp in qps {
        if qp > QP_MAX {
            return usage(format!("QP out of range: {qp} (expected 0..=51)"))?;
        }
    }
    Ok(())
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Gentruth(a) => cmd_gentruth(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn cmd_prepare(a: PrepareArgs) -> Result<(), CliError> {
    validate_qps(&a.qps)?;
    if a.splits.len() != 3 {
        return usage("--splits needs exactly three ratios");
    }
    let seed = effective_seed(a.seed)?;
    let mut images: Vec<PathBuf> = std::fs::read_dir(&a.images)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.images.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    images.sort();
    let mut result = ingest_and_crop(&a.name, &images, a.patch, &a.qps, seed)?;
    let spec = SplitSpec {
        train: a.splits[0],
        val: a.splits[1],
        test: a.splits[2],
        seed,
    };
    split(&mut result.manifest, &spec)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))?;
    write_patch_store(&a.out.join("patches.rdpx"), &result.manifest, &result.patches)?;
    write_manifest(&a.out.join("manifest.txt"), &result.manifest)?;
    println!(
        "prepared {} patches ({} train / {} val / {} test), {} unreadable files skipped",
        result.manifest.entries.len(),
        result.manifest.count(Split::Train),
        result.manifest.count(Split::Val),
        result.manifest.count(Split::Test),
        result.skipped_files
    );
    Ok(())
}

fn cmd_gentruth(a: GentruthArgs) -> Result<(), CliError> {
    if let Some(qps) = &a.qps {
        validate_qps(qps)?; // reject bad flags before touching the dataset
    }
    let manifest_path = a.dataset.join("manifest.txt");
    let mut manifest = read_manifest(&manifest_path)?;
    let qps = a.qps.unwrap_or_else(|| manifest.qps.clone());
    validate_qps(&qps)?;
    let (size, bitdepth, patches) =
        rdnet::dataset::read_patch_store(&a.dataset.join("patches.rdpx"))?;
    if size != manifest.patch_size || bitdepth != manifest.bitdepth {
        return Err(CliError::Runtime(
            "patch store does not match manifest".into(),
        ));
    }
    let records = generate_ground_truth(&manifest, &patches, &qps)?;
    write_ground_truth(&a.dataset.join("truth.rdgt"), size, &qps, &records)?;
    if manifest.qps != qps {
        manifest.qps = qps.clone();
        write_manifest(&manifest_path, &manifest)?;
    }
    println!(
        "encoded {} patches at {} QPs ({} records)",
        patches.len(),
        qps.len(),
        records.len()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let Some(kind) = NetworkKind::parse(&a.net) else {
        return usage(format!("unknown network {:?} (g, f-bits, f-dist)", a.net));
    };
    if a.batch == 0 {
        return usage("--batch must be >= 1");
    }
    if a.patience == 0 {
        return usage("--patience must be >= 1");
    }
    let seed = effective_seed(a.seed)?;
    let ds = Dataset::load(&a.dataset)?;
    let qps = ds.truth.qps.clone();
    let mut model = match kind {
        NetworkKind::G => build_g(seed, &qps),
        _ => build_f(seed, kind, &qps),
    };
    let cfg = TrainConfig {
        batch_size: a.batch,
        lr: a.lr,
        weight_decay: a.wd,
        patience: a.patience,
        max_epochs: a.epochs,
        seed,
        target: kind.target_kind(),
    };
    let (weights, history) = train(&mut model, &ds, &cfg)?;
    for (i, (t, v)) in history.train.iter().zip(&history.val).enumerate() {
        println!("epoch {:>4}  train {:.6}  val {:.6}", i + 1, t, v);
    }
    save_weights(&weights, &a.out)?;
    println!(
        "saved {} weights from epoch {} to {}",
        kind.name(),
        model.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    validate_qps(&a.qps)?;
    let model = load_model(&a.weights, None)?;
    let (w, h, luma) = load_luma(&a.image)?;
    if w % 4 != 0 || h % 4 != 0 {
        return usage(format!("image is {w}x{h}; dimensions must be multiples of 4"));
    }
    let frame = Frame::from_luma8(w, h, &luma)?;
    match model.kind {
        NetworkKind::G => {
            if a.qps.len() != 1 {
                return usage("network G predicts one QP at a time; pass a single --qps value");
            }
            let Some(out) = a.out else {
                return usage("--out <map.pgm> is required for network G");
            };
            let (i_hat, q_hat) = normalize_inputs(&frame, a.qps[0])?;
            let map = infer_g(&model, &i_hat, &q_hat)?;
            // M is a normalized absolute-difference estimate in [0, 2]
            let norm = f64::from(1u32 << (frame.bitdepth - 1));
            let pixels: Vec<u8> = map
                .data()
                .iter()
                .map(|&v| (f64::from(v) * norm).round().clamp(0.0, 255.0) as u8)
                .collect();
            write_pgm(&out, w, h, &pixels)?;
            let mse = map
                .data()
                .iter()
                .map(|&v| {
                    let d = f64::from(v) * norm;
                    d * d
                })
                .sum::<f64>()
                / (w * h) as f64;
            let peak = frame.peak();
            let psnr = if mse > 0.0 {
                (10.0 * (peak * peak / mse).log10()).min(100.0)
            } else {
                100.0
            };
            let mean = map.data().iter().map(|&v| f64::from(v) * norm).sum::<f64>()
                / (w * h) as f64;
            println!("qp={} mean={:.6} psnr={:.6}", a.qps[0], mean, psnr);
        }
        NetworkKind::FBits | NetworkKind::FDist => {
            if a.qps != model.qps {
                return usage(format!(
                    "weights were trained for QPs {:?}, request was {:?}",
                    model.qps, a.qps
                ));
            }
            let (i_hat, _) = normalize_inputs(&frame, 0)?;
            let out = infer_f(&model, &i_hat)?;
            let line: Vec<String> = model
                .qps
                .iter()
                .zip(out.data())
                .map(|(qp, v)| format!("{qp}:{v:.6}"))
                .collect();
            println!("{}", line.join(","));
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let ds = Dataset::load(&a.dataset)?;
    let mut pcc: Vec<BlockPccReport> = Vec::new();
    let mut vectors: Vec<VectorReport> = Vec::new();
    for path in &a.weights {
        let model = load_model(path, None)?;
        if model.kind == NetworkKind::G {
            pcc.extend(evaluate_distortion_maps(
                &model,
                &ds,
                &ds.truth.qps.clone(),
                &a.blocks,
            )?);
        }
        vectors.push(evaluate_vectors(&model, &ds)?);
    }
    std::fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))?;
    emit_report(&pcc, &vectors, &a.out)?;
    println!("wrote pcc.csv, vectors.csv, summary.csv to {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// plot

struct CurvePair {
    qps: Vec<f64>,
    gt: Vec<f64>,
    pred: Vec<f64>,
}

fn parse_vectors_csv(path: &Path) -> Result<BTreeMap<(u32, String), CurvePair>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "frame_id,kind,qp,gt,pred,abs_err")) => {}
        _ => {
            return Err(CliError::Runtime(format!(
                "{}: line 1: expected vectors.csv header",
                path.display()
            )))
        }
    }
    let mut curves: BTreeMap<(u32, String), CurvePair> = BTreeMap::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let bad = |what: &str| {
            CliError::Runtime(format!("{}: line {lineno}: {what}", path.display()))
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        if fields[2] == "frechet" {
            continue; // per-frame summary row, not a curve point
        }
        let frame_id: u32 = fields[0].parse().map_err(|_| bad("bad frame_id"))?;
        let qp: f64 = fields[2].parse().map_err(|_| bad("bad qp"))?;
        let gt: f64 = fields[3].parse().map_err(|_| bad("bad gt"))?;
        let pred: f64 = fields[4].parse().map_err(|_| bad("bad pred"))?;
        let entry = curves
            .entry((frame_id, fields[1].to_string()))
            .or_insert_with(|| CurvePair {
                qps: Vec::new(),
                gt: Vec::new(),
                pred: Vec::new(),
            });
        entry.qps.push(qp);
        entry.gt.push(gt);
        entry.pred.push(pred);
    }
    Ok(curves)
}

fn svg_chart(frame_id: u32, kind: &str, c: &CurvePair) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 60.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 30.0;
    const MB: f64 = 50.0;
    let (xmin, xmax) = c
        .qps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (ymin, ymax) = c
        .gt
        .iter()
        .chain(&c.pred)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let yspan = if ymax > ymin { ymax - ymin } else { 1.0 };
    let sx = |v: f64| ML + (v - xmin) / xspan * (W - ML - MR);
    let sy = |v: f64| H - MB - (v - ymin) / yspan * (H - MT - MB);
    let poly = |ys: &[f64]| {
        c.qps
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"  <rect width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"  <text x="{:.2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">frame {frame_id} — {kind} vs QP</text>"#,
        W / 2.0
    );
    // axes
    let _ = writeln!(
        s,
        r#"  <line x1="{ML}" y1="{MT}" x2="{ML}" y2="{:.2}" stroke="black"/>"#,
        H - MB
    );
    let _ = writeln!(
        s,
        r#"  <line x1="{ML}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        s,
        r#"  <text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">QP</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})">{kind}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (x, label) in [(xmin, xmin), (xmax, xmax)] {
        let _ = writeln!(
            s,
            r#"  <text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{label:.0}</text>"#,
            sx(x),
            H - MB + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"  <text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{ymin:.3}</text>"#,
        ML - 6.0,
        sy(ymin) + 4.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{ymax:.3}</text>"#,
        ML - 6.0,
        sy(ymax) + 4.0
    );
    let _ = writeln!(
        s,
        r##"  <polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        poly(&c.gt)
    );
    let _ = writeln!(
        s,
        r##"  <polyline points="{}" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="6,3"/>"##,
        poly(&c.pred)
    );
    // legend
    let _ = writeln!(
        s,
        r##"  <line x1="{:.2}" y1="{MT}" x2="{:.2}" y2="{MT}" stroke="#1f77b4" stroke-width="2"/>"##,
        W - 180.0,
        W - 150.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">ground truth</text>"#,
        W - 144.0,
        MT + 4.0
    );
    let _ = writeln!(
        s,
        r##"  <line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2" stroke-dasharray="6,3"/>"##,
        W - 180.0,
        MT + 18.0,
        W - 150.0,
        MT + 18.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">predicted</text>"#,
        W - 144.0,
        MT + 22.0
    );
    s.push_str("</svg>\n");
    s
}

fn cmd_plot(a: PlotArgs) -> Result<(), CliError> {
    let curves = parse_vectors_csv(&a.csv)?;
    if curves.is_empty() {
        println!("no curves in {}; nothing to plot", a.csv.display());
        return Ok(());
    }
    std::fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))?;
    let mut written = 0usize;
    for ((frame_id, kind), pair) in &curves {
        let svg = svg_chart(*frame_id, kind, pair);
        let path = a.out.join(format!("frame{frame_id}_{kind}.svg"));
        atomic_write(&path, svg.as_bytes())?;
        written += 1;
    }
    println!("wrote {written} SVG files to {}", a.out.display());
    Ok(())
}
