//! Evaluation protocol: block-wise Pearson correlation of squared-averaged
//! distortion maps, per-frame vector MAE, discrete Fréchet distance between
//! per-QP curves, PSNR derivations, and the CSV report writers.

use std::path::Path;

use crate::autodiff::Tensor;
use crate::dataset::{atomic_write, Dataset, Split};
use crate::error::{DataError, MetricsError};
use crate::networks::{infer_f, infer_g, Model, NetworkKind};

/// Interior samples inserted on every curve segment before the Fréchet DP.
pub const FRECHET_DENSIFY: usize = 16;

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-block mean of squares over non-overlapping B×B blocks, row-major
/// block order.
pub fn block_reduce(map: &[f64], w: usize, h: usize, b: usize) -> Result<Vec<f64>, MetricsError> {
    if b == 0 || w % b != 0 || h % b != 0 {
        return Err(MetricsError::InvalidArgument(format!(
            "block size {b} does not divide {w}x{h}"
        )));
    }
    if map.len() != w * h {
        return Err(MetricsError::InvalidArgument(format!(
            "map has {} values, expected {}",
            map.len(),
            w * h
        )));
    }
    let mut out = Vec::with_capacity((w / b) * (h / b));
    for by in 0..h / b {
        for bx in 0..w / b {
            let mut acc = 0.0;
            for y in 0..b {
                for x in 0..b {
                    let v = map[(by * b + y) * w + bx * b + x];
                    acc += v * v;
                }
            }
            out.push(acc / (b * b) as f64);
        }
    }
    Ok(out)
}

/// Standard Pearson correlation coefficient.
pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64, MetricsError> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(MetricsError::InvalidArgument(format!(
            "pearson needs two equal-length vectors of >= 2 values, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut su = 0.0;
    let mut sv = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        cov += (a - mu) * (b - mv);
        su += (a - mu) * (a - mu);
        sv += (b - mv) * (b - mv);
    }
    if su == 0.0 || sv == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(cov / (su.sqrt() * sv.sqrt()))
}

/// Discrete Fréchet distance between two raw point sequences (no
/// densification): the classic dynamic program over monotone couplings.
pub fn frechet_dp(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::InvalidArgument("empty curve".into()));
    }
    let dist = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
    let (m, n) = (a.len(), b.len());
    let mut row = vec![0.0f64; n];
    for j in 0..n {
        let d = dist(a[0], b[j]);
        row[j] = if j == 0 { d } else { row[j - 1].max(d) };
    }
    for i in 1..m {
        let mut prev_diag = row[0]; // ca(i-1, j-1) as we advance j
        row[0] = row[0].max(dist(a[i], b[0]));
        for j in 1..n {
            let d = dist(a[i], b[j]);
            let reach = prev_diag.min(row[j]).min(row[j - 1]);
            prev_diag = row[j];
            row[j] = reach.max(d);
        }
    }
    Ok(row[n - 1])
}

/// Inserts `FRECHET_DENSIFY` linearly interpolated samples on each segment.
pub fn densify(curve: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if curve.len() < 2 {
        return curve.to_vec();
    }
    let mut out = Vec::with_capacity((curve.len() - 1) * (FRECHET_DENSIFY + 1) + 1);
    for seg in curve.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        out.push(p);
        for s in 1..=FRECHET_DENSIFY {
            let t = s as f64 / (FRECHET_DENSIFY + 1) as f64;
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out.push(*curve.last().unwrap());
    out
}

/// Fréchet distance between two (QP, value) curves after densification, in
/// raw axis units.
pub fn discrete_frechet(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64, MetricsError> {
    frechet_dp(&densify(a), &densify(b))
}

// ---------------------------------------------------------------------------
// distortion-map evaluation

#[derive(Clone, Debug)]
pub struct BlockPccReport {
    pub qp: u8,
    pub block: usize,
    /// Per-frame PCC values, in test-set id order, zero-variance frames
    /// excluded.
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub skipped: usize,
}

/// Per-(QP, block size) frame-wise PCC between block-reduced ground-truth
/// and predicted distortion maps on the test split.
pub fn evaluate_distortion_maps(
    model: &Model,
    ds: &Dataset,
    qps: &[u8],
    blocks: &[usize],
) -> Result<Vec<BlockPccReport>, MetricsError> {
    if model.kind != NetworkKind::G {
        return Err(MetricsError::InvalidArgument(
            "distortion maps need network G".into(),
        ));
    }
    let ids = ds.manifest.ids(Split::Test);
    if ids.is_empty() {
        return Err(MetricsError::InvalidArgument("test split is empty".into()));
    }
    let size = ds.manifest.patch_size;
    let norm = f64::from(ds.normalizer());
    let mut reports = Vec::new();
    for &qp in qps {
        // predicted and ground-truth maps per frame, denormalized
        let mut frames: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(ids.len());
        for &id in &ids {
            let i_hat = Tensor::from_vec([1, 1, size, size], ds.patch_i_hat(id))
                .expect("patch shape");
            let q = f32::from(qp) / 51.0;
            let q_hat = Tensor::from_vec([1, 1, size, size], vec![q; size * size]).unwrap();
            let pred = infer_g(model, &i_hat, &q_hat)
                .map_err(|e| MetricsError::InvalidArgument(e.to_string()))?;
            let m: Vec<f64> = pred.data().iter().map(|&v| f64::from(v) * norm).collect();
            let d: Vec<f64> = ds
                .record(id, qp)?
                .map
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            frames.push((d, m));
        }
        for &block in blocks {
            let mut per_frame = Vec::new();
            let mut skipped = 0usize;
            for (d, m) in &frames {
                let bd = block_reduce(d, size, size, block)?;
                let bm = block_reduce(m, size, size, block)?;
                match pearson(&bd, &bm) {
                    Ok(p) => per_frame.push(p),
                    Err(MetricsError::ZeroVariance) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            let (mean, std) = mean_std(&per_frame);
            reports.push(BlockPccReport {
                qp,
                block,
                per_frame,
                mean,
                std,
                skipped,
            });
        }
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// vector evaluation

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorKind {
    Bpp,
    Psnr,
}

impl VectorKind {
    pub fn name(self) -> &'static str {
        match self {
            VectorKind::Bpp => "bpp",
            VectorKind::Psnr => "psnr",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameVectors {
    pub frame_id: u32,
    pub gt: Vec<f64>,
    pub pred: Vec<f64>,
    pub mae: f64,
    pub frechet: f64,
}

#[derive(Clone, Debug)]
pub struct VectorReport {
    pub kind: VectorKind,
    pub qps: Vec<u8>,
    pub frames: Vec<FrameVectors>,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub frechet_mean: f64,
    pub frechet_std: f64,
}

fn psnr_from_mse(peak: f64, mse: f64) -> f64 {
    if mse <= 0.0 {
        return 100.0;
    }
    (10.0 * (peak * peak / mse).log10()).min(100.0)
}

/// Predicted per-QP mse from G: mean over pixels of (clamped M × 2^{n−1})².
fn g_predicted_mse(model: &Model, ds: &Dataset, id: u32, qp: u8) -> Result<f64, MetricsError> {
    let size = ds.manifest.patch_size;
    let i_hat = Tensor::from_vec([1, 1, size, size], ds.patch_i_hat(id)).expect("patch shape");
    let q = f32::from(qp) / 51.0;
    let q_hat = Tensor::from_vec([1, 1, size, size], vec![q; size * size]).unwrap();
    let pred = infer_g(model, &i_hat, &q_hat)
        .map_err(|e| MetricsError::InvalidArgument(e.to_string()))?;
    let norm = f64::from(ds.normalizer());
    let mse = pred
        .data()
        .iter()
        .map(|&v| {
            let d = f64::from(v) * norm;
            d * d
        })
        .sum::<f64>()
        / (size * size) as f64;
    Ok(mse)
}

/// Evaluates per-QP vector predictions against ground truth on the test
/// split. F-bits yields bpp vectors; F-dist and G yield PSNR vectors derived
/// from the predicted mse.
pub fn evaluate_vectors(model: &Model, ds: &Dataset) -> Result<VectorReport, MetricsError> {
    let ids = ds.manifest.ids(Split::Test);
    if ids.is_empty() {
        return Err(MetricsError::InvalidArgument("test split is empty".into()));
    }
    let qps = ds.truth.qps.clone();
    let size = ds.manifest.patch_size;
    let norm = f64::from(ds.normalizer());
    let peak = f64::from((1u32 << ds.manifest.bitdepth) - 1);
    let kind = match model.kind {
        NetworkKind::FBits => VectorKind::Bpp,
        NetworkKind::FDist | NetworkKind::G => VectorKind::Psnr,
    };
    let mut frames = Vec::with_capacity(ids.len());
    for &id in &ids {
        let mut gt = Vec::with_capacity(qps.len());
        for &qp in &qps {
            let rec = ds.record(id, qp)?;
            gt.push(match kind {
                VectorKind::Bpp => f64::from(rec.bits) / (size * size) as f64,
                VectorKind::Psnr => psnr_from_mse(peak, f64::from(rec.mse_norm) * norm * norm),
            });
        }
        let pred = match model.kind {
            NetworkKind::G => {
                let mut v = Vec::with_capacity(qps.len());
                for &qp in &qps {
                    v.push(psnr_from_mse(peak, g_predicted_mse(model, ds, id, qp)?));
                }
                v
            }
            _ => {
                let i_hat = Tensor::from_vec([1, 1, size, size], ds.patch_i_hat(id))
                    .expect("patch shape");
                let out = infer_f(model, &i_hat)
                    .map_err(|e| MetricsError::InvalidArgument(e.to_string()))?;
                out.data()
                    .iter()
                    .map(|&v| match model.kind {
                        NetworkKind::FBits => f64::from(v).max(0.0),
                        _ => psnr_from_mse(peak, f64::from(v).max(0.0) * norm * norm),
                    })
                    .collect()
            }
        };
        let mae = gt
            .iter()
            .zip(&pred)
            .map(|(g, p)| (g - p).abs())
            .sum::<f64>()
            / gt.len() as f64;
        let curve_gt: Vec<(f64, f64)> = qps.iter().zip(&gt).map(|(&q, &v)| (f64::from(q), v)).collect();
        let curve_pred: Vec<(f64, f64)> =
            qps.iter().zip(&pred).map(|(&q, &v)| (f64::from(q), v)).collect();
        let frechet = discrete_frechet(&curve_gt, &curve_pred)?;
        frames.push(FrameVectors {
            frame_id: id,
            gt,
            pred,
            mae,
            frechet,
        });
    }
    let maes: Vec<f64> = frames.iter().map(|f| f.mae).collect();
    let frs: Vec<f64> = frames.iter().map(|f| f.frechet).collect();
    let (mae_mean, mae_std) = mean_std(&maes);
    let (frechet_mean, frechet_std) = mean_std(&frs);
    Ok(VectorReport {
        kind,
        qps,
        frames,
        mae_mean,
        mae_std,
        frechet_mean,
        frechet_std,
    })
}

// ---------------------------------------------------------------------------
// CSV reports

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Writes `pcc.csv`, `vectors.csv`, and `summary.csv` into `dir`. Rows are
/// deterministic; floats use fixed six-decimal formatting; LF line endings.
/// In `vectors.csv`, each frame's per-QP rows are followed by one row whose
/// `qp` column reads `frechet` and whose `abs_err` column holds the frame's
/// Fréchet distance.
pub fn emit_report(
    pcc: &[BlockPccReport],
    vectors: &[VectorReport],
    dir: &Path,
) -> Result<(), DataError> {
    let mut out = String::from("qp,block,mean_pcc,std_pcc,frames,skipped\n");
    for r in pcc {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.qp,
            r.block,
            fmt(r.mean),
            fmt(r.std),
            r.per_frame.len(),
            r.skipped
        ));
    }
    atomic_write(&dir.join("pcc.csv"), out.as_bytes())?;

    let mut out = String::from("frame_id,kind,qp,gt,pred,abs_err\n");
    for rep in vectors {
        for f in &rep.frames {
            for ((&qp, &g), &p) in rep.qps.iter().zip(&f.gt).zip(&f.pred) {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    f.frame_id,
                    rep.kind.name(),
                    qp,
                    fmt(g),
                    fmt(p),
                    fmt((g - p).abs())
                ));
            }
            out.push_str(&format!(
                "{},{},frechet,,,{}\n",
                f.frame_id,
                rep.kind.name(),
                fmt(f.frechet)
            ));
        }
    }
    atomic_write(&dir.join("vectors.csv"), out.as_bytes())?;

    let mut out = String::from("kind,metric,mean,std\n");
    for r in pcc {
        out.push_str(&format!(
            "map,pcc_q{}_b{},{},{}\n",
            r.qp,
            r.block,
            fmt(r.mean),
            fmt(r.std)
        ));
    }
    for rep in vectors {
        out.push_str(&format!(
            "{},mae,{},{}\n",
            rep.kind.name(),
            fmt(rep.mae_mean),
            fmt(rep.mae_std)
        ));
        out.push_str(&format!(
            "{},frechet,{},{}\n",
            rep.kind.name(),
            fmt(rep.frechet_mean),
            fmt(rep.frechet_std)
        ));
    }
    atomic_write(&dir.join("summary.csv"), out.as_bytes())
}

/// Brute-force discrete Fréchet by enumerating every monotone coupling;
/// independent oracle for the dynamic program (test support, exponential).
pub fn frechet_brute_force(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
        ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
    }
    fn walk(a: &[(f64, f64)], b: &[(f64, f64)], i: usize, j: usize, leash: f64) -> f64 {
        let leash = leash.max(dist(a[i], b[j]));
        if i + 1 == a.len() && j + 1 == b.len() {
            return leash;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(walk(a, b, i + 1, j, leash));
        }
        if j + 1 < b.len() {
            best = best.min(walk(a, b, i, j + 1, leash));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(walk(a, b, i + 1, j + 1, leash));
        }
        best
    }
    walk(a, b, 0, 0, 0.0)
}
