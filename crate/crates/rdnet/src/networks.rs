//! The two estimator networks: G maps (Î, Q̂) to a distortion map through a
//! PReLU U-shape with a residual summation; F maps Î to a K-vector of per-QP
//! scalars through the same U-shape with ReLU plus two dense layers.
//! Also home to the training loop and weights serialization.

use std::path::Path;

use crate::autodiff::{
    adam_step, AdamHyper, AdamState, ParamSet, RngState, Tape, Tensor, ValueId,
};
use crate::codec::{Frame, QP_MAX};
use crate::dataset::{atomic_write, Batch, Dataset, Split, TargetKind};
use crate::error::{AutodiffError, DataError, TrainError};

pub const CHANNELS: usize = 64;
pub const WEIGHTS_MAGIC: &[u8; 4] = b"RDNW";
pub const WEIGHTS_VERSION: u16 = 1;
const PRELU_INIT: f32 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    G,
    FBits,
    FDist,
}

impl NetworkKind {
    pub fn code(self) -> u8 {
        match self {
            NetworkKind::G => 0,
            NetworkKind::FBits => 1,
            NetworkKind::FDist => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NetworkKind::G),
            1 => Some(NetworkKind::FBits),
            2 => Some(NetworkKind::FDist),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::G => "g",
            NetworkKind::FBits => "f-bits",
            NetworkKind::FDist => "f-dist",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "g" => Some(NetworkKind::G),
            "f-bits" => Some(NetworkKind::FBits),
            "f-dist" => Some(NetworkKind::FDist),
            _ => None,
        }
    }

    pub fn target_kind(self) -> TargetKind {
        match self {
            NetworkKind::G => TargetKind::DistortionMap,
            NetworkKind::FBits => TargetKind::BppVector,
            NetworkKind::FDist => TargetKind::DistortionVector,
        }
    }
}

/// A network plus the bookkeeping that goes into the weights file.
#[derive(Clone, Debug)]
pub struct Model {
    pub kind: NetworkKind,
    pub qps: Vec<u8>,
    pub params: ParamSet<f32>,
    pub seed: u64,
    pub best_epoch: u32,
}

fn he_kernel(rng: &mut RngState, out_ch: usize, in_ch: usize, k: usize) -> Tensor<f32> {
    let std = (2.0 / (in_ch * k * k) as f64).sqrt();
    let data = (0..out_ch * in_ch * k * k)
        .map(|_| (rng.next_normal() * std) as f32)
        .collect();
    Tensor::from_vec([out_ch, in_ch, k, k], data).unwrap()
}

fn conv_block(params: &mut ParamSet<f32>, rng: &mut RngState, name: &str, out_ch: usize, in_ch: usize, k: usize) {
    params.push(&format!("{name}/kernel"), he_kernel(rng, out_ch, in_ch, k));
    params.push(&format!("{name}/bias"), Tensor::zeros([1, 1, 1, out_ch]));
}

fn prelu_block(params: &mut ParamSet<f32>, name: &str, ch: usize) {
    params.push(
        &format!("{name}/slope"),
        Tensor::from_vec([1, 1, 1, ch], vec![PRELU_INIT; ch]).unwrap(),
    );
}

/// U-shape convolution stages shared by G and F: (suffix, out, in).
/// conv8 sees 128 channels from the skip concatenation.
const U_CONVS: [(&str, usize, usize); 9] = [
    ("conv1", CHANNELS, 0), // input channel count filled by caller
    ("conv2", CHANNELS, CHANNELS),
    ("conv3", CHANNELS, CHANNELS),
    ("conv4", CHANNELS, CHANNELS),
    ("conv5", CHANNELS, CHANNELS),
    ("conv6", CHANNELS, CHANNELS),
    ("conv7", CHANNELS, CHANNELS),
    ("conv8", CHANNELS, 2 * CHANNELS),
    ("conv9", CHANNELS, CHANNELS),
];

/// Network G per its layer diagram; seeded He-style init.
pub fn build_g(seed: u64, qps: &[u8]) -> Model {
    let mut rng = RngState::new(seed);
    let mut params = ParamSet::new();
    for (name, out_ch, in_ch) in U_CONVS {
        let in_ch = if name == "conv1" { 2 } else { in_ch };
        conv_block(&mut params, &mut rng, &format!("g/{name}"), out_ch, in_ch, 3);
        prelu_block(&mut params, &format!("g/{name}"), out_ch);
    }
    conv_block(&mut params, &mut rng, "g/out", 1, 2 * CHANNELS, 5);
    Model {
        kind: NetworkKind::G,
        qps: qps.to_vec(),
        params,
        seed,
        best_epoch: 0,
    }
}

/// Network F per its layer diagram. `k` is the QP-vector length.
pub fn build_f(seed: u64, kind: NetworkKind, qps: &[u8]) -> Model {
    assert!(kind != NetworkKind::G, "build_f builds F variants");
    assert!(!qps.is_empty(), "K must be >= 1");
    let k = qps.len();
    let mut rng = RngState::new(seed);
    let mut params = ParamSet::new();
    for (name, out_ch, in_ch) in U_CONVS {
        let in_ch = if name == "conv1" { 1 } else { in_ch };
        conv_block(&mut params, &mut rng, &format!("f/{name}"), out_ch, in_ch, 3);
    }
    conv_block(&mut params, &mut rng, "f/conv10", CHANNELS, 2 * CHANNELS, 3);
    conv_block(&mut params, &mut rng, "f/conv11", CHANNELS, CHANNELS, 3);
    // dense head: GAP(64) -> FC(128) + ReLU -> FC(K)
    let std1 = (2.0 / CHANNELS as f64).sqrt();
    let w1 = (0..128 * CHANNELS)
        .map(|_| (rng.next_normal() * std1) as f32)
        .collect();
    params.push("f/fc1/weight", Tensor::from_vec([1, 1, 128, CHANNELS], w1).unwrap());
    params.push("f/fc1/bias", Tensor::zeros([1, 1, 1, 128]));
    let std2 = (2.0 / 128.0f64).sqrt();
    let w2 = (0..k * 128)
        .map(|_| (rng.next_normal() * std2) as f32)
        .collect();
    params.push("f/fc2/weight", Tensor::from_vec([1, 1, k, 128], w2).unwrap());
    params.push("f/fc2/bias", Tensor::zeros([1, 1, 1, k]));
    Model {
        kind,
        qps: qps.to_vec(),
        params,
        seed,
        best_epoch: 0,
    }
}

/// Input normalization: Î = I / 2^(n−1) and a constant QP/51 map.
pub fn normalize_inputs(frame: &Frame, qp: u8) -> Result<(Tensor<f32>, Tensor<f32>), AutodiffError> {
    if qp > QP_MAX {
        return Err(AutodiffError::Shape(format!("QP out of range: {qp}")));
    }
    let norm = f64::from(1u32 << (frame.bitdepth - 1));
    let i_hat: Vec<f32> = frame
        .samples()
        .iter()
        .map(|&s| (f64::from(s) / norm) as f32)
        .collect();
    let shape = [1, 1, frame.height, frame.width];
    let q = f32::from(qp) / f32::from(QP_MAX);
    Ok((
        Tensor::from_vec(shape, i_hat).unwrap(),
        Tensor::from_vec(shape, vec![q; frame.width * frame.height]).unwrap(),
    ))
}

fn check_pool_dims(shape: [usize; 4]) -> Result<(), AutodiffError> {
    let [_, _, h, w] = shape;
    if h % 4 != 0 || w % 4 != 0 {
        return Err(AutodiffError::Shape(format!(
            "spatial size {h}x{w} must be a multiple of 4 (two pooling stages)"
        )));
    }
    Ok(())
}

/// Tape graph of one forward pass plus the leaf id of every parameter, in
/// `params` order.
pub struct Graph {
    pub output: ValueId,
    pub param_ids: Vec<ValueId>,
}

struct ParamLeaves<'a> {
    params: &'a ParamSet<f32>,
    ids: Vec<ValueId>,
}

impl<'a> ParamLeaves<'a> {
    fn new(tape: &mut Tape<f32>, params: &'a ParamSet<f32>) -> Self {
        let ids = params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect();
        ParamLeaves { params, ids }
    }

    fn id(&self, name: &str) -> ValueId {
        let idx = self
            .params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.ids[idx]
    }
}

fn conv(
    tape: &mut Tape<f32>,
    leaves: &ParamLeaves,
    name: &str,
    input: ValueId,
) -> Result<ValueId, AutodiffError> {
    tape.conv2d(
        input,
        leaves.id(&format!("{name}/kernel")),
        leaves.id(&format!("{name}/bias")),
    )
}

fn conv_prelu(
    tape: &mut Tape<f32>,
    leaves: &ParamLeaves,
    name: &str,
    input: ValueId,
) -> Result<ValueId, AutodiffError> {
    let c = conv(tape, leaves, name, input)?;
    tape.prelu(c, leaves.id(&format!("{name}/slope")))
}

fn conv_relu(
    tape: &mut Tape<f32>,
    leaves: &ParamLeaves,
    name: &str,
    input: ValueId,
) -> Result<ValueId, AutodiffError> {
    let c = conv(tape, leaves, name, input)?;
    Ok(tape.relu(c))
}

/// Shared U-shape body. Returns the 128-channel full-resolution features
/// (output of the second skip concatenation).
#[allow(clippy::too_many_arguments)]
fn u_body(
    tape: &mut Tape<f32>,
    leaves: &ParamLeaves,
    prefix: &str,
    input: ValueId,
    activate: fn(&mut Tape<f32>, &ParamLeaves, &str, ValueId) -> Result<ValueId, AutodiffError>,
) -> Result<ValueId, AutodiffError> {
    let c1 = activate(tape, leaves, &format!("{prefix}/conv1"), input)?;
    let c2 = activate(tape, leaves, &format!("{prefix}/conv2"), c1)?;
    let p1 = tape.maxpool2(c2)?;
    let c3 = activate(tape, leaves, &format!("{prefix}/conv3"), p1)?;
    let c4 = activate(tape, leaves, &format!("{prefix}/conv4"), c3)?;
    let p2 = tape.maxpool2(c4)?;
    let c5 = activate(tape, leaves, &format!("{prefix}/conv5"), p2)?;
    let u1 = tape.upsample2(c5);
    let c6 = activate(tape, leaves, &format!("{prefix}/conv6"), u1)?;
    let c7 = activate(tape, leaves, &format!("{prefix}/conv7"), c6)?;
    let cat1 = tape.concat_channels(c7, c4)?;
    let u2 = tape.upsample2(cat1);
    let c8 = activate(tape, leaves, &format!("{prefix}/conv8"), u2)?;
    let c9 = activate(tape, leaves, &format!("{prefix}/conv9"), c8)?;
    tape.concat_channels(c9, c2)
}

/// Forward pass of G on normalized inputs; output is the raw (unclamped)
/// distortion-map estimate, same shape as Î.
pub fn forward_g(
    tape: &mut Tape<f32>,
    model: &Model,
    i_hat: &Tensor<f32>,
    q_hat: &Tensor<f32>,
) -> Result<Graph, AutodiffError> {
    if !i_hat.same_shape(q_hat) {
        return Err(AutodiffError::Shape(format!(
            "i_hat {:?} vs q_hat {:?}",
            i_hat.shape(),
            q_hat.shape()
        )));
    }
    check_pool_dims(i_hat.shape())?;
    let leaves = ParamLeaves::new(tape, &model.params);
    let i_leaf = tape.leaf(i_hat.clone());
    let q_leaf = tape.leaf(q_hat.clone());
    let x = tape.concat_channels(q_leaf, i_leaf)?;
    let features = u_body(tape, &leaves, "g", x, conv_prelu)?;
    let out = conv(tape, &leaves, "g/out", features)?;
    let output = tape.add_elementwise(out, i_leaf)?;
    Ok(Graph {
        output,
        param_ids: leaves.ids,
    })
}

/// Forward pass of F on Î; output is N×1×1×K.
pub fn forward_f(
    tape: &mut Tape<f32>,
    model: &Model,
    i_hat: &Tensor<f32>,
) -> Result<Graph, AutodiffError> {
    check_pool_dims(i_hat.shape())?;
    let leaves = ParamLeaves::new(tape, &model.params);
    let i_leaf = tape.leaf(i_hat.clone());
    let features = u_body(tape, &leaves, "f", i_leaf, conv_relu)?;
    let c10 = conv_relu(tape, &leaves, "f/conv10", features)?;
    let c11 = conv_relu(tape, &leaves, "f/conv11", c10)?;
    let pooled = tape.global_avg_pool(c11);
    let fc1 = tape.fully_connected(pooled, leaves.id("f/fc1/weight"), leaves.id("f/fc1/bias"))?;
    let fc1 = tape.relu(fc1);
    let output =
        tape.fully_connected(fc1, leaves.id("f/fc2/weight"), leaves.id("f/fc2/bias"))?;
    Ok(Graph {
        output,
        param_ids: leaves.ids,
    })
}

/// Inference-mode G: distortion map clamped to the normalized range [0, 2].
pub fn infer_g(
    model: &Model,
    i_hat: &Tensor<f32>,
    q_hat: &Tensor<f32>,
) -> Result<Tensor<f32>, AutodiffError> {
    let mut tape = Tape::new();
    let graph = forward_g(&mut tape, model, i_hat, q_hat)?;
    Ok(tape.value(graph.output).clamp(0.0, 2.0))
}

/// Inference-mode F: per-QP predictions for each batch item.
pub fn infer_f(model: &Model, i_hat: &Tensor<f32>) -> Result<Tensor<f32>, AutodiffError> {
    let mut tape = Tape::new();
    let graph = forward_f(&mut tape, model, i_hat)?;
    Ok(tape.value(graph.output).clone())
}

// ---------------------------------------------------------------------------
// training

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: u32,
    pub max_epochs: u32,
    pub seed: u64,
    pub target: TargetKind,
}

impl TrainConfig {
    pub fn defaults(target: TargetKind, max_epochs: u32, seed: u64) -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 1e-4,
            weight_decay: 1e-4,
            patience: 10,
            max_epochs,
            seed,
            target,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct History {
    /// Per-epoch training loss including the ℓ2 term.
    pub train: Vec<f64>,
    /// Per-epoch validation data loss.
    pub val: Vec<f64>,
}

fn batch_loss_graph(
    tape: &mut Tape<f32>,
    model: &Model,
    batch: &Batch,
) -> Result<Graph, TrainError> {
    let graph = match model.kind {
        NetworkKind::G => {
            let q = batch.q_hat.as_ref().ok_or_else(|| {
                TrainError::Autodiff(AutodiffError::Shape("map batch lacks Q̂".into()))
            })?;
            forward_g(tape, model, &batch.i_hat, q)?
        }
        _ => forward_f(tape, model, &batch.i_hat)?,
    };
    let target = tape.leaf(batch.target.clone());
    let loss = match model.kind {
        NetworkKind::G => tape.loss_mse(graph.output, target)?,
        _ => tape.loss_mae(graph.output, target)?,
    };
    Ok(Graph {
        output: loss,
        param_ids: graph.param_ids,
    })
}

/// Mean data loss over a split, weighted by batch size.
pub fn evaluate_loss(model: &Model, ds: &Dataset, split: Split) -> Result<f64, TrainError> {
    let batches = ds.batches(split, model.kind.target_kind(), 32, 0, 0)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in &batches {
        let n = batch.i_hat.shape()[0];
        let mut tape = Tape::new();
        let graph = batch_loss_graph(&mut tape, model, batch)?;
        total += f64::from(tape.value(graph.output).scalar_value()) * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

/// Full training loop with seeded shuffling and early stopping; returns the
/// weights of the best-validation epoch. `val_loss` supplies the per-epoch
/// validation figure (the public entry point wires in the real validation
/// split; tests may script it).
pub fn train_with_validation<F>(
    model: &mut Model,
    ds: &Dataset,
    cfg: &TrainConfig,
    mut val_loss: F,
) -> Result<(ModelWeights, History), TrainError>
where
    F: FnMut(&Model, u32) -> Result<f64, TrainError>,
{
    assert!(cfg.patience >= 1, "patience must be >= 1");
    if cfg.target != model.kind.target_kind() {
        return Err(TrainError::Autodiff(AutodiffError::Shape(format!(
            "target {:?} does not match network kind {}",
            cfg.target,
            model.kind.name()
        ))));
    }
    let hp = AdamHyper {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamHyper::default()
    };
    let mut state = AdamState::new(&model.params);
    let mut history = History::default();
    let mut best: Option<(f64, u32, ParamSet<f32>)> = None;
    let mut stall = 0u32;
    for epoch in 1..=cfg.max_epochs {
        let batches = ds.batches(Split::Train, cfg.target, cfg.batch_size, cfg.seed, epoch)?;
        let mut epoch_loss = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let n = batch.i_hat.shape()[0];
            let reg = cfg.weight_decay * model.params.sum_squares();
            let mut tape = Tape::new();
            let graph = batch_loss_graph(&mut tape, model, batch)?;
            let data_loss = f64::from(tape.value(graph.output).scalar_value());
            if !data_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss(epoch));
            }
            epoch_loss += (data_loss + reg) * n as f64;
            count += n;
            let grads = tape.backward(graph.output)?;
            let grad_list: Vec<Tensor<f32>> = model
                .params
                .iter()
                .zip(&graph.param_ids)
                .map(|(p, &id)| grads.get_or_zero(id, p.tensor.shape()))
                .collect();
            adam_step(&mut model.params, &grad_list, &mut state, &hp)?;
        }
        history.train.push(epoch_loss / count as f64);
        let val = val_loss(model, epoch)?;
        if !val.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch));
        }
        history.val.push(val);
        let improved = best.as_ref().map(|(b, _, _)| val < *b).unwrap_or(true);
        if improved {
            best = Some((val, epoch, model.params.clone()));
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    model.params = best_params;
    model.best_epoch = best_epoch;
    Ok((ModelWeights::from_model(model), history))
}

/// Trains against the dataset's validation split.
pub fn train(
    model: &mut Model,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelWeights, History), TrainError> {
    train_with_validation(model, ds, cfg, |m, _| evaluate_loss(m, ds, Split::Val))
}

// ---------------------------------------------------------------------------
// weights serialization

/// Serializable snapshot of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub version: u16,
    pub kind: NetworkKind,
    pub qps: Vec<u8>,
    pub seed: u64,
    pub best_epoch: u32,
    pub blobs: Vec<(String, [usize; 4], Vec<f32>)>,
}

impl ModelWeights {
    pub fn from_model(model: &Model) -> Self {
        ModelWeights {
            version: WEIGHTS_VERSION,
            kind: model.kind,
            qps: model.qps.clone(),
            seed: model.seed,
            best_epoch: model.best_epoch,
            blobs: model
                .params
                .iter()
                .map(|p| (p.name.clone(), p.tensor.shape(), p.tensor.data().to_vec()))
                .collect(),
        }
    }

    /// Reconstructs a model, verifying blob names and shapes against a fresh
    /// build of the same architecture.
    pub fn into_model(self) -> Result<Model, DataError> {
        let mut model = match self.kind {
            NetworkKind::G => build_g(self.seed, &self.qps),
            kind => build_f(self.seed, kind, &self.qps),
        };
        if self.blobs.len() != model.params.len() {
            return Err(DataError::MalformedRecord(format!(
                "{} parameter blobs, architecture has {}",
                self.blobs.len(),
                model.params.len()
            )));
        }
        for ((name, shape, data), param) in self.blobs.into_iter().zip(model.params.iter_mut()) {
            if name != param.name || shape != param.tensor.shape() {
                return Err(DataError::MalformedRecord(format!(
                    "blob {name} {shape:?} does not match parameter {} {:?}",
                    param.name,
                    param.tensor.shape()
                )));
            }
            param.tensor = Tensor::from_vec(shape, data)
                .map_err(|e| DataError::MalformedRecord(e.to_string()))?;
        }
        model.best_epoch = self.best_epoch;
        Ok(model)
    }
}

pub fn save_weights(w: &ModelWeights, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&w.version.to_le_bytes());
    out.push(w.kind.code());
    out.push(w.qps.len() as u8);
    out.extend_from_slice(&w.qps);
    out.extend_from_slice(&w.seed.to_le_bytes());
    out.extend_from_slice(&w.best_epoch.to_le_bytes());
    out.extend_from_slice(&(w.blobs.len() as u32).to_le_bytes());
    for (name, shape, data) in &w.blobs {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(4); // rank
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &out)
}

pub fn load_weights(path: &Path) -> Result<ModelWeights, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let p = path.display().to_string();
    let trunc = || DataError::Truncated(p.clone());
    let mut pos = 0usize;
    let take = |n: usize, pos: &mut usize| -> Result<&[u8], DataError> {
        if *pos + n > bytes.len() {
            return Err(trunc());
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic: [u8; 4] = take(4, &mut pos)?.try_into().unwrap();
    if &magic != WEIGHTS_MAGIC {
        return Err(DataError::BadMagic {
            expected: "RDNW",
            found: magic,
        });
    }
    let version = u16::from_le_bytes(take(2, &mut pos)?.try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(DataError::Version(version));
    }
    let kind_code = take(1, &mut pos)?[0];
    let kind = NetworkKind::from_code(kind_code).ok_or(DataError::MalformedRecord(format!(
        "unknown network kind {kind_code}"
    )))?;
    let k = take(1, &mut pos)?[0] as usize;
    let qps = take(k, &mut pos)?.to_vec();
    let seed = u64::from_le_bytes(take(8, &mut pos)?.try_into().unwrap());
    let best_epoch = u32::from_le_bytes(take(4, &mut pos)?.try_into().unwrap());
    let count = u32::from_le_bytes(take(4, &mut pos)?.try_into().unwrap()) as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2, &mut pos)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len, &mut pos)?.to_vec())
            .map_err(|_| DataError::MalformedRecord("non-UTF8 parameter name".into()))?;
        let rank = take(1, &mut pos)?[0];
        if rank != 4 {
            return Err(DataError::MalformedRecord(format!(
                "parameter {name}: rank {rank}, expected 4"
            )));
        }
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = u32::from_le_bytes(take(4, &mut pos)?.try_into().unwrap()) as usize;
        }
        let n: usize = shape.iter().product();
        let raw = take(n * 4, &mut pos)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blobs.push((name, shape, data));
    }
    if pos != bytes.len() {
        return Err(DataError::MalformedRecord(format!(
            "{p}: {} trailing bytes",
            bytes.len() - pos
        )));
    }
    Ok(ModelWeights {
        version,
        kind,
        qps,
        seed,
        best_epoch,
        blobs,
    })
}

/// Loads and reconstructs a model, optionally insisting on a kind.
pub fn load_model(path: &Path, expected: Option<NetworkKind>) -> Result<Model, DataError> {
    let w = load_weights(path)?;
    if let Some(exp) = expected {
        if w.kind != exp {
            return Err(DataError::KindMismatch {
                expected: exp.name().to_string(),
                found: w.kind.name().to_string(),
            });
        }
    }
    w.into_model()
}
