//! Dataset pipeline: image ingestion and cropping, deterministic splits,
//! ground-truth generation through the codec oracle, binary storage, and
//! seeded batch iteration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::autodiff::{RngState, Tensor};
use crate::codec::{encode_intra, Frame, QP_MAX};
use crate::error::DataError;

pub const PATCH_MAGIC: &[u8; 4] = b"RDPX";
pub const TRUTH_MAGIC: &[u8; 4] = b"RDGT";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let sum = self.train + self.val + self.test;
        if self.train <= 0.0 || self.val <= 0.0 || self.test <= 0.0 {
            return Err(DataError::InvalidArgument(
                "split ratios must be positive".into(),
            ));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidArgument(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PatchEntry {
    pub id: u32,
    pub source: String,
    pub x: u32,
    pub y: u32,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub name: String,
    pub patch_size: usize,
    pub bitdepth: u8,
    pub qps: Vec<u8>,
    pub seed: u64,
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
    pub entries: Vec<PatchEntry>,
}

impl Manifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn ids(&self, split: Split) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id)
            .collect()
    }
}

/// Outcome of ingesting one patch-QP encode, stored in the truth file.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthRecord {
    pub patch_id: u32,
    pub qp: u8,
    pub bits: u32,
    /// Mean of squared normalized distortion, i.e. mean((|o−r|/2^(n−1))²).
    pub mse_norm: f32,
    /// |orig − recon| in the 8-bit sample domain, row-major.
    pub map: Vec<u8>,
}

// ---------------------------------------------------------------------------
// ingestion

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("pgm"))
        .unwrap_or(false)
}

/// Reads a binary (P5) PGM with maxval ≤ 255.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let bytes = std::fs::read(path).map_err(io_err)?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, DataError> {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::MalformedRecord(format!(
                "{}: truncated PGM header",
                path.display()
            )));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token(&bytes)?;
    if magic != "P5" {
        return Err(DataError::MalformedRecord(format!(
            "{}: not a P5 PGM (magic {magic})",
            path.display()
        )));
    }
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|_| DataError::MalformedRecord(format!("{}: bad width", path.display())))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|_| DataError::MalformedRecord(format!("{}: bad height", path.display())))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| DataError::MalformedRecord(format!("{}: bad maxval", path.display())))?;
    if maxval == 0 || maxval > 255 {
        return Err(DataError::MalformedRecord(format!(
            "{}: unsupported maxval {maxval}",
            path.display()
        )));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + w * h {
        return Err(DataError::Truncated(path.display().to_string()));
    }
    Ok((w, h, bytes[pos..pos + w * h].to_vec()))
}

/// Writes a binary (P5) PGM.
pub fn write_pgm(path: &Path, w: usize, h: usize, data: &[u8]) -> Result<(), DataError> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(data);
    atomic_write(path, &out)
}

/// Loads an image as 8-bit luma. PGM is read directly; other containers go
/// through the image crate with BT.601 RGB→Y conversion.
pub fn load_luma(path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    if is_pgm(path) {
        return read_pgm(path);
    }
    let img = image::open(path).map_err(|e| {
        DataError::MalformedRecord(format!("{}: {e}", path.display()))
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let luma = rgb
        .pixels()
        .map(|p| {
            let y = 0.299 * f64::from(p.0[0]) + 0.587 * f64::from(p.0[1]) + 0.114 * f64::from(p.0[2]);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok((w, h, luma))
}

pub struct IngestResult {
    pub manifest: Manifest,
    /// Raw luma patches ordered by id.
    pub patches: Vec<Vec<u8>>,
    pub skipped_files: usize,
}

/// Crops every readable image into a non-overlapping grid of full
/// `patch_size` squares; partial border patches are discarded.
pub fn ingest_and_crop(
    name: &str,
    images: &[PathBuf],
    patch_size: usize,
    qps: &[u8],
    seed: u64,
) -> Result<IngestResult, DataError> {
    if patch_size == 0 {
        return Err(DataError::InvalidArgument("patch size must be > 0".into()));
    }
    validate_qps(qps)?;
    let mut entries = Vec::new();
    let mut patches = Vec::new();
    let mut skipped_files = 0usize;
    for path in images {
        let (w, h, luma) = match load_luma(path) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                skipped_files += 1;
                continue;
            }
        };
        for gy in 0..h / patch_size {
            for gx in 0..w / patch_size {
                let (x0, y0) = (gx * patch_size, gy * patch_size);
                let mut patch = Vec::with_capacity(patch_size * patch_size);
                for y in 0..patch_size {
                    let row = (y0 + y) * w + x0;
                    patch.extend_from_slice(&luma[row..row + patch_size]);
                }
                entries.push(PatchEntry {
                    id: patches.len() as u32,
                    source: path.display().to_string(),
                    x: x0 as u32,
                    y: y0 as u32,
                    split: Split::Train,
                });
                patches.push(patch);
            }
        }
    }
    if patches.is_empty() {
        return Err(DataError::NoPatches);
    }
    Ok(IngestResult {
        manifest: Manifest {
            name: name.to_string(),
            patch_size,
            bitdepth: 8,
            qps: qps.to_vec(),
            seed,
            split_ratios: [0.0, 0.0, 0.0],
            split_seed: 0,
            entries,
        },
        patches,
        skipped_files,
    })
}

fn validate_qps(qps: &[u8]) -> Result<(), DataError> {
    if qps.is_empty() {
        return Err(DataError::InvalidArgument("QP list is empty".into()));
    }
    for &qp in qps {
        if qp > QP_MAX {
            return Err(DataError::InvalidArgument(format!("QP out of range: {qp}")));
        }
    }
    if qps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DataError::InvalidArgument(
            "QP list must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Seeded shuffle then contiguous partition into train/val/test.
pub fn split(manifest: &mut Manifest, spec: &SplitSpec) -> Result<(), DataError> {
    spec.validate()?;
    let n = manifest.entries.len();
    let n_train = (n as f64 * spec.train).round() as usize;
    let n_val = (n as f64 * spec.val).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(DataError::InvalidArgument(format!(
            "split {}/{}/{} leaves an empty split for {n} patches",
            spec.train, spec.val, spec.test
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(spec.seed).shuffle(&mut order);
    for (rank, &idx) in order.iter().enumerate() {
        manifest.entries[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    manifest.split_ratios = [spec.train, spec.val, spec.test];
    manifest.split_seed = spec.seed;
    Ok(())
}

/// Encodes every patch at every QP and returns records ordered by (id, QP).
pub fn generate_ground_truth(
    manifest: &Manifest,
    patches: &[Vec<u8>],
    qps: &[u8],
) -> Result<Vec<GroundTruthRecord>, DataError> {
    validate_qps(qps)?;
    let size = manifest.patch_size;
    let norm = f64::from(1u32 << (manifest.bitdepth - 1));
    let mut records = Vec::with_capacity(patches.len() * qps.len());
    for (id, patch) in patches.iter().enumerate() {
        let frame = Frame::from_luma8(size, size, patch)
            .map_err(|e| DataError::Integrity(format!("patch {id}: {e}")))?;
        for &qp in qps {
            let res = encode_intra(&frame, qp)
                .map_err(|e| DataError::Integrity(format!("patch {id}: {e}")))?;
            let mse_norm = res
                .distortion_map
                .iter()
                .map(|&d| {
                    let v = f64::from(d) / norm;
                    v * v
                })
                .sum::<f64>()
                / (size * size) as f64;
            records.push(GroundTruthRecord {
                patch_id: id as u32,
                qp,
                bits: res.bits as u32,
                mse_norm: mse_norm as f32,
                map: res.distortion_map.iter().map(|&d| d as u8).collect(),
            });
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// binary formats

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.buf.len() {
            return Err(DataError::Truncated(self.path.clone()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, DataError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn done(&self) -> Result<(), DataError> {
        if self.pos != self.buf.len() {
            return Err(DataError::MalformedRecord(format!(
                "{}: {} trailing bytes",
                self.path,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn check_magic(r: &mut Reader, expected: &'static [u8; 4]) -> Result<(), DataError> {
    let found: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &found != expected {
        return Err(DataError::BadMagic {
            expected: std::str::from_utf8(expected).unwrap(),
            found,
        });
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(DataError::Version(version));
    }
    Ok(())
}

pub fn write_patch_store(
    path: &Path,
    manifest: &Manifest,
    patches: &[Vec<u8>],
) -> Result<(), DataError> {
    let mut out = Vec::new();
    out.extend_from_slice(PATCH_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.patch_size as u16).to_le_bytes());
    out.push(manifest.bitdepth);
    out.extend_from_slice(&(patches.len() as u32).to_le_bytes());
    for (id, patch) in patches.iter().enumerate() {
        out.extend_from_slice(&(id as u32).to_le_bytes());
        out.extend_from_slice(patch);
    }
    atomic_write(path, &out)
}

pub fn read_patch_store(path: &Path) -> Result<(usize, u8, Vec<Vec<u8>>), DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path: path.display().to_string(),
    };
    check_magic(&mut r, PATCH_MAGIC)?;
    let size = r.u16()? as usize;
    let bitdepth = r.u8()?;
    let count = r.u32()? as usize;
    let mut patches = Vec::with_capacity(count);
    for i in 0..count {
        let id = r.u32()?;
        if id as usize != i {
            return Err(DataError::MalformedRecord(format!(
                "patch store: id {id} at position {i}"
            )));
        }
        patches.push(r.take(size * size)?.to_vec());
    }
    r.done()?;
    Ok((size, bitdepth, patches))
}

pub fn write_ground_truth(
    path: &Path,
    patch_size: usize,
    qps: &[u8],
    records: &[GroundTruthRecord],
) -> Result<(), DataError> {
    let mut out = Vec::new();
    out.extend_from_slice(TRUTH_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(patch_size as u16).to_le_bytes());
    out.extend_from_slice(&(patch_size as u16).to_le_bytes());
    out.push(qps.len() as u8);
    out.extend_from_slice(qps);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for rec in records {
        out.extend_from_slice(&rec.patch_id.to_le_bytes());
        out.push(rec.qp);
        out.extend_from_slice(&rec.bits.to_le_bytes());
        out.extend_from_slice(&rec.mse_norm.to_le_bytes());
        out.extend_from_slice(&rec.map);
    }
    atomic_write(path, &out)
}

#[derive(Debug)]
pub struct GroundTruthFile {
    pub width: usize,
    pub height: usize,
    pub qps: Vec<u8>,
    pub records: Vec<GroundTruthRecord>,
}

impl GroundTruthFile {
    pub fn lookup(&self) -> BTreeMap<(u32, u8), &GroundTruthRecord> {
        self.records.iter().map(|r| ((r.patch_id, r.qp), r)).collect()
    }
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruthFile, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path: path.display().to_string(),
    };
    check_magic(&mut r, TRUTH_MAGIC)?;
    let width = r.u16()? as usize;
    let height = r.u16()? as usize;
    let k = r.u8()? as usize;
    let qps = r.take(k)?.to_vec();
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let patch_id = r.u32()?;
        let qp = r.u8()?;
        let bits = r.u32()?;
        let mse_norm = r.f32()?;
        let map = r.take(width * height)?.to_vec();
        records.push(GroundTruthRecord {
            patch_id,
            qp,
            bits,
            mse_norm,
            map,
        });
    }
    r.done()?;
    Ok(GroundTruthFile {
        width,
        height,
        qps,
        records,
    })
}

/// Parses a truth file and validates every record's invariants (map range,
/// stored mse vs recomputation). Used for externally produced ground truth.
pub fn import_ground_truth(path: &Path, bitdepth: u8) -> Result<GroundTruthFile, DataError> {
    let file = read_ground_truth(path)?;
    let norm = f64::from(1u32 << (bitdepth - 1));
    let max = (1u32 << bitdepth) - 1;
    for rec in &file.records {
        let ctx = format!("record (patch {}, QP {})", rec.patch_id, rec.qp);
        if rec.map.len() != file.width * file.height {
            return Err(DataError::MalformedRecord(format!(
                "{ctx}: map has {} samples",
                rec.map.len()
            )));
        }
        if rec.map.iter().any(|&d| u32::from(d) > max) {
            return Err(DataError::MalformedRecord(format!(
                "{ctx}: distortion exceeds {bitdepth}-bit range"
            )));
        }
        let mse = rec
            .map
            .iter()
            .map(|&d| {
                let v = f64::from(d) / norm;
                v * v
            })
            .sum::<f64>()
            / rec.map.len() as f64;
        if (mse - f64::from(rec.mse_norm)).abs() > 1e-6 {
            return Err(DataError::MalformedRecord(format!(
                "{ctx}: stored mse {} vs recomputed {mse}",
                rec.mse_norm
            )));
        }
    }
    Ok(file)
}

// ---------------------------------------------------------------------------
// manifest text format

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<(), DataError> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "# rdnet dataset manifest");
    let _ = writeln!(s, "name = {}", m.name);
    let _ = writeln!(s, "patch_size = {}", m.patch_size);
    let _ = writeln!(s, "bitdepth = {}", m.bitdepth);
    let qps: Vec<String> = m.qps.iter().map(|q| q.to_string()).collect();
    let _ = writeln!(s, "qps = {}", qps.join(","));
    let _ = writeln!(s, "seed = {}", m.seed);
    let _ = writeln!(
        s,
        "split_ratios = {},{},{}",
        m.split_ratios[0], m.split_ratios[1], m.split_ratios[2]
    );
    let _ = writeln!(s, "split_seed = {}", m.split_seed);
    let _ = writeln!(
        s,
        "counts = train:{},val:{},test:{}",
        m.count(Split::Train),
        m.count(Split::Val),
        m.count(Split::Test)
    );
    let _ = writeln!(s, "entries:");
    for e in &m.entries {
        let _ = writeln!(s, "{} {} {} {} {}", e.id, e.source, e.x, e.y, e.split);
    }
    atomic_write(path, s.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut m = Manifest {
        name: String::new(),
        patch_size: 0,
        bitdepth: 8,
        qps: Vec::new(),
        seed: 0,
        split_ratios: [0.0; 3],
        split_seed: 0,
        entries: Vec::new(),
    };
    let err = |line: usize, message: &str| DataError::Manifest {
        line,
        message: message.to_string(),
    };
    let mut in_entries = false;
    let mut counts: Option<[usize; 3]> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_entries {
            if line == "entries:" {
                in_entries = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(lineno, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "name" => m.name = value.to_string(),
                "patch_size" => {
                    m.patch_size = value.parse().map_err(|_| err(lineno, "bad patch_size"))?
                }
                "bitdepth" => m.bitdepth = value.parse().map_err(|_| err(lineno, "bad bitdepth"))?,
                "qps" => {
                    m.qps = value
                        .split(',')
                        .map(|v| v.trim().parse::<u8>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(lineno, "bad qps"))?
                }
                "seed" => m.seed = value.parse().map_err(|_| err(lineno, "bad seed"))?,
                "split_ratios" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(lineno, "bad split_ratios"))?;
                    if parts.len() != 3 {
                        return Err(err(lineno, "split_ratios needs 3 values"));
                    }
                    m.split_ratios = [parts[0], parts[1], parts[2]];
                }
                "split_seed" => {
                    m.split_seed = value.parse().map_err(|_| err(lineno, "bad split_seed"))?
                }
                "counts" => {
                    let mut c = [0usize; 3];
                    for part in value.split(',') {
                        let (tag, n) = part
                            .split_once(':')
                            .ok_or_else(|| err(lineno, "bad counts"))?;
                        let n: usize = n.trim().parse().map_err(|_| err(lineno, "bad counts"))?;
                        match tag.trim() {
                            "train" => c[0] = n,
                            "val" => c[1] = n,
                            "test" => c[2] = n,
                            _ => return Err(err(lineno, "bad counts tag")),
                        }
                    }
                    counts = Some(c);
                }
                _ => return Err(err(lineno, "unknown key")),
            }
        } else {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 5 {
                return Err(err(lineno, "entry needs 5 columns"));
            }
            m.entries.push(PatchEntry {
                id: cols[0].parse().map_err(|_| err(lineno, "bad id"))?,
                source: cols[1].to_string(),
                x: cols[2].parse().map_err(|_| err(lineno, "bad x"))?,
                y: cols[3].parse().map_err(|_| err(lineno, "bad y"))?,
                split: Split::parse(cols[4]).ok_or_else(|| err(lineno, "bad split tag"))?,
            });
        }
    }
    if m.patch_size == 0 || m.entries.is_empty() {
        return Err(DataError::Manifest {
            line: 0,
            message: "missing patch_size or entries".into(),
        });
    }
    if let Some(c) = counts {
        let actual = [
            m.count(Split::Train),
            m.count(Split::Val),
            m.count(Split::Test),
        ];
        if c != actual {
            return Err(DataError::Integrity(format!(
                "manifest counts {c:?} do not match entries {actual:?}"
            )));
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// batches

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    DistortionMap,
    BppVector,
    DistortionVector,
}

/// One training batch. For the map target, `q_hat` carries the per-item QP
/// plane and `target` the normalized distortion maps; for vector targets,
/// `q_hat` is `None` and `target` is N×1×1×K.
pub struct Batch {
    pub i_hat: Tensor<f32>,
    pub q_hat: Option<Tensor<f32>>,
    pub target: Tensor<f32>,
}

/// Everything loaded and indexed for training/evaluation.
pub struct Dataset {
    pub manifest: Manifest,
    pub patches: Vec<Vec<u8>>,
    pub truth: GroundTruthFile,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let manifest = read_manifest(&dir.join("manifest.txt"))?;
        let (size, bitdepth, patches) = read_patch_store(&dir.join("patches.rdpx"))?;
        if size != manifest.patch_size || bitdepth != manifest.bitdepth {
            return Err(DataError::Integrity(
                "patch store does not match manifest".into(),
            ));
        }
        if patches.len() != manifest.entries.len() {
            return Err(DataError::Integrity(format!(
                "{} patches vs {} manifest entries",
                patches.len(),
                manifest.entries.len()
            )));
        }
        let truth = read_ground_truth(&dir.join("truth.rdgt"))?;
        Ok(Dataset {
            manifest,
            patches,
            truth,
        })
    }

    pub fn normalizer(&self) -> f32 {
        (1u32 << (self.manifest.bitdepth - 1)) as f32
    }

    pub fn patch_i_hat(&self, id: u32) -> Vec<f32> {
        let norm = self.normalizer();
        self.patches[id as usize]
            .iter()
            .map(|&b| f32::from(b) / norm)
            .collect()
    }

    pub fn record(&self, id: u32, qp: u8) -> Result<&GroundTruthRecord, DataError> {
        self.truth
            .records
            .iter()
            .find(|r| r.patch_id == id && r.qp == qp)
            .ok_or_else(|| {
                DataError::Integrity(format!("missing ground truth for patch {id} QP {qp}"))
            })
    }

    /// Seeded epoch batches. Every sample of the split appears exactly once;
    /// the order is a pure function of (seed, epoch).
    pub fn batches(
        &self,
        split: Split,
        kind: TargetKind,
        batch_size: usize,
        seed: u64,
        epoch: u32,
    ) -> Result<Vec<Batch>, DataError> {
        if batch_size == 0 {
            return Err(DataError::InvalidArgument("batch size must be ≥ 1".into()));
        }
        let ids = self.manifest.ids(split);
        if ids.is_empty() {
            return Err(DataError::InvalidArgument(format!(
                "{split} split is empty"
            )));
        }
        let qps = &self.truth.qps;
        let size = self.manifest.patch_size;
        let norm = self.normalizer();
        let mut items: Vec<(u32, u8)> = match kind {
            TargetKind::DistortionMap => ids
                .iter()
                .flat_map(|&id| qps.iter().map(move |&qp| (id, qp)))
                .collect(),
            _ => ids.iter().map(|&id| (id, 0)).collect(),
        };
        let mut rng = RngState::new(seed).derive(u64::from(epoch));
        rng.shuffle(&mut items);
        let mut batches = Vec::new();
        for chunk in items.chunks(batch_size) {
            let n = chunk.len();
            let mut i_hat = Vec::with_capacity(n * size * size);
            match kind {
                TargetKind::DistortionMap => {
                    let mut q_hat = Vec::with_capacity(n * size * size);
                    let mut target = Vec::with_capacity(n * size * size);
                    for &(id, qp) in chunk {
                        i_hat.extend(self.patch_i_hat(id));
                        q_hat.extend(std::iter::repeat_n(
                            f32::from(qp) / f32::from(QP_MAX),
                            size * size,
                        ));
                        let rec = self.record(id, qp)?;
                        target.extend(rec.map.iter().map(|&d| f32::from(d) / norm));
                    }
                    batches.push(Batch {
                        i_hat: Tensor::from_vec([n, 1, size, size], i_hat).unwrap(),
                        q_hat: Some(Tensor::from_vec([n, 1, size, size], q_hat).unwrap()),
                        target: Tensor::from_vec([n, 1, size, size], target).unwrap(),
                    });
                }
                TargetKind::BppVector | TargetKind::DistortionVector => {
                    let k = qps.len();
                    let mut target = Vec::with_capacity(n * k);
                    for &(id, _) in chunk {
                        i_hat.extend(self.patch_i_hat(id));
                        for &qp in qps {
                            let rec = self.record(id, qp)?;
                            target.push(match kind {
                                TargetKind::BppVector => {
                                    rec.bits as f32 / (size * size) as f32
                                }
                                _ => rec.mse_norm,
                            });
                        }
                    }
                    batches.push(Batch {
                        i_hat: Tensor::from_vec([n, 1, size, size], i_hat).unwrap(),
                        q_hat: None,
                        target: Tensor::from_vec([n, 1, 1, k], target).unwrap(),
                    });
                }
            }
        }
        Ok(batches)
    }
}
