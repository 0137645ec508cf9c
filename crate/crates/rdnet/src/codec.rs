//! Deterministic toy intra codec used to generate ground truth: 8×8
//! orthonormal DCT, uniform quantization with H.265-style step spacing, and
//! signed exp-Golomb bit counting in zigzag order. No prediction, no
//! entropy coder state; the point is monotone, learnable rate–distortion
//! behavior, not standard conformance.

use crate::error::CodecError;

pub const QP_MAX: u8 = 51;
const BLOCK: usize = 8;

/// Original or reconstructed luma plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub bitdepth: u8,
    samples: Vec<u16>,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        bitdepth: u8,
        samples: Vec<u16>,
    ) -> Result<Self, CodecError> {
        if width == 0 || height == 0 {
            return Err(CodecError::InvalidFrame("zero dimension".into()));
        }
        if samples.len() != width * height {
            return Err(CodecError::InvalidFrame(format!(
                "{} samples for {width}x{height}",
                samples.len()
            )));
        }
        let max = (1u32 << bitdepth) - 1;
        if samples.iter().any(|&s| u32::from(s) > max) {
            return Err(CodecError::InvalidFrame(format!(
                "sample exceeds {bitdepth}-bit range"
            )));
        }
        Ok(Frame {
            width,
            height,
            bitdepth,
            samples,
        })
    }

    pub fn from_luma8(width: usize, height: usize, samples: &[u8]) -> Result<Self, CodecError> {
        Frame::new(
            width,
            height,
            8,
            samples.iter().map(|&s| u16::from(s)).collect(),
        )
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.samples[y * self.width + x]
    }

    pub fn peak(&self) -> f64 {
        ((1u32 << self.bitdepth) - 1) as f64
    }
}

/// Everything the encoder reports for one (frame, QP) pair.
#[derive(Clone, Debug)]
pub struct EncodeResult {
    pub qp: u8,
    pub bits: u64,
    pub bpp: f64,
    pub reconstruction: Frame,
    /// |orig − recon| per pixel, in the integer sample domain.
    pub distortion_map: Vec<u16>,
    /// Mean of squared sample differences.
    pub mse: f64,
    pub psnr: f64,
}

/// Quantizer step, 2^((QP − 4) / 6).
pub fn qstep(qp: u8) -> Result<f64, CodecError> {
    if qp > QP_MAX {
        return Err(CodecError::QpOutOfRange(i64::from(qp)));
    }
    Ok(((f64::from(qp) - 4.0) / 6.0).exp2())
}

/// Code length in bits of the order-0 signed exp-Golomb code for `level`.
pub fn signed_exp_golomb_bits(level: i32) -> u32 {
    let code_num = if level > 0 {
        2 * level as u32 - 1
    } else {
        2 * (-(level as i64)) as u32
    };
    2 * (32 - (code_num + 1).leading_zeros() - 1) + 1
}

fn dct_basis() -> [[f64; BLOCK]; BLOCK] {
    let mut basis = [[0.0; BLOCK]; BLOCK];
    for (u, row) in basis.iter_mut().enumerate() {
        let scale = if u == 0 {
            (1.0 / BLOCK as f64).sqrt()
        } else {
            (2.0 / BLOCK as f64).sqrt()
        };
        for (x, v) in row.iter_mut().enumerate() {
            *v = scale
                * (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * u as f64
                    / (2.0 * BLOCK as f64))
                    .cos();
        }
    }
    basis
}

/// Orthonormal 2-D DCT-II of an 8×8 block.
pub fn dct8_forward(block: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            let mut acc = 0.0;
            for x in 0..BLOCK {
                acc += basis[u][x] * block[y * BLOCK + x];
            }
            tmp[y * BLOCK + u] = acc;
        }
    }
    let mut out = [0.0; 64];
    // columns
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut acc = 0.0;
            for y in 0..BLOCK {
                acc += basis[v][y] * tmp[y * BLOCK + u];
            }
            out[v * BLOCK + u] = acc;
        }
    }
    out
}

/// Inverse of [`dct8_forward`].
pub fn dct8_inverse(coefs: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    for u in 0..BLOCK {
        for y in 0..BLOCK {
            let mut acc = 0.0;
            for v in 0..BLOCK {
                acc += basis[v][y] * coefs[v * BLOCK + u];
            }
            tmp[y * BLOCK + u] = acc;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            let mut acc = 0.0;
            for u in 0..BLOCK {
                acc += basis[u][x] * tmp[y * BLOCK + u];
            }
            out[y * BLOCK + x] = acc;
        }
    }
    out
}

/// Zigzag scan order for an 8×8 block.
pub fn zigzag_order() -> [usize; 64] {
    let mut order = [0usize; 64];
    let mut i = 0;
    for s in 0..(2 * BLOCK - 1) {
        let pairs: Vec<(usize, usize)> = (0..=s.min(BLOCK - 1))
            .filter_map(|y| {
                let x = s.checked_sub(y)?;
                (x < BLOCK).then_some((y, x))
            })
            .collect();
        if s % 2 == 0 {
            // up-right: increasing x
            for &(y, x) in pairs.iter().rev() {
                order[i] = y * BLOCK + x;
                i += 1;
            }
        } else {
            for &(y, x) in &pairs {
                order[i] = y * BLOCK + x;
                i += 1;
            }
        }
    }
    order
}

/// Transform, quantize, count bits, and reconstruct one frame at one QP.
///
/// The frame is replicate-padded to multiples of 8; padded samples are
/// excluded from bits-per-pixel, the distortion map, mse, and psnr.
pub fn encode_intra(frame: &Frame, qp: u8) -> Result<EncodeResult, CodecError> {
    let step = qstep(qp)?;
    let (w, h) = (frame.width, frame.height);
    let pw = w.div_ceil(BLOCK) * BLOCK;
    let ph = h.div_ceil(BLOCK) * BLOCK;
    let zigzag = zigzag_order();

    let mut recon = vec![0u16; w * h];
    let mut bits = 0u64;
    let max_sample = (1u32 << frame.bitdepth) - 1;

    let mut block = [0.0f64; 64];
    for by in (0..ph).step_by(BLOCK) {
        for bx in (0..pw).step_by(BLOCK) {
            for y in 0..BLOCK {
                let sy = (by + y).min(h - 1);
                for x in 0..BLOCK {
                    let sx = (bx + x).min(w - 1);
                    block[y * BLOCK + x] = f64::from(frame.at(sx, sy));
                }
            }
            let coefs = dct8_forward(&block);
            let mut deq = [0.0f64; 64];
            for &idx in &zigzag {
                let level = (coefs[idx] / step).round() as i32;
                bits += u64::from(signed_exp_golomb_bits(level));
                deq[idx] = f64::from(level) * step;
            }
            let rec = dct8_inverse(&deq);
            for y in 0..BLOCK {
                let sy = by + y;
                if sy >= h {
                    continue;
                }
                for x in 0..BLOCK {
                    let sx = bx + x;
                    if sx >= w {
                        continue;
                    }
                    let v = rec[y * BLOCK + x].round().clamp(0.0, f64::from(max_sample));
                    recon[sy * w + sx] = v as u16;
                }
            }
        }
    }

    let reconstruction = Frame {
        width: w,
        height: h,
        bitdepth: frame.bitdepth,
        samples: recon,
    };
    let distortion_map: Vec<u16> = frame
        .samples
        .iter()
        .zip(&reconstruction.samples)
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    let mse = distortion_map
        .iter()
        .map(|&d| f64::from(d) * f64::from(d))
        .sum::<f64>()
        / (w * h) as f64;
    let peak = frame.peak();
    let psnr = if mse == 0.0 {
        100.0
    } else {
        (10.0 * (peak * peak / mse).log10()).min(100.0)
    };
    Ok(EncodeResult {
        qp,
        bits,
        bpp: bits as f64 / (w * h) as f64,
        reconstruction,
        distortion_map,
        mse,
        psnr,
    })
}

/// Fraction of signal energy outside the per-block DC terms; used to decide
/// whether monotonicity must be strict for a frame.
pub fn ac_energy_fraction(frame: &Frame) -> f64 {
    let (w, h) = (frame.width, frame.height);
    let pw = w.div_ceil(BLOCK) * BLOCK;
    let ph = h.div_ceil(BLOCK) * BLOCK;
    let mut total = 0.0;
    let mut ac = 0.0;
    let mut block = [0.0f64; 64];
    for by in (0..ph).step_by(BLOCK) {
        for bx in (0..pw).step_by(BLOCK) {
            for y in 0..BLOCK {
                let sy = (by + y).min(h - 1);
                for x in 0..BLOCK {
                    let sx = (bx + x).min(w - 1);
                    block[y * BLOCK + x] = f64::from(frame.at(sx, sy));
                }
            }
            let coefs = dct8_forward(&block);
            for (i, c) in coefs.iter().enumerate() {
                total += c * c;
                if i != 0 {
                    ac += c * c;
                }
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        ac / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qstep_anchors() {
        assert_eq!(qstep(4).unwrap(), 1.0);
        assert_eq!(qstep(22).unwrap(), 8.0);
        let q51 = qstep(51).unwrap();
        assert!((q51 - 228.1).abs() < 0.1, "{q51}");
        assert!(qstep(52).is_err());
    }

    #[test]
    fn qstep_strictly_increasing() {
        for qp in 1..=QP_MAX {
            assert!(qstep(qp).unwrap() > qstep(qp - 1).unwrap());
        }
    }

    #[test]
    fn dct_constant_block_dc_only() {
        let block = [128.0; 64];
        let coefs = dct8_forward(&block);
        assert!((coefs[0] - 1024.0).abs() < 1e-9, "DC = {}", coefs[0]);
        for &c in &coefs[1..] {
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn dct_roundtrip_and_parseval() {
        let mut block = [0.0f64; 64];
        let mut state = 12345u64;
        for v in &mut block {
            // xorshift; plain deterministic pseudo-random samples
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state % 256) as f64;
        }
        let coefs = dct8_forward(&block);
        let back = dct8_inverse(&coefs);
        let sig: f64 = block.iter().map(|v| v * v).sum();
        let spec: f64 = coefs.iter().map(|v| v * v).sum();
        assert!((sig - spec).abs() / sig < 1e-12, "Parseval violated");
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn exp_golomb_lengths() {
        // code_num 0 -> 1 bit, 1..2 -> 3 bits, 3..6 -> 5 bits, ...
        assert_eq!(signed_exp_golomb_bits(0), 1);
        assert_eq!(signed_exp_golomb_bits(1), 3); // code_num 1
        assert_eq!(signed_exp_golomb_bits(-1), 3); // code_num 2
        assert_eq!(signed_exp_golomb_bits(2), 5); // code_num 3
        assert_eq!(signed_exp_golomb_bits(-3), 5); // code_num 6
        assert_eq!(signed_exp_golomb_bits(4), 7); // code_num 7
    }

    #[test]
    fn exp_golomb_length_matches_enumeration() {
        for level in -200i32..=200 {
            let code_num = if level > 0 {
                (2 * level - 1) as u64
            } else {
                (-2 * i64::from(level)) as u64
            };
            // prefix zeros + 1 + suffix
            let expected = 2 * (64 - (code_num + 1).leading_zeros() as u64 - 1) + 1;
            assert_eq!(u64::from(signed_exp_golomb_bits(level)), expected);
        }
    }

    #[test]
    fn zigzag_is_a_permutation() {
        let order = zigzag_order();
        let mut seen = [false; 64];
        for &i in &order {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert_eq!(order[0], 0);
        assert_eq!(order[1], 1); // first step right
        assert_eq!(order[2], 8); // then down-left
    }

    #[test]
    fn constant_frame_all_ac_zero_and_high_psnr() {
        let frame = Frame::from_luma8(16, 16, &[128u8; 256]).unwrap();
        for qp in [4, 12, 22, 27, 32, 37] {
            let res = encode_intra(&frame, qp).unwrap();
            // 4 blocks, DC only: 1 bit per zero AC level.
            let dc_bits: u64 = res.bits - 63 * 4; // per-block AC cost if all zero
            assert!(dc_bits >= 4, "qp {qp}: bits {}", res.bits);
            assert!(res.psnr >= 40.0, "qp {qp}: psnr {}", res.psnr);
            // AC levels all zero <=> total bits = 4 * (63 + dc_len)
            let level = (1024.0 / qstep(qp).unwrap()).round() as i32;
            let expected = 4 * (63 + u64::from(signed_exp_golomb_bits(level)));
            assert_eq!(res.bits, expected);
        }
    }

    fn textured_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut state = seed | 1;
        let samples: Vec<u8> = (0..w * h)
            .map(|i| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let x = (i % w) as f64;
                let y = (i / w) as f64;
                let base = 110.0 + 60.0 * (x / 17.0).sin() * (y / 13.0).cos();
                (base + (state % 32) as f64 - 16.0).clamp(0.0, 255.0) as u8
            })
            .collect();
        Frame::from_luma8(w, h, &samples).unwrap()
    }

    #[test]
    fn rate_and_quality_monotone_over_qp_ladder() {
        let frame = textured_frame(32, 32, 99);
        let ladder = [22u8, 27, 32, 37];
        let results: Vec<EncodeResult> = ladder
            .iter()
            .map(|&qp| encode_intra(&frame, qp).unwrap())
            .collect();
        for pair in results.windows(2) {
            assert!(pair[0].bits > pair[1].bits, "bits not decreasing");
            assert!(pair[0].psnr > pair[1].psnr, "psnr not decreasing");
        }
    }

    #[test]
    fn qstep_one_is_near_lossless() {
        let frame = textured_frame(24, 40, 7);
        let res = encode_intra(&frame, 4).unwrap();
        assert!(res.psnr >= 45.0, "psnr {}", res.psnr);
    }

    #[test]
    fn result_fields_mutually_consistent() {
        let frame = textured_frame(20, 12, 3);
        let res = encode_intra(&frame, 27).unwrap();
        assert_eq!(res.distortion_map.len(), 240);
        let mut mse = 0.0;
        for (i, &d) in res.distortion_map.iter().enumerate() {
            let (x, y) = (i % 20, i / 20);
            assert_eq!(
                d,
                frame.at(x, y).abs_diff(res.reconstruction.at(x, y)),
                "map mismatch at ({x},{y})"
            );
            mse += f64::from(d) * f64::from(d);
        }
        mse /= 240.0;
        assert!((res.mse - mse).abs() < 1e-12);
        assert!((res.psnr - 10.0 * (255.0f64 * 255.0 / mse).log10()).abs() < 1e-12);
        assert!((res.bpp - res.bits as f64 / 240.0).abs() < 1e-15);
    }

    #[test]
    fn encode_is_deterministic() {
        let frame = textured_frame(40, 24, 5);
        let a = encode_intra(&frame, 32).unwrap();
        let b = encode_intra(&frame, 32).unwrap();
        assert_eq!(a.bits, b.bits);
        assert_eq!(a.reconstruction, b.reconstruction);
        assert_eq!(a.mse.to_bits(), b.mse.to_bits());
    }

    #[test]
    fn padding_excluded_from_stats() {
        // 12x12 frame pads to 16x16; mse/bpp denominators must stay 144.
        let frame = textured_frame(12, 12, 21);
        let res = encode_intra(&frame, 27).unwrap();
        assert_eq!(res.distortion_map.len(), 144);
        assert!((res.bpp - res.bits as f64 / 144.0).abs() < 1e-15);
    }
}
