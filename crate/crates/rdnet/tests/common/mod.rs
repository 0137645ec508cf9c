//! Shared helpers for the integration suites: synthetic "natural" images
//! and in-memory dataset construction.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rdnet::autodiff::RngState;
use rdnet::dataset::{
    generate_ground_truth, write_pgm, Dataset, GroundTruthFile, Manifest, PatchEntry, Split,
};

/// Deterministic synthetic luma image: a smooth ramp plus a few seeded
/// sinusoidal textures and mild noise, so patches carry varied AC energy
/// without saturating the toy codec.
pub fn synth_image(w: usize, h: usize, seed: u64) -> Vec<u8> {
    let mut rng = RngState::new(seed);
    let mut waves = Vec::new();
    for _ in 0..3 {
        let fx = 0.02 + 0.25 * rng.next_uniform();
        let fy = 0.02 + 0.25 * rng.next_uniform();
        let phase = rng.next_uniform() * std::f64::consts::TAU;
        let amp = 8.0 + 24.0 * rng.next_uniform();
        waves.push((fx, fy, phase, amp));
    }
    let ramp_x = 40.0 * rng.next_uniform();
    let ramp_y = 40.0 * rng.next_uniform();
    let base = 90.0 + 60.0 * rng.next_uniform();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut v = base + ramp_x * x as f64 / w as f64 + ramp_y * y as f64 / h as f64;
            for &(fx, fy, phase, amp) in &waves {
                v += amp * (fx * x as f64 + fy * y as f64 + phase).sin();
            }
            v += rng.next_normal() * 2.0;
            out.push(v.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Non-overlapping `size`×`size` patches cut from a synthetic image sheet.
pub fn synth_patches(count: usize, size: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut patches = Vec::with_capacity(count);
    let mut img_seed = seed;
    'outer: loop {
        let sheet = synth_image(size * 4, size * 4, img_seed);
        let w = size * 4;
        for gy in 0..4 {
            for gx in 0..4 {
                let mut patch = Vec::with_capacity(size * size);
                for y in 0..size {
                    let row = (gy * size + y) * w + gx * size;
                    patch.extend_from_slice(&sheet[row..row + size]);
                }
                patches.push(patch);
                if patches.len() == count {
                    break 'outer;
                }
            }
        }
        img_seed += 1;
    }
    patches
}

/// Builds a complete in-memory dataset: manifest, patches, and toy-codec
/// ground truth. `split_of(index)` assigns each patch to a split.
pub fn make_dataset(
    patches: Vec<Vec<u8>>,
    size: usize,
    qps: &[u8],
    split_of: impl Fn(usize) -> Split,
) -> Dataset {
    let entries = (0..patches.len())
        .map(|i| PatchEntry {
            id: i as u32,
            source: "synthetic".to_string(),
            x: 0,
            y: 0,
            split: split_of(i),
        })
        .collect();
    let manifest = Manifest {
        name: "synthetic".to_string(),
        patch_size: size,
        bitdepth: 8,
        qps: qps.to_vec(),
        seed: 0,
        split_ratios: [0.0, 0.0, 0.0],
        split_seed: 0,
        entries,
    };
    let records = generate_ground_truth(&manifest, &patches, qps).expect("toy codec");
    let truth = GroundTruthFile {
        width: size,
        height: size,
        qps: qps.to_vec(),
        records,
    };
    Dataset {
        manifest,
        patches,
        truth,
    }
}

/// Writes `count` synthetic PGM images of `w`×`h` into `dir`.
pub fn write_synth_images(dir: &Path, count: usize, w: usize, h: usize, seed: u64) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..count)
        .map(|i| {
            let path = dir.join(format!("img{i:03}.pgm"));
            write_pgm(&path, w, h, &synth_image(w, h, seed + i as u64)).unwrap();
            path
        })
        .collect()
}

/// Path to the compiled CLI binary.
pub fn rdnet_bin() -> &'static str {
    env!("CARGO_BIN_EXE_rdnet")
}
