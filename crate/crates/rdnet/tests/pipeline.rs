//! End-to-end CLI behavior: exit codes, artifact contents, determinism.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use rdnet::autodiff::Tensor;
use rdnet::dataset::{read_manifest, read_pgm, write_pgm};
use rdnet::networks::{build_f, build_g, save_weights, Model, ModelWeights, NetworkKind};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(common::rdnet_bin())
        .args(args)
        .output()
        .expect("spawn rdnet")
}

fn zeroed(mut model: Model) -> Model {
    for p in model.params.iter_mut() {
        let shape = p.tensor.shape();
        p.tensor = Tensor::zeros(shape);
    }
    model
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in ["prepare", "gentruth", "train", "predict", "eval", "plot"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--help"), "{sub} help text incomplete");
    }
    assert!(run(&["--help"]).status.success());
}

#[test]
fn prepare_one_image_four_patches() {
    let tmp = TempDir::new().unwrap();
    let images = tmp.path().join("images");
    common::write_synth_images(&images, 1, 256, 256, 5);
    let ds = tmp.path().join("ds");
    let out = run(&[
        "prepare",
        "--images",
        images.to_str().unwrap(),
        "--patch",
        "128",
        "--out",
        ds.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_manifest(&ds.join("manifest.txt")).unwrap();
    assert_eq!(manifest.entries.len(), 4);
    assert_eq!(manifest.patch_size, 128);
}

#[test]
fn gentruth_rejects_out_of_range_qp() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "gentruth",
        "--dataset",
        tmp.path().to_str().unwrap(),
        "--qps",
        "22,60",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("QP out of range"), "stderr: {err}");
}

#[test]
fn unknown_flag_exits_two() {
    let out = run(&["prepare", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_image(path: &Path, size: usize, seed: u64) {
    write_pgm(path, size, size, &common::synth_image(size, size, seed)).unwrap();
}

#[test]
fn predict_zero_weight_g_reproduces_input() {
    let tmp = TempDir::new().unwrap();
    let weights = tmp.path().join("g.rdnw");
    let model = zeroed(build_g(1, &[22, 27, 32, 37]));
    save_weights(&ModelWeights::from_model(&model), &weights).unwrap();
    let image = tmp.path().join("in.pgm");
    write_image(&image, 32, 9);
    let map = tmp.path().join("map.pgm");
    let out = run(&[
        "predict",
        "--weights",
        weights.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--qps",
        "32",
        "--out",
        map.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // zero-weight G is the residual identity: M = Î, and the PGM rescaling
    // by 2^(n-1) returns the original samples
    let (_, _, original) = read_pgm(&image).unwrap();
    let (_, _, predicted) = read_pgm(&map).unwrap();
    assert_eq!(original, predicted);

    // reruns are byte-identical
    let first = std::fs::read(&map).unwrap();
    assert!(run(&[
        "predict",
        "--weights",
        weights.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--qps",
        "32",
        "--out",
        map.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(std::fs::read(&map).unwrap(), first);
}

#[test]
fn predict_f_qp_mismatch_exits_two() {
    let tmp = TempDir::new().unwrap();
    let weights = tmp.path().join("f.rdnw");
    let model = build_f(1, NetworkKind::FBits, &[22, 27, 32, 37]);
    save_weights(&ModelWeights::from_model(&model), &weights).unwrap();
    let image = tmp.path().join("in.pgm");
    write_image(&image, 32, 9);
    let out = run(&[
        "predict",
        "--weights",
        weights.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--qps",
        "22,27,32",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_rejects_unaligned_image() {
    let tmp = TempDir::new().unwrap();
    let weights = tmp.path().join("g.rdnw");
    save_weights(&ModelWeights::from_model(&build_g(1, &[22])), &weights).unwrap();
    let image = tmp.path().join("in.pgm");
    write_pgm(&image, 30, 30, &vec![100u8; 900]).unwrap();
    let out = run(&[
        "predict",
        "--weights",
        weights.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
        "--qps",
        "32",
        "--out",
        tmp.path().join("m.pgm").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

const VECTORS_HEADER: &str = "frame_id,kind,qp,gt,pred,abs_err\n";

#[test]
fn plot_two_frames_two_polylines_each() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("vectors.csv");
    let mut text = String::from(VECTORS_HEADER);
    for frame in [0, 1] {
        for (qp, gt, pred) in [(22, 2.0, 1.9), (27, 1.5, 1.45), (32, 1.0, 1.1), (37, 0.6, 0.7)] {
            text.push_str(&format!(
                "{frame},bpp,{qp},{gt:.6},{pred:.6},{:.6}\n",
                (gt - pred as f64).abs()
            ));
        }
        text.push_str(&format!("{frame},bpp,frechet,,,0.100000\n"));
    }
    std::fs::write(&csv, &text).unwrap();
    let outdir = tmp.path().join("plots");
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut svgs: Vec<_> = std::fs::read_dir(&outdir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    svgs.sort();
    assert_eq!(svgs.len(), 2);
    let mut first_bytes = Vec::new();
    for svg in &svgs {
        let body = std::fs::read_to_string(svg).unwrap();
        assert_eq!(body.matches("<polyline").count(), 2, "{}", svg.display());
        assert!(body.contains("QP"), "axis label missing");
        assert!(body.contains("ground truth"), "legend missing");
        first_bytes.push(std::fs::read(svg).unwrap());
    }
    // rerun → byte-identical
    assert!(run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ])
    .status
    .success());
    for (svg, prev) in svgs.iter().zip(&first_bytes) {
        assert_eq!(&std::fs::read(svg).unwrap(), prev);
    }
}

#[test]
fn plot_empty_csv_is_a_notice_not_an_error() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("vectors.csv");
    std::fs::write(&csv, VECTORS_HEADER).unwrap();
    let outdir = tmp.path().join("plots");
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("nothing to plot"));
    assert!(!outdir.exists());
}

#[test]
fn plot_malformed_csv_names_the_line() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("vectors.csv");
    std::fs::write(
        &csv,
        format!("{VECTORS_HEADER}0,bpp,22,1.0,0.9,0.1\n0,bpp,not-a-qp,1.0,0.9,0.1\n"),
    )
    .unwrap();
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        tmp.path().join("plots").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "stderr: {err}");
}
