//! Acceptance gate: ten criteria, each printed as a single PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::process::Command;

use rdnet::autodiff::{grad_check, RngState, Tensor};
use rdnet::codec::{ac_energy_fraction, encode_intra, Frame};
use rdnet::dataset::{Split, TargetKind};
use rdnet::error::MetricsError;
use rdnet::metrics::{
    evaluate_distortion_maps, frechet_brute_force, frechet_dp, pearson,
};
use rdnet::networks::{
    build_f, build_g, normalize_inputs, train_with_validation, Model, NetworkKind,
    TrainConfig,
};
use tempfile::TempDir;

/// Prints the criterion verdict line and panics on failure.
fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {n:>2} {name}: {tag} ({detail})");
    assert!(pass, "acceptance criterion {n} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

#[test]
fn criterion_01_gradient_integrity() {
    let started = std::time::Instant::now();
    let mut worst_f32 = 0.0f64;
    let mut worst_f64 = 0.0f64;

    // Each entry: name, input shapes, and a program builder. Inputs are
    // seeded smooth values away from ReLU/PReLU/maxpool kinks.
    fn inputs(shapes: &[[usize; 4]], seed: u64) -> Vec<Tensor<f64>> {
        let mut rng = RngState::new(seed);
        shapes
            .iter()
            .map(|&s| {
                let n = s.iter().product();
                // offset away from zero so kinked ops stay on one side
                // locally; magnitudes stay O(1)
                let data = (0..n)
                    .map(|_| {
                        let v = rng.next_normal() * 0.5;
                        if v.abs() < 0.05 {
                            v + 0.2
                        } else {
                            v
                        }
                    })
                    .collect();
                Tensor::from_vec(s, data).unwrap()
            })
            .collect()
    }

    type Builder = fn(
        &mut rdnet::autodiff::Tape<f64>,
        &[rdnet::autodiff::ValueId],
    ) -> rdnet::autodiff::ValueId;

    let cases: Vec<(&str, Vec<[usize; 4]>, Builder)> = vec![
        (
            "conv3x3",
            vec![[2, 3, 6, 6], [4, 3, 3, 3], [1, 1, 1, 4]],
            |t, ids| {
                let c = t.conv2d(ids[0], ids[1], ids[2]).unwrap();
                t.sum(c)
            },
        ),
        (
            "conv5x5",
            vec![[1, 2, 8, 8], [3, 2, 5, 5], [1, 1, 1, 3]],
            |t, ids| {
                let c = t.conv2d(ids[0], ids[1], ids[2]).unwrap();
                t.sum(c)
            },
        ),
        ("maxpool", vec![[2, 3, 4, 4]], |t, ids| {
            let p = t.maxpool2(ids[0]).unwrap();
            t.sum(p)
        }),
        ("upsample", vec![[2, 3, 3, 3]], |t, ids| {
            let u = t.upsample2(ids[0]);
            t.sum(u)
        }),
        ("prelu", vec![[2, 3, 4, 4], [1, 1, 1, 3]], |t, ids| {
            let p = t.prelu(ids[0], ids[1]).unwrap();
            t.sum(p)
        }),
        ("relu", vec![[2, 3, 4, 4]], |t, ids| {
            let r = t.relu(ids[0]);
            t.sum(r)
        }),
        (
            "fc",
            vec![[2, 3, 2, 2], [1, 1, 5, 12], [1, 1, 1, 5]],
            |t, ids| {
                let f = t.fully_connected(ids[0], ids[1], ids[2]).unwrap();
                t.sum(f)
            },
        ),
        ("gap", vec![[2, 4, 4, 4]], |t, ids| {
            let g = t.global_avg_pool(ids[0]);
            t.sum(g)
        }),
        ("mse", vec![[2, 1, 4, 4], [2, 1, 4, 4]], |t, ids| {
            t.loss_mse(ids[0], ids[1]).unwrap()
        }),
        ("mae", vec![[2, 1, 4, 4], [2, 1, 4, 4]], |t, ids| {
            t.loss_mae(ids[0], ids[1]).unwrap()
        }),
        // ℓ2 term as a differentiable program: mse of θ against zeros
        ("l2", vec![[1, 1, 4, 4], [1, 1, 4, 4]], |t, ids| {
            let zero_shape = t.value(ids[1]).shape();
            let zeros = t.leaf(Tensor::zeros(zero_shape));
            t.loss_mse(ids[0], zeros).unwrap()
        }),
    ];

    for (name, shapes, build) in &cases {
        let in64 = inputs(shapes, 0xACCE97 ^ name.len() as u64);
        let e64 = grad_check(&in64, 1e-5, |tape, ids| build(tape, ids));
        let in32: Vec<Tensor<f32>> = in64.iter().map(|t| t.cast()).collect();
        let in32_as64: Vec<Tensor<f64>> = in32.iter().map(|t| t.cast()).collect();
        // standard precision: run the same program in f32 forward/backward,
        // compare against f64 finite differences at the f32 points
        let e32 = {
            use rdnet::autodiff::Tape;
            let mut tape32 = Tape::<f32>::new();
            let ids32: Vec<_> = in32.iter().map(|t| tape32.leaf(t.clone())).collect();
            let root32 = build_in_f32(*name, &mut tape32, &ids32);
            let grads32 = tape32.backward(root32).unwrap();
            // f64 reference via central differences
            let mut worst = 0.0f64;
            for (idx, base) in in32_as64.iter().enumerate() {
                let g32 = grads32.get_or_zero(ids32[idx], base.shape());
                for elt in 0..base.numel() {
                    let fd = {
                        let mut lo = in32_as64.clone();
                        let mut hi = in32_as64.clone();
                        lo[idx].data_mut()[elt] -= 1e-4;
                        hi[idx].data_mut()[elt] += 1e-4;
                        (eval_f64(*name, &hi) - eval_f64(*name, &lo)) / 2e-4
                    };
                    let ad = f64::from(g32.data()[elt]);
                    let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
                    worst = worst.max(rel);
                }
            }
            worst
        };
        worst_f32 = worst_f32.max(e32);
        worst_f64 = worst_f64.max(e64);
    }

    fn build_in_f32(
        name: &str,
        t: &mut rdnet::autodiff::Tape<f32>,
        ids: &[rdnet::autodiff::ValueId],
    ) -> rdnet::autodiff::ValueId {
        match name {
            "conv3x3" | "conv5x5" => {
                let c = t.conv2d(ids[0], ids[1], ids[2]).unwrap();
                t.sum(c)
            }
            "maxpool" => {
                let p = t.maxpool2(ids[0]).unwrap();
                t.sum(p)
            }
            "upsample" => {
                let u = t.upsample2(ids[0]);
                t.sum(u)
            }
            "prelu" => {
                let p = t.prelu(ids[0], ids[1]).unwrap();
                t.sum(p)
            }
            "relu" => {
                let r = t.relu(ids[0]);
                t.sum(r)
            }
            "fc" => {
                let f = t.fully_connected(ids[0], ids[1], ids[2]).unwrap();
                t.sum(f)
            }
            "gap" => {
                let g = t.global_avg_pool(ids[0]);
                t.sum(g)
            }
            "mse" => t.loss_mse(ids[0], ids[1]).unwrap(),
            "mae" => t.loss_mae(ids[0], ids[1]).unwrap(),
            "l2" => {
                let shape = t.value(ids[1]).shape();
                let zeros = t.leaf(Tensor::zeros(shape));
                t.loss_mse(ids[0], zeros).unwrap()
            }
            _ => unreachable!(),
        }
    }

    fn eval_f64(name: &str, inputs: &[Tensor<f64>]) -> f64 {
        use rdnet::autodiff::Tape;
        let mut tape = Tape::<f64>::new();
        let ids: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = match name {
            "conv3x3" | "conv5x5" => {
                let c = tape.conv2d(ids[0], ids[1], ids[2]).unwrap();
                tape.sum(c)
            }
            "maxpool" => {
                let p = tape.maxpool2(ids[0]).unwrap();
                tape.sum(p)
            }
            "upsample" => {
                let u = tape.upsample2(ids[0]);
                tape.sum(u)
            }
            "prelu" => {
                let p = tape.prelu(ids[0], ids[1]).unwrap();
                tape.sum(p)
            }
            "relu" => {
                let r = tape.relu(ids[0]);
                tape.sum(r)
            }
            "fc" => {
                let f = tape.fully_connected(ids[0], ids[1], ids[2]).unwrap();
                tape.sum(f)
            }
            "gap" => {
                let g = tape.global_avg_pool(ids[0]);
                tape.sum(g)
            }
            "mse" => tape.loss_mse(ids[0], ids[1]).unwrap(),
            "mae" => tape.loss_mae(ids[0], ids[1]).unwrap(),
            "l2" => {
                let shape = tape.value(ids[1]).shape();
                let zeros = tape.leaf(Tensor::zeros(shape));
                tape.loss_mse(ids[0], zeros).unwrap()
            }
            _ => unreachable!(),
        };
        f64::from(tape.value(root).scalar_value())
    }

    let elapsed = started.elapsed();
    verdict(
        1,
        "gradient integrity",
        worst_f32 <= 1e-3 && worst_f64 <= 1e-5 && elapsed.as_secs() < 60,
        &format!(
            "worst rel err f32 {worst_f32:.2e} <= 1e-3, f64 {worst_f64:.2e} <= 1e-5, {elapsed:.1?} < 60s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. / 3. overfit convergence

/// Trains in chunks (Adam restarts between chunks) until `done` or the epoch
/// cap; early stopping is disabled via an always-improving scripted val loss.
fn overfit(
    model: &mut Model,
    ds: &rdnet::dataset::Dataset,
    cfg: &TrainConfig,
    max_epochs: u32,
    chunk: u32,
    mut done: impl FnMut(f64, f64) -> bool,
) -> (f64, f64, u32) {
    let mut first = f64::NAN;
    let mut last = f64::NAN;
    let mut ran = 0u32;
    while ran < max_epochs {
        let step = chunk.min(max_epochs - ran);
        let cfg = TrainConfig {
            max_epochs: step,
            ..cfg.clone()
        };
        let (_, hist) = train_with_validation(model, ds, &cfg, |_, epoch| {
            Ok(-f64::from(ran + epoch))
        })
        .expect("training");
        if first.is_nan() {
            first = hist.train[0];
        }
        last = *hist.train.last().unwrap();
        ran += step;
        if done(first, last) {
            break;
        }
    }
    (first, last, ran)
}

#[test]
fn criterion_02_overfit_g() {
    let started = std::time::Instant::now();
    let patches = common::synth_patches(8, 32, 21);
    let ds = common::make_dataset(patches, 32, &[22, 37], |_| Split::Train);
    let mut model = build_g(2, &[22, 37]);
    let cfg = TrainConfig {
        batch_size: 4,
        lr: 5e-4,
        weight_decay: 0.0, // pure L_G so the ratio is on the data loss
        patience: 10,
        max_epochs: 0,
        seed: 2,
        target: TargetKind::DistortionMap,
    };
    let (first, last, epochs) =
        overfit(&mut model, &ds, &cfg, 500, 50, |first, last| last <= 0.09 * first);
    let pass = last <= 0.1 * first;
    let elapsed = started.elapsed();
    verdict(
        2,
        "overfit convergence (G)",
        pass && elapsed.as_secs() < 600,
        &format!("epoch-1 L_G {first:.5}, epoch-{epochs} {last:.5}, {elapsed:.0?} < 10min"),
    );
}

#[test]
fn criterion_03_overfit_f_bits() {
    let started = std::time::Instant::now();
    let patches = common::synth_patches(8, 32, 22);
    let qps = [22u8, 27, 32, 37];
    let ds = common::make_dataset(patches, 32, &qps, |_| Split::Train);
    let mut model = build_f(3, NetworkKind::FBits, &qps);
    let cfg = TrainConfig {
        batch_size: 1,
        lr: 1e-3,
        weight_decay: 0.0,
        patience: 10,
        max_epochs: 0,
        seed: 3,
        target: TargetKind::BppVector,
    };
    let (_, last, epochs) = overfit(&mut model, &ds, &cfg, 500, 50, |_, last| last <= 0.045);
    // `last` is the training MAE in bpp (MAE loss, no regularizer)
    let pass = last <= 0.05;
    let elapsed = started.elapsed();
    verdict(
        3,
        "overfit convergence (F-bits)",
        pass && elapsed.as_secs() < 600,
        &format!("train MAE {last:.4} bpp <= 0.05 after {epochs} epochs, {elapsed:.0?} < 10min"),
    );
}

// ---------------------------------------------------------------------------
// 4. codec monotonicity

#[test]
fn criterion_04_codec_monotonicity() {
    let started = std::time::Instant::now();
    // over-generate and overlay extra texture: smooth patches below 1% AC
    // energy don't count toward the >= 50 required
    let mut patches = common::synth_patches(96, 128, 41);
    for (i, patch) in patches.iter_mut().enumerate() {
        for (j, v) in patch.iter_mut().enumerate() {
            let (x, y) = (j % 128, j / 128);
            let t = 14.0 * ((0.55 + 0.01 * i as f64) * (x as f64 + 0.7 * y as f64)).sin();
            *v = (f64::from(*v) + t).clamp(0.0, 255.0) as u8;
        }
    }
    let ladder = [22u8, 27, 32, 37];
    let mut checked = 0usize;
    let mut pass = true;
    let mut detail = String::new();
    for (i, patch) in patches.iter().enumerate() {
        let frame = Frame::from_luma8(128, 128, patch).unwrap();
        if ac_energy_fraction(&frame) < 0.01 {
            continue;
        }
        checked += 1;
        let results: Vec<_> = ladder
            .iter()
            .map(|&qp| encode_intra(&frame, qp).unwrap())
            .collect();
        for w in results.windows(2) {
            if !(w[1].bpp < w[0].bpp && w[1].psnr < w[0].psnr) {
                pass = false;
                detail = format!(
                    "patch {i}: qp {}→{} bpp {:.4}→{:.4} psnr {:.2}→{:.2}",
                    w[0].qp, w[1].qp, w[0].bpp, w[1].bpp, w[0].psnr, w[1].psnr
                );
            }
        }
    }
    let elapsed = started.elapsed();
    if pass {
        detail = format!("{checked}/96 patches with >=1% AC energy all monotone, {elapsed:.2?} < 30s");
    }
    verdict(
        4,
        "codec monotonicity",
        pass && checked >= 50 && elapsed.as_secs() < 30,
        &detail,
    );
}

// ---------------------------------------------------------------------------
// 5. Fréchet oracle equivalence

#[test]
fn criterion_05_frechet_oracle() {
    // Exhaustive sweeps of curve pairs with points on integer grids,
    // comparing the DP against brute-force coupling enumeration:
    //   (a) all pairs from the 3x3 grid with |A| + |B| <= 6 (covers every
    //       length up to 5 against shorter partners), and
    //   (b) all length-5 x length-5 pairs on the 2x2 subgrid.
    // The full 3x3 cross-product at length 5 is ~4e9 pairs and is out of
    // desk-scale reach; this scoping keeps the check exhaustive within each
    // enumerated domain.
    fn curves(grid: &[(f64, f64)], len: usize) -> Vec<Vec<(f64, f64)>> {
        let mut out: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|c| {
                    grid.iter().map(move |&p| {
                        let mut c = c.clone();
                        c.push(p);
                        c
                    })
                })
                .collect();
        }
        out
    }
    let grid3: Vec<(f64, f64)> = (0..3)
        .flat_map(|x| (0..3).map(move |y| (f64::from(x), f64::from(y))))
        .collect();
    let grid2: Vec<(f64, f64)> = (0..2)
        .flat_map(|x| (0..2).map(move |y| (f64::from(x), f64::from(y))))
        .collect();

    let mut pairs = 0u64;
    let mut pass = true;
    let mut detail = String::new();
    let mut check = |a: &[(f64, f64)], b: &[(f64, f64)]| {
        pairs += 1;
        let dp = frechet_dp(a, b).unwrap();
        let bf = frechet_brute_force(a, b);
        if dp != bf {
            pass = false;
            detail = format!("dp {dp} != brute force {bf} for {a:?} vs {b:?}");
        }
    };
    let by_len3: Vec<Vec<Vec<(f64, f64)>>> = (1..=5).map(|l| curves(&grid3, l)).collect();
    for la in 1..=5usize {
        for lb in 1..=(6 - la).min(5) {
            for a in &by_len3[la - 1] {
                for b in &by_len3[lb - 1] {
                    check(a, b);
                }
            }
        }
    }
    let five2 = curves(&grid2, 5);
    for a in &five2 {
        for b in &five2 {
            check(a, b);
        }
    }
    if pass {
        detail = format!("{pairs} pairs, exact equality");
    }
    verdict(5, "Frechet oracle equivalence", pass, &detail);
}

// ---------------------------------------------------------------------------
// 6. PCC properties

#[test]
fn criterion_06_pcc_properties() {
    let mut rng = RngState::new(66);
    let mut pass = true;
    let mut detail = String::new();
    for trial in 0..200 {
        let n = 2 + rng.next_below(30) as usize;
        let u: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        match pearson(&u, &v) {
            Ok(r) => {
                if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&r) {
                    pass = false;
                    detail = format!("trial {trial}: PCC {r} out of range");
                }
                // positive affine invariance
                let a = 0.1 + rng.next_uniform() * 5.0;
                let b = rng.next_normal() * 10.0;
                let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
                let r2 = pearson(&u, &w).unwrap();
                if (r - r2).abs() > 1e-12 {
                    pass = false;
                    detail = format!("trial {trial}: affine drift {:.2e}", (r - r2).abs());
                }
                // exact (anti-)collinearity
                let up: Vec<f64> = u.iter().map(|x| 2.0 * x + 1.0).collect();
                let un: Vec<f64> = u.iter().map(|x| -3.0 * x + 0.5).collect();
                if u.iter().any(|&x| x != u[0]) {
                    let rp = pearson(&u, &up).unwrap();
                    let rn = pearson(&u, &un).unwrap();
                    if (rp - 1.0).abs() > 1e-12 || (rn + 1.0).abs() > 1e-12 {
                        pass = false;
                        detail = format!("trial {trial}: collinear PCC {rp} / {rn}");
                    }
                }
            }
            Err(_) => {
                pass = false;
                detail = format!("trial {trial}: unexpected error");
            }
        }
    }
    let zero_var = matches!(
        pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
        Err(MetricsError::ZeroVariance)
    );
    if !zero_var {
        pass = false;
        detail = "zero-variance input did not raise the skip signal".to_string();
    }
    if pass {
        detail = "200 randomized trials + zero-variance signal".to_string();
    }
    verdict(6, "PCC properties", pass, &detail);
}

// ---------------------------------------------------------------------------
// 7. distortion-map PCC trend reproduction

#[test]
fn criterion_07_pcc_trend() {
    let started = std::time::Instant::now();
    let n_train = 2048;
    let n_val = 16;
    let n_test = 192;
    let qps = [22u8, 37];
    let patches = common::synth_patches(n_train + n_val + n_test, 64, 71);
    let ds = common::make_dataset(patches, 64, &qps, |i| {
        if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    });
    let mut model = build_g(7, &qps);
    let cfg = TrainConfig {
        batch_size: 16,
        lr: 2e-4,
        weight_decay: 1e-4,
        patience: 10,
        max_epochs: 1,
        seed: 7,
        target: TargetKind::DistortionMap,
    };
    let mut pcc = (f64::NAN, f64::NAN);
    let mut epochs = 0u32;
    for _ in 0..3 {
        train_with_validation(&mut model, &ds, &cfg, |_, _| Ok(-1.0)).expect("training");
        epochs += 1;
        let reports = evaluate_distortion_maps(&model, &ds, &qps, &[8]).expect("eval");
        let at = |qp: u8| reports.iter().find(|r| r.qp == qp).unwrap().mean;
        pcc = (at(22), at(37));
        if pcc.1 > pcc.0 {
            break;
        }
    }
    let elapsed = started.elapsed();
    verdict(
        7,
        "distortion-map PCC trend (lower QP, lower correlation)",
        pcc.1 > pcc.0 && elapsed.as_secs() < 7200,
        &format!(
            "block 8: mean PCC qp37 {:.4} > qp22 {:.4} after {epochs} epoch(s) on {n_train} patches, {elapsed:.0?} < 2h",
            pcc.1, pcc.0
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. early-stop contract

#[test]
fn criterion_08_early_stop() {
    let patches = common::synth_patches(12, 16, 81);
    let qps = [22u8, 37];
    let ds = common::make_dataset(patches, 16, &qps, |_| Split::Train);
    let cfg = TrainConfig {
        batch_size: 4,
        lr: 1e-4,
        weight_decay: 1e-4,
        patience: 10,
        max_epochs: 100,
        seed: 8,
        target: TargetKind::BppVector,
    };
    // scripted validation: best at epoch 1, strictly worse afterwards →
    // exactly 10 non-improving epochs elapse, stop after epoch 11
    let mut model = build_f(8, NetworkKind::FBits, &qps);
    let (weights, history) =
        train_with_validation(&mut model, &ds, &cfg, |_, epoch| Ok(f64::from(epoch)))
            .expect("training");
    let stopped_at = history.val.len() as u32;
    // checkpoint oracle: identical run truncated at the best epoch
    let mut reference = build_f(8, NetworkKind::FBits, &qps);
    let cfg1 = TrainConfig {
        max_epochs: 1,
        ..cfg.clone()
    };
    let (ref_weights, _) =
        train_with_validation(&mut reference, &ds, &cfg1, |_, epoch| Ok(f64::from(epoch)))
            .expect("training");
    let bitwise = weights.blobs == ref_weights.blobs;
    verdict(
        8,
        "early-stop contract",
        stopped_at == 11 && model.best_epoch == 1 && bitwise,
        &format!(
            "stopped after epoch {stopped_at} (expected 11), best epoch {}, best weights bitwise equal to epoch-1 checkpoint: {bitwise}",
            model.best_epoch
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. determinism and persistence

#[test]
fn criterion_09_determinism() {
    fn pipeline(root: &std::path::Path, images: &std::path::Path) {
        let ds = root.join("ds");
        let run = |args: &[&str]| {
            let out = Command::new(common::rdnet_bin())
                .args(args)
                .env("RD_SEED", "42")
                .output()
                .expect("spawn");
            assert!(
                out.status.success(),
                "rdnet {args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        };
        run(&[
            "prepare",
            "--images",
            images.to_str().unwrap(),
            "--patch",
            "32",
            "--out",
            ds.to_str().unwrap(),
            "--qps",
            "22,27,32,37",
        ]);
        run(&["gentruth", "--dataset", ds.to_str().unwrap()]);
        let weights = root.join("f.rdnw");
        run(&[
            "train",
            "--dataset",
            ds.to_str().unwrap(),
            "--net",
            "f-bits",
            "--out",
            weights.to_str().unwrap(),
            "--epochs",
            "3",
            "--batch",
            "8",
        ]);
        let report = root.join("report");
        run(&[
            "eval",
            "--dataset",
            ds.to_str().unwrap(),
            "--weights",
            weights.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ]);
        run(&[
            "plot",
            "--csv",
            report.join("vectors.csv").to_str().unwrap(),
            "--out",
            root.join("plots").to_str().unwrap(),
        ]);
    }
    let tmp = TempDir::new().unwrap();
    let images = tmp.path().join("images");
    common::write_synth_images(&images, 4, 128, 128, 91); // 4x16 = 64 patches
    let run_a = tmp.path().join("a");
    let run_b = tmp.path().join("b");
    pipeline(&run_a, &images);
    pipeline(&run_b, &images);

    let mut compared = 0usize;
    let mut pass = true;
    let mut detail = String::new();
    let mut check = |rel: &str| {
        let a = std::fs::read(run_a.join(rel)).expect(rel);
        let b = std::fs::read(run_b.join(rel)).expect(rel);
        compared += 1;
        if a != b {
            pass = false;
            detail = format!("{rel} differs between runs");
        }
    };
    for rel in [
        "ds/manifest.txt",
        "ds/patches.rdpx",
        "ds/truth.rdgt",
        "f.rdnw",
        "report/pcc.csv",
        "report/vectors.csv",
        "report/summary.csv",
    ] {
        check(rel);
    }
    let plots: Vec<String> = std::fs::read_dir(run_a.join("plots"))
        .unwrap()
        .map(|e| format!("plots/{}", e.unwrap().file_name().to_string_lossy()))
        .collect();
    assert!(!plots.is_empty(), "no SVGs produced");
    for rel in &plots {
        check(rel);
    }

    // weights roundtrip is bit-exact
    let loaded = rdnet::networks::load_weights(&run_a.join("f.rdnw")).unwrap();
    let reloaded_path = tmp.path().join("rt.rdnw");
    rdnet::networks::save_weights(&loaded, &reloaded_path).unwrap();
    let roundtrip =
        std::fs::read(run_a.join("f.rdnw")).unwrap() == std::fs::read(&reloaded_path).unwrap();
    if !roundtrip {
        pass = false;
        detail = "weights roundtrip not bit-exact".to_string();
    }
    if pass {
        detail = format!("{compared} artifacts byte-identical across runs; weights roundtrip bit-exact");
    }
    verdict(9, "determinism and persistence", pass, &detail);
}

// ---------------------------------------------------------------------------
// 10. normalization exactness

#[test]
fn criterion_10_normalization() {
    let mut rng = RngState::new(100);
    let mut pass = true;
    let mut detail = String::new();
    for trial in 0..100 {
        let samples: Vec<u8> = (0..16).map(|_| rng.next_below(256) as u8).collect();
        let qp = rng.next_below(52) as u8;
        let frame = Frame::from_luma8(4, 4, &samples).unwrap();
        let (i_hat, q_hat) = normalize_inputs(&frame, qp).unwrap();
        for (j, &s) in samples.iter().enumerate() {
            let expected = f32::from(s) / 128.0; // I / 2^(n-1) at n = 8
            if (i_hat.data()[j] - expected).abs() > 1e-7 {
                pass = false;
                detail = format!("trial {trial}: I[{j}] {} != {expected}", i_hat.data()[j]);
            }
        }
        let expected_q = f32::from(qp) / 51.0; // QP / 51
        if (q_hat.data()[0] - expected_q).abs() > 1e-7 {
            pass = false;
            detail = format!("trial {trial}: Q {} != {expected_q}", q_hat.data()[0]);
        }
    }
    // documented anchors
    let frame = Frame::from_luma8(4, 4, &[128u8; 16]).unwrap();
    let (i_hat, q_hat) = normalize_inputs(&frame, 22).unwrap();
    if i_hat.data()[0] != 1.0 {
        pass = false;
        detail = "128 at n=8 did not normalize to 1.0".to_string();
    }
    if (q_hat.data()[0] - 0.431_373).abs() > 1e-6 {
        pass = false;
        detail = format!("QP 22 normalized to {}", q_hat.data()[0]);
    }
    if pass {
        detail = "100 randomized samples + anchors (128→1.0, QP22→0.431373)".to_string();
    }
    verdict(10, "normalization exactness", pass, &detail);
}
