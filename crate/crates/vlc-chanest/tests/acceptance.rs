//! Acceptance gate for the toolkit.
//!
//! Eight criteria cover the channel oracle, gradient correctness, pixel
//! shuffle reversibility, training efficacy, denoising gain, baseline
//! ordering, MMSE limiting behavior, and pipeline reproducibility. Each
//! test prints one `criterion N: PASS ...` line (run with `--nocapture` to
//! see them); a failing assertion names its criterion the same way.
//!
//! Criteria 4, 5, and 6 share one trained model; the fixture trains it on
//! first use, which takes the bulk of the runtime (about an hour on one
//! CPU core). The remaining criteria run in seconds.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vlc_chanest::channel::{build_channel_matrix, GridSpec, VlcScene};
use vlc_chanest::dataset::split_dataset;
use vlc_chanest::eval::{
    noisy_psnr_stats, run_mmse_comparison, run_sensitivity_sweep, SigmaMode, SweepSpec,
};
use vlc_chanest::imaging::add_awgn;
use vlc_chanest::imaging::NoisyChannelImage;
use vlc_chanest::mmse::{fit_mmse, mmse_denoise, MmseModel};
use vlc_chanest::model::{
    backward, forward_train, init_params, ModelConfig, ModelParams,
};
use vlc_chanest::tensor::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, mse_loss,
    pixel_shuffle, pixel_unshuffle, relu_backward, relu_forward, BatchNormParams,
    ConvLayerParams, Mode, Tensor,
};
use vlc_chanest::training::{
    generate_dataset, train, DatasetRecord, SceneRandomization, TrainConfig,
};

// ---------------------------------------------------------------------------
// Shared trained fixture (criteria 4, 5, 6)
// ---------------------------------------------------------------------------

/// Records generated for the training fixture; split 80/20 gives 200 train
/// images, the minimum the training-efficacy criterion asks for.
const FIXTURE_RECORDS: usize = 250;
const FIXTURE_DATA_SEED: u64 = 7;
/// Feature width 32 instead of the default 64: a deliberate, logged
/// reduction that keeps the training budget desk-scale on one CPU core.
const FIXTURE_FEATURES: usize = 32;
const FIXTURE_EPOCHS: usize = 150;
const FIXTURE_BATCH: usize = 8;
const FIXTURE_TRAIN_SEED: u64 = 1;
/// Wall-clock ceiling for the fixture training run.
const TRAIN_BUDGET_SECS: f64 = 7200.0;
/// Evaluation master seeds; PSNR means aggregate over seeds × test images.
const EVAL_SEEDS: [u64; 2] = [1, 2];

struct TrainedFixture {
    params: ModelParams<f32>,
    mmse: MmseModel,
    train_ids: Vec<u64>,
    test: Vec<DatasetRecord>,
    train_count: usize,
    train_secs: f64,
}

static FIXTURE: OnceLock<TrainedFixture> = OnceLock::new();

fn fixture() -> &'static TrainedFixture {
    FIXTURE.get_or_init(|| {
        let records = generate_dataset(
            &VlcScene::default_128(),
            FIXTURE_RECORDS,
            FIXTURE_DATA_SEED,
            &SceneRandomization::default(),
        )
        .expect("fixture dataset generation");
        let (train_set, test_set) = split_dataset(records).expect("fixture split");
        println!(
            "fixture: training depth 15 / features {FIXTURE_FEATURES} on {} images \
             ({FIXTURE_EPOCHS} epochs, batch {FIXTURE_BATCH}); this is the long step",
            train_set.len()
        );

        let config = TrainConfig {
            epochs: FIXTURE_EPOCHS,
            batch_size: FIXTURE_BATCH,
            seed: FIXTURE_TRAIN_SEED,
            ..TrainConfig::default()
        };
        let model = ModelConfig::new(15, FIXTURE_FEATURES).expect("fixture model config");
        let started = Instant::now();
        let outcome = train(&train_set, model, &config).expect("fixture training");
        let train_secs = started.elapsed().as_secs_f64();

        let clean: Vec<_> = train_set.iter().map(|r| r.clean_image.clone()).collect();
        let mmse = fit_mmse(&clean, 8, 20_000, 0).expect("fixture MMSE fit");

        TrainedFixture {
            params: outcome.params,
            mmse,
            train_ids: train_set.iter().map(|r| r.id).collect(),
            test: test_set,
            train_count: clean.len(),
            train_secs,
        }
    })
}

/// Mean PSNR of one labeled curve point, or a panic naming what is missing.
fn point_mean(points: &[vlc_chanest::eval::CurvePoint], sigma_o: f64, method: &str) -> f64 {
    points
        .iter()
        .find(|p| p.sigma_o == sigma_o && p.method == method)
        .unwrap_or_else(|| panic!("no curve point for sigma_o={sigma_o} method={method}"))
        .psnr_mean
}

// ---------------------------------------------------------------------------
// Criterion 1: channel model against an independent scalar oracle
// ---------------------------------------------------------------------------

/// Straight-line evaluation of the Lambertian LOS gain for one LED/PD pair,
/// written without any library helper so it can disagree with the builder.
fn oracle_gain(scene: &VlcScene, pd: (f64, f64, f64), led: (f64, f64, f64)) -> f64 {
    let order = -(2.0f64.ln()) / scene.semi_angle_deg.to_radians().cos().ln();
    let (dx, dy, dz) = (led.0 - pd.0, led.1 - pd.1, led.2 - pd.2);
    let d2 = dx * dx + dy * dy + dz * dz;
    let cos_phi = dz / d2.sqrt();
    let phi_deg = cos_phi.clamp(-1.0, 1.0).acos().to_degrees();
    if phi_deg > scene.fov_deg {
        return 0.0;
    }
    let radiant = (order + 1.0) / (2.0 * PI) * cos_phi.powf(order);
    let concentrator =
        scene.refractive_index * scene.refractive_index / scene.fov_deg.to_radians().sin().powi(2);
    scene.pd_area_m2 / d2 * radiant * scene.filter_gain * concentrator * cos_phi
}

/// Grid coordinates recomputed from scratch: centered in the room, row-major
/// with x fastest, lateral offset added per plane.
fn oracle_positions(grid: &GridSpec, room: (f64, f64, f64), offset: (f64, f64)) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for iy in 0..grid.count_y {
        for ix in 0..grid.count_x {
            let x = room.0 / 2.0 + offset.0
                + (ix as f64 - (grid.count_x as f64 - 1.0) / 2.0) * grid.spacing_m;
            let y = room.1 / 2.0 + offset.1
                + (iy as f64 - (grid.count_y as f64 - 1.0) / 2.0) * grid.spacing_m;
            out.push((x, y, grid.plane_height_m));
        }
    }
    out
}

#[test]
fn criterion_1_channel_matrix_matches_a_scalar_oracle() {
    let started = Instant::now();
    // A 4×4 / 4×4 scene with the receiver plane pushed sideways so that some
    // pairs fall outside the field of view: both branches get exercised.
    let mut scene = VlcScene::with_grids(
        GridSpec { count_x: 4, count_y: 4, spacing_m: 0.45, plane_height_m: 3.0 },
        GridSpec { count_x: 4, count_y: 4, spacing_m: 0.08, plane_height_m: 1.0 },
    );
    scene.pd_plane_offset = (1.6, 0.0);

    let matrix = build_channel_matrix(&scene).expect("criterion 1: matrix build");
    assert_eq!((matrix.n_r(), matrix.n_t()), (16, 16), "criterion 1: wrong shape");

    let leds = oracle_positions(&scene.led_grid, scene.room_size, (0.0, 0.0));
    let pds = oracle_positions(&scene.pd_grid, scene.room_size, scene.pd_plane_offset);
    let (mut zeros, mut worst) = (0usize, 0.0f64);
    for (j, &pd) in pds.iter().enumerate() {
        for (i, &led) in leds.iter().enumerate() {
            let expected = oracle_gain(&scene, pd, led);
            let actual = matrix.entry(j, i);
            if expected == 0.0 {
                zeros += 1;
                assert_eq!(actual, 0.0, "criterion 1: entry ({j}, {i}) should be exactly 0");
                continue;
            }
            let rel = (actual - expected).abs() / expected.abs();
            worst = worst.max(rel);
            assert!(
                rel < 1e-12,
                "criterion 1: entry ({j}, {i}) = {actual:e}, oracle {expected:e}, rel {rel:e}"
            );
        }
    }
    assert!(zeros > 0 && zeros < 256, "criterion 1: field-of-view cut not exercised ({zeros})");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 1.0, "criterion 1: took {secs:.2} s, budget 1 s");
    println!(
        "criterion 1: PASS (256 entries within 1e-12 of the scalar oracle, worst rel \
         {worst:.2e}, {zeros} out-of-FOV zeros, {secs:.2} s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: finite-difference checks of every backward op and the model
// ---------------------------------------------------------------------------

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Relative error with a unit floor in the denominator, the conventional
/// guard that keeps finite-difference noise on near-zero coordinates from
/// masquerading as a gradient bug.
fn fd_rel(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Sampled coordinate indices: deterministic spread over the slice.
fn sample_indices(len: usize, count: usize) -> Vec<usize> {
    let step = (len / count.min(len)).max(1);
    (0..len.min(count)).map(|k| k * step).collect()
}

#[test]
fn criterion_2_backward_passes_match_finite_differences() {
    let started = Instant::now();
    let h = 1e-5;
    let op_tol = 1e-4;
    let mut op_worst = 0.0f64;
    let mut op_trials = 0usize;

    // Convolution: d(sum U . conv(x)) for input, weights, and bias.
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let input = uniform_tensor(&mut rng, [2, 3, 5, 6], -1.0, 1.0);
        let weights = uniform_tensor(&mut rng, [2, 3, 3, 3], -0.5, 0.5);
        let bias: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let layer = ConvLayerParams::new(weights.clone(), bias.clone()).unwrap();
        let upstream = uniform_tensor(&mut rng, [2, 2, 5, 6], -1.0, 1.0);
        let (gx, gw, gb) = conv2d_backward(&input, &layer, &upstream).unwrap();
        let loss = |input: &Tensor<f64>, layer: &ConvLayerParams<f64>| -> f64 {
            let out = conv2d_forward(input, layer).unwrap();
            out.data().iter().zip(upstream.data()).map(|(o, u)| o * u).sum()
        };

        for idx in sample_indices(input.len(), 4) {
            let mut probe = input.clone();
            probe.data_mut()[idx] += h;
            let plus = loss(&probe, &layer);
            probe.data_mut()[idx] -= 2.0 * h;
            let minus = loss(&probe, &layer);
            op_worst = op_worst.max(fd_rel(gx.data()[idx], (plus - minus) / (2.0 * h), 1e-2));
        }
        for idx in sample_indices(weights.len(), 4) {
            let mut probe = layer.clone();
            probe.weights_mut().data_mut()[idx] += h;
            let plus = loss(&input, &probe);
            probe.weights_mut().data_mut()[idx] -= 2.0 * h;
            let minus = loss(&input, &probe);
            op_worst = op_worst.max(fd_rel(gw.data()[idx], (plus - minus) / (2.0 * h), 1e-2));
        }
        for idx in 0..bias.len() {
            let mut probe = layer.clone();
            probe.bias_mut()[idx] += h;
            let plus = loss(&input, &probe);
            probe.bias_mut()[idx] -= 2.0 * h;
            let minus = loss(&input, &probe);
            op_worst = op_worst.max(fd_rel(gb[idx], (plus - minus) / (2.0 * h), 1e-2));
        }
        op_trials += 1;
    }

    // Batch normalization: input, scale, and shift gradients in train mode.
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
        let input = uniform_tensor(&mut rng, [3, 2, 4, 4], -1.0, 1.0);
        let mut params = BatchNormParams::<f64>::new(2);
        for c in 0..2 {
            params.gamma[c] = rng.gen_range(0.5..1.5);
            params.beta[c] = rng.gen_range(-0.5..0.5);
        }
        let upstream = uniform_tensor(&mut rng, [3, 2, 4, 4], -1.0, 1.0);
        let (gx, gg, gb) = batchnorm_backward(&input, &params, &upstream).unwrap();
        let loss = |input: &Tensor<f64>, params: &BatchNormParams<f64>| -> f64 {
            let mut scratch = params.clone();
            let out = batchnorm_forward(input, &mut scratch, Mode::Train).unwrap();
            out.data().iter().zip(upstream.data()).map(|(o, u)| o * u).sum()
        };

        for idx in sample_indices(input.len(), 6) {
            let mut probe = input.clone();
            probe.data_mut()[idx] += h;
            let plus = loss(&probe, &params);
            probe.data_mut()[idx] -= 2.0 * h;
            let minus = loss(&probe, &params);
            op_worst = op_worst.max(fd_rel(gx.data()[idx], (plus - minus) / (2.0 * h), 1e-2));
        }
        for c in 0..2 {
            let mut probe = params.clone();
            probe.gamma[c] += h;
            let plus = loss(&input, &probe);
            probe.gamma[c] -= 2.0 * h;
            let minus = loss(&input, &probe);
            op_worst = op_worst.max(fd_rel(gg[c], (plus - minus) / (2.0 * h), 1e-2));

            let mut probe = params.clone();
            probe.beta[c] += h;
            let plus = loss(&input, &probe);
            probe.beta[c] -= 2.0 * h;
            let minus = loss(&input, &probe);
            op_worst = op_worst.max(fd_rel(gb[c], (plus - minus) / (2.0 * h), 1e-2));
        }
        op_trials += 1;
    }

    // ReLU: inputs drawn away from the kink so central differences are valid.
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let data: Vec<f64> = (0..96)
            .map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let input = Tensor::new([2, 3, 4, 4], data).unwrap();
        let activated = relu_forward(&input).unwrap();
        let upstream = uniform_tensor(&mut rng, [2, 3, 4, 4], -1.0, 1.0);
        let gx = relu_backward(&activated, &upstream).unwrap();
        for idx in sample_indices(input.len(), 6) {
            let mut probe = input.clone();
            probe.data_mut()[idx] += h;
            let plus: f64 = relu_forward(&probe)
                .unwrap()
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(o, u)| o * u)
                .sum();
            probe.data_mut()[idx] -= 2.0 * h;
            let minus: f64 = relu_forward(&probe)
                .unwrap()
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(o, u)| o * u)
                .sum();
            op_worst = op_worst.max(fd_rel(gx.data()[idx], (plus - minus) / (2.0 * h), 1e-2));
        }
        op_trials += 1;
    }

    // Loss gradient against finite differences of the loss value itself.
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let prediction = uniform_tensor(&mut rng, [2, 1, 4, 4], 0.0, 1.0);
        let target = uniform_tensor(&mut rng, [2, 1, 4, 4], 0.0, 1.0);
        let (_, grad) = mse_loss(&prediction, &target, 0.25).unwrap();
        for idx in sample_indices(prediction.len(), 4) {
            let mut probe = prediction.clone();
            probe.data_mut()[idx] += h;
            let (plus, _) = mse_loss(&probe, &target, 0.25).unwrap();
            probe.data_mut()[idx] -= 2.0 * h;
            let (minus, _) = mse_loss(&probe, &target, 0.25).unwrap();
            op_worst = op_worst.max(fd_rel(grad.data()[idx], (plus - minus) / (2.0 * h), 1e-2));
        }
        op_trials += 1;
    }
    assert!(
        op_worst < op_tol,
        "criterion 2: op-level finite-difference error {op_worst:.3e} exceeds {op_tol:e}"
    );

    // End to end: a depth-3, 4-feature network on 8×8 inputs, double
    // precision, with batch-norm running statistics frozen between probes so
    // every evaluation sees the same function.
    let e2e_tol = 1e-3;
    let mut e2e_worst = 0.0f64;
    let mut e2e_trials = 0usize;
    for trial in 0..20u64 {
        let config = ModelConfig::new(3, 4).unwrap();
        let mut params = init_params::<f64>(config, 500 + trial).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(600 + trial);
        let noisy = uniform_tensor(&mut rng, [2, 1, 8, 8], 0.0, 1.0);
        let clean = uniform_tensor(&mut rng, [2, 1, 8, 8], 0.0, 1.0);
        let sigma = rng.gen_range(5.0..50.0);

        let frozen = params.clone();
        let (output, cache) = forward_train(&mut params, &noisy, sigma).unwrap();
        params = frozen;
        let (_, loss_grad) = mse_loss(&output, &clean, 0.25).unwrap();
        let grads = backward(&params, &cache, &loss_grad).unwrap();

        let loss_at = |params: &mut ModelParams<f64>| -> f64 {
            let frozen = params.clone();
            let (output, _) = forward_train(params, &noisy, sigma).unwrap();
            *params = frozen;
            mse_loss(&output, &clean, 0.25).unwrap().0
        };
        let group_count = grads.slices().len();
        for group in 0..group_count {
            let len = grads.slices()[group].len();
            let idx = (trial as usize * 31 + group * 7) % len;
            let analytic = grads.slices()[group][idx];
            let original = params.trainable_slices()[group][idx];
            params.trainable_slices_mut()[group][idx] = original + h;
            let plus = loss_at(&mut params);
            params.trainable_slices_mut()[group][idx] = original - h;
            let minus = loss_at(&mut params);
            params.trainable_slices_mut()[group][idx] = original;
            e2e_worst = e2e_worst.max(fd_rel(analytic, (plus - minus) / (2.0 * h), 1.0));
        }
        e2e_trials += 1;
    }
    assert!(
        e2e_worst < e2e_tol,
        "criterion 2: end-to-end finite-difference error {e2e_worst:.3e} exceeds {e2e_tol:e}"
    );

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "criterion 2: took {secs:.1} s, budget 60 s");
    println!(
        "criterion 2: PASS ({op_trials} op trials worst {op_worst:.2e} < 1e-4, \
         {e2e_trials} end-to-end trials worst {e2e_worst:.2e} < 1e-3, {secs:.1} s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: pixel shuffle reversibility
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_pixel_shuffle_inverts_pixel_unshuffle_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for round in 0..1000 {
        let shape = [
            rng.gen_range(1..3usize),
            rng.gen_range(1..4usize),
            2 * rng.gen_range(1..6usize),
            2 * rng.gen_range(1..6usize),
        ];
        let len = shape.iter().product();
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let tensor = Tensor::new(shape, data).unwrap();
        let roundtrip = pixel_shuffle(&pixel_unshuffle(&tensor).unwrap()).unwrap();
        assert_eq!(roundtrip.shape(), shape, "criterion 3: round {round} changed the shape");
        let identical = tensor
            .data()
            .iter()
            .zip(roundtrip.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(identical, "criterion 3: round {round} was not bit-exact for shape {shape:?}");
    }
    println!("criterion 3: PASS (1000 random even-sized tensors round-trip bit-exactly)");
}

// ---------------------------------------------------------------------------
// Criterion 4: training efficacy and noise-mismatch shape
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_trained_model_plateaus_below_sigma_and_declines_above() {
    let fx = fixture();
    assert!(
        fx.train_count >= 200,
        "criterion 4: trained on {} images, need at least 200",
        fx.train_count
    );
    assert!(
        fx.train_secs <= TRAIN_BUDGET_SECS,
        "criterion 4: training took {:.0} s, budget {TRAIN_BUDGET_SECS:.0} s",
        fx.train_secs
    );

    let spec = SweepSpec {
        sigma_o_grid: vec![5.0, 15.0, 25.0, 50.0],
        sigma_inputs: vec![25.0],
        seeds: EVAL_SEEDS.to_vec(),
        ..SweepSpec::default()
    };
    let points = run_sensitivity_sweep(&fx.params, &fx.train_ids, &fx.test, &spec)
        .expect("criterion 4: sweep");
    let at = |sigma_o: f64| point_mean(&points, sigma_o, "FFDNet-25");
    let (p5, p15, p25, p50) = (at(5.0), at(15.0), at(25.0), at(50.0));

    let plateau = (p5 - p15).abs();
    assert!(
        plateau <= 3.0,
        "criterion 4: PSNR at sigma_o=15 ({p15:.2} dB) is {plateau:.2} dB from sigma_o=5 \
         ({p5:.2} dB), limit 3 dB"
    );
    let decline = p25 - p50;
    assert!(
        decline >= 4.0,
        "criterion 4: PSNR drops only {decline:.2} dB from sigma_o=25 ({p25:.2} dB) to \
         sigma_o=50 ({p50:.2} dB), need at least 4 dB"
    );
    println!(
        "criterion 4: PASS (trained {} images in {:.0} s at feature width {FIXTURE_FEATURES}, \
         a logged reduction from 64; sigma=25 curve {p5:.2}/{p15:.2}/{p25:.2}/{p50:.2} dB at \
         sigma_o=5/15/25/50: plateau gap {plateau:.2} dB <= 3, decline {decline:.2} dB >= 4)",
        fx.train_count, fx.train_secs
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: denoising gain at the matched noise level
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_matched_denoising_beats_the_noisy_input_by_4_db() {
    let fx = fixture();
    let spec = SweepSpec {
        sigma_o_grid: vec![25.0],
        sigma_inputs: vec![25.0],
        seeds: EVAL_SEEDS.to_vec(),
        ..SweepSpec::default()
    };
    let points = run_sensitivity_sweep(&fx.params, &fx.train_ids, &fx.test, &spec)
        .expect("criterion 5: sweep");
    let denoised = point_mean(&points, 25.0, "FFDNet-25");
    let (noisy, _) = noisy_psnr_stats(&fx.test, 25.0, &EVAL_SEEDS).expect("criterion 5: baseline");

    assert!(
        (noisy - 20.17).abs() < 1.0,
        "criterion 5: noisy-input PSNR {noisy:.2} dB is far from the expected 20.2 dB"
    );
    let gain = denoised - noisy;
    assert!(
        gain >= 4.0,
        "criterion 5: matched output {denoised:.2} dB vs noisy input {noisy:.2} dB, \
         gain {gain:.2} dB < 4 dB"
    );
    println!(
        "criterion 5: PASS (matched sigma=sigma_o=25: {denoised:.2} dB vs noisy \
         {noisy:.2} dB, gain {gain:.2} dB >= 4)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: ordering against the MMSE baseline at high noise
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_tunable_model_orders_above_mmse_and_fixed_sigma() {
    let fx = fixture();
    let spec = SweepSpec {
        sigma_o_grid: vec![40.0, 50.0],
        seeds: EVAL_SEEDS.to_vec(),
        mode: SigmaMode::Tunable,
        ..SweepSpec::default()
    };
    let points = run_mmse_comparison(&fx.params, &fx.mmse, &fx.train_ids, &fx.test, &spec)
        .expect("criterion 6: comparison");

    let tunable50 = point_mean(&points, 50.0, "FFDNet-tunable");
    let mmse50 = point_mean(&points, 50.0, "MMSE");
    assert!(
        tunable50 > mmse50,
        "criterion 6: tunable {tunable50:.2} dB does not beat MMSE {mmse50:.2} dB at sigma_o=50"
    );
    for sigma_o in [40.0, 50.0] {
        let tunable = point_mean(&points, sigma_o, "FFDNet-tunable");
        let fixed = point_mean(&points, sigma_o, "FFDNet-15");
        assert!(
            tunable >= fixed,
            "criterion 6: tunable {tunable:.2} dB below fixed-15 {fixed:.2} dB at \
             sigma_o={sigma_o}"
        );
    }
    let tunable40 = point_mean(&points, 40.0, "FFDNet-tunable");
    let fixed40 = point_mean(&points, 40.0, "FFDNet-15");
    let fixed50 = point_mean(&points, 50.0, "FFDNet-15");
    println!(
        "criterion 6: PASS (sigma_o=50: tunable {tunable50:.2} dB > MMSE {mmse50:.2} dB; \
         tunable/fixed-15 {tunable40:.2}/{fixed40:.2} dB at 40 and {tunable50:.2}/{fixed50:.2} \
         dB at 50)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: MMSE limiting behavior
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_mmse_returns_input_at_zero_noise_and_mean_at_huge_noise() {
    let base = VlcScene::with_grids(
        GridSpec { count_x: 8, count_y: 8, spacing_m: 0.45, plane_height_m: 3.0 },
        GridSpec { count_x: 8, count_y: 8, spacing_m: 0.08, plane_height_m: 1.0 },
    );
    let records = generate_dataset(&base, 4, 11, &SceneRandomization::default())
        .expect("criterion 7: dataset");
    let clean: Vec<_> = records.iter().map(|r| r.clean_image.clone()).collect();
    let patch = 4;
    let model = fit_mmse(&clean, patch, 20_000, 0).expect("criterion 7: fit");
    assert!(!model.underdetermined(), "criterion 7: fit should be overdetermined");

    // Zero claimed noise: the estimator must trust the observation exactly,
    // even though the pixels fed to it really are noisy.
    let image = &clean[0];
    let noisy = add_awgn(image, 25.0, 77).expect("criterion 7: noise");
    let zero_tag =
        NoisyChannelImage::from_parts(image.rows(), image.cols(), noisy.pixels().to_vec(), 0.0)
            .expect("criterion 7: relabel");
    let estimate = mmse_denoise(&model, &zero_tag).expect("criterion 7: zero-noise denoise");
    let worst_zero = estimate
        .iter()
        .zip(noisy.pixels())
        .map(|(e, p)| (e - p).abs())
        .fold(0.0f64, f64::max);
    assert!(
        worst_zero <= 1e-8,
        "criterion 7: sigma_o=0 output deviates from the input by {worst_zero:.3e}"
    );

    // Astronomical claimed noise: the observation carries no information and
    // every patch must collapse to the prior mean.
    let huge =
        NoisyChannelImage::from_parts(image.rows(), image.cols(), image.pixels().to_vec(), 1e6)
            .expect("criterion 7: huge-noise input");
    let estimate = mmse_denoise(&model, &huge).expect("criterion 7: huge-noise denoise");
    let mean = model.mean();
    let mut worst_mean = 0.0f64;
    for r in 0..image.rows() {
        for c in 0..image.cols() {
            let expected = mean[(r % patch) * patch + (c % patch)];
            worst_mean = worst_mean.max((estimate[r * image.cols() + c] - expected).abs());
        }
    }
    assert!(
        worst_mean <= 1e-6,
        "criterion 7: sigma_o=1e6 output deviates from the prior mean by {worst_mean:.3e}"
    );
    println!(
        "criterion 7: PASS (sigma_o=0 returns the input within {worst_zero:.2e}, \
         sigma_o=1e6 returns the prior mean within {worst_mean:.2e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical pipeline reruns
// ---------------------------------------------------------------------------

/// One full gen -> train -> sweep pipeline through the CLI entry point,
/// returning the bytes of the sweep CSV.
fn run_pipeline(root: &std::path::Path, master_seed: u64) -> Vec<u8> {
    let scene_cfg = root.join("scene.cfg");
    std::fs::write(
        &scene_cfg,
        "led_count_x = 6\nled_count_y = 6\nled_spacing_m = 0.4\nled_height_m = 3\n\
         pd_count_x = 6\npd_count_y = 6\npd_spacing_m = 0.1\npd_height_m = 1\n",
    )
    .expect("criterion 8: scene config");
    let data = root.join("data");
    let checkpoint = root.join("model.ffdn");
    let csv = root.join("sweep.csv");
    let run = |args: &[&str]| {
        vlc_chanest::cli::run_with_args(args.iter().copied())
            .unwrap_or_else(|e| panic!("criterion 8: `{}` failed: {e}", args[1]));
    };
    run(&[
        "vlc-chanest",
        "gen-channels",
        "--config",
        scene_cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "--count",
        "8",
        "--seed",
        &master_seed.to_string(),
    ]);
    run(&[
        "vlc-chanest",
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        checkpoint.to_str().unwrap(),
        "--seed",
        &master_seed.to_string(),
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--patch-size",
        "16",
        "--depth",
        "3",
        "--features",
        "4",
    ]);
    run(&[
        "vlc-chanest",
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--sigma-o-grid",
        "5,25,50",
        "--sigma-inputs",
        "15,25",
        "--seeds",
        &master_seed.to_string(),
    ]);
    std::fs::read(&csv).expect("criterion 8: read CSV")
}

#[test]
fn criterion_8_pipeline_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().expect("criterion 8: tempdir");
    let first_dir = dir.path().join("first");
    let second_dir = dir.path().join("second");
    std::fs::create_dir_all(&first_dir).unwrap();
    std::fs::create_dir_all(&second_dir).unwrap();

    let first = run_pipeline(&first_dir, 9);
    let second = run_pipeline(&second_dir, 9);
    assert!(!first.is_empty(), "criterion 8: empty CSV");
    assert_eq!(
        first, second,
        "criterion 8: reruns with the same master seed produced different CSV bytes"
    );
    let lines = first.iter().filter(|b| **b == b'\n').count();
    println!(
        "criterion 8: PASS (two gen->train->sweep runs with seed 9 produced byte-identical \
         {lines}-line CSVs)"
    );
}
