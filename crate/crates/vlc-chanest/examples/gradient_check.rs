//! Verify the hand-written backward pass against central finite differences
//! on a tiny end-to-end model.
//!
//! Every trainable parameter group of a depth-3 network is perturbed and the
//! analytic gradient of the training loss is compared against the numeric
//! quotient. Double precision keeps the finite-difference noise floor well
//! below the tolerance.
//!
//! Run with: cargo run --release --example gradient_check

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vlc_chanest::model::{
    backward, forward_train, init_params, ModelConfig, ModelParams,
};
use vlc_chanest::tensor::{mse_loss, Tensor};
use vlc_chanest::Result;

fn loss_of(params: &mut ModelParams<f64>, noisy: &Tensor<f64>, clean: &Tensor<f64>) -> Result<f64> {
    // Keep batch-norm running statistics frozen so repeated probes see the
    // identical function.
    let frozen = params.clone();
    let (output, _) = forward_train(params, noisy, 25.0)?;
    *params = frozen;
    let (loss, _) = mse_loss(&output, clean, 0.5)?;
    Ok(loss)
}

fn main() -> Result<()> {
    let config = ModelConfig::new(3, 4)?;
    let mut params = init_params::<f64>(config, 11)?;
    println!(
        "model: depth {}, features {}, {} trainable parameters",
        config.depth,
        config.features,
        params.parameter_count()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(0.0..1.0)).collect() };
    let clean = Tensor::new([2, 1, 8, 8], draw(128))?;
    let noisy = Tensor::new([2, 1, 8, 8], draw(128))?;

    // Analytic gradients once.
    let frozen = params.clone();
    let (output, cache) = forward_train(&mut params, &noisy, 25.0)?;
    params = frozen;
    let (loss, loss_grad) = mse_loss(&output, &clean, 0.5)?;
    let grads = backward(&params, &cache, &loss_grad)?;
    println!("loss at the probe point: {loss:.6}");

    // Numeric gradients for a sample of coordinates in every group.
    let h = 1e-5;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let group_count = grads.slices().len();
    for group in 0..group_count {
        let len = grads.slices()[group].len();
        for k in 0..len.min(4) {
            let idx = k * (len / 4.min(len)).max(1);
            let analytic = grads.slices()[group][idx];
            let original = params.trainable_slices()[group][idx];
            params.trainable_slices_mut()[group][idx] = original + h;
            let plus = loss_of(&mut params, &noisy, &clean)?;
            params.trainable_slices_mut()[group][idx] = original - h;
            let minus = loss_of(&mut params, &noisy, &clean)?;
            params.trainable_slices_mut()[group][idx] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    println!("checked {checked} coordinates across {group_count} parameter groups");
    println!("worst relative error: {worst:.3e} (tolerance 1e-3)");
    assert!(worst < 1e-3, "finite-difference check failed");
    println!("backward pass agrees with finite differences");
    Ok(())
}
