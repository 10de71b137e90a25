//! Persistence round trips: dataset directory, trained checkpoint, and MMSE
//! model all survive a save/load cycle with their behavior intact.
//!
//! Run with: cargo run --release --example persist_and_reload

use vlc_chanest::channel::{GridSpec, VlcScene};
use vlc_chanest::dataset::{load_dataset, save_dataset, split_dataset};
use vlc_chanest::eval::ffdnet_denoise;
use vlc_chanest::imaging::add_awgn;
use vlc_chanest::mmse::{fit_mmse, MmseModel};
use vlc_chanest::model::{ModelConfig, ModelParams};
use vlc_chanest::training::{generate_dataset, train, SceneRandomization, TrainConfig};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let workdir = std::env::temp_dir().join("vlc-chanest-example");
    std::fs::create_dir_all(&workdir)?;

    // Dataset: binary records plus a text index carrying each scene.
    let scene = VlcScene::with_grids(
        GridSpec { count_x: 6, count_y: 6, spacing_m: 0.4, plane_height_m: 3.0 },
        GridSpec { count_x: 6, count_y: 6, spacing_m: 0.1, plane_height_m: 1.0 },
    );
    let records = generate_dataset(&scene, 10, 4, &SceneRandomization::default())?;
    let data_dir = workdir.join("data");
    save_dataset(&records, &data_dir)?;
    let reloaded = load_dataset(&data_dir)?;
    println!(
        "dataset: saved {} records, reloaded {} (scenes preserved: {})",
        records.len(),
        reloaded.len(),
        records.iter().zip(&reloaded).all(|(a, b)| a.scene == b.scene)
    );

    // Checkpoint: a quickly trained model must behave identically after a
    // save/load cycle.
    let (train_set, test_set) = split_dataset(reloaded)?;
    let outcome = train(
        &train_set,
        ModelConfig::new(3, 4)?,
        &TrainConfig { epochs: 3, batch_size: 4, patch_size: 16, seed: 2, ..TrainConfig::default() },
    )?;
    let ckpt_path = workdir.join("model.ffdn");
    outcome.params.save(&ckpt_path)?;
    let restored = ModelParams::<f32>::load(&ckpt_path)?;
    let noisy = add_awgn(&test_set[0].clean_image, 25.0, 7)?;
    let before = ffdnet_denoise(&outcome.params, &noisy, 25.0)?;
    let after = ffdnet_denoise(&restored, &noisy, 25.0)?;
    let identical = before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("checkpoint: {} bytes, outputs bit-identical after reload: {identical}",
        std::fs::metadata(&ckpt_path)?.len());

    // MMSE model file.
    let clean: Vec<_> = train_set.iter().map(|r| r.clean_image.clone()).collect();
    let mmse = fit_mmse(&clean, 6, 20_000, 0)?;
    let mmse_path = workdir.join("model.mmse");
    mmse.save(&mmse_path)?;
    let mmse_back = MmseModel::load(&mmse_path)?;
    println!(
        "mmse model: {} bytes, statistics preserved: {}",
        std::fs::metadata(&mmse_path)?.len(),
        mmse_back.mean() == mmse.mean()
    );

    println!("\nartifacts left in {}", workdir.display());
    Ok(())
}
