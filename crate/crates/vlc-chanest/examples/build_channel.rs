//! Build a line-of-sight channel matrix for the reference room and inspect
//! its structure.
//!
//! Run with: cargo run --release --example build_channel

use vlc_chanest::channel::{build_channel_matrix, VlcScene};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let scene = VlcScene::default_128();
    scene.validate()?;

    println!("room: {:?} m", scene.room_size);
    println!(
        "LED array: {}×{} at {} m spacing, height {} m",
        scene.led_grid.count_x,
        scene.led_grid.count_y,
        scene.led_grid.spacing_m,
        scene.led_grid.plane_height_m
    );
    println!(
        "PD array:  {}×{} at {} m spacing, height {} m",
        scene.pd_grid.count_x,
        scene.pd_grid.count_y,
        scene.pd_grid.spacing_m,
        scene.pd_grid.plane_height_m
    );
    println!(
        "optics: semi-angle {}°, FOV {}°, PD area {} m², concentrator index {}",
        scene.semi_angle_deg, scene.fov_deg, scene.pd_area_m2, scene.refractive_index
    );

    let matrix = build_channel_matrix(&scene)?;
    println!("\nchannel matrix: {} PDs × {} LEDs", matrix.n_r(), matrix.n_t());

    let entries = matrix.entries();
    let min = entries.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    println!("gain range: [{min:.3e}, {max:.3e}], mean {mean:.3e}");

    // The strongest link is the most aligned LED/PD pair; show one row so
    // the spatial falloff across the LED array is visible.
    let (best, gain) = entries
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let (pd, led) = (best / matrix.n_t(), best % matrix.n_t());
    println!("strongest link: PD {pd} ← LED {led}, gain {gain:.3e}");

    println!("\ngains from PD {pd} to the first LED row:");
    for led in 0..scene.led_grid.count_x {
        print!(" {:.2e}", matrix.entry(pd, led));
    }
    println!();
    Ok(())
}
