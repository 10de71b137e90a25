//! Flat `key = value` configuration text.
//!
//! Every tool input (scene geometry, training hyperparameters, sweep grids)
//! flows through one line-oriented format: `key = value`, one pair per line,
//! `#` comments and blank lines ignored. Floats are written in Rust's
//! shortest round-trip representation, so emit → parse recovers values
//! exactly and configuration hashes are stable.

use sha2::{Digest, Sha256};

use crate::channel::VlcScene;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{SceneRandomization, TrainConfig};

/// Ordered key/value pairs parsed from or destined for flat config text.
///
/// Order is preserved so emitted files and their hashes are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    pairs: Vec<(String, String)>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse config text. Duplicate keys are rejected rather than silently
    /// resolved; overrides belong to the caller (the CLI applies flags on
    /// top of the file explicitly).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if cfg.get(key).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.pairs.push((key.to_string(), value.to_string()));
        }
        Ok(cfg)
    }

    /// Emit as config text, one `key = value` per line in insertion order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Insert or replace a pair, keeping the position of a replaced key.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.pairs.iter_mut().find(|(k, _)| k == key) {
            Some(pair) => pair.1 = value,
            None => self.pairs.push((key.to_string(), value)),
        }
    }

    /// Reject keys outside the given vocabulary. Catches typos early, since
    /// readers otherwise just skip keys they do not care about.
    pub fn assert_known_keys(&self, known: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !known.contains(&key) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a count")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer")))
            })
            .transpose()
    }

    /// Comma-separated list of reals, e.g. `0, 5, 10`.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("key `{key}`: `{}` is not a number", item.trim()))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Comma-separated list of seeds.
    pub fn get_u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<u64>().map_err(|_| {
                            Error::Config(format!("key `{key}`: `{}` is not an integer", item.trim()))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

/// First 16 hex characters of the SHA-256 of the given bytes; used to stamp
/// output files with the configuration that produced them.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

// ---------------------------------------------------------------------------
// Scene mapping
// ---------------------------------------------------------------------------

/// Every key used by the scene mapping below.
pub const SCENE_KEYS: &[&str] = &[
    "room_x_m",
    "room_y_m",
    "room_z_m",
    "led_count_x",
    "led_count_y",
    "led_spacing_m",
    "led_height_m",
    "pd_count_x",
    "pd_count_y",
    "pd_spacing_m",
    "pd_height_m",
    "pd_offset_x_m",
    "pd_offset_y_m",
    "semi_angle_deg",
    "fov_deg",
    "pd_area_m2",
    "filter_gain",
    "refractive_index",
    "led_power_w",
];

/// Flatten a scene into config pairs, in the [`SCENE_KEYS`] order.
pub fn scene_to_config(scene: &VlcScene) -> FlatConfig {
    let mut cfg = FlatConfig::new();
    cfg.set("room_x_m", scene.room_size.0);
    cfg.set("room_y_m", scene.room_size.1);
    cfg.set("room_z_m", scene.room_size.2);
    cfg.set("led_count_x", scene.led_grid.count_x);
    cfg.set("led_count_y", scene.led_grid.count_y);
    cfg.set("led_spacing_m", scene.led_grid.spacing_m);
    cfg.set("led_height_m", scene.led_grid.plane_height_m);
    cfg.set("pd_count_x", scene.pd_grid.count_x);
    cfg.set("pd_count_y", scene.pd_grid.count_y);
    cfg.set("pd_spacing_m", scene.pd_grid.spacing_m);
    cfg.set("pd_height_m", scene.pd_grid.plane_height_m);
    cfg.set("pd_offset_x_m", scene.pd_plane_offset.0);
    cfg.set("pd_offset_y_m", scene.pd_plane_offset.1);
    cfg.set("semi_angle_deg", scene.semi_angle_deg);
    cfg.set("fov_deg", scene.fov_deg);
    cfg.set("pd_area_m2", scene.pd_area_m2);
    cfg.set("filter_gain", scene.filter_gain);
    cfg.set("refractive_index", scene.refractive_index);
    cfg.set("led_power_w", scene.led_power_w);
    cfg
}

/// Overlay present scene keys onto `scene`. Keys outside [`SCENE_KEYS`] are
/// left to the caller's vocabulary check; absent keys keep the base value.
pub fn apply_scene_config(scene: &mut VlcScene, cfg: &FlatConfig) -> Result<()> {
    if let Some(v) = cfg.get_f64("room_x_m")? {
        scene.room_size.0 = v;
    }
    if let Some(v) = cfg.get_f64("room_y_m")? {
        scene.room_size.1 = v;
    }
    if let Some(v) = cfg.get_f64("room_z_m")? {
        scene.room_size.2 = v;
    }
    if let Some(v) = cfg.get_usize("led_count_x")? {
        scene.led_grid.count_x = v;
    }
    if let Some(v) = cfg.get_usize("led_count_y")? {
        scene.led_grid.count_y = v;
    }
    if let Some(v) = cfg.get_f64("led_spacing_m")? {
        scene.led_grid.spacing_m = v;
    }
    if let Some(v) = cfg.get_f64("led_height_m")? {
        scene.led_grid.plane_height_m = v;
    }
    if let Some(v) = cfg.get_usize("pd_count_x")? {
        scene.pd_grid.count_x = v;
    }
    if let Some(v) = cfg.get_usize("pd_count_y")? {
        scene.pd_grid.count_y = v;
    }
    if let Some(v) = cfg.get_f64("pd_spacing_m")? {
        scene.pd_grid.spacing_m = v;
    }
    if let Some(v) = cfg.get_f64("pd_height_m")? {
        scene.pd_grid.plane_height_m = v;
    }
    if let Some(v) = cfg.get_f64("pd_offset_x_m")? {
        scene.pd_plane_offset.0 = v;
    }
    if let Some(v) = cfg.get_f64("pd_offset_y_m")? {
        scene.pd_plane_offset.1 = v;
    }
    if let Some(v) = cfg.get_f64("semi_angle_deg")? {
        scene.semi_angle_deg = v;
    }
    if let Some(v) = cfg.get_f64("fov_deg")? {
        scene.fov_deg = v;
    }
    if let Some(v) = cfg.get_f64("pd_area_m2")? {
        scene.pd_area_m2 = v;
    }
    if let Some(v) = cfg.get_f64("filter_gain")? {
        scene.filter_gain = v;
    }
    if let Some(v) = cfg.get_f64("refractive_index")? {
        scene.refractive_index = v;
    }
    if let Some(v) = cfg.get_f64("led_power_w")? {
        scene.led_power_w = v;
    }
    Ok(())
}

/// Rebuild a scene from a full set of scene keys (all required) and validate
/// it. Used by the dataset index, where each record carries its geometry.
pub fn scene_from_config(cfg: &FlatConfig) -> Result<VlcScene> {
    let mut scene = VlcScene::default_128();
    for key in SCENE_KEYS {
        if cfg.get(key).is_none() {
            return Err(Error::Config(format!("scene config is missing key `{key}`")));
        }
    }
    apply_scene_config(&mut scene, cfg)?;
    scene.validate()?;
    Ok(scene)
}

// ---------------------------------------------------------------------------
// Scene randomization mapping
// ---------------------------------------------------------------------------

/// Every key used by the randomization mapping below.
pub const RANDOMIZATION_KEYS: &[&str] = &[
    "rand_vertical_min",
    "rand_vertical_max",
    "rand_offset_x_min",
    "rand_offset_x_max",
    "rand_offset_y_min",
    "rand_offset_y_max",
    "rand_led_spacing_min",
    "rand_led_spacing_max",
    "rand_pd_spacing_min",
    "rand_pd_spacing_max",
];

/// Flatten randomization ranges into config pairs.
pub fn randomization_to_config(ranges: &SceneRandomization) -> FlatConfig {
    let mut cfg = FlatConfig::new();
    cfg.set("rand_vertical_min", ranges.vertical_distance_m.0);
    cfg.set("rand_vertical_max", ranges.vertical_distance_m.1);
    cfg.set("rand_offset_x_min", ranges.pd_offset_x_m.0);
    cfg.set("rand_offset_x_max", ranges.pd_offset_x_m.1);
    cfg.set("rand_offset_y_min", ranges.pd_offset_y_m.0);
    cfg.set("rand_offset_y_max", ranges.pd_offset_y_m.1);
    cfg.set("rand_led_spacing_min", ranges.led_spacing_m.0);
    cfg.set("rand_led_spacing_max", ranges.led_spacing_m.1);
    cfg.set("rand_pd_spacing_min", ranges.pd_spacing_m.0);
    cfg.set("rand_pd_spacing_max", ranges.pd_spacing_m.1);
    cfg
}

/// Overlay present randomization keys onto `ranges`.
pub fn apply_randomization_config(ranges: &mut SceneRandomization, cfg: &FlatConfig) -> Result<()> {
    if let Some(v) = cfg.get_f64("rand_vertical_min")? {
        ranges.vertical_distance_m.0 = v;
    }
    if let Some(v) = cfg.get_f64("rand_vertical_max")? {
        ranges.vertical_distance_m.1 = v;
    }
    if let Some(v) = cfg.get_f64("rand_offset_x_min")? {
        ranges.pd_offset_x_m.0 = v;
    }
    if let Some(v) = cfg.get_f64("rand_offset_x_max")? {
        ranges.pd_offset_x_m.1 = v;
    }
    if let Some(v) = cfg.get_f64("rand_offset_y_min")? {
        ranges.pd_offset_y_m.0 = v;
    }
    if let Some(v) = cfg.get_f64("rand_offset_y_max")? {
        ranges.pd_offset_y_m.1 = v;
    }
    if let Some(v) = cfg.get_f64("rand_led_spacing_min")? {
        ranges.led_spacing_m.0 = v;
    }
    if let Some(v) = cfg.get_f64("rand_led_spacing_max")? {
        ranges.led_spacing_m.1 = v;
    }
    if let Some(v) = cfg.get_f64("rand_pd_spacing_min")? {
        ranges.pd_spacing_m.0 = v;
    }
    if let Some(v) = cfg.get_f64("rand_pd_spacing_max")? {
        ranges.pd_spacing_m.1 = v;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training and model mapping
// ---------------------------------------------------------------------------

/// Every key used by the training mapping below. The Adam moment constants
/// are deliberately not configurable from text.
pub const TRAIN_KEYS: &[&str] =
    &["epochs", "batch_size", "learning_rate", "patch_size", "sigma_min", "sigma_max", "seed"];

/// Every key used by the model mapping below.
pub const MODEL_KEYS: &[&str] = &["depth", "features"];

/// Flatten the configurable training hyperparameters into config pairs.
pub fn train_to_config(config: &TrainConfig) -> FlatConfig {
    let mut cfg = FlatConfig::new();
    cfg.set("epochs", config.epochs);
    cfg.set("batch_size", config.batch_size);
    cfg.set("learning_rate", config.learning_rate);
    cfg.set("patch_size", config.patch_size);
    cfg.set("sigma_min", config.sigma_range.0);
    cfg.set("sigma_max", config.sigma_range.1);
    cfg.set("seed", config.seed);
    cfg
}

/// Overlay present training keys onto `config`.
pub fn apply_train_config(config: &mut TrainConfig, cfg: &FlatConfig) -> Result<()> {
    if let Some(v) = cfg.get_usize("epochs")? {
        config.epochs = v;
    }
    if let Some(v) = cfg.get_usize("batch_size")? {
        config.batch_size = v;
    }
    if let Some(v) = cfg.get_f64("learning_rate")? {
        config.learning_rate = v;
    }
    if let Some(v) = cfg.get_usize("patch_size")? {
        config.patch_size = v;
    }
    if let Some(v) = cfg.get_f64("sigma_min")? {
        config.sigma_range.0 = v;
    }
    if let Some(v) = cfg.get_f64("sigma_max")? {
        config.sigma_range.1 = v;
    }
    if let Some(v) = cfg.get_u64("seed")? {
        config.seed = v;
    }
    Ok(())
}

/// Flatten the architecture into config pairs.
pub fn model_to_config(config: &ModelConfig) -> FlatConfig {
    let mut cfg = FlatConfig::new();
    cfg.set("depth", config.depth);
    cfg.set("features", config.features);
    cfg
}

/// Overlay present model keys onto `config`.
pub fn apply_model_config(config: &mut ModelConfig, cfg: &FlatConfig) -> Result<()> {
    if let Some(v) = cfg.get_usize("depth")? {
        config.depth = v;
    }
    if let Some(v) = cfg.get_usize("features")? {
        config.features = v;
    }
    Ok(())
}
