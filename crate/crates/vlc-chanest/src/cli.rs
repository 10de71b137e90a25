//! Command-line front end.
//!
//! Five subcommands cover the full experimental loop: `gen-channels` writes
//! a randomized-scene dataset, `train` fits the denoiser on the training
//! split, `fit-mmse` fits the baseline on the same split, and `sweep` /
//! `compare` evaluate on the held-out split and emit CSV curves.
//!
//! Every subcommand resolves its settings as defaults, then the optional
//! flat config file, then flags, and prints the resolved configuration and
//! seeds to stderr before doing any work. All randomness flows from the
//! printed seeds, so reruns with the same line reproduce identical output
//! files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::channel::VlcScene;
use crate::config::{
    apply_model_config, apply_randomization_config, apply_scene_config, apply_train_config,
    model_to_config, randomization_to_config, scene_to_config, short_hash, train_to_config,
    FlatConfig, MODEL_KEYS, RANDOMIZATION_KEYS, SCENE_KEYS, TRAIN_KEYS,
};
use crate::dataset::{load_dataset, save_dataset, split_dataset};
use crate::error::{Error, Result};
use crate::eval::{
    run_mmse_comparison, run_sensitivity_sweep, write_curve_csv, CsvMeta, SweepSpec, SWEEP_KEYS,
};
use crate::mmse::{fit_mmse, MmseModel};
use crate::model::{ModelConfig, ModelParams};
use crate::training::{generate_dataset, train, SceneRandomization, TrainConfig};

#[derive(Parser)]
#[command(
    name = "vlc-chanest",
    version,
    about = "Channel estimation for massive-MIMO visible light links: \
             simulate, denoise, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of clean channel images from randomized scenes.
    GenChannels(GenChannelsArgs),
    /// Train the denoiser on the training split of a dataset.
    Train(TrainArgs),
    /// Fit the patchwise MMSE baseline on the training split.
    FitMmse(FitMmseArgs),
    /// Noise-level sensitivity sweep of a trained denoiser (CSV out).
    Sweep(SweepArgs),
    /// Compare fixed-σ / tunable-σ denoising against MMSE (CSV out).
    Compare(CompareArgs),
}

/// Parse real arguments and run; the entry point for the binary.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Run with explicit arguments (the program name must be the first one).
/// Lets tests drive the CLI in-process.
pub fn run_with_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli.command)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenChannels(args) => cmd_gen_channels(args),
        Command::Train(args) => cmd_train(args),
        Command::FitMmse(args) => cmd_fit_mmse(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn read_config_file(path: &Option<PathBuf>) -> Result<FlatConfig> {
    match path {
        None => Ok(FlatConfig::new()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            FlatConfig::parse(&text)
        }
    }
}

fn require_file(path: &Path, what: &str, hint: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{what} `{}` not found; {hint}",
            path.display()
        )));
    }
    Ok(())
}

fn log_resolved(label: &str, resolved: &FlatConfig) -> String {
    let text = resolved.to_text();
    let hash = short_hash(text.as_bytes());
    eprintln!("resolved {label} configuration (hash {hash}):");
    for line in text.lines() {
        eprintln!("  {line}");
    }
    hash
}

// ---------------------------------------------------------------------------
// gen-channels
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenChannelsArgs {
    /// Flat config file with scene, randomization, count, and seed keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of records to generate.
    #[arg(long)]
    count: Option<usize>,
    /// Master seed; each record derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Base array layout: 128 or 256 elements per array.
    #[arg(long)]
    size: Option<usize>,
}

fn base_scene(size: usize) -> Result<VlcScene> {
    match size {
        128 => Ok(VlcScene::default_128()),
        256 => Ok(VlcScene::default_256()),
        other => Err(Error::Config(format!("size must be 128 or 256, got {other}"))),
    }
}

fn cmd_gen_channels(args: GenChannelsArgs) -> Result<()> {
    let cfg = read_config_file(&args.config)?;
    let mut known: Vec<&str> = vec!["count", "seed", "size"];
    known.extend_from_slice(SCENE_KEYS);
    known.extend_from_slice(RANDOMIZATION_KEYS);
    cfg.assert_known_keys(&known)?;

    let size = args.size.or(cfg.get_usize("size")?).unwrap_or(128);
    let count = args.count.or(cfg.get_usize("count")?).unwrap_or(250);
    let seed = args.seed.or(cfg.get_u64("seed")?).unwrap_or(0);
    let mut scene = base_scene(size)?;
    apply_scene_config(&mut scene, &cfg)?;
    let mut ranges = SceneRandomization::default();
    apply_randomization_config(&mut ranges, &cfg)?;

    let mut resolved = FlatConfig::new();
    resolved.set("count", count);
    resolved.set("seed", seed);
    merge(&mut resolved, &scene_to_config(&scene));
    merge(&mut resolved, &randomization_to_config(&ranges));
    log_resolved("gen-channels", &resolved);

    let start = Instant::now();
    let records = generate_dataset(&scene, count, seed, &ranges)?;
    save_dataset(&records, &args.out)?;
    eprintln!(
        "wrote {} records ({}×{} each) to {} in {:.1}s",
        records.len(),
        scene.n_r(),
        scene.n_t(),
        args.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn merge(dst: &mut FlatConfig, src: &FlatConfig) {
    for key in src.keys().map(str::to_string).collect::<Vec<_>>() {
        dst.set(&key, src.get(&key).unwrap());
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory from gen-channels.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint file.
    #[arg(long)]
    out: PathBuf,
    /// Flat config file with training and model keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optional CSV file for the per-epoch loss history.
    #[arg(long)]
    loss_out: Option<PathBuf>,
    /// Master seed for init, shuffling, patch, and noise draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Passes over the training split.
    #[arg(long)]
    epochs: Option<usize>,
    /// Patches per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial Adam step size; halved at each third of the run.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Side of the square training crops (even, at least 2).
    #[arg(long)]
    patch_size: Option<usize>,
    /// Total convolution layers.
    #[arg(long)]
    depth: Option<usize>,
    /// Filters per hidden layer.
    #[arg(long)]
    features: Option<usize>,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = read_config_file(&args.config)?;
    let mut known: Vec<&str> = Vec::new();
    known.extend_from_slice(TRAIN_KEYS);
    known.extend_from_slice(MODEL_KEYS);
    cfg.assert_known_keys(&known)?;

    let mut train_config = TrainConfig::default();
    apply_train_config(&mut train_config, &cfg)?;
    let mut model_config = ModelConfig::default();
    apply_model_config(&mut model_config, &cfg)?;
    if let Some(v) = args.seed {
        train_config.seed = v;
    }
    if let Some(v) = args.epochs {
        train_config.epochs = v;
    }
    if let Some(v) = args.batch_size {
        train_config.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        train_config.learning_rate = v;
    }
    if let Some(v) = args.patch_size {
        train_config.patch_size = v;
    }
    if let Some(v) = args.depth {
        model_config.depth = v;
    }
    if let Some(v) = args.features {
        model_config.features = v;
    }

    let mut resolved = train_to_config(&train_config);
    merge(&mut resolved, &model_to_config(&model_config));
    log_resolved("train", &resolved);

    let records = load_dataset(&args.data)?;
    let (train_split, test_split) = split_dataset(records)?;
    eprintln!(
        "dataset: {} training records, {} held out",
        train_split.len(),
        test_split.len()
    );

    let start = Instant::now();
    let outcome = train(&train_split, model_config, &train_config)?;
    eprintln!(
        "trained {} parameters for {} epochs in {:.1}s; final loss {:.6e}",
        outcome.params.parameter_count(),
        train_config.epochs,
        start.elapsed().as_secs_f64(),
        outcome.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    outcome.params.save(&args.out)?;
    eprintln!("checkpoint written to {}", args.out.display());
    if let Some(loss_path) = &args.loss_out {
        let mut text = String::from("epoch,loss\n");
        for (epoch, loss) in outcome.loss_history.iter().enumerate() {
            text.push_str(&format!("{epoch},{loss}\n"));
        }
        std::fs::write(loss_path, text)?;
        eprintln!("loss history written to {}", loss_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-mmse
// ---------------------------------------------------------------------------

#[derive(Args)]
struct FitMmseArgs {
    /// Dataset directory from gen-channels.
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Flat config file with patch_size, max_patches, seed keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Side of the square patches whose statistics are fitted.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Cap on training patches (subsampled deterministically beyond it).
    #[arg(long)]
    max_patches: Option<usize>,
    /// Seed for the patch subsampling shuffle.
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_fit_mmse(args: FitMmseArgs) -> Result<()> {
    let cfg = read_config_file(&args.config)?;
    cfg.assert_known_keys(&["patch_size", "max_patches", "seed"])?;
    let patch_size = args.patch_size.or(cfg.get_usize("patch_size")?).unwrap_or(8);
    let max_patches = args.max_patches.or(cfg.get_usize("max_patches")?).unwrap_or(20_000);
    let seed = args.seed.or(cfg.get_u64("seed")?).unwrap_or(0);

    let mut resolved = FlatConfig::new();
    resolved.set("patch_size", patch_size);
    resolved.set("max_patches", max_patches);
    resolved.set("seed", seed);
    log_resolved("fit-mmse", &resolved);

    let records = load_dataset(&args.data)?;
    let (train_split, _) = split_dataset(records)?;
    let clean: Vec<_> = train_split.iter().map(|r| r.clean_image.clone()).collect();
    let model = fit_mmse(&clean, patch_size, max_patches, seed)?;
    if model.underdetermined() {
        eprintln!(
            "warning: fewer than {} patches available; statistics are \
             rank-deficient and lean on the jitter",
            patch_size * patch_size
        );
    }
    model.save(&args.out)?;
    eprintln!("MMSE model ({patch_size}×{patch_size} patches) written to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep and compare
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvalCommonArgs {
    /// Dataset directory from gen-channels.
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint from `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Flat config file with sweep keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated σ_o grid, e.g. `0,5,10`.
    #[arg(long)]
    sigma_o_grid: Option<String>,
    /// Comma-separated master seeds.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: EvalCommonArgs,
    /// Comma-separated input noise levels σ, e.g. `5,15,25,50`.
    #[arg(long)]
    sigma_inputs: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: EvalCommonArgs,
    /// Fitted MMSE model from `fit-mmse`.
    #[arg(long)]
    mmse: PathBuf,
    /// Method lineup: `fixed` (σ=15 vs MMSE) or `tunable` (adds σ = σ_o).
    #[arg(long)]
    mode: Option<String>,
    /// Offset of the tunable policy: σ = σ_o + shift.
    #[arg(long)]
    sigma_shift: Option<f64>,
}

fn resolve_spec(common: &EvalCommonArgs, overlay: &FlatConfig) -> Result<SweepSpec> {
    let cfg = read_config_file(&common.config)?;
    cfg.assert_known_keys(SWEEP_KEYS)?;
    let mut spec = SweepSpec::default();
    spec.apply_config(&cfg)?;
    let mut flag_cfg = overlay.clone();
    if let Some(v) = &common.sigma_o_grid {
        flag_cfg.set("sigma_o_grid", v);
    }
    if let Some(v) = &common.seeds {
        flag_cfg.set("seeds", v);
    }
    spec.apply_config(&flag_cfg)?;
    spec.validate()?;
    Ok(spec)
}

fn load_eval_inputs(
    common: &EvalCommonArgs,
) -> Result<(ModelParams<f32>, Vec<u64>, Vec<crate::training::DatasetRecord>)> {
    require_file(&common.checkpoint, "checkpoint", "run `train` first")?;
    let params = ModelParams::<f32>::load(&common.checkpoint)?;
    let records = load_dataset(&common.data)?;
    let (train_split, test_split) = split_dataset(records)?;
    let train_ids = train_split.iter().map(|r| r.id).collect();
    Ok((params, train_ids, test_split))
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut overlay = FlatConfig::new();
    if let Some(v) = &args.sigma_inputs {
        overlay.set("sigma_inputs", v);
    }
    let spec = resolve_spec(&args.common, &overlay)?;
    let hash = log_resolved("sweep", &spec.to_config());
    let (params, train_ids, test_split) = load_eval_inputs(&args.common)?;
    eprintln!(
        "sweeping {} σ_o levels × {} σ inputs over {} test images × {} seeds",
        spec.sigma_o_grid.len(),
        spec.sigma_inputs.len(),
        test_split.len(),
        spec.seeds.len()
    );
    let start = Instant::now();
    let points = run_sensitivity_sweep(&params, &train_ids, &test_split, &spec)?;
    let meta = CsvMeta { config_hash: hash, seeds: spec.seeds.clone() };
    write_curve_csv(&args.common.out, &points, &meta)?;
    eprintln!(
        "wrote {} curve points to {} in {:.1}s",
        points.len(),
        args.common.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut overlay = FlatConfig::new();
    if let Some(v) = &args.mode {
        overlay.set("mode", v);
    }
    if let Some(v) = args.sigma_shift {
        overlay.set("sigma_shift", v);
    }
    let spec = resolve_spec(&args.common, &overlay)?;
    let hash = log_resolved("compare", &spec.to_config());
    let (params, train_ids, test_split) = load_eval_inputs(&args.common)?;
    require_file(&args.mmse, "MMSE model", "run `fit-mmse` first")?;
    let mmse = MmseModel::load(&args.mmse)?;
    eprintln!(
        "comparing methods ({} mode) over {} σ_o levels × {} test images × {} seeds",
        spec.mode,
        spec.sigma_o_grid.len(),
        test_split.len(),
        spec.seeds.len()
    );
    let start = Instant::now();
    let points = run_mmse_comparison(&params, &mmse, &train_ids, &test_split, &spec)?;
    let meta = CsvMeta { config_hash: hash, seeds: spec.seeds.clone() };
    write_curve_csv(&args.common.out, &points, &meta)?;
    eprintln!(
        "wrote {} curve points to {} in {:.1}s",
        points.len(),
        args.common.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
