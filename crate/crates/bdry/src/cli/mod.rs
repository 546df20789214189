//! Command-line surface: `attribute`, `boundary`, `evaluate`, `render`,
//! `train-toy`, `experiment`.
//!
//! Every subcommand resolves its settings as defaults < `--config` file <
//! flags, rejects unknown configuration keys, echoes the resolved
//! configuration into the output directory, and writes byte-deterministic
//! artifacts for a fixed seed. Attack failure is data (recorded in the
//! output), not an exit code; genuine errors exit nonzero with a message.

mod experiment;
pub(crate) mod kv;

pub use kv::KvConfig;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::attack::{
    boundary_search_ensemble, AttackConfig, AttackNorm, BoundaryResult,
};
use crate::attribution::{self, IgConfig};
use crate::error::{Error, Result};
use crate::experiments::{synth_dataset, train_toy, DatasetKind, ToyArch};
use crate::metrics::{boxes_from_csv, metric_report_csv, score_instance, PixelAttribution};
use crate::nn::{load_model, save_model, Network};
use crate::render::render_heatmap;
use crate::tensor::Tensor;

use kv::{parse_f64, parse_string, parse_u64, parse_usize};

#[derive(Parser)]
#[command(name = "bdry", about = "Boundary-aware feature attributions for small ReLU classifiers")]
struct Cli {
    /// key = value configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "bdry-out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one attribution map for one input tensor.
    Attribute {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// sm | gti | ig | sg | bsm | big | agi
        #[arg(long)]
        method: Option<String>,
        /// Target class (default: the predicted class).
        #[arg(long)]
        target: Option<usize>,
        /// Path-integral interpolation points.
        #[arg(long)]
        steps: Option<usize>,
        /// Smooth-gradient noise level.
        #[arg(long)]
        sigma: Option<f64>,
        /// Smooth-gradient sample count.
        #[arg(long)]
        samples: Option<usize>,
        /// Baseline tensor file for ig (default: zeros).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Attack configuration file; repeat to build an ensemble.
        #[arg(long = "attack")]
        attacks: Vec<PathBuf>,
        #[arg(long)]
        clip_lo: Option<f64>,
        #[arg(long)]
        clip_hi: Option<f64>,
    },
    /// Search for the closest adversarial example / boundary point.
    Boundary {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long = "attack")]
        attacks: Vec<PathBuf>,
        #[arg(long)]
        clip_lo: Option<f64>,
        #[arg(long)]
        clip_hi: Option<f64>,
    },
    /// Score a directory of attribution tensors against bounding boxes.
    Evaluate {
        /// Directory of `<id>__<method>.bten` files.
        #[arg(long)]
        attr_dir: Option<PathBuf>,
        /// CSV with header id,x_min,y_min,x_max,y_max.
        #[arg(long)]
        boxes: Option<PathBuf>,
    },
    /// Render an attribution tensor as a PPM heatmap.
    Render {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Gaussian blur radius in pixels; 0 disables. Default scales the
        /// reference radius 10 at side 224 to the image side.
        #[arg(long)]
        blur: Option<f64>,
    },
    /// Train a toy model and save it as a BDRYNET1 file.
    TrainToy {
        /// blobs2d | rings2d | patches8x8
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// d-16-16-k | relu1 | 1conv-8
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Adversarial-training radius; omit for standard training.
        #[arg(long)]
        robust_eps: Option<f64>,
        /// l2 | linf
        #[arg(long)]
        norm: Option<String>,
    },
    /// Run one of the studies end to end into a hashed run directory.
    Experiment {
        /// alignment | localization | correlation | smoothing |
        /// baseline-sensitivity
        #[arg(long)]
        kind: Option<String>,
        /// Instances to render as heatmaps (image datasets only).
        #[arg(long)]
        render_count: Option<usize>,
    },
}

/// Entry point: returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if n > 0 {
            builder = builder.num_threads(n);
        }
        // A second init in the same process is fine to ignore.
        let _ = builder.build_global();
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::default(),
    };
    std::fs::create_dir_all(&cli.out)?;
    let seed = cfg.resolve("seed", cli.seed, 0, parse_u64)?;
    match cli.command {
        Command::Attribute {
            model,
            input,
            method,
            target,
            steps,
            sigma,
            samples,
            baseline,
            attacks,
            clip_lo,
            clip_hi,
        } => cmd_attribute(
            &mut cfg, &cli.out, seed, model, input, method, target, steps, sigma, samples,
            baseline, attacks, clip_lo, clip_hi,
        ),
        Command::Boundary { model, input, attacks, clip_lo, clip_hi } => {
            cmd_boundary(&mut cfg, &cli.out, seed, model, input, attacks, clip_lo, clip_hi)
        }
        Command::Evaluate { attr_dir, boxes } => cmd_evaluate(&mut cfg, &cli.out, attr_dir, boxes),
        Command::Render { input, blur } => cmd_render(&mut cfg, &cli.out, input, blur),
        Command::TrainToy { dataset, n, arch, epochs, lr, robust_eps, norm } => cmd_train_toy(
            &mut cfg, &cli.out, seed, dataset, n, arch, epochs, lr, robust_eps, norm,
        ),
        Command::Experiment { kind, render_count } => {
            experiment::cmd_experiment(&mut cfg, &cli.out, seed, kind, render_count)
        }
    }
}

fn required_path(
    cfg: &mut KvConfig,
    key: &str,
    flag: Option<PathBuf>,
) -> Result<PathBuf> {
    let value = match flag {
        Some(p) => p.display().to_string(),
        None => cfg
            .get(key)
            .map(str::to_string)
            .ok_or_else(|| Error::Config(format!("missing required '{key}' (flag or config)")))?,
    };
    cfg.set(key, value.clone());
    Ok(PathBuf::from(value))
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

/// Builds the attack list: explicit `--attack` files win, then the config
/// key `attacks` (`default`, `none`, or a comma list of files), defaulting
/// to the standard PGD + CW + AutoPGD ensemble.
fn resolve_attacks(
    cfg: &mut KvConfig,
    flag_files: &[PathBuf],
    seed: u64,
    clip: Option<(f32, f32)>,
) -> Result<Vec<AttackConfig>> {
    let mut configs: Vec<AttackConfig>;
    if !flag_files.is_empty() {
        configs = Vec::new();
        for f in flag_files {
            configs.push(AttackConfig::parse(&std::fs::read_to_string(f)?, seed)?);
        }
        cfg.set(
            "attacks",
            flag_files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(","),
        );
    } else {
        match cfg.get("attacks").unwrap_or("default") {
            "default" => {
                configs = AttackConfig::default_ensemble(seed);
                cfg.set("attacks", "default".into());
            }
            "none" => {
                configs = Vec::new();
                cfg.set("attacks", "none".into());
            }
            list => {
                configs = Vec::new();
                for f in list.split(',') {
                    configs.push(AttackConfig::parse(&std::fs::read_to_string(f.trim())?, seed)?);
                }
            }
        }
    }
    if let Some(clip) = clip {
        for c in &mut configs {
            c.clip = clip;
        }
    }
    Ok(configs)
}

fn resolve_clip(
    cfg: &mut KvConfig,
    clip_lo: Option<f64>,
    clip_hi: Option<f64>,
) -> Result<Option<(f32, f32)>> {
    let lo = cfg.resolve("clip_lo", clip_lo, 0.0, parse_f64)?;
    let hi = cfg.resolve("clip_hi", clip_hi, 1.0, parse_f64)?;
    if clip_lo.is_none() && clip_hi.is_none() && cfg.get("clip_lo").is_none() {
        return Ok(None);
    }
    Ok(Some((lo as f32, hi as f32)))
}

const ATTRIBUTE_KEYS: &[&str] = &[
    "seed", "model", "input", "method", "target", "steps", "sigma", "samples", "baseline",
    "attacks", "clip_lo", "clip_hi", "agi_eps", "agi_topk", "agi_iters", "agi_step",
];

#[allow(clippy::too_many_arguments)]
fn cmd_attribute(
    cfg: &mut KvConfig,
    out: &Path,
    seed: u64,
    model: Option<PathBuf>,
    input: Option<PathBuf>,
    method: Option<String>,
    target: Option<usize>,
    steps: Option<usize>,
    sigma: Option<f64>,
    samples: Option<usize>,
    baseline: Option<PathBuf>,
    attack_files: Vec<PathBuf>,
    clip_lo: Option<f64>,
    clip_hi: Option<f64>,
) -> Result<()> {
    cfg.check_known(ATTRIBUTE_KEYS)?;
    let model_path = required_path(cfg, "model", model)?;
    let input_path = required_path(cfg, "input", input)?;
    let method = cfg.resolve("method", method, "sm".into(), parse_string)?;
    let steps = cfg.resolve("steps", steps, 20, parse_usize)?;
    let sigma = cfg.resolve("sigma", sigma, 0.15, parse_f64)?;
    let samples = cfg.resolve("samples", samples, 50, parse_usize)?;

    let net = load_model(&model_path)?;
    let x = Tensor::load(&input_path)?;
    let target = match target {
        Some(t) => {
            cfg.set("target", t.to_string());
            Some(t)
        }
        None => match cfg.get("target") {
            Some(s) => Some(parse_usize(s)?),
            None => None,
        },
    };
    let ig_cfg = IgConfig { steps };

    let map = match method.as_str() {
        "sm" => attribution::saliency_map(&net, &x, target)?,
        "gti" => attribution::grad_times_input(&net, &x, target)?,
        "ig" => {
            let base = match baseline {
                Some(p) => {
                    cfg.set("baseline", p.display().to_string());
                    Tensor::load(&p)?
                }
                None => match cfg.get("baseline") {
                    Some(p) => Tensor::load(Path::new(p))?,
                    None => Tensor::zeros(x.shape().to_vec()),
                },
            };
            attribution::integrated_gradients(&net, &x, &base, target, ig_cfg)?
        }
        "sg" => attribution::smooth_gradient(&net, &x, target, sigma, samples, seed)?,
        "bsm" | "big" => {
            let clip = resolve_clip(cfg, clip_lo, clip_hi)?;
            let attacks = resolve_attacks(cfg, &attack_files, seed, clip)?;
            if attacks.is_empty() {
                return Err(Error::NoBoundary(
                    "attacks are disabled; boundary attributions need the search".into(),
                ));
            }
            let result = boundary_search_ensemble(&net, &x, &attacks)?;
            if !result.success {
                return Err(Error::NoBoundary("boundary search failed on this input".into()));
            }
            if method == "bsm" {
                attribution::boundary_saliency_map(&net, &x, &result)?
            } else {
                attribution::boundary_integrated_gradients(&net, &x, &result, ig_cfg)?
            }
        }
        "agi" => {
            let eps = cfg.resolve("agi_eps", None, 0.5, parse_f64)?;
            let topk_default = (net.num_classes() - 1).min(10);
            let topk = cfg.resolve("agi_topk", None, topk_default, parse_usize)?;
            let iters = cfg.resolve("agi_iters", None, 15, parse_usize)?;
            let step = cfg.resolve("agi_step", None, 2.0 * eps / iters.max(1) as f64, parse_f64)?;
            attribution::agi(&net, &x, eps, topk.min(net.num_classes() - 1), iters, step, seed)?
        }
        other => return Err(Error::Config(format!("unknown method '{other}'"))),
    };

    let stem = stem_of(&input_path);
    let tensor_path = out.join(format!("{stem}__{method}.bten"));
    map.save(&tensor_path)?;
    std::fs::write(out.join(format!("{stem}__{method}.config.txt")), cfg.echo())?;
    Ok(())
}

const BOUNDARY_KEYS: &[&str] =
    &["seed", "model", "input", "attacks", "clip_lo", "clip_hi"];

#[allow(clippy::too_many_arguments)]
fn cmd_boundary(
    cfg: &mut KvConfig,
    out: &Path,
    seed: u64,
    model: Option<PathBuf>,
    input: Option<PathBuf>,
    attack_files: Vec<PathBuf>,
    clip_lo: Option<f64>,
    clip_hi: Option<f64>,
) -> Result<()> {
    cfg.check_known(BOUNDARY_KEYS)?;
    let model_path = required_path(cfg, "model", model)?;
    let input_path = required_path(cfg, "input", input)?;
    let net = load_model(&model_path)?;
    let x = Tensor::load(&input_path)?;
    let clip = resolve_clip(cfg, clip_lo, clip_hi)?;
    let attacks = resolve_attacks(cfg, &attack_files, seed, clip)?;
    if attacks.is_empty() {
        return Err(Error::Config("boundary search needs at least one attack".into()));
    }
    let result = boundary_search_ensemble(&net, &x, &attacks)?;
    write_boundary_record(out, &stem_of(&input_path), &result)?;
    std::fs::write(out.join(format!("{}__boundary.config.txt", stem_of(&input_path))), cfg.echo())?;
    Ok(())
}

fn write_boundary_record(out: &Path, stem: &str, result: &BoundaryResult) -> Result<()> {
    result.adversarial.save(&out.join(format!("{stem}__adversarial.bten")))?;
    let record = format!(
        "success = {}\ndistance = {:.6}\nmethod = {}\nsource_class = {}\nrefined = {}\n",
        result.success, result.distance, result.method, result.source_class, result.refined
    );
    std::fs::write(out.join(format!("{stem}__boundary.txt")), record)?;
    Ok(())
}

const EVALUATE_KEYS: &[&str] = &["seed", "attr_dir", "boxes"];

fn cmd_evaluate(
    cfg: &mut KvConfig,
    out: &Path,
    attr_dir: Option<PathBuf>,
    boxes: Option<PathBuf>,
) -> Result<()> {
    cfg.check_known(EVALUATE_KEYS)?;
    let attr_dir = required_path(cfg, "attr_dir", attr_dir)?;
    let boxes_path = required_path(cfg, "boxes", boxes)?;
    let boxes = boxes_from_csv(&boxes_path)?;

    let mut entries: Vec<(String, String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(&attr_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("bten") {
            continue;
        }
        let stem = stem_of(&path);
        if let Some((id, method)) = stem.rsplit_once("__") {
            entries.push((id.to_string(), method.to_string(), path));
        }
    }
    entries.sort();

    let mut rows = Vec::new();
    let mut skipped: Vec<(String, String)> = Vec::new();
    for (id, method, path) in entries {
        let Some((_, bbox)) = boxes.iter().find(|(bid, _)| *bid == id) else {
            skipped.push((format!("{id}__{method}"), "no bounding box for id".into()));
            continue;
        };
        let tensor = Tensor::load(&path)?;
        let pixels = PixelAttribution::from_tensor(&tensor)?;
        match score_instance(&id, &method, &pixels, bbox) {
            Ok(row) => rows.push(row),
            Err(Error::UndefinedMetric(why)) => {
                skipped.push((format!("{id}__{method}"), why));
            }
            Err(e) => return Err(e),
        }
    }
    std::fs::write(out.join("metrics.csv"), metric_report_csv(&rows))?;
    let mut skip_csv = String::from("id,reason\n");
    for (id, why) in &skipped {
        skip_csv.push_str(&format!("{id},{why}\n"));
    }
    skip_csv.push_str(&format!("count,{}\n", skipped.len()));
    std::fs::write(out.join("evaluate_skipped.csv"), skip_csv)?;
    if !skipped.is_empty() {
        eprintln!("skipped {} attribution file(s); see evaluate_skipped.csv", skipped.len());
    }
    std::fs::write(out.join("evaluate.config.txt"), cfg.echo())?;
    Ok(())
}

const RENDER_KEYS: &[&str] = &["seed", "input", "blur"];

fn cmd_render(
    cfg: &mut KvConfig,
    out: &Path,
    input: Option<PathBuf>,
    blur: Option<f64>,
) -> Result<()> {
    cfg.check_known(RENDER_KEYS)?;
    let input_path = required_path(cfg, "input", input)?;
    let tensor = Tensor::load(&input_path)?;
    let pixels = PixelAttribution::from_tensor(&tensor)?;
    let blur = match blur {
        Some(b) => {
            cfg.set("blur", format!("{b}"));
            Some(b)
        }
        None => match cfg.get("blur") {
            Some(s) => Some(parse_f64(s)?),
            None => None,
        },
    };
    let ppm = render_heatmap(&pixels, blur)?;
    let stem = stem_of(&input_path);
    std::fs::write(out.join(format!("{stem}.ppm")), ppm)?;
    std::fs::write(out.join(format!("{stem}.render.config.txt")), cfg.echo())?;
    Ok(())
}

const TRAIN_KEYS: &[&str] =
    &["seed", "dataset", "n", "arch", "epochs", "lr", "robust_eps", "norm"];

#[allow(clippy::too_many_arguments)]
fn cmd_train_toy(
    cfg: &mut KvConfig,
    out: &Path,
    seed: u64,
    dataset: Option<String>,
    n: Option<usize>,
    arch: Option<String>,
    epochs: Option<usize>,
    lr: Option<f64>,
    robust_eps: Option<f64>,
    norm: Option<String>,
) -> Result<()> {
    cfg.check_known(TRAIN_KEYS)?;
    let dataset_name = cfg.resolve("dataset", dataset, "blobs2d".into(), parse_string)?;
    let n = cfg.resolve("n", n, 40, parse_usize)?;
    let arch_name = cfg.resolve("arch", arch, "d-16-k".into(), parse_string)?;
    let epochs = cfg.resolve("epochs", epochs, 300, parse_usize)?;
    let lr = cfg.resolve("lr", lr, 0.5, parse_f64)?;
    let norm = parse_norm(&cfg.resolve("norm", norm, "l2".into(), parse_string)?)?;
    let robust = resolve_robust_eps(cfg, robust_eps)?;

    let ds = synth_dataset(DatasetKind::parse(&dataset_name)?, n, seed)?;
    let arch = ToyArch::parse(&arch_name)?;
    let net = train_toy(&ds, &arch, epochs, lr, robust, norm, seed)?;
    save_model(&net, &out.join("model.bnet"))?;
    std::fs::write(out.join("train.config.txt"), cfg.echo())?;
    Ok(())
}

pub(crate) fn parse_norm(s: &str) -> Result<AttackNorm> {
    match s {
        "l2" => Ok(AttackNorm::L2),
        "linf" => Ok(AttackNorm::Linf),
        other => Err(Error::Config(format!("unknown norm '{other}'"))),
    }
}

pub(crate) fn resolve_robust_eps(
    cfg: &mut KvConfig,
    flag: Option<f64>,
) -> Result<Option<f64>> {
    let value = match flag {
        Some(e) => Some(e),
        None => match cfg.get("robust_eps") {
            Some("none") | None => None,
            Some(s) => Some(parse_f64(s)?),
        },
    };
    cfg.set("robust_eps", value.map_or("none".into(), |e| format!("{e}")));
    Ok(value)
}

/// Reconstructs a network either from a `model` path in the config or by
/// deterministic toy training.
pub(crate) fn network_from_config(
    cfg: &mut KvConfig,
    dataset: &crate::experiments::ToyDataset,
    seed: u64,
    robust: Option<f64>,
) -> Result<Network> {
    if let Some(path) = cfg.get("model") {
        if path != "train" {
            return load_model(Path::new(path));
        }
    }
    let arch_name = cfg.resolve("arch", None::<String>, "d-16-k".into(), parse_string)?;
    let epochs = cfg.resolve("epochs", None, 300, parse_usize)?;
    let lr = cfg.resolve("lr", None, 0.5, parse_f64)?;
    let norm = parse_norm(&cfg.resolve("norm", None::<String>, "l2".into(), parse_string)?)?;
    train_toy(dataset, &ToyArch::parse(&arch_name)?, epochs, lr, robust, norm, seed)
}
