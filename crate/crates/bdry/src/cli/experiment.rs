//! The `experiment` subcommand: builds data and models from the resolved
//! configuration, runs one study, and writes its artifacts into a run
//! directory named by the configuration hash.

use std::path::{Path, PathBuf};

use crate::attack::AttackConfig;
use crate::cli::kv::{parse_f64, parse_f64_list, parse_string, parse_usize, KvConfig};
use crate::cli::{network_from_config, parse_norm, resolve_robust_eps};
use crate::error::{Error, Result};
use crate::experiments::{
    correlations_csv, reference_one_layer_net, run_alignment,
    run_baseline_sensitivity, run_correlation, run_localization, run_smoothing, synth_dataset,
    train_toy, two_patch_dataset, DatasetKind, ExperimentReport, SmoothingAttack, StudyParams,
    ToyArch, ToyDataset,
};
use crate::metrics::PixelAttribution;
use crate::nn::{load_model, Network};
use crate::render::render_heatmap;
use crate::rng::substream;

const COMMON_KEYS: &[&str] = &[
    "seed", "experiment", "dataset", "n", "eval_n", "arch", "epochs", "lr", "norm", "robust_eps",
    "model", "ig_steps", "sg_sigma", "sg_samples", "agi_eps", "agi_topk", "agi_iters", "agi_step",
    "attack_eps", "attack_steps", "clip_lo", "clip_hi", "render_count", "methods", "sigmas",
    "n_noise", "smooth_eps", "smooth_steps",
];

pub(crate) fn cmd_experiment(
    cfg: &mut KvConfig,
    out: &Path,
    seed: u64,
    kind: Option<String>,
    render_count: Option<usize>,
) -> Result<()> {
    cfg.check_known(COMMON_KEYS)?;
    let kind = cfg.resolve("experiment", kind, "alignment".into(), parse_string)?;
    let render_count = cfg.resolve("render_count", render_count, 2, parse_usize)?;

    match kind.as_str() {
        "alignment" => alignment(cfg, out, seed, render_count),
        "localization" => localization(cfg, out, seed, render_count),
        "correlation" => correlation(cfg, out, seed, render_count),
        "smoothing" => smoothing(cfg, out, seed),
        "baseline-sensitivity" => baseline_sensitivity(cfg, out, seed, render_count),
        other => Err(Error::Config(format!("unknown experiment '{other}'"))),
    }
}

/// Resolves dataset kind + size and returns train and eval splits (the eval
/// split uses a derived seed so it is disjoint from training).
fn resolve_datasets(cfg: &mut KvConfig, seed: u64, default_kind: &str) -> Result<(ToyDataset, ToyDataset)> {
    let kind_name = cfg.resolve("dataset", None::<String>, default_kind.into(), parse_string)?;
    let kind = DatasetKind::parse(&kind_name)?;
    let n = cfg.resolve("n", None, 40, parse_usize)?;
    let eval_n = cfg.resolve("eval_n", None, n, parse_usize)?;
    let train = synth_dataset(kind, n, seed)?;
    let eval = synth_dataset(kind, eval_n, substream(seed, 0xe7a1))?;
    Ok((train, eval))
}

/// Builds the three-stage attack ensemble from the config: a PGD sweep over
/// `attack_eps`, CW, and AutoPGD, all inside the configured clip box.
fn resolve_study_attacks(
    cfg: &mut KvConfig,
    seed: u64,
    default_eps: &str,
    default_clip: (f64, f64),
) -> Result<Vec<AttackConfig>> {
    let eps = cfg.resolve("attack_eps", None::<String>, default_eps.into(), parse_string)?;
    let epsilons = parse_f64_list(&eps)?;
    let steps = cfg.resolve("attack_steps", None, 100, parse_usize)?;
    let lo = cfg.resolve("clip_lo", None, default_clip.0, parse_f64)? as f32;
    let hi = cfg.resolve("clip_hi", None, default_clip.1, parse_f64)? as f32;
    let clip = (lo, hi);

    let mut pgd = AttackConfig::pgd_default(seed);
    pgd.epsilons = epsilons.clone();
    pgd.max_steps = steps;
    pgd.clip = clip;
    let mut cw = AttackConfig::cw_default(seed);
    cw.max_steps = steps.max(200);
    cw.clip = clip;
    let mut apgd = AttackConfig::autopgd_default(seed);
    apgd.epsilons = epsilons;
    apgd.max_steps = steps;
    apgd.step_size = crate::attack::StepSize::Adaptive;
    apgd.clip = clip;
    let mut cfgs = vec![pgd, cw, apgd];
    for c in &mut cfgs {
        c.validate()?;
    }
    Ok(cfgs)
}

fn resolve_params(cfg: &mut KvConfig, seed: u64, attacks: Vec<AttackConfig>) -> Result<StudyParams> {
    let mut params = StudyParams::new(attacks, seed);
    params.ig_steps = cfg.resolve("ig_steps", None, 20, parse_usize)?;
    params.sg_sigma = cfg.resolve("sg_sigma", None, 0.15, parse_f64)?;
    params.sg_samples = cfg.resolve("sg_samples", None, 50, parse_usize)?;
    params.agi.eps = cfg.resolve("agi_eps", None, 0.5, parse_f64)?;
    params.agi.topk = cfg.resolve("agi_topk", None, 10, parse_usize)?;
    params.agi.max_iters = cfg.resolve("agi_iters", None, 15, parse_usize)?;
    params.agi.step_size = cfg.resolve(
        "agi_step",
        None,
        2.0 * params.agi.eps / params.agi.max_iters.max(1) as f64,
        parse_f64,
    )?;
    Ok(params)
}

fn run_dir(out: &Path, kind: &str, cfg: &KvConfig) -> Result<PathBuf> {
    let dir = out.join(format!("{kind}-{}", cfg.hash()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_report(dir: &Path, cfg: &KvConfig, report: &ExperimentReport) -> Result<()> {
    std::fs::write(dir.join("config.txt"), cfg.echo())?;
    std::fs::write(dir.join("report.csv"), report.rows_csv())?;
    std::fs::write(dir.join("summary.csv"), report.summary_csv())?;
    std::fs::write(dir.join("skipped.csv"), report.skipped_csv())?;
    Ok(())
}

/// Renders heatmaps for the first few image-shaped instances: the methods
/// are best-effort (boundary failures skip quietly but deterministically).
fn render_samples(
    dir: &Path,
    net: &Network,
    dataset: &ToyDataset,
    params: &StudyParams,
    count: usize,
) -> Result<()> {
    if count == 0 || dataset.is_empty() || dataset.inputs[0].shape().len() != 3 {
        return Ok(());
    }
    for idx in 0..count.min(dataset.len()) {
        let x = &dataset.inputs[idx];
        for method in ["sm", "ig", "big"] {
            let boundary = if crate::experiments::needs_boundary(method) {
                match crate::experiments::instance_boundary(net, x, params) {
                    Ok(b) => Some(b),
                    Err(_) => continue,
                }
            } else {
                None
            };
            let Ok(map) =
                crate::experiments::attribution_by_name(net, x, method, boundary.as_ref(), params, idx)
            else {
                continue;
            };
            let pixels = PixelAttribution::from_tensor(&map.values)?;
            let ppm = render_heatmap(&pixels, None)?;
            std::fs::write(dir.join(format!("heatmap_{}_{method}.ppm", dataset.id(idx))), ppm)?;
        }
    }
    Ok(())
}

fn alignment(cfg: &mut KvConfig, out: &Path, seed: u64, render_count: usize) -> Result<()> {
    let (train, eval) = resolve_datasets(cfg, seed, "blobs2d")?;
    let robust_eps = match resolve_robust_eps(cfg, None)? {
        Some(e) => e,
        None => {
            cfg.set("robust_eps", "0.5".into());
            0.5
        }
    };
    let arch_name = cfg.resolve("arch", None::<String>, "d-16-k".into(), parse_string)?;
    let epochs = cfg.resolve("epochs", None, 300, parse_usize)?;
    let lr = cfg.resolve("lr", None, 0.5, parse_f64)?;
    let norm = parse_norm(&cfg.resolve("norm", None::<String>, "l2".into(), parse_string)?)?;
    let arch = ToyArch::parse(&arch_name)?;
    let standard = train_toy(&train, &arch, epochs, lr, None, norm, seed)?;
    let robust = train_toy(&train, &arch, epochs, lr, Some(robust_eps), norm, seed)?;
    let nets = vec![("standard".to_string(), standard), ("robust".to_string(), robust)];

    let attacks = resolve_study_attacks(cfg, seed, "0.25,0.5,1,1.5,2,3", (-6.0, 6.0))?;
    let params = resolve_params(cfg, seed, attacks)?;
    let report = run_alignment(&nets, &eval, &params, cfg.echo())?;
    let dir = run_dir(out, "alignment", cfg)?;
    write_report(&dir, cfg, &report)?;
    render_samples(&dir, &nets[0].1, &eval, &params, render_count)?;
    Ok(())
}

fn localization(cfg: &mut KvConfig, out: &Path, seed: u64, render_count: usize) -> Result<()> {
    let (train, eval) = resolve_datasets(cfg, seed, "patches8x8")?;
    let robust = resolve_robust_eps(cfg, None)?;
    let net = network_from_config(cfg, &train, seed, robust)?;
    let methods: Vec<String> = cfg
        .resolve("methods", None::<String>, "big,bsm,agi,sm,gti,sg,ig".into(), parse_string)?
        .split(',')
        .map(|m| m.trim().to_string())
        .collect();
    let attacks = resolve_study_attacks(cfg, seed, "0.5,1,1.5,2,3", (0.0, 1.0))?;
    let params = resolve_params(cfg, seed, attacks)?;
    let report = run_localization(&net, &eval, &methods, &params, cfg.echo())?;
    let dir = run_dir(out, "localization", cfg)?;
    write_report(&dir, cfg, &report)?;
    render_samples(&dir, &net, &eval, &params, render_count)?;
    Ok(())
}

fn correlation(cfg: &mut KvConfig, out: &Path, seed: u64, render_count: usize) -> Result<()> {
    let (train, eval) = resolve_datasets(cfg, seed, "patches8x8")?;
    let robust = resolve_robust_eps(cfg, None)?;
    let net = network_from_config(cfg, &train, seed, robust)?;
    let attacks = resolve_study_attacks(cfg, seed, "0.5,1,1.5,2,3", (0.0, 1.0))?;
    let params = resolve_params(cfg, seed, attacks)?;
    let (report, correlations) = run_correlation(&net, &eval, &params, cfg.echo())?;
    let dir = run_dir(out, "correlation", cfg)?;
    write_report(&dir, cfg, &report)?;
    std::fs::write(dir.join("correlations.csv"), correlations_csv(&correlations))?;
    render_samples(&dir, &net, &eval, &params, render_count)?;
    Ok(())
}

fn smoothing(cfg: &mut KvConfig, out: &Path, seed: u64) -> Result<()> {
    let (_, eval) = resolve_datasets(cfg, seed, "blobs2d")?;
    let net = match cfg.get("model") {
        Some(path) if path != "reference" => load_model(Path::new(path))?,
        _ => {
            cfg.set("model", "reference".into());
            reference_one_layer_net()
        }
    };
    let sigmas = parse_f64_list(&cfg.resolve(
        "sigmas",
        None::<String>,
        "0,0.25,0.5,0.75,1".into(),
        parse_string,
    )?)?;
    let n_noise = cfg.resolve("n_noise", None, 50, parse_usize)?;
    let attack = SmoothingAttack {
        eps: cfg.resolve("smooth_eps", None, 3.0, parse_f64)?,
        max_steps: cfg.resolve("smooth_steps", None, 40, parse_usize)?,
        clip: (
            cfg.resolve("clip_lo", None, -10.0, parse_f64)? as f32,
            cfg.resolve("clip_hi", None, 10.0, parse_f64)? as f32,
        ),
    };
    let report = run_smoothing(&net, &eval, &sigmas, n_noise, &attack, seed, cfg.echo())?;
    let dir = run_dir(out, "smoothing", cfg)?;
    write_report(&dir, cfg, &report)?;
    Ok(())
}

fn baseline_sensitivity(cfg: &mut KvConfig, out: &Path, seed: u64, render_count: usize) -> Result<()> {
    let n = cfg.resolve("n", None, 50, parse_usize)?;
    let (dataset, info) = two_patch_dataset(n, seed)?;
    cfg.set("dataset", "twopatch8x8".into());
    let robust = resolve_robust_eps(cfg, None)?;
    let net = network_from_config(cfg, &dataset, seed, robust)?;
    let attacks = resolve_study_attacks(cfg, seed, "0.5,1,1.5,2,3", (0.0, 1.0))?;
    let params = resolve_params(cfg, seed, attacks)?;
    let report = run_baseline_sensitivity(&net, &dataset, &info, &params, cfg.echo())?;
    let dir = run_dir(out, "baseline-sensitivity", cfg)?;
    write_report(&dir, cfg, &report)?;
    render_samples(&dir, &net, &dataset, &params, render_count)?;
    Ok(())
}
