//! Desk-scale experiment pipelines.
//!
//! Five studies on toy models: attribution/boundary alignment across
//! standard and robust training, bounding-box localization of each
//! attribution method, correlation between alignment and localization,
//! smoothing-vs-sigma alignment on one-layer networks, and baseline
//! sensitivity with counterfactual patch masking. Every pipeline is a
//! deterministic function of (models, dataset, config, seed): instances are
//! processed by a worker pool and merged back in instance order, so reports
//! are byte-identical across runs and thread counts.

mod alignment;
mod baseline;
mod correlation;
pub mod dataset;
mod lambda;
mod localization;
mod report;
mod smoothing;
mod train;

pub use alignment::run_alignment;
pub use baseline::run_baseline_sensitivity;
pub use correlation::{correlations_csv, run_correlation, CorrelationRow};
pub use dataset::{synth_dataset, two_patch_dataset, DatasetKind, ToyDataset, TwoPatchInfo};
pub use lambda::{compute_lambda_bound, normal_quantile};
pub use localization::run_localization;
pub use report::{ExperimentReport, ReportRow};
pub use smoothing::{reference_one_layer_net, run_smoothing, SmoothingAttack};
pub use train::{accuracy, robust_accuracy, train_toy, ToyArch};

use crate::attack::{boundary_search_ensemble, AttackConfig, BoundaryResult};
use crate::attribution::{self, AttributionMap, IgConfig};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::substream;
use crate::tensor::Tensor;

/// Adversarial-gradient-integral hyperparameters (toy-scaled defaults:
/// eps 0.5, topk 10 capped at the class count, 15 iterations).
#[derive(Debug, Clone)]
pub struct AgiParams {
    pub eps: f64,
    pub topk: usize,
    pub max_iters: usize,
    pub step_size: f64,
}

impl Default for AgiParams {
    fn default() -> Self {
        AgiParams { eps: 0.5, topk: 10, max_iters: 15, step_size: 2.0 * 0.5 / 15.0 }
    }
}

/// Shared knobs for attribution computation inside the studies.
#[derive(Debug, Clone)]
pub struct StudyParams {
    pub attacks: Vec<AttackConfig>,
    pub ig_steps: usize,
    pub sg_sigma: f64,
    pub sg_samples: usize,
    pub agi: AgiParams,
    pub seed: u64,
}

impl StudyParams {
    pub fn new(attacks: Vec<AttackConfig>, seed: u64) -> Self {
        StudyParams {
            attacks,
            ig_steps: 20,
            sg_sigma: 0.15,
            sg_samples: 50,
            agi: AgiParams::default(),
            seed,
        }
    }

    fn ig_cfg(&self) -> IgConfig {
        IgConfig { steps: self.ig_steps }
    }
}

/// Computes one named attribution for an instance. `boundary` must be a
/// successful search result when `method` is `bsm` or `big`.
pub(crate) fn attribution_by_name(
    net: &Network,
    x: &Tensor,
    method: &str,
    boundary: Option<&BoundaryResult>,
    params: &StudyParams,
    instance_index: usize,
) -> Result<AttributionMap> {
    match method {
        "sm" => attribution::saliency_map(net, x, None),
        "gti" => attribution::grad_times_input(net, x, None),
        "ig" => attribution::integrated_gradients(
            net,
            x,
            &Tensor::zeros(x.shape().to_vec()),
            None,
            params.ig_cfg(),
        ),
        "sg" => attribution::smooth_gradient(
            net,
            x,
            None,
            params.sg_sigma,
            params.sg_samples,
            substream(params.seed, instance_index as u64),
        ),
        "bsm" => {
            let b = boundary.ok_or_else(|| Error::NoBoundary("bsm needs a boundary".into()))?;
            attribution::boundary_saliency_map(net, x, b)
        }
        "big" => {
            let b = boundary.ok_or_else(|| Error::NoBoundary("big needs a boundary".into()))?;
            attribution::boundary_integrated_gradients(net, x, b, params.ig_cfg())
        }
        "agi" => {
            let a = &params.agi;
            let topk = a.topk.min(net.num_classes() - 1);
            attribution::agi(net, x, a.eps, topk, a.max_iters, a.step_size, params.seed)
        }
        other => Err(Error::Config(format!("unknown attribution method '{other}'"))),
    }
}

pub(crate) fn needs_boundary(method: &str) -> bool {
    matches!(method, "bsm" | "big")
}

/// Runs the ensemble for one instance, mapping failure to an error that the
/// studies turn into a skip entry.
pub(crate) fn instance_boundary(
    net: &Network,
    x: &Tensor,
    params: &StudyParams,
) -> Result<BoundaryResult> {
    let result = boundary_search_ensemble(net, x, &params.attacks)?;
    if !result.success {
        return Err(Error::NoBoundary("ensemble found no adversarial example".into()));
    }
    Ok(result)
}
