//! Adversarial boundary search.
//!
//! Three gradient-based attacks (PGD epsilon sweeps, Carlini-Wagner L2,
//! AutoPGD with CE/DLR losses) are ensembled: every attack proposes an
//! adversarial point, successful proposals are bisection-refined onto the
//! decision boundary, and the closest one in L2 wins. A failed search is
//! data, not an error: the result carries `success = false` together with
//! the last iterate of the first (PGD) attack.
//!
//! Attacks on distinct inputs are independent; the network is shared
//! read-only and each attack owns its iterate buffers.

mod autopgd;
mod config;
mod cw;
mod pgd;

pub use autopgd::autopgd_attack;
pub use config::{AttackConfig, AttackMethod, AttackNorm, ApgdLoss, StepSize};
pub use cw::{cw_attack, cw_attack_from};
pub use pgd::pgd_attack;

use crate::error::{Error, Result};
use crate::nn::{softmax, Network};
use crate::tensor::Tensor;

/// Outcome of one boundary search: the adversarial point found (or the last
/// iterate on failure), its L2 distance from the input, and provenance.
#[derive(Debug, Clone)]
pub struct BoundaryResult {
    /// Adversarial example, or the final iterate when `success` is false.
    pub adversarial: Tensor,
    /// L2 distance between `adversarial` and the original input.
    pub distance: f64,
    /// Whether the predicted label actually flipped.
    pub success: bool,
    /// Which attack produced the point, e.g. `pgd(eps=0.5)`.
    pub method: String,
    /// Gradient of the source-class score at the adversarial point; filled
    /// by [`boundary_normal`] or the ensemble.
    pub normal: Option<Tensor>,
    /// Whether bisection refinement has been applied.
    pub refined: bool,
    /// Predicted class of the original input; a success means the label at
    /// `adversarial` differs from this.
    pub source_class: usize,
}

impl BoundaryResult {
    pub(crate) fn failure(x: &Tensor, last: Tensor, method: String, source_class: usize) -> Self {
        let distance = last.l2_distance(x);
        BoundaryResult {
            adversarial: last,
            distance,
            success: false,
            method,
            normal: None,
            refined: false,
            source_class,
        }
    }

    pub(crate) fn success(x: &Tensor, adv: Tensor, method: String, source_class: usize) -> Self {
        let distance = adv.l2_distance(x);
        BoundaryResult {
            adversarial: adv,
            distance,
            success: true,
            method,
            normal: None,
            refined: false,
            source_class,
        }
    }
}

/// Cross-entropy of the source class: value and input gradient. Ascending
/// this loss pushes the input off its predicted class.
pub(crate) fn ce_loss_grad(net: &Network, x: &Tensor, c: usize) -> Result<(f64, Tensor)> {
    let trace = net.forward_trace(x)?;
    let p = softmax(trace.output.data());
    let loss = -(p[c].max(1e-300)).ln();
    let cot: Vec<f32> = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| (pi - if i == c { 1.0 } else { 0.0 }) as f32)
        .collect();
    Ok((loss, net.backward_input(&trace, &cot)))
}

/// `f_c - max_{j != c} f_j` and the runner-up index.
pub(crate) fn margin(scores: &[f32], c: usize) -> (f64, usize) {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for (j, &v) in scores.iter().enumerate() {
        if j != c && (v as f64) > best_v {
            best_v = v as f64;
            best = j;
        }
    }
    (scores[c] as f64 - best_v, best)
}

/// Step direction for a loss gradient under the attack norm: sign for Linf,
/// L2-normalized otherwise. Returns `None` for a vanishing gradient.
pub(crate) fn step_direction(grad: &Tensor, norm: AttackNorm) -> Option<Tensor> {
    match norm {
        AttackNorm::Linf => {
            let data: Vec<f32> = grad.data().iter().map(|&g| g.signum() * f32::from(g != 0.0)).collect();
            if data.iter().all(|&v| v == 0.0) {
                None
            } else {
                Some(Tensor::new(grad.shape().to_vec(), data).unwrap())
            }
        }
        AttackNorm::L2 => {
            let n = grad.l2_norm();
            if n < 1e-12 {
                None
            } else {
                Some(grad.scaled((1.0 / n) as f32))
            }
        }
    }
}

/// Projects `z` onto the `norm`-ball of radius `eps` around `x`, then clamps
/// into the `[lo, hi]` input box.
pub(crate) fn project(z: &Tensor, x: &Tensor, eps: f64, norm: AttackNorm, clip: (f32, f32)) -> Tensor {
    let mut out = match norm {
        AttackNorm::L2 => {
            let delta = z.sub(x);
            let n = delta.l2_norm();
            if n > eps {
                x.add_scaled(&delta, (eps / n) as f32)
            } else {
                z.clone()
            }
        }
        AttackNorm::Linf => {
            let data: Vec<f32> = z
                .data()
                .iter()
                .zip(x.data())
                .map(|(&zv, &xv)| zv.clamp(xv - eps as f32, xv + eps as f32))
                .collect();
            Tensor::new(z.shape().to_vec(), data).unwrap()
        }
    };
    out.clamp_box(clip.0, clip.1);
    out
}

/// Bisects along the segment from `x` to `x_adv` until the predicted label
/// first flips within an interval of relative width 1e-5, and returns the
/// flipped endpoint. The result is still adversarial, at most as far from
/// `x` as `x_adv` was.
pub fn refine_to_boundary(net: &Network, x: &Tensor, x_adv: &Tensor) -> Result<Tensor> {
    let c0 = net.predict(x)?;
    if net.predict(x_adv)? == c0 {
        return Err(Error::SameLabel);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-5 {
        let mid = 0.5 * (lo + hi);
        let p = lerp(x, x_adv, mid);
        if net.predict(&p)? == c0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lerp(x, x_adv, hi))
}

fn lerp(a: &Tensor, b: &Tensor, t: f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| (av as f64 + t * (bv as f64 - av as f64)) as f32)
        .collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

/// Gradient of the source-class score at the adversarial point -- the normal
/// of the boundary segment the search landed on.
pub fn boundary_normal(net: &Network, result: &BoundaryResult) -> Result<Tensor> {
    if !result.success {
        return Err(Error::NoBoundary("search did not find an adversarial example".into()));
    }
    net.input_gradient(&result.adversarial, result.source_class)
}

/// Runs every attack config, refines the successes onto the boundary, and
/// returns the closest one in L2. When all fail, returns the first (PGD)
/// config's final iterate with `success = false`.
pub fn boundary_search_ensemble(
    net: &Network,
    x: &Tensor,
    configs: &[AttackConfig],
) -> Result<BoundaryResult> {
    if configs.is_empty() {
        return Err(Error::InvalidInput("ensemble needs at least one attack config".into()));
    }
    if configs[0].method != AttackMethod::Pgd {
        return Err(Error::InvalidInput("first ensemble config must be a PGD sweep".into()));
    }
    let mut fallback: Option<BoundaryResult> = None;
    let mut best: Option<BoundaryResult> = None;
    for cfg in configs {
        let result = match cfg.method {
            AttackMethod::Pgd => pgd_attack(net, x, cfg)?,
            AttackMethod::Cw => cw_attack(net, x, cfg)?,
            AttackMethod::AutoPgd => autopgd_attack(net, x, cfg)?,
        };
        if fallback.is_none() {
            fallback = Some(result.clone());
        }
        if !result.success {
            continue;
        }
        let refined_pt = refine_to_boundary(net, x, &result.adversarial)?;
        let mut refined = BoundaryResult::success(x, refined_pt, result.method.clone(), result.source_class);
        refined.refined = true;
        if best.as_ref().is_none_or(|b| refined.distance < b.distance) {
            best = Some(refined);
        }
    }
    match best {
        Some(mut b) => {
            b.normal = Some(boundary_normal(net, &b)?);
            Ok(b)
        }
        None => Ok(fallback.expect("configs nonempty")),
    }
}
