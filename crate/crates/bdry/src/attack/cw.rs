//! Carlini-Wagner L2 minimal-perturbation attack.

use crate::attack::{margin, AttackConfig, AttackMethod, BoundaryResult};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

const CW_CONSTANT: f64 = 1.0;
const CW_KAPPA: f64 = 0.0;
const CW_MOMENTUM: f64 = 0.9;

/// CW against the input's own predicted class.
pub fn cw_attack(net: &Network, x: &Tensor, cfg: &AttackConfig) -> Result<BoundaryResult> {
    let c = net.predict(x)?;
    cw_attack_from(net, x, c, cfg)
}

/// Minimizes `||delta||^2 + c_cw * max(f_c(x+delta) - max_{j!=c} f_j, -kappa)`
/// by heavy-ball gradient descent (the momentum carries iterates across the
/// boundary, where plain descent would stall on it), tracking the closest
/// successful iterate. `source_class` is the label to move away from; an
/// input already classified differently is returned unchanged with distance
/// zero.
pub fn cw_attack_from(
    net: &Network,
    x: &Tensor,
    source_class: usize,
    cfg: &AttackConfig,
) -> Result<BoundaryResult> {
    if cfg.method != AttackMethod::Cw {
        return Err(Error::InvalidInput("cw_attack requires method = cw".into()));
    }
    if net.predict(x)? != source_class {
        return Ok(BoundaryResult::success(x, x.clone(), "cw".into(), source_class));
    }
    let alpha = cfg.step_for(cfg.epsilons.last().copied().unwrap_or(1.0));
    let mut delta = Tensor::zeros(x.shape().to_vec());
    let mut velocity = vec![0.0f64; x.len()];
    let mut best: Option<(f64, Tensor)> = None;
    let mut last = x.clone();
    for _ in 0..cfg.max_steps {
        let mut z = x.add_scaled(&delta, 1.0);
        z.clamp_box(cfg.clip.0, cfg.clip.1);
        let trace = net.forward_trace(&z)?;
        let (m, runner_up) = margin(trace.output.data(), source_class);
        if trace.output.argmax() != source_class {
            let d = z.l2_distance(x);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, z.clone()));
            }
        }
        // Objective gradient w.r.t. delta; the margin term is active only
        // above -kappa.
        let mut grad: Vec<f64> = delta.data().iter().map(|&v| 2.0 * v as f64).collect();
        if m > -CW_KAPPA {
            let mut cot = vec![0.0f32; net.num_classes()];
            cot[source_class] = 1.0;
            cot[runner_up] = -1.0;
            let g = net.backward_input(&trace, &cot);
            for (gd, gv) in grad.iter_mut().zip(g.data()) {
                *gd += CW_CONSTANT * *gv as f64;
            }
        }
        for ((v, g), d) in velocity.iter_mut().zip(&grad).zip(delta.data_mut()) {
            *v = CW_MOMENTUM * *v - alpha * g;
            *d = (*d as f64 + *v) as f32;
        }
        last = z;
    }
    // Final-point check after the last step.
    let mut z = x.add_scaled(&delta, 1.0);
    z.clamp_box(cfg.clip.0, cfg.clip.1);
    if net.predict(&z)? != source_class {
        let d = z.l2_distance(x);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    }
    Ok(match best {
        Some((_, adv)) => BoundaryResult::success(x, adv, "cw".into(), source_class),
        None => BoundaryResult::failure(x, last, "cw".into(), source_class),
    })
}
