//! AutoPGD: budget-aware PGD with momentum and step-halving checkpoints.

use crate::attack::{
    ce_loss_grad, margin, project, step_direction, ApgdLoss, AttackConfig, AttackMethod,
    BoundaryResult,
};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

const MOMENTUM: f64 = 0.75;
const RHO: f64 = 0.75;

/// AutoPGD sweep. For each radius (smallest-first) the attack is run once
/// per objective -- cross-entropy and, for three or more classes, the
/// difference-of-logits-ratio -- and the closer success wins. The sweep
/// stops at the first radius with a success; otherwise the result is the
/// final CE iterate of the largest radius.
pub fn autopgd_attack(net: &Network, x: &Tensor, cfg: &AttackConfig) -> Result<BoundaryResult> {
    if cfg.method != AttackMethod::AutoPgd {
        return Err(Error::InvalidInput("autopgd_attack requires method = autopgd".into()));
    }
    let c = net.predict(x)?;
    let losses: Vec<ApgdLoss> = match cfg.loss {
        Some(l) => vec![l],
        None if net.num_classes() >= 3 => vec![ApgdLoss::Ce, ApgdLoss::Dlr],
        None => vec![ApgdLoss::Ce],
    };
    let mut last = x.clone();
    for &eps in &cfg.epsilons {
        let mut best: Option<BoundaryResult> = None;
        for &loss in &losses {
            if loss == ApgdLoss::Dlr && net.num_classes() < 3 {
                continue;
            }
            let (result, final_iterate) = run_single(net, x, c, eps, loss, cfg)?;
            if loss == ApgdLoss::Ce {
                last = final_iterate;
            }
            if let Some(r) = result {
                if best.as_ref().is_none_or(|b| r.distance < b.distance) {
                    best = Some(r);
                }
            }
        }
        if let Some(b) = best {
            return Ok(b);
        }
    }
    Ok(BoundaryResult::failure(x, last, "autopgd".into(), c))
}

/// One APGD run for a fixed radius and objective. Returns the success (if
/// the label flipped) plus the final iterate for the failure fallback.
fn run_single(
    net: &Network,
    x: &Tensor,
    c: usize,
    eps: f64,
    loss: ApgdLoss,
    cfg: &AttackConfig,
) -> Result<(Option<BoundaryResult>, Tensor)> {
    let tag = match loss {
        ApgdLoss::Ce => "ce",
        ApgdLoss::Dlr => "dlr",
    };
    let name = format!("autopgd-{tag}(eps={eps})");
    let n_iter = cfg.max_steps;
    let mut eta = match cfg.step_size {
        crate::attack::StepSize::Fixed(s) => s,
        crate::attack::StepSize::Adaptive => 2.0 * eps,
    };

    let mut x_prev = x.clone();
    let mut x_cur = x.clone();
    let (mut f_cur, g0) = loss_grad(net, &x_cur, c, loss)?;
    let mut f_max = f_cur;
    let mut x_max = x_cur.clone();

    if n_iter == 0 {
        return Ok((None, x_cur));
    }
    // First plain step.
    if let Some(dir) = step_direction(&g0, cfg.norm) {
        let stepped = x_cur.add_scaled(&dir, eta as f32);
        x_prev = x_cur.clone();
        x_cur = project(&stepped, x, eps, cfg.norm, cfg.clip);
    }
    if net.predict(&x_cur)? != c {
        return Ok((Some(BoundaryResult::success(x, x_cur.clone(), name, c)), x_cur));
    }
    let (f1, _) = loss_grad(net, &x_cur, c, loss)?;
    if f1 > f_max {
        f_max = f1;
        x_max = x_cur.clone();
    }
    f_cur = f1;

    let checkpoints = checkpoint_schedule(n_iter);
    let mut improvements = 0usize;
    let mut last_checkpoint = 1usize;
    let mut prev_eta = eta;
    let mut prev_f_max = f_max;

    for k in 1..n_iter {
        let (_, grad) = loss_grad(net, &x_cur, c, loss)?;
        let dir = match step_direction(&grad, cfg.norm) {
            Some(d) => d,
            None => break,
        };
        let z = project(&x_cur.add_scaled(&dir, eta as f32), x, eps, cfg.norm, cfg.clip);
        // Momentum step mixes the gradient move with the previous velocity.
        let mut proposal = x_cur.clone();
        for i in 0..proposal.len() {
            let zc = z.data()[i] as f64;
            let xc = x_cur.data()[i] as f64;
            let xp = x_prev.data()[i] as f64;
            proposal.data_mut()[i] = (xc + MOMENTUM * (zc - xc) + (1.0 - MOMENTUM) * (xc - xp)) as f32;
        }
        let next = project(&proposal, x, eps, cfg.norm, cfg.clip);
        x_prev = x_cur;
        x_cur = next;
        if net.predict(&x_cur)? != c {
            return Ok((Some(BoundaryResult::success(x, x_cur.clone(), name, c)), x_cur));
        }
        let (f_next, _) = loss_grad(net, &x_cur, c, loss)?;
        if f_next > f_cur {
            improvements += 1;
        }
        if f_next > f_max {
            f_max = f_next;
            x_max = x_cur.clone();
        }
        f_cur = f_next;

        if checkpoints.contains(&(k + 1)) {
            let span = k + 1 - last_checkpoint;
            let too_few = (improvements as f64) < RHO * span as f64;
            let stalled = prev_eta == eta && prev_f_max == f_max;
            if too_few || stalled {
                eta /= 2.0;
                x_cur = x_max.clone();
            }
            prev_eta = eta;
            prev_f_max = f_max;
            improvements = 0;
            last_checkpoint = k + 1;
        }
    }
    Ok((None, x_cur))
}

/// Checkpoint iterations: p_0 = 0, p_1 = 0.22,
/// p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06), scaled by the budget.
fn checkpoint_schedule(n_iter: usize) -> Vec<usize> {
    let mut ps = vec![0.0f64, 0.22];
    while *ps.last().unwrap() < 1.0 {
        let last = ps[ps.len() - 1];
        let prev = ps[ps.len() - 2];
        ps.push(last + (last - prev - 0.03).max(0.06));
    }
    ps.iter()
        .skip(1)
        .map(|p| (p * n_iter as f64).ceil() as usize)
        .filter(|&w| w <= n_iter)
        .collect()
}

fn loss_grad(net: &Network, x: &Tensor, c: usize, loss: ApgdLoss) -> Result<(f64, Tensor)> {
    match loss {
        ApgdLoss::Ce => ce_loss_grad(net, x, c),
        ApgdLoss::Dlr => dlr_loss_grad(net, x, c),
    }
}

/// Difference-of-logits-ratio loss
/// `-(z_c - max_{j != c} z_j) / (z_(1) - z_(3))` and its input gradient.
/// Needs at least three classes.
fn dlr_loss_grad(net: &Network, x: &Tensor, c: usize) -> Result<(f64, Tensor)> {
    let trace = net.forward_trace(x)?;
    let z = trace.output.data();
    let k = z.len();
    debug_assert!(k >= 3, "DLR needs >= 3 classes");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap_or(std::cmp::Ordering::Equal));
    let (pi0, pi2) = (order[0], order[2]);
    let (m, runner_up) = margin(z, c);
    let denom = z[pi0] as f64 - z[pi2] as f64;
    if denom <= 1e-12 {
        // Degenerate spectrum; fall back to the numerator's gradient.
        let mut cot = vec![0.0f32; k];
        cot[c] = -1.0;
        cot[runner_up] = 1.0;
        return Ok((0.0, net.backward_input(&trace, &cot)));
    }
    let value = -m / denom;
    // d/dz of -(m / D): -(e_c - e_ru)/D + (m/D^2) (e_pi0 - e_pi2).
    let mut cot = vec![0.0f32; k];
    cot[c] += (-1.0 / denom) as f32;
    cot[runner_up] += (1.0 / denom) as f32;
    cot[pi0] += (m / (denom * denom)) as f32;
    cot[pi2] -= (m / (denom * denom)) as f32;
    Ok((value, net.backward_input(&trace, &cot)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::tests::hyperplane_net;
    use crate::attack::{boundary_search_ensemble, refine_to_boundary, StepSize};
    use crate::nn::random_dense_net;

    #[test]
    fn reaches_hyperplane_margin() {
        let net = hyperplane_net(vec![1.0, 0.0], -0.5);
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let cfg = AttackConfig {
            epsilons: vec![1.0],
            max_steps: 100,
            step_size: StepSize::Fixed(2.3e-2),
            clip: (-10.0, 10.0),
            ..AttackConfig::autopgd_default(0)
        };
        let res = autopgd_attack(&net, &x, &cfg).unwrap();
        assert!(res.success);
        let refined = refine_to_boundary(&net, &x, &res.adversarial).unwrap();
        let d = refined.l2_distance(&x);
        assert!((d - 0.5).abs() <= 0.01, "distance {d}");
    }

    #[test]
    fn zero_budget_fails_in_place() {
        let net = hyperplane_net(vec![1.0, 0.0], -0.5);
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let cfg = AttackConfig {
            epsilons: vec![1.0],
            max_steps: 0,
            clip: (-10.0, 10.0),
            ..AttackConfig::autopgd_default(0)
        };
        let res = autopgd_attack(&net, &x, &cfg).unwrap();
        assert!(!res.success);
        assert_eq!(res.adversarial, x);
    }

    #[test]
    fn dlr_gradient_matches_finite_differences() {
        let net = random_dense_net(&[2, 8, 3], 50);
        let mut rng = crate::rng::CounterRng::new(9);
        for _ in 0..10 {
            let x = Tensor::from_vec(vec![
                rng.next_range(-1.0, 1.0) as f32,
                rng.next_range(-1.0, 1.0) as f32,
            ]);
            let c = net.predict(&x).unwrap();
            let (_, g) = dlr_loss_grad(&net, &x, c).unwrap();
            for i in 0..2 {
                let h = 1e-3f32;
                let mut hi = x.clone();
                hi.data_mut()[i] += h;
                let mut lo = x.clone();
                lo.data_mut()[i] -= h;
                let (fh, _) = dlr_loss_grad(&net, &hi, c).unwrap();
                let (fl, _) = dlr_loss_grad(&net, &lo, c).unwrap();
                let fd = (fh - fl) / (2.0 * h as f64);
                assert!(
                    (g.data()[i] as f64 - fd).abs() < 2e-3,
                    "dlr grad {} vs fd {fd}",
                    g.data()[i]
                );
            }
        }
    }

    #[test]
    fn ensemble_with_autopgd_never_worse() {
        let net = random_dense_net(&[2, 8, 2], 282);
        let mut rng = crate::rng::CounterRng::new(12);
        let pgd = AttackConfig {
            epsilons: vec![0.25, 0.5, 1.0, 2.0],
            clip: (-10.0, 10.0),
            ..AttackConfig::pgd_default(1)
        };
        let apgd = AttackConfig {
            epsilons: vec![0.25, 0.5, 1.0, 2.0],
            max_steps: 60,
            step_size: StepSize::Adaptive,
            clip: (-10.0, 10.0),
            ..AttackConfig::autopgd_default(2)
        };
        for _ in 0..100 {
            let x = Tensor::from_vec(vec![
                rng.next_range(-1.0, 1.0) as f32,
                rng.next_range(-1.0, 1.0) as f32,
            ]);
            let without = boundary_search_ensemble(&net, &x, &[pgd.clone()]).unwrap();
            let with = boundary_search_ensemble(&net, &x, &[pgd.clone(), apgd.clone()]).unwrap();
            if without.success {
                assert!(with.success);
                assert!(with.distance <= without.distance + 1e-9);
            }
        }
    }
}
