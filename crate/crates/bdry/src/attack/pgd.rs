//! Projected gradient descent over an epsilon sweep.

use crate::attack::{ce_loss_grad, project, step_direction, AttackConfig, AttackMethod, BoundaryResult};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Untargeted PGD: ascends the cross-entropy of the source class inside the
/// configured ball, sweeping radii smallest-first and stopping at the first
/// one that flips the label. Iterates start at the input itself, so on a
/// locally linear score the trajectory runs straight down the boundary
/// normal. On total failure the result carries the last iterate of the
/// largest radius with `success = false`.
pub fn pgd_attack(net: &Network, x: &Tensor, cfg: &AttackConfig) -> Result<BoundaryResult> {
    if cfg.method != AttackMethod::Pgd {
        return Err(Error::InvalidInput("pgd_attack requires method = pgd".into()));
    }
    let c = net.predict(x)?;
    let mut last = x.clone();
    for &eps in &cfg.epsilons {
        let alpha = cfg.step_for(eps);
        let mut cur = project(x, x, eps, cfg.norm, cfg.clip);
        let mut steps = 0;
        loop {
            if net.predict(&cur)? != c {
                return Ok(BoundaryResult::success(
                    x,
                    cur,
                    format!("pgd(eps={eps})"),
                    c,
                ));
            }
            if steps >= cfg.max_steps {
                break;
            }
            let (_, grad) = ce_loss_grad(net, &cur, c)?;
            match step_direction(&grad, cfg.norm) {
                Some(dir) => {
                    let stepped = cur.add_scaled(&dir, alpha as f32);
                    cur = project(&stepped, x, eps, cfg.norm, cfg.clip);
                }
                None => break, // dead gradient; larger radii will restart
            }
            steps += 1;
        }
        last = cur;
    }
    Ok(BoundaryResult::failure(x, last, "pgd".into(), c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::tests::hyperplane_net;
    use crate::attack::{refine_to_boundary, AttackNorm, StepSize};

    fn margin_cfg(epsilons: Vec<f64>) -> AttackConfig {
        AttackConfig {
            epsilons,
            clip: (-10.0, 10.0),
            ..AttackConfig::pgd_default(7)
        }
    }

    #[test]
    fn finds_hyperplane_margin_within_ball() {
        let net = hyperplane_net(vec![1.0, 0.0], -0.5);
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let res = pgd_attack(&net, &x, &margin_cfg(vec![1.0])).unwrap();
        assert!(res.success);
        let refined = refine_to_boundary(&net, &x, &res.adversarial).unwrap();
        let d = refined.l2_distance(&x);
        assert!(d <= 0.5 + 1e-3, "distance {d}");
    }

    #[test]
    fn fails_when_ball_misses_boundary() {
        let net = hyperplane_net(vec![1.0, 0.0], -0.5);
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let res = pgd_attack(&net, &x, &margin_cfg(vec![0.25])).unwrap();
        assert!(!res.success);
        // Failure iterate stays inside the ball.
        assert!(res.distance <= 0.25 * (1.0 + 1e-6));
    }

    #[test]
    fn iterates_contained_in_each_norm_ball() {
        let net = crate::nn::random_dense_net(&[2, 8, 2], 5);
        let x = Tensor::from_vec(vec![0.3, -0.4]);
        for norm in [AttackNorm::L2, AttackNorm::Linf] {
            let cfg = AttackConfig {
                norm,
                epsilons: vec![0.05, 0.1],
                max_steps: 25,
                step_size: StepSize::Adaptive,
                clip: (-10.0, 10.0),
                ..AttackConfig::pgd_default(3)
            };
            let res = pgd_attack(&net, &x, &cfg).unwrap();
            let dist = match norm {
                AttackNorm::L2 => res.adversarial.l2_distance(&x),
                AttackNorm::Linf => res.adversarial.linf_distance(&x),
            };
            assert!(dist <= 0.1 * (1.0 + 1e-6), "ball containment {dist}");
        }
    }

    #[test]
    fn success_flips_label() {
        let net = crate::nn::random_dense_net(&[2, 8, 2], 15);
        let mut rng = crate::rng::CounterRng::new(2);
        for _ in 0..20 {
            let x = Tensor::from_vec(vec![
                rng.next_range(-1.0, 1.0) as f32,
                rng.next_range(-1.0, 1.0) as f32,
            ]);
            let cfg = AttackConfig {
                epsilons: vec![0.5, 1.0, 2.0],
                clip: (-10.0, 10.0),
                ..AttackConfig::pgd_default(11)
            };
            let res = pgd_attack(&net, &x, &cfg).unwrap();
            if res.success {
                assert_ne!(net.predict(&res.adversarial).unwrap(), net.predict(&x).unwrap());
            }
        }
    }
}
