//! Smoothing study: smooth-gradient alignment with the boundary as a
//! function of the noise level, on one-layer ReLU networks.

use rayon::prelude::*;

use crate::attack::{ce_loss_grad, project, AttackNorm};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, ToyDataset};
use crate::nn::{Layer, Network};
use crate::rng::substream;
use crate::tensor::Tensor;

/// Shared-noise PGD settings: 40 steps of `2*eps/40` inside an L2 ball of
/// radius 3 by default.
#[derive(Debug, Clone)]
pub struct SmoothingAttack {
    pub eps: f64,
    pub max_steps: usize,
    pub clip: (f32, f32),
}

impl Default for SmoothingAttack {
    fn default() -> Self {
        SmoothingAttack { eps: 3.0, max_steps: 40, clip: (-10.0, 10.0) }
    }
}

/// Per sigma and instance: draw one fixed set of base noises up front
/// (shared across instances and sigmas, scaled by sigma), attack with PGD
/// whose step aggregates the gradients of all noised copies and which stops
/// early once fewer than 10% of the copies keep the original label, then
/// report `ln ||SG(x) - SG(x')||` with the same noise set. At sigma 0 this
/// reduces exactly to plain PGD and the plain saliency-map difference.
pub fn run_smoothing(
    net: &Network,
    dataset: &ToyDataset,
    sigmas: &[f64],
    n_noise: usize,
    attack: &SmoothingAttack,
    seed: u64,
    config_echo: String,
) -> Result<ExperimentReport> {
    check_one_layer(net)?;
    if !sigmas.contains(&0.0) {
        return Err(Error::InvalidInput("sigma grid must include 0".into()));
    }
    if n_noise == 0 {
        return Err(Error::InvalidInput("n_noise must be >= 1".into()));
    }
    let d = net.input_dim() as u64;
    let noise_seed = substream(seed, 0xb5);
    // One base noise set, reused for every instance and scaled per sigma.
    let base_noise: Vec<Vec<f64>> = (0..n_noise)
        .map(|k| {
            (0..d)
                .map(|j| crate::rng::normal_at(noise_seed, k as u64 * d + j))
                .collect()
        })
        .collect();

    let mut report =
        ExperimentReport::new("smoothing", "sigma", &["log_sg_diff"], config_echo);
    type Item = (usize, f64);
    let work: Vec<Item> = (0..dataset.len())
        .flat_map(|idx| sigmas.iter().map(move |&s| (idx, s)))
        .collect();
    let outcomes: Vec<(usize, f64, Result<f64>)> = work
        .par_iter()
        .map(|&(idx, sigma)| {
            let value = smoothing_instance(net, &dataset.inputs[idx], sigma, &base_noise, attack);
            (idx, sigma, value)
        })
        .collect();

    for (idx, sigma, outcome) in outcomes {
        let id = dataset.id(idx);
        let key = format!("{sigma}");
        match outcome {
            Ok(v) => {
                report.push_row(&id, &key, vec![v]);
                report.evaluated += 1;
            }
            Err(e) => report.skip(&format!("{id}/{key}"), &e.to_string()),
        }
    }
    report.finish_summary();
    Ok(report)
}

fn smoothing_instance(
    net: &Network,
    x: &Tensor,
    sigma: f64,
    base_noise: &[Vec<f64>],
    attack: &SmoothingAttack,
) -> Result<f64> {
    let c = net.predict(x)?;
    let adv = shared_noise_pgd(net, x, c, sigma, base_noise, attack)?;
    let sg_x = shared_noise_sg(net, x, c, sigma, base_noise)?;
    let sg_adv = shared_noise_sg(net, &adv, c, sigma, base_noise)?;
    Ok(sg_x.sub(&sg_adv).l2_norm().max(1e-12).ln())
}

fn add_noise(x: &Tensor, sigma: f64, noise: &[f64]) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(noise)
        .map(|(&v, &z)| (v as f64 + sigma * z) as f32)
        .collect();
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

/// PGD whose every step uses the cross-entropy gradient summed over all noised
/// copies of the current iterate; stops once fewer than 10% of the copies
/// retain the original label. Errors when the budget runs out first.
fn shared_noise_pgd(
    net: &Network,
    x: &Tensor,
    c: usize,
    sigma: f64,
    base_noise: &[Vec<f64>],
    attack: &SmoothingAttack,
) -> Result<Tensor> {
    let alpha = 2.0 * attack.eps / attack.max_steps.max(1) as f64;
    let mut cur = x.clone();
    let threshold = 0.1 * base_noise.len() as f64;
    for _ in 0..=attack.max_steps {
        let retained = retained_count(net, &cur, c, sigma, base_noise)?;
        if (retained as f64) < threshold {
            return Ok(cur);
        }
        let mut agg = vec![0.0f64; x.len()];
        for z in base_noise {
            let (_, g) = ce_loss_grad(net, &add_noise(&cur, sigma, z), c)?;
            for (a, &v) in agg.iter_mut().zip(g.data()) {
                *a += v as f64;
            }
        }
        let norm = agg.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let dir = Tensor::new(
            x.shape().to_vec(),
            agg.into_iter().map(|v| (v / norm) as f32).collect(),
        )
        .unwrap();
        let stepped = cur.add_scaled(&dir, alpha as f32);
        cur = project(&stepped, x, attack.eps, AttackNorm::L2, attack.clip);
    }
    Err(Error::NoBoundary(
        "shared-noise attack kept >= 10% of copies on the original label".into(),
    ))
}

fn retained_count(
    net: &Network,
    cur: &Tensor,
    c: usize,
    sigma: f64,
    base_noise: &[Vec<f64>],
) -> Result<usize> {
    let mut retained = 0;
    for z in base_noise {
        if net.predict(&add_noise(cur, sigma, z))? == c {
            retained += 1;
        }
    }
    Ok(retained)
}

/// Smooth gradient over exactly the shared noise set.
fn shared_noise_sg(
    net: &Network,
    x: &Tensor,
    c: usize,
    sigma: f64,
    base_noise: &[Vec<f64>],
) -> Result<Tensor> {
    let mut acc = vec![0.0f64; x.len()];
    for z in base_noise {
        let g = net.input_gradient(&add_noise(x, sigma, z), c)?;
        for (a, &v) in acc.iter_mut().zip(g.data()) {
            *a += v as f64;
        }
    }
    let n = base_noise.len() as f64;
    Ok(Tensor::new(x.shape().to_vec(), acc.into_iter().map(|v| (v / n) as f32).collect()).unwrap())
}

/// Canonical one-layer fixture for the smoothing study: class scores
/// `relu(-w.x)` and `relu(w.x)`, which separate the two 2-D blob clusters
/// and keep exactly one unit live on each side of the boundary. Training a
/// one-layer net with cross-entropy tends to leave one class's unit dead
/// (ties go to class 0, so its logit gets no gradient once off), which
/// degenerates the saliency comparison; the explicit construction avoids
/// that.
pub fn reference_one_layer_net() -> Network {
    Network::new(
        vec![
            Layer::Dense {
                in_dim: 2,
                out_dim: 2,
                weight: vec![-0.9, -1.1, 0.9, 1.1],
                bias: vec![0.0, 0.0],
            },
            Layer::Relu,
        ],
        vec![2],
    )
    .unwrap()
}

/// The smoothing analysis only covers one-layer ReLU networks: an optional
/// flatten, one dense layer, one final ReLU.
fn check_one_layer(net: &Network) -> Result<()> {
    let shape_ok = match net.layers() {
        [Layer::Dense { .. }, Layer::Relu] => true,
        [Layer::Flatten, Layer::Dense { .. }, Layer::Relu] => true,
        _ => false,
    };
    if shape_ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "smoothing study needs a one-layer ReLU network (dense + relu)".into(),
        ))
    }
}
