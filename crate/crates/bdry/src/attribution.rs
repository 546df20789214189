//! Feature attribution methods.
//!
//! Gradient-based attributions on pre-softmax scores: saliency map, grad x
//! input, integrated gradients (trapezoid path integral), smooth gradient,
//! the boundary-based variants that replace the role of the baseline with
//! the closest adversarial example found by the attack ensemble, and the
//! adversarial gradient integral that accumulates attribution along targeted
//! descent paths. The attribution target is always the class predicted at
//! the input being explained.

use std::path::Path;

use crate::attack::BoundaryResult;
use crate::error::{Error, Result};
use crate::nn::{perturbed, Network};
use crate::tensor::Tensor;

/// Per-feature attribution scores plus method metadata.
#[derive(Debug, Clone)]
pub struct AttributionMap {
    /// Scores, shaped like the input they explain.
    pub values: Tensor,
    /// Method tag: `sm`, `gti`, `ig`, `sg`, `bsm`, `big`, or `agi`.
    pub method: String,
    pub target_class: usize,
    /// Baseline input for path methods (zeros, or the boundary point).
    pub baseline: Option<Tensor>,
    /// Ordered key-value pairs (steps, sigma, samples, seed, boundary
    /// distance, ...) echoed into the sidecar file.
    pub meta: Vec<(String, String)>,
}

impl AttributionMap {
    fn new(values: Tensor, method: &str, target_class: usize) -> Self {
        AttributionMap {
            values,
            method: method.to_string(),
            target_class,
            baseline: None,
            meta: Vec::new(),
        }
    }

    fn with_meta(mut self, key: &str, value: String) -> Self {
        self.meta.push((key.to_string(), value));
        self
    }

    /// Writes the values tensor to `tensor_path` and a plain-text sidecar
    /// (`method`, `class`, then method-specific keys) next to it with the
    /// extension `.meta`.
    pub fn save(&self, tensor_path: &Path) -> Result<()> {
        self.values.save(tensor_path)?;
        let mut text = format!("method = {}\nclass = {}\n", self.method, self.target_class);
        for (k, v) in &self.meta {
            text.push_str(&format!("{k} = {v}\n"));
        }
        std::fs::write(tensor_path.with_extension("meta"), text)?;
        Ok(())
    }
}

/// Trapezoid-rule configuration for path integrals.
#[derive(Debug, Clone, Copy)]
pub struct IgConfig {
    /// Number of interpolation points; the trapezoid rule needs at least 2.
    pub steps: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        IgConfig { steps: 20 }
    }
}

fn resolve_class(net: &Network, x: &Tensor, c: Option<usize>) -> Result<usize> {
    match c {
        Some(c) if c >= net.num_classes() => Err(Error::InvalidInput(format!(
            "class {c} out of range for {} classes",
            net.num_classes()
        ))),
        Some(c) => Ok(c),
        None => net.predict(x),
    }
}

/// Gradient of the target-class score at the input.
pub fn saliency_map(net: &Network, x: &Tensor, c: Option<usize>) -> Result<AttributionMap> {
    let c = resolve_class(net, x, c)?;
    let g = net.input_gradient(x, c)?;
    Ok(AttributionMap::new(g, "sm", c))
}

/// Saliency map times the input, elementwise.
pub fn grad_times_input(net: &Network, x: &Tensor, c: Option<usize>) -> Result<AttributionMap> {
    let c = resolve_class(net, x, c)?;
    let g = net.input_gradient(x, c)?;
    Ok(AttributionMap::new(g.hadamard(x), "gti", c))
}

/// Integrated gradients from `baseline` to `x`: `(x - baseline)` times the
/// trapezoid average of the gradient along the straight-line path.
pub fn integrated_gradients(
    net: &Network,
    x: &Tensor,
    baseline: &Tensor,
    c: Option<usize>,
    cfg: IgConfig,
) -> Result<AttributionMap> {
    if cfg.steps < 2 {
        return Err(Error::InvalidInput("trapezoid rule needs steps >= 2".into()));
    }
    if baseline.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", x.shape()),
            got: format!("{:?}", baseline.shape()),
        });
    }
    let c = resolve_class(net, x, c)?;
    let avg = path_average_gradient(net, x, baseline, c, cfg.steps)?;
    let diff = x.sub(baseline);
    let map = AttributionMap::new(diff.hadamard(&avg), "ig", c)
        .with_meta("steps", cfg.steps.to_string());
    Ok(AttributionMap { baseline: Some(baseline.clone()), ..map })
}

fn path_average_gradient(
    net: &Network,
    x: &Tensor,
    baseline: &Tensor,
    c: usize,
    steps: usize,
) -> Result<Tensor> {
    let mut acc = vec![0.0f64; x.len()];
    let denom = (steps - 1) as f64;
    for k in 0..steps {
        let t = k as f64 / denom;
        let weight = if k == 0 || k == steps - 1 { 0.5 / denom } else { 1.0 / denom };
        let point_data: Vec<f32> = baseline
            .data()
            .iter()
            .zip(x.data())
            .map(|(&b, &xv)| (b as f64 + t * (xv as f64 - b as f64)) as f32)
            .collect();
        let point = Tensor::new(x.shape().to_vec(), point_data).unwrap();
        let g = net.input_gradient(&point, c)?;
        for (a, &v) in acc.iter_mut().zip(g.data()) {
            *a += weight * v as f64;
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), acc.into_iter().map(|v| v as f32).collect()).unwrap())
}

/// Mean saliency map over `n` Gaussian perturbations of the input. Noise
/// comes from the counter stream of `seed` in row-major feature order,
/// matching the smoothing sampler in the network engine.
pub fn smooth_gradient(
    net: &Network,
    x: &Tensor,
    c: Option<usize>,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<AttributionMap> {
    if n == 0 {
        return Err(Error::InvalidInput("smooth_gradient needs n >= 1".into()));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidInput("sigma must be non-negative".into()));
    }
    let c = resolve_class(net, x, c)?;
    let d = x.len() as u64;
    let mut acc = vec![0.0f64; x.len()];
    for k in 0..n {
        let point = if sigma == 0.0 { x.clone() } else { perturbed(x, sigma, seed, k as u64 * d) };
        let g = net.input_gradient(&point, c)?;
        for (a, &v) in acc.iter_mut().zip(g.data()) {
            *a += v as f64;
        }
    }
    let values = Tensor::new(
        x.shape().to_vec(),
        acc.into_iter().map(|v| (v / n as f64) as f32).collect(),
    )
    .unwrap();
    Ok(AttributionMap::new(values, "sg", c)
        .with_meta("sigma", format!("{sigma}"))
        .with_meta("samples", n.to_string())
        .with_meta("seed", seed.to_string()))
}

/// Boundary-based saliency map: the gradient of the source-class score at
/// the closest adversarial example found -- the normal of the boundary
/// segment the search landed on.
pub fn boundary_saliency_map(
    net: &Network,
    x: &Tensor,
    boundary: &BoundaryResult,
) -> Result<AttributionMap> {
    if !boundary.success {
        return Err(Error::NoBoundary("boundary search failed; no BSM".into()));
    }
    let c = net.predict(x)?;
    let g = net.input_gradient(&boundary.adversarial, c)?;
    Ok(AttributionMap::new(g, "bsm", c)
        .with_meta("boundary_distance", format!("{}", boundary.distance))
        .with_meta("boundary_method", boundary.method.clone()))
}

/// Boundary-based integrated gradients: IG whose baseline is the closest
/// adversarial example, aggregating the normals of every boundary segment
/// the straight path crosses.
pub fn boundary_integrated_gradients(
    net: &Network,
    x: &Tensor,
    boundary: &BoundaryResult,
    cfg: IgConfig,
) -> Result<AttributionMap> {
    if !boundary.success {
        return Err(Error::NoBoundary("boundary search failed; no BIG".into()));
    }
    let c = net.predict(x)?;
    let ig = integrated_gradients(net, x, &boundary.adversarial, Some(c), cfg)?;
    Ok(AttributionMap {
        method: "big".into(),
        meta: vec![
            ("steps".into(), cfg.steps.to_string()),
            ("boundary_distance".into(), format!("{}", boundary.distance)),
            ("boundary_method".into(), boundary.method.clone()),
        ],
        ..ig
    })
}

/// Adversarial gradient integral. For each of the `topk` highest-scoring
/// non-predicted classes, runs a targeted descent toward that class
/// (L2-normalized ascent on its score, projected into the eps-ball around
/// the input, stopping early once the target is reached) and accumulates
/// the per-step path attribution `-grad_c(x_k) * dx_k`; the result sums
/// over targets. Deterministic; `seed` is recorded for provenance only.
#[allow(clippy::too_many_arguments)]
pub fn agi(
    net: &Network,
    x: &Tensor,
    eps: f64,
    topk: usize,
    max_iters: usize,
    step_size: f64,
    seed: u64,
) -> Result<AttributionMap> {
    let c = net.predict(x)?;
    if topk >= net.num_classes() {
        return Err(Error::InvalidInput(format!(
            "topk {topk} must be below the class count {}",
            net.num_classes()
        )));
    }
    let scores = net.forward(x)?;
    let mut targets: Vec<usize> = (0..net.num_classes()).filter(|&t| t != c).collect();
    targets.sort_by(|&a, &b| {
        scores.data()[b]
            .partial_cmp(&scores.data()[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    targets.truncate(topk);

    let mut acc = vec![0.0f64; x.len()];
    let mut successes = Vec::new();
    for &t in &targets {
        let mut cur = x.clone();
        let mut reached = false;
        for _ in 0..max_iters {
            if net.predict(&cur)? == t {
                reached = true;
                break;
            }
            let grad_t = net.input_gradient(&cur, t)?;
            let norm = grad_t.l2_norm();
            if norm < 1e-12 {
                break;
            }
            let proposal = cur.add_scaled(&grad_t, (step_size / norm) as f32);
            let next = crate::attack::project(
                &proposal,
                x,
                eps,
                crate::attack::AttackNorm::L2,
                (f32::MIN, f32::MAX),
            );
            let grad_c = net.input_gradient(&cur, c)?;
            for ((a, &g), (&nv, &cv)) in acc
                .iter_mut()
                .zip(grad_c.data())
                .zip(next.data().iter().zip(cur.data()))
            {
                *a -= g as f64 * (nv as f64 - cv as f64);
            }
            cur = next;
        }
        if !reached && max_iters > 0 {
            reached = net.predict(&cur)? == t;
        }
        successes.push((t, reached));
    }
    let values = Tensor::new(x.shape().to_vec(), acc.into_iter().map(|v| v as f32).collect()).unwrap();
    let success_str = successes
        .iter()
        .map(|(t, ok)| format!("{t}:{}", if *ok { "hit" } else { "miss" }))
        .collect::<Vec<_>>()
        .join(",");
    Ok(AttributionMap::new(values, "agi", c)
        .with_meta("eps", format!("{eps}"))
        .with_meta("topk", topk.to_string())
        .with_meta("max_iters", max_iters.to_string())
        .with_meta("step_size", format!("{step_size}"))
        .with_meta("seed", seed.to_string())
        .with_meta("targets", success_str))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::BoundaryResult;
    use crate::nn::{random_dense_net, Layer};

    fn hyperplane_net(w: Vec<f32>, b: f32) -> Network {
        let d = w.len();
        let neg: Vec<f32> = w.iter().map(|v| -v).collect();
        Network::new(vec![Layer::dense(vec![w, neg], vec![b, -b])], vec![d]).unwrap()
    }

    #[test]
    fn saliency_of_linear_net_is_w_everywhere() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.0);
        for x in [vec![0.0, 0.0], vec![5.0, -3.0]] {
            let m = saliency_map(&net, &Tensor::from_vec(x), Some(0)).unwrap();
            assert_eq!(m.values.data(), &[2.0, -1.0]);
        }
    }

    #[test]
    fn saliency_zero_in_dead_region() {
        // Both hidden units OFF at x = (-1, -1) kills every path to class 0.
        let net = Network::new(
            vec![
                Layer::dense(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
                Layer::Relu,
                Layer::dense(vec![vec![1.0, 1.0], vec![0.0, 0.0]], vec![0.0, 0.1]),
            ],
            vec![2],
        )
        .unwrap();
        let m = saliency_map(&net, &Tensor::from_vec(vec![-1.0, -1.0]), Some(0)).unwrap();
        assert_eq!(m.values.data(), &[0.0, 0.0]);
    }

    #[test]
    fn saliency_matches_finite_differences() {
        let net = random_dense_net(&[2, 8, 2], 606);
        let x = Tensor::from_vec(vec![0.3, -0.6]);
        let c = net.predict(&x).unwrap();
        let m = saliency_map(&net, &x, None).unwrap();
        for i in 0..2 {
            let h = 1e-3f32;
            let mut hi = x.clone();
            hi.data_mut()[i] += h;
            let mut lo = x.clone();
            lo.data_mut()[i] -= h;
            let fd = (net.forward(&hi).unwrap().data()[c] as f64
                - net.forward(&lo).unwrap().data()[c] as f64)
                / (2.0 * h as f64);
            assert!((m.values.data()[i] as f64 - fd).abs() < 1e-4);
        }
    }

    #[test]
    fn grad_times_input_basics() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.0);
        let zero = grad_times_input(&net, &Tensor::from_vec(vec![0.0, 0.0]), Some(0)).unwrap();
        assert_eq!(zero.values.data(), &[0.0, 0.0]);
        let m = grad_times_input(&net, &Tensor::from_vec(vec![1.0, 1.0]), Some(0)).unwrap();
        assert_eq!(m.values.data(), &[2.0, -1.0]);
    }

    #[test]
    fn grad_times_input_equals_ig_when_path_stays_linear() {
        // All hidden units stay strictly ON along the zero-baseline path for
        // positive inputs, so the function is affine on the whole path.
        let net = Network::new(
            vec![
                Layer::dense(vec![vec![1.0, 0.5], vec![0.25, 1.0]], vec![0.1, 0.1]),
                Layer::Relu,
                Layer::dense(vec![vec![1.0, -0.5], vec![0.5, 0.5]], vec![0.0, 0.0]),
            ],
            vec![2],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.8, 0.4]);
        let gti = grad_times_input(&net, &x, Some(0)).unwrap();
        let ig = integrated_gradients(
            &net,
            &x,
            &Tensor::zeros(vec![2]),
            Some(0),
            IgConfig { steps: 200 },
        )
        .unwrap();
        for (a, b) in gti.values.data().iter().zip(ig.values.data()) {
            assert!((a - b).abs() < 1e-3, "gti {a} vs ig {b}");
        }
    }

    #[test]
    fn ig_on_linear_model_is_exact_for_any_steps() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.3);
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![-0.5, 0.5]);
        for steps in [2, 3, 20] {
            let ig = integrated_gradients(&net, &x, &b, Some(0), IgConfig { steps }).unwrap();
            // w (x - b) elementwise = (2*1.5, -1*1.5).
            assert!((ig.values.data()[0] - 3.0).abs() < 1e-6);
            assert!((ig.values.data()[1] + 1.5).abs() < 1e-6);
        }
    }

    #[test]
    fn ig_with_baseline_equal_input_is_zero() {
        let net = random_dense_net(&[2, 8, 2], 12);
        let x = Tensor::from_vec(vec![0.4, 0.2]);
        let ig = integrated_gradients(&net, &x, &x, Some(0), IgConfig::default()).unwrap();
        assert!(ig.values.data().iter().all(|&v| v == 0.0));
    }

    /// min(x, y) as x - relu(x - y), lifted through relu(x) - relu(-x) to
    /// pass x itself across the ReLU layer.
    fn min_net() -> Network {
        Network::new(
            vec![
                Layer::dense(
                    vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, -1.0]],
                    vec![0.0, 0.0, 0.0],
                ),
                Layer::Relu,
                Layer::dense(vec![vec![1.0, -1.0, -1.0], vec![0.0, 0.0, 0.0]], vec![0.0, 0.0]),
            ],
            vec![2],
        )
        .unwrap()
    }

    #[test]
    fn ig_of_min_function_attributes_to_smaller_coordinate() {
        let net = min_net();
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let f = net.forward(&x).unwrap();
        assert!((f.data()[0] - 1.0).abs() < 1e-6, "min(1,2) = 1");
        let ig = integrated_gradients(
            &net,
            &x,
            &Tensor::zeros(vec![2]),
            Some(0),
            IgConfig { steps: 200 },
        )
        .unwrap();
        // Along the path x < y strictly, so f is the x-coordinate.
        assert!((ig.values.data()[0] - 1.0).abs() <= 1e-2, "{:?}", ig.values.data());
        assert!(ig.values.data()[1].abs() <= 1e-6);
    }

    #[test]
    fn sg_on_linear_model_is_w() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.0);
        let sg = smooth_gradient(&net, &Tensor::from_vec(vec![0.3, 0.1]), Some(0), 0.7, 50, 3).unwrap();
        for (a, b) in sg.values.data().iter().zip(&[2.0, -1.0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn sg_with_zero_sigma_is_saliency() {
        let net = random_dense_net(&[2, 8, 2], 8);
        let x = Tensor::from_vec(vec![0.2, 0.6]);
        let sg = smooth_gradient(&net, &x, None, 0.0, 10, 3).unwrap();
        let sm = saliency_map(&net, &x, None).unwrap();
        assert_eq!(sg.values.data(), sm.values.data());
    }

    #[test]
    fn sg_matches_softplus_gradient_through_sigma_beta_relation() {
        // One-layer net relu(w.x) with ||w|| = 2. The smoothed gradient at
        // noise sigma approximates the gradient of softplus_{beta/||w||}(w.x)
        // with beta = log(2) sqrt(2 pi) / sigma^2.
        let w = vec![1.2f32, -1.6];
        let net = Network::new(
            vec![Layer::dense(vec![w.clone()], vec![0.0]), Layer::Relu],
            vec![2],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.5, 0.25]);
        let sigma = 1.0f64;
        let beta = (2.0f64).ln() * (std::f64::consts::TAU).sqrt() / (sigma * sigma);
        let w_norm = 2.0f64;
        let wx = 1.2 * 0.5 - 1.6 * 0.25; // 0.2
        let factor = 1.0 / (1.0 + (-(beta / w_norm) * wx as f64).exp());
        let oracle: Vec<f64> = w.iter().map(|&wi| wi as f64 * factor).collect();

        let sg = smooth_gradient(&net, &x, Some(0), sigma, 10_000, 77).unwrap();
        let dot: f64 = sg.values.data().iter().zip(&oracle).map(|(&a, &b)| a as f64 * b).sum();
        let cos = dot / (sg.values.l2_norm() * oracle.iter().map(|v| v * v).sum::<f64>().sqrt());
        assert!(cos >= 0.99, "cosine {cos}");
        let rel = (sg.values.l2_norm() - oracle.iter().map(|v| v * v).sum::<f64>().sqrt()).abs()
            / oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rel <= 0.05, "relative magnitude gap {rel}");
    }

    #[test]
    fn sg_monte_carlo_converges() {
        let net = random_dense_net(&[2, 8, 2], 9);
        let x = Tensor::from_vec(vec![0.1, -0.2]);
        let reference = smooth_gradient(&net, &x, Some(0), 0.5, 8192, 5).unwrap();
        let mut errs = Vec::new();
        for n in [64usize, 256, 1024] {
            let sg = smooth_gradient(&net, &x, Some(0), 0.5, n, 5).unwrap();
            errs.push(sg.values.sub(&reference.values).l2_norm());
        }
        assert!(errs[0] > errs[2], "errors did not shrink: {errs:?}");
    }

    #[test]
    fn bsm_on_linear_model_equals_saliency() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.0);
        let x = Tensor::from_vec(vec![1.0, 0.5]);
        let boundary = BoundaryResult {
            adversarial: Tensor::from_vec(vec![-0.5, 0.3]),
            distance: 1.0,
            success: true,
            method: "test".into(),
            normal: None,
            refined: true,
            source_class: 0,
        };
        let bsm = boundary_saliency_map(&net, &x, &boundary).unwrap();
        let sm = saliency_map(&net, &x, None).unwrap();
        assert_eq!(bsm.values.data(), sm.values.data());
    }

    #[test]
    fn bsm_requires_success() {
        let net = hyperplane_net(vec![1.0, 0.0], 0.0);
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let boundary = BoundaryResult {
            adversarial: x.clone(),
            distance: 0.0,
            success: false,
            method: "test".into(),
            normal: None,
            refined: false,
            source_class: 0,
        };
        assert!(matches!(
            boundary_saliency_map(&net, &x, &boundary),
            Err(Error::NoBoundary(_))
        ));
    }

    #[test]
    fn big_on_linear_model_is_w_times_displacement_and_complete() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.0);
        let x = Tensor::from_vec(vec![1.0, 0.5]);
        let adv = Tensor::from_vec(vec![-0.2, 0.9]);
        let boundary = BoundaryResult {
            adversarial: adv.clone(),
            distance: x.l2_distance(&adv),
            success: true,
            method: "test".into(),
            normal: None,
            refined: true,
            source_class: 0,
        };
        let big = boundary_integrated_gradients(&net, &x, &boundary, IgConfig::default()).unwrap();
        let expect = [2.0 * 1.2, -1.0 * -0.4];
        for (a, b) in big.values.data().iter().zip(&expect) {
            assert!((*a - *b).abs() < 1e-5);
        }
        let sum: f64 = big.values.data().iter().map(|&v| v as f64).sum();
        let fc_gap = net.forward(&x).unwrap().data()[0] as f64
            - net.forward(&adv).unwrap().data()[0] as f64;
        assert!((sum - fc_gap).abs() < 1e-5, "completeness: {sum} vs {fc_gap}");
    }

    #[test]
    fn big_completeness_on_fixture_net() {
        let net = random_dense_net(&[2, 8, 2], 282);
        let mut rng = crate::rng::CounterRng::new(14);
        let mut checked = 0;
        while checked < 20 {
            let x = Tensor::from_vec(vec![
                rng.next_range(-1.0, 1.0) as f32,
                rng.next_range(-1.0, 1.0) as f32,
            ]);
            let adv = Tensor::from_vec(vec![
                rng.next_range(-1.0, 1.0) as f32,
                rng.next_range(-1.0, 1.0) as f32,
            ]);
            let c = net.predict(&x).unwrap();
            if net.predict(&adv).unwrap() == c {
                continue;
            }
            let boundary = BoundaryResult {
                adversarial: adv.clone(),
                distance: x.l2_distance(&adv),
                success: true,
                method: "test".into(),
                normal: None,
                refined: false,
                source_class: c,
            };
            let big =
                boundary_integrated_gradients(&net, &x, &boundary, IgConfig { steps: 200 }).unwrap();
            let sum: f64 = big.values.data().iter().map(|&v| v as f64).sum();
            let gap = net.forward(&x).unwrap().data()[c] as f64
                - net.forward(&adv).unwrap().data()[c] as f64;
            assert!((sum - gap).abs() <= 1e-2, "completeness {sum} vs {gap}");
            checked += 1;
        }
    }

    #[test]
    fn big_averages_region_gradients_weighted_by_path_length() {
        // One facet at x0 = 0.5; class-0 gradients are w1 = (0, 0.3) below it
        // and w2 = (2, 0.3) above. The path from (0,0) to (1,1) splits evenly,
        // so BIG = (x - x') * (0.5 w1 + 0.5 w2) = (1.0, 0.3).
        let net = Network::new(
            vec![
                Layer::dense(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![-0.5, 10.0]),
                Layer::Relu,
                Layer::dense(vec![vec![2.0, 0.3], vec![0.0, 0.0]], vec![-3.0, 0.01]),
            ],
            vec![2],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![1.0, 1.0]);
        let adv = Tensor::from_vec(vec![0.0, 0.0]);
        assert_eq!(net.predict(&x).unwrap(), 0);
        assert_eq!(net.predict(&adv).unwrap(), 1);
        let boundary = BoundaryResult {
            adversarial: adv.clone(),
            distance: x.l2_distance(&adv),
            success: true,
            method: "test".into(),
            normal: None,
            refined: false,
            source_class: 0,
        };
        let big =
            boundary_integrated_gradients(&net, &x, &boundary, IgConfig { steps: 400 }).unwrap();
        assert!((big.values.data()[0] - 1.0).abs() <= 5e-3, "{:?}", big.values.data());
        assert!((big.values.data()[1] - 0.3).abs() <= 5e-3, "{:?}", big.values.data());
    }

    #[test]
    fn big_with_zero_baseline_degenerates_to_ig() {
        let net = random_dense_net(&[2, 8, 2], 51);
        let x = Tensor::from_vec(vec![0.7, -0.3]);
        let c = net.predict(&x).unwrap();
        let zero = Tensor::zeros(vec![2]);
        let boundary = BoundaryResult {
            adversarial: zero.clone(),
            distance: x.l2_norm(),
            success: net.predict(&zero).unwrap() != c,
            method: "test".into(),
            normal: None,
            refined: false,
            source_class: c,
        };
        if boundary.success {
            let big =
                boundary_integrated_gradients(&net, &x, &boundary, IgConfig::default()).unwrap();
            let ig = integrated_gradients(&net, &x, &zero, Some(c), IgConfig::default()).unwrap();
            assert_eq!(big.values.data(), ig.values.data());
        }
    }

    #[test]
    fn agi_zero_iterations_gives_zero_map() {
        let net = random_dense_net(&[2, 8, 3], 4);
        let x = Tensor::from_vec(vec![0.1, 0.1]);
        let m = agi(&net, &x, 0.5, 2, 0, 0.05, 0).unwrap();
        assert!(m.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agi_rejects_topk_at_class_count() {
        let net = random_dense_net(&[2, 8, 2], 4);
        let x = Tensor::from_vec(vec![0.1, 0.1]);
        assert!(agi(&net, &x, 0.5, 2, 5, 0.05, 0).is_err());
    }

    #[test]
    fn agi_collinear_with_big_on_linear_model() {
        let net = hyperplane_net(vec![2.0, -1.0], 0.0);
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let m = agi(&net, &x, 3.0, 1, 60, 0.05, 0).unwrap();
        // On a linear model the descent path runs along -w, so AGI lands
        // parallel to w * w elementwise, exactly like BIG's w * (x - x').
        let dir = [2.0f64 * 2.0, -1.0 * -1.0];
        let dot: f64 = m.values.data().iter().zip(&dir).map(|(&a, &b)| a as f64 * b).sum();
        let cos = dot / (m.values.l2_norm() * (dir[0] * dir[0] + dir[1] * dir[1]).sqrt());
        assert!(cos > 1.0 - 1e-6, "cosine {cos}");
    }

    #[test]
    fn big_is_symmetric_where_agi_asymmetry_is_merely_recorded() {
        // Score 0 is relu(x + y - 1), symmetric under swapping features.
        let net = Network::new(
            vec![
                Layer::dense(vec![vec![1.0, 1.0]], vec![-1.0]),
                Layer::Relu,
                Layer::dense(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.25]),
            ],
            vec![2],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![1.0, 1.0]);
        assert_eq!(net.predict(&x).unwrap(), 0);
        let adv = Tensor::from_vec(vec![0.5, 0.5]);
        assert_ne!(net.predict(&adv).unwrap(), 0);
        let boundary = BoundaryResult {
            adversarial: adv.clone(),
            distance: x.l2_distance(&adv),
            success: true,
            method: "test".into(),
            normal: None,
            refined: false,
            source_class: 0,
        };
        let big = boundary_integrated_gradients(&net, &x, &boundary, IgConfig { steps: 50 }).unwrap();
        let big_gap = (big.values.data()[0] - big.values.data()[1]).abs();
        assert!(big_gap <= 1e-6, "BIG asymmetry {big_gap}");

        let ig = integrated_gradients(&net, &x, &Tensor::zeros(vec![2]), Some(0), IgConfig { steps: 50 })
            .unwrap();
        let ig_gap = (ig.values.data()[0] - ig.values.data()[1]).abs();
        assert!(ig_gap <= 1e-6, "IG asymmetry {ig_gap}");

        // AGI's asymmetry is recorded, not asserted: its nonlinear path need
        // not respect the symmetry axiom.
        let m = agi(&net, &x, 1.0, 1, 40, 0.05, 0).unwrap();
        let agi_gap = (m.values.data()[0] - m.values.data()[1]).abs();
        println!("agi asymmetry on symmetric fixture: {agi_gap:e}");
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bten");
        let net = hyperplane_net(vec![1.0, 0.0], 0.0);
        let m = saliency_map(&net, &Tensor::from_vec(vec![0.5, 0.5]), None).unwrap();
        m.save(&path).unwrap();
        let loaded = Tensor::load(&path).unwrap();
        assert_eq!(loaded, m.values);
        let meta = std::fs::read_to_string(path.with_extension("meta")).unwrap();
        assert!(meta.contains("method = sm"));
        assert!(meta.contains("class = 0"));
    }
}
