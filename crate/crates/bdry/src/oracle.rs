//! Exact brute-force geometry for tiny networks.
//!
//! Dense grid sampling over a low-dimensional box enumerates activation
//! regions and finds the closest decision-boundary point to an input, with
//! bisection refinement onto the boundary. These oracles are deliberately
//! independent of the attack pipeline: they are the ground truth the
//! attacks are validated against. Accuracy is bounded by one grid diagonal.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{ActivationPattern, Network};
use crate::rng;
use crate::tensor::Tensor;

/// Maximum input dimension the grid oracle accepts.
pub const MAX_ORACLE_DIM: usize = 3;

/// Axis-aligned search box.
#[derive(Debug, Clone)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        DomainBox { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Cell-center grid point for a multi-index, `resolution` cells per axis.
    fn grid_point(&self, idx: &[usize], resolution: usize) -> Tensor {
        let data: Vec<f32> = idx
            .iter()
            .enumerate()
            .map(|(axis, &k)| {
                let w = (self.hi[axis] - self.lo[axis]) / resolution as f64;
                (self.lo[axis] + (k as f64 + 0.5) * w) as f32
            })
            .collect();
        Tensor::from_vec(data)
    }

    /// Length of one grid-cell diagonal.
    pub fn grid_diagonal(&self, resolution: usize) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let w = (h - l) / resolution as f64;
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn check_scale(net: &Network, domain: &DomainBox, resolution: usize) -> Result<usize> {
    let dim = net.input_dim();
    if dim > MAX_ORACLE_DIM {
        return Err(Error::Scale { max: MAX_ORACLE_DIM, got: dim });
    }
    if domain.dim() != dim {
        return Err(Error::InvalidInput(format!(
            "domain dimension {} does not match input dimension {dim}",
            domain.dim()
        )));
    }
    if resolution < 16 {
        return Err(Error::InvalidInput("oracle resolution must be >= 16 per axis".into()));
    }
    Ok(dim)
}

fn multi_index(mut linear: usize, dim: usize, resolution: usize) -> Vec<usize> {
    let mut idx = vec![0usize; dim];
    for axis in (0..dim).rev() {
        idx[axis] = linear % resolution;
        linear /= resolution;
    }
    idx
}

/// Distinct activation patterns discovered by dense grid sampling, each with
/// the first witness point in scan order.
pub fn enumerate_regions(
    net: &Network,
    domain: &DomainBox,
    resolution: usize,
) -> Result<Vec<(ActivationPattern, Tensor)>> {
    let dim = check_scale(net, domain, resolution)?;
    let total = resolution.pow(dim as u32);
    let mut seen = std::collections::HashMap::new();
    let mut regions = Vec::new();
    for linear in 0..total {
        let p = domain.grid_point(&multi_index(linear, dim, resolution), resolution);
        let pattern = net.activation_pattern(&p)?;
        if !seen.contains_key(&pattern) {
            seen.insert(pattern.clone(), ());
            regions.push((pattern, p));
        }
    }
    Ok(regions)
}

/// Ground-truth closest boundary point: location, distance, normal, and the
/// class pair that ties there.
#[derive(Debug, Clone)]
pub struct BoundarySegmentOracle {
    /// Refined boundary point, a hair on the flipped side.
    pub point: Tensor,
    /// Matching point a hair on the input's side of the segment; the normal
    /// is evaluated here, strictly inside the segment's linear region.
    pub region_point: Tensor,
    /// L2 distance from the query input to `point`.
    pub distance: f64,
    /// Gradient of the source-class score in the segment's region.
    pub normal: Tensor,
    /// `(F(x), label on the far side)`.
    pub class_pair: (usize, usize),
}

/// Scans the grid for the closest point with a flipped label, then bisects
/// along the segment toward it. The reported distance overestimates the true
/// minimum by at most one grid diagonal.
pub fn closest_boundary_oracle(
    net: &Network,
    x: &Tensor,
    domain: &DomainBox,
    resolution: usize,
) -> Result<BoundarySegmentOracle> {
    let dim = check_scale(net, domain, resolution)?;
    let c0 = net.predict(x)?;
    let total = resolution.pow(dim as u32);

    // Parallel min-reduction keyed by (distance, linear index) so the result
    // is independent of chunking.
    fn closer(a: Option<(f64, usize)>, b: Option<(f64, usize)>) -> Option<(f64, usize)> {
        match (a, b) {
            (Some((ad, ai)), Some((bd, bi))) => {
                if bd < ad || (bd == ad && bi < ai) {
                    Some((bd, bi))
                } else {
                    Some((ad, ai))
                }
            }
            (x, None) => x,
            (None, y) => y,
        }
    }
    let best = (0..total)
        .into_par_iter()
        .fold(
            || None::<(f64, usize)>,
            |acc, linear| {
                let p = domain.grid_point(&multi_index(linear, dim, resolution), resolution);
                if net.predict(&p).expect("validated shape") == c0 {
                    return acc;
                }
                closer(acc, Some((p.l2_distance(x), linear)))
            },
        )
        .reduce(|| None, closer);

    let (_, linear) = best.ok_or_else(|| {
        Error::NoBoundary("no grid point in the domain flips the predicted label".into())
    })?;
    let target = domain.grid_point(&multi_index(linear, dim, resolution), resolution);

    // Tight bisection: both endpoints end up a hair from the segment.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if net.predict(&lerp(x, &target, mid))? == c0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let point = lerp(x, &target, hi);
    let region_point = lerp(x, &target, lo);
    let far_class = net.predict(&point)?;
    let normal = net.input_gradient(&region_point, c0)?;
    Ok(BoundarySegmentOracle {
        distance: point.l2_distance(x),
        point,
        region_point,
        normal,
        class_pair: (c0, far_class),
    })
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

/// Empirical Lipschitz constant of an attribution function around `x`:
/// the max of `||g(x~) - g(x)|| / ||x~ - x||` over `n_pairs` points sampled
/// uniformly from the delta-ball. A sample-based underestimate of the true
/// constant, reported as such.
pub fn estimate_attribution_lipschitz(
    net: &Network,
    g: &dyn Fn(&Network, &Tensor) -> Result<Tensor>,
    x: &Tensor,
    delta: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidInput("n_pairs must be >= 1".into()));
    }
    let g_x = g(net, x)?;
    let d = x.len();
    let stream = rng::substream(seed, 0x11b5);
    let mut lambda = 0.0f64;
    for k in 0..n_pairs {
        let base = (k * (d + 1)) as u64;
        let noise: Vec<f64> = (0..d).map(|j| rng::normal_at(stream, base + j as u64)).collect();
        let norm: f64 = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let u = rng::unit_open_at(stream, 2 * (base + d as u64) + 1);
        let radius = delta * u.powf(1.0 / d as f64);
        let data: Vec<f32> = x
            .data()
            .iter()
            .zip(&noise)
            .map(|(&xv, &nv)| (xv as f64 + nv * radius / norm) as f32)
            .collect();
        let x_tilde = Tensor::new(x.shape().to_vec(), data).unwrap();
        let dist = x_tilde.l2_distance(x);
        if dist < 1e-12 {
            continue;
        }
        let g_tilde = g(net, &x_tilde)?;
        lambda = lambda.max(g_tilde.sub(&g_x).l2_norm() / dist);
    }
    Ok(lambda)
}

/// Outcome of the local-robustness bound check at one input.
#[derive(Debug, Clone)]
pub struct Prop1Check {
    /// `||n - g_S(x)||` with `n` the oracle normal.
    pub lhs: f64,
    /// `lambda_hat * ||x - x'||`.
    pub rhs: f64,
    pub holds: bool,
    /// True when the closest boundary lies beyond `delta`, making the bound
    /// vacuous.
    pub vacuous: bool,
    pub boundary: Option<BoundarySegmentOracle>,
}

/// Checks `||n - g_S(x)|| <= lambda_hat * ||x - x'||` against the grid
/// oracle's boundary point and normal. Vacuously true when no boundary lies
/// within `delta`.
pub fn check_proposition1(
    net: &Network,
    x: &Tensor,
    domain: &DomainBox,
    resolution: usize,
    delta: f64,
    lambda_hat: f64,
) -> Result<Prop1Check> {
    let oracle = closest_boundary_oracle(net, x, domain, resolution)?;
    if oracle.distance > delta {
        return Ok(Prop1Check { lhs: 0.0, rhs: 0.0, holds: true, vacuous: true, boundary: Some(oracle) });
    }
    let sm = net.input_gradient(x, oracle.class_pair.0)?;
    let lhs = oracle.normal.sub(&sm).l2_norm();
    let rhs = lambda_hat * oracle.distance;
    Ok(Prop1Check {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-6),
        vacuous: false,
        boundary: Some(oracle),
    })
}
