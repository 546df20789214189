//! Toy training: full-batch cross-entropy gradient descent, optionally with
//! adversarial (PGD) inner maximization.

use crate::attack::{project, AttackNorm};
use crate::error::{Error, Result};
use crate::experiments::dataset::ToyDataset;
use crate::nn::{softmax, Layer, LayerGrads, Network, ParamGrads};
use crate::rng::{substream, CounterRng};
use crate::tensor::Tensor;

/// Architecture menu for `train_toy`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToyArch {
    /// `d-16-16-k`: dense layers with the listed hidden widths and ReLU
    /// between them; an empty list is a linear model.
    Dense(Vec<usize>),
    /// `relu1`: a single dense layer followed by ReLU, so each class score
    /// is `relu(w_c . x)`.
    OneLayerRelu,
    /// `1conv-8`: one 3x3 stride-1 pad-1 convolution with the given channel
    /// count, ReLU, flatten, dense to the classes.
    Conv { channels: usize },
}

impl ToyArch {
    /// Parses `d-16-16-k`, `relu1`, or `1conv-8`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "relu1" {
            return Ok(ToyArch::OneLayerRelu);
        }
        if let Some(ch) = s.strip_prefix("1conv-") {
            let channels: usize = ch
                .parse()
                .map_err(|_| Error::Config(format!("bad conv channel count in '{s}'")))?;
            if channels == 0 {
                return Err(Error::Config("conv channel count must be >= 1".into()));
            }
            return Ok(ToyArch::Conv { channels });
        }
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() >= 2 && parts[0] == "d" && *parts.last().unwrap() == "k" {
            let hidden: Vec<usize> = parts[1..parts.len() - 1]
                .iter()
                .map(|p| p.parse().map_err(|_| Error::Config(format!("bad width '{p}' in '{s}'"))))
                .collect::<Result<_>>()?;
            return Ok(ToyArch::Dense(hidden));
        }
        Err(Error::Config(format!("unknown architecture '{s}' (try d-16-16-k, relu1, 1conv-8)")))
    }

    /// Seeded initial network for the dataset's shapes.
    pub fn init(&self, input_shape: &[usize], num_classes: usize, seed: u64) -> Result<Network> {
        let mut rng = CounterRng::new(substream(seed, 0x1417));
        let input_dim: usize = input_shape.iter().product();
        let mut layers = Vec::new();
        match self {
            ToyArch::Dense(hidden) => {
                if input_shape.len() > 1 {
                    layers.push(Layer::Flatten);
                }
                let mut dims = vec![input_dim];
                dims.extend_from_slice(hidden);
                dims.push(num_classes);
                for (i, pair) in dims.windows(2).enumerate() {
                    layers.push(he_dense(pair[0], pair[1], &mut rng));
                    if i + 2 < dims.len() {
                        layers.push(Layer::Relu);
                    }
                }
            }
            ToyArch::OneLayerRelu => {
                if input_shape.len() > 1 {
                    layers.push(Layer::Flatten);
                }
                layers.push(he_dense(input_dim, num_classes, &mut rng));
                layers.push(Layer::Relu);
            }
            ToyArch::Conv { channels } => {
                if input_shape.len() != 3 {
                    return Err(Error::Config("conv architecture needs [c, h, w] inputs".into()));
                }
                let (in_ch, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
                let fan_in = in_ch * 9;
                let scale = (2.0 / fan_in as f64).sqrt();
                let weight: Vec<f32> = (0..channels * in_ch * 9)
                    .map(|_| (rng.next_normal() * scale) as f32)
                    .collect();
                let bias: Vec<f32> = (0..*channels).map(|_| (rng.next_normal() * 0.01) as f32).collect();
                layers.push(Layer::Conv2d {
                    in_ch,
                    out_ch: *channels,
                    kh: 3,
                    kw: 3,
                    stride: 1,
                    pad: 1,
                    weight,
                    bias,
                });
                layers.push(Layer::Relu);
                layers.push(Layer::Flatten);
                layers.push(he_dense(channels * h * w, num_classes, &mut rng));
            }
        }
        Network::new(layers, input_shape.to_vec())
    }
}

fn he_dense(fan_in: usize, fan_out: usize, rng: &mut CounterRng) -> Layer {
    let scale = (2.0 / fan_in as f64).sqrt();
    let weight: Vec<f32> = (0..fan_in * fan_out).map(|_| (rng.next_normal() * scale) as f32).collect();
    let bias: Vec<f32> = (0..fan_out).map(|_| (rng.next_normal() * 0.01) as f32).collect();
    Layer::Dense { in_dim: fan_in, out_dim: fan_out, weight, bias }
}

/// Full-batch gradient descent on cross-entropy. With `robust_eps` set, every
/// epoch trains on PGD(eps, 10 steps) adversarial counterparts of the batch
/// instead of the clean inputs. Deterministic given the seed.
pub fn train_toy(
    dataset: &ToyDataset,
    arch: &ToyArch,
    epochs: usize,
    lr: f64,
    robust_eps: Option<f64>,
    norm: AttackNorm,
    seed: u64,
) -> Result<Network> {
    let net = arch.init(dataset.inputs[0].shape(), dataset.num_classes, seed)?;
    let (mut layers, input_shape) = net.into_parts();
    let n = dataset.len() as f64;
    for _epoch in 0..epochs {
        let net = Network::new(layers, input_shape.clone())?;
        let mut grads = ParamGrads::zeros_like(&net);
        let mut loss = 0.0f64;
        for (x, &y) in dataset.inputs.iter().zip(&dataset.labels) {
            let x_train = match robust_eps {
                Some(eps) => pgd_examples(&net, x, y, eps, norm, 10)?,
                None => x.clone(),
            };
            let trace = net.forward_trace(&x_train)?;
            let p = softmax(trace.output.data());
            loss -= p[y].max(1e-300).ln() / n;
            let cot: Vec<f32> = p
                .iter()
                .enumerate()
                .map(|(i, &pi)| ((pi - if i == y { 1.0 } else { 0.0 }) / n) as f32)
                .collect();
            net.backward_params(&trace, &cot, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::Training(format!("loss diverged to {loss}")));
        }
        layers = net.into_parts().0;
        apply_gradients(&mut layers, &grads, lr);
    }
    Network::new(layers, input_shape)
}

/// Ten PGD steps maximizing the true-class cross-entropy, step `2*eps/10`.
fn pgd_examples(
    net: &Network,
    x: &Tensor,
    y: usize,
    eps: f64,
    norm: AttackNorm,
    steps: usize,
) -> Result<Tensor> {
    let alpha = 2.0 * eps / steps as f64;
    let mut cur = x.clone();
    for _ in 0..steps {
        let (_, grad) = crate::attack::ce_loss_grad(net, &cur, y)?;
        match crate::attack::step_direction(&grad, norm) {
            Some(dir) => {
                let stepped = cur.add_scaled(&dir, alpha as f32);
                cur = project(&stepped, x, eps, norm, (f32::MIN, f32::MAX));
            }
            None => break,
        }
    }
    Ok(cur)
}

fn apply_gradients(layers: &mut [Layer], grads: &ParamGrads, lr: f64) {
    for (layer, grad) in layers.iter_mut().zip(&grads.0) {
        let LayerGrads::Affine { dw, db } = grad else { continue };
        match layer {
            Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                for (w, d) in weight.iter_mut().zip(dw) {
                    *w = (*w as f64 - lr * d) as f32;
                }
                for (b, d) in bias.iter_mut().zip(db) {
                    *b = (*b as f64 - lr * d) as f32;
                }
            }
            _ => {}
        }
    }
}

/// Fraction of the dataset the network labels correctly.
pub fn accuracy(net: &Network, dataset: &ToyDataset) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in dataset.inputs.iter().zip(&dataset.labels) {
        if net.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

/// Accuracy under a PGD(eps) attack on the true labels.
pub fn robust_accuracy(
    net: &Network,
    dataset: &ToyDataset,
    eps: f64,
    norm: AttackNorm,
) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in dataset.inputs.iter().zip(&dataset.labels) {
        let adv = pgd_examples(net, x, y, eps, norm, 10)?;
        if net.predict(&adv)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}
