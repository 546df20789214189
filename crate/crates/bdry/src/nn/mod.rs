//! Minimal feed-forward network engine.
//!
//! Networks are an ordered list of layers from a fixed menu (dense, conv2d,
//! relu, softplus, flatten) producing pre-softmax class scores. The engine
//! provides forward evaluation, exact reverse-mode input gradients, ReLU
//! activation patterns, per-region linear models, and randomized-smoothing
//! prediction. Dot products accumulate in f64; values are stored as f32.
//!
//! Networks are immutable after construction and safe to share across
//! threads; all operations here are pure functions of their arguments (plus
//! an explicit seed where sampling is involved).

mod model_io;

pub use model_io::{load_model, save_model, MODEL_MAGIC};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// One layer of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Fully connected affine map. `weight` is row-major `[out][in]`.
    Dense { in_dim: usize, out_dim: usize, weight: Vec<f32>, bias: Vec<f32> },
    /// 2-D convolution with zero padding. `weight` is `[out_ch][in_ch][kh][kw]`.
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
    Relu,
    Softplus { beta: f32 },
    Flatten,
}

impl Layer {
    pub fn dense(weight: Vec<Vec<f32>>, bias: Vec<f32>) -> Self {
        let out_dim = weight.len();
        let in_dim = if out_dim == 0 { 0 } else { weight[0].len() };
        let flat: Vec<f32> = weight.into_iter().flatten().collect();
        assert_eq!(flat.len(), out_dim * in_dim, "ragged weight matrix");
        assert_eq!(bias.len(), out_dim, "bias length");
        Layer::Dense { in_dim, out_dim, weight: flat, bias }
    }

    /// Output shape for a given input shape, or an error when they do not
    /// compose.
    fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::ShapeMismatch {
            expected,
            got: format!("{in_shape:?}"),
        };
        match self {
            Layer::Dense { in_dim, out_dim, .. } => {
                if in_shape != [*in_dim] {
                    return Err(mismatch(format!("[{in_dim}]")));
                }
                Ok(vec![*out_dim])
            }
            Layer::Conv2d { in_ch, out_ch, kh, kw, stride, pad, .. } => {
                if in_shape.len() != 3 || in_shape[0] != *in_ch {
                    return Err(mismatch(format!("[{in_ch}, h, w]")));
                }
                let (h, w) = (in_shape[1], in_shape[2]);
                let oh = conv_out(h, *kh, *stride, *pad)
                    .ok_or_else(|| mismatch(format!("height >= kernel {kh} after pad {pad}")))?;
                let ow = conv_out(w, *kw, *stride, *pad)
                    .ok_or_else(|| mismatch(format!("width >= kernel {kw} after pad {pad}")))?;
                Ok(vec![*out_ch, oh, ow])
            }
            Layer::Relu | Layer::Softplus { .. } => Ok(in_shape.to_vec()),
            Layer::Flatten => Ok(vec![in_shape.iter().product()]),
        }
    }
}

pub(crate) fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// ON/OFF status of every ReLU unit, in network order (layer by layer,
/// row-major within a layer). A unit is ON when its pre-activation is >= 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    pub bits: Vec<bool>,
}

/// The affine map a network computes on the polytope of points sharing one
/// activation pattern: `score_i(x) = weights[i] . x + biases[i]`.
#[derive(Debug, Clone)]
pub struct LinearRegion {
    pub pattern: ActivationPattern,
    pub weights: Vec<Tensor>,
    pub biases: Vec<f64>,
}

impl LinearRegion {
    /// Evaluates the affine map at `x`.
    pub fn scores(&self, x: &Tensor) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, &b)| w.dot(x) + b)
            .collect()
    }
}

/// Ordered feed-forward network producing pre-softmax scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    num_classes: usize,
}

impl Network {
    /// Builds a network, verifying that consecutive layer shapes compose and
    /// that the final output is a score vector.
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.out_shape(&shape)?;
        }
        if shape.len() != 1 || shape[0] == 0 {
            return Err(Error::ShapeMismatch {
                expected: "final score vector [num_classes]".into(),
                got: format!("{shape:?}"),
            });
        }
        Ok(Network { layers, input_shape, num_classes: shape[0] })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Decomposes the network for in-place parameter updates during training.
    pub fn into_parts(self) -> (Vec<Layer>, Vec<usize>) {
        (self.layers, self.input_shape)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Total number of ReLU units across all ReLU layers.
    pub fn relu_unit_count(&self) -> usize {
        let mut shape = self.input_shape.clone();
        let mut count = 0;
        for layer in &self.layers {
            if matches!(layer, Layer::Relu) {
                count += shape.iter().product::<usize>();
            }
            shape = layer.out_shape(&shape).expect("validated at construction");
        }
        count
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.input_shape),
                got: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    /// Pre-softmax scores `f(x)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(x)?.output)
    }

    /// Forward pass retaining each layer's input, for backprop and pattern
    /// extraction.
    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = eval_layer(layer, &cur);
            inputs.push(cur);
            cur = next;
        }
        Ok(Trace { inputs, output: cur })
    }

    /// Predicted label: argmax of scores, ties to the lowest class index.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    /// Exact gradient of the class-`class_index` score with respect to the
    /// input. The ReLU derivative at exactly zero pre-activation is zero.
    pub fn input_gradient(&self, x: &Tensor, class_index: usize) -> Result<Tensor> {
        if class_index >= self.num_classes {
            return Err(Error::InvalidInput(format!(
                "class {class_index} out of range for {} classes",
                self.num_classes
            )));
        }
        let mut cot = vec![0.0; self.num_classes];
        cot[class_index] = 1.0;
        let trace = self.forward_trace(x)?;
        Ok(self.backward_input(&trace, &cot))
    }

    /// Gradient of `cotangent . f(x)` with respect to the input; the general
    /// reverse-mode primitive behind attack losses.
    pub fn input_gradient_of(&self, x: &Tensor, cotangent: &[f32]) -> Result<Tensor> {
        let trace = self.forward_trace(x)?;
        Ok(self.backward_input(&trace, cotangent))
    }

    /// Pulls `cotangent` back through the traced network to the input.
    pub fn backward_input(&self, trace: &Trace, cotangent: &[f32]) -> Tensor {
        assert_eq!(cotangent.len(), self.num_classes, "cotangent length");
        let mut grad = Tensor::new(vec![self.num_classes], cotangent.to_vec()).unwrap();
        for (layer, input) in self.layers.iter().zip(&trace.inputs).rev() {
            grad = backward_layer(layer, input, &grad, None);
        }
        grad
    }

    /// As [`Self::backward_input`] but also accumulating parameter gradients
    /// into `grads` (used by training).
    pub fn backward_params(&self, trace: &Trace, cotangent: &[f32], grads: &mut ParamGrads) -> Tensor {
        assert_eq!(grads.0.len(), self.layers.len());
        let mut grad = Tensor::new(vec![self.num_classes], cotangent.to_vec()).unwrap();
        for (idx, (layer, input)) in self.layers.iter().zip(&trace.inputs).enumerate().rev() {
            grad = backward_layer(layer, input, &grad, Some(&mut grads.0[idx]));
        }
        grad
    }

    /// ON/OFF bit per ReLU unit at `x` (ON means pre-activation >= 0).
    pub fn activation_pattern(&self, x: &Tensor) -> Result<ActivationPattern> {
        let trace = self.forward_trace(x)?;
        let mut bits = Vec::new();
        for (layer, input) in self.layers.iter().zip(&trace.inputs) {
            if matches!(layer, Layer::Relu) {
                bits.extend(input.data().iter().map(|&v| v >= 0.0));
            }
        }
        Ok(ActivationPattern { bits })
    }

    /// The affine map valid on `x`'s activation polytope. Rejects points with
    /// any ReLU pre-activation exactly zero, where the region is ambiguous.
    pub fn local_linear_model(&self, x: &Tensor) -> Result<LinearRegion> {
        let trace = self.forward_trace(x)?;
        for (layer, input) in self.layers.iter().zip(&trace.inputs) {
            if matches!(layer, Layer::Relu) && input.data().iter().any(|&v| v == 0.0) {
                return Err(Error::BoundaryPoint);
            }
        }
        let pattern = self.activation_pattern(x)?;
        let mut weights = Vec::with_capacity(self.num_classes);
        let mut biases = Vec::with_capacity(self.num_classes);
        for c in 0..self.num_classes {
            let mut cot = vec![0.0; self.num_classes];
            cot[c] = 1.0;
            let w = self.backward_input(&trace, &cot);
            let b = trace.output.data()[c] as f64 - w.dot(x);
            weights.push(w);
            biases.push(b);
        }
        Ok(LinearRegion { pattern, weights, biases })
    }

    /// Majority vote of `predict` over `n` Gaussian perturbations of `x` with
    /// standard deviation `sigma`. Noise is drawn from the counter stream of
    /// `seed` in row-major feature order (sample k, feature j uses normal
    /// index `k*d + j`), so results are reproducible and order-independent.
    /// Vote ties resolve to the lowest class index.
    pub fn smoothed_predict(&self, x: &Tensor, sigma: f64, n: usize, seed: u64) -> Result<usize> {
        if n == 0 {
            return Err(Error::InvalidInput("smoothed_predict needs n >= 1".into()));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidInput("sigma must be non-negative".into()));
        }
        self.check_input(x)?;
        let d = x.len() as u64;
        let mut votes = vec![0u32; self.num_classes];
        for k in 0..n {
            let noisy = if sigma == 0.0 {
                x.clone()
            } else {
                perturbed(x, sigma, seed, k as u64 * d)
            };
            votes[self.predict(&noisy)?] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate().skip(1) {
            if v > votes[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

/// `x` plus sigma-scaled standard normals starting at counter `base`.
pub fn perturbed(x: &Tensor, sigma: f64, seed: u64, base: u64) -> Tensor {
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(j, &v)| (v as f64 + sigma * rng::normal_at(seed, base + j as u64)) as f32)
        .collect();
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

/// Saved layer inputs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub inputs: Vec<Tensor>,
    pub output: Tensor,
}

/// Per-layer parameter gradients, aligned with the network's layer list.
#[derive(Debug, Clone)]
pub struct ParamGrads(pub Vec<LayerGrads>);

#[derive(Debug, Clone)]
pub enum LayerGrads {
    None,
    Affine { dw: Vec<f64>, db: Vec<f64> },
}

impl ParamGrads {
    pub fn zeros_like(net: &Network) -> Self {
        let grads = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { in_dim, out_dim, .. } => LayerGrads::Affine {
                    dw: vec![0.0; in_dim * out_dim],
                    db: vec![0.0; *out_dim],
                },
                Layer::Conv2d { in_ch, out_ch, kh, kw, .. } => LayerGrads::Affine {
                    dw: vec![0.0; out_ch * in_ch * kh * kw],
                    db: vec![0.0; *out_ch],
                },
                _ => LayerGrads::None,
            })
            .collect();
        ParamGrads(grads)
    }
}

fn eval_layer(layer: &Layer, x: &Tensor) -> Tensor {
    match layer {
        Layer::Dense { in_dim, out_dim, weight, bias } => {
            let xd = x.data();
            let mut out = Vec::with_capacity(*out_dim);
            for o in 0..*out_dim {
                let row = &weight[o * in_dim..(o + 1) * in_dim];
                let mut acc = bias[o] as f64;
                for (w, v) in row.iter().zip(xd) {
                    acc += *w as f64 * *v as f64;
                }
                out.push(acc as f32);
            }
            Tensor::new(vec![*out_dim], out).unwrap()
        }
        Layer::Conv2d { in_ch, out_ch, kh, kw, stride, pad, weight, bias } => {
            let (h, w) = (x.shape()[1], x.shape()[2]);
            let oh = conv_out(h, *kh, *stride, *pad).unwrap();
            let ow = conv_out(w, *kw, *stride, *pad).unwrap();
            let xd = x.data();
            let mut out = vec![0.0f32; out_ch * oh * ow];
            for oc in 0..*out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc] as f64;
                        for ic in 0..*in_ch {
                            for ky in 0..*kh {
                                let iy = (oy * stride + ky) as isize - *pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..*kw {
                                    let ix = (ox * stride + kx) as isize - *pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let wv = weight[((oc * in_ch + ic) * kh + ky) * kw + kx];
                                    let xv = xd[(ic * h + iy as usize) * w + ix as usize];
                                    acc += wv as f64 * xv as f64;
                                }
                            }
                        }
                        out[(oc * oh + oy) * ow + ox] = acc as f32;
                    }
                }
            }
            Tensor::new(vec![*out_ch, oh, ow], out).unwrap()
        }
        Layer::Relu => {
            let data = x.data().iter().map(|&v| v.max(0.0)).collect();
            Tensor::new(x.shape().to_vec(), data).unwrap()
        }
        Layer::Softplus { beta } => {
            let b = *beta as f64;
            let data = x
                .data()
                .iter()
                .map(|&v| {
                    let z = b * v as f64;
                    let sp = if z > 30.0 {
                        z + (-z).exp()
                    } else if z < -30.0 {
                        z.exp()
                    } else {
                        z.exp().ln_1p()
                    };
                    (sp / b) as f32
                })
                .collect();
            Tensor::new(x.shape().to_vec(), data).unwrap()
        }
        Layer::Flatten => Tensor::new(vec![x.len()], x.data().to_vec()).unwrap(),
    }
}

/// Pulls `grad_out` back through one layer evaluated at `input`, optionally
/// accumulating parameter gradients.
fn backward_layer(
    layer: &Layer,
    input: &Tensor,
    grad_out: &Tensor,
    params: Option<&mut LayerGrads>,
) -> Tensor {
    match layer {
        Layer::Dense { in_dim, out_dim, weight, .. } => {
            let go = grad_out.data();
            let xd = input.data();
            let mut gin = vec![0.0f64; *in_dim];
            for o in 0..*out_dim {
                let g = go[o] as f64;
                if g == 0.0 {
                    continue;
                }
                let row = &weight[o * in_dim..(o + 1) * in_dim];
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += *w as f64 * g;
                }
            }
            if let Some(LayerGrads::Affine { dw, db }) = params {
                for o in 0..*out_dim {
                    let g = go[o] as f64;
                    db[o] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let drow = &mut dw[o * in_dim..(o + 1) * in_dim];
                    for (d, x) in drow.iter_mut().zip(xd) {
                        *d += g * *x as f64;
                    }
                }
            }
            Tensor::new(vec![*in_dim], gin.into_iter().map(|v| v as f32).collect()).unwrap()
        }
        Layer::Conv2d { in_ch, out_ch, kh, kw, stride, pad, weight, .. } => {
            let (h, w) = (input.shape()[1], input.shape()[2]);
            let oh = conv_out(h, *kh, *stride, *pad).unwrap();
            let ow = conv_out(w, *kw, *stride, *pad).unwrap();
            let go = grad_out.data();
            let xd = input.data();
            let mut gin = vec![0.0f64; in_ch * h * w];
            let mut pg = params;
            for oc in 0..*out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = go[(oc * oh + oy) * ow + ox] as f64;
                        if let Some(LayerGrads::Affine { db, .. }) = pg.as_deref_mut() {
                            db[oc] += g;
                        }
                        if g == 0.0 {
                            continue;
                        }
                        for ic in 0..*in_ch {
                            for ky in 0..*kh {
                                let iy = (oy * stride + ky) as isize - *pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..*kw {
                                    let ix = (ox * stride + kx) as isize - *pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let widx = ((oc * in_ch + ic) * kh + ky) * kw + kx;
                                    let xidx = (ic * h + iy as usize) * w + ix as usize;
                                    gin[xidx] += weight[widx] as f64 * g;
                                    if let Some(LayerGrads::Affine { dw, .. }) = pg.as_deref_mut() {
                                        dw[widx] += g * xd[xidx] as f64;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Tensor::new(
                vec![*in_ch, h, w],
                gin.into_iter().map(|v| v as f32).collect(),
            )
            .unwrap()
        }
        Layer::Relu => {
            // Derivative at exactly zero pre-activation is 0.
            let data = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Tensor::new(input.shape().to_vec(), data).unwrap()
        }
        Layer::Softplus { beta } => {
            let b = *beta as f64;
            let data = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| {
                    let z = b * x as f64;
                    let sig = 1.0 / (1.0 + (-z).exp());
                    (sig * g as f64) as f32
                })
                .collect();
            Tensor::new(input.shape().to_vec(), data).unwrap()
        }
        Layer::Flatten => Tensor::new(input.shape().to_vec(), grad_out.data().to_vec()).unwrap(),
    }
}

/// Numerically stable softmax in f64.
pub fn softmax(scores: &[f32]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = scores.iter().map(|&s| ((s as f64) - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Seeded He-style random dense network with ReLU between hidden layers:
/// `dims = [in, h1, ..., out]`. Used for fixtures and training init.
pub fn random_dense_net(dims: &[usize], seed: u64) -> Network {
    assert!(dims.len() >= 2);
    let mut rng = rng::CounterRng::new(rng::substream(seed, 0x11));
    let mut layers = Vec::new();
    for (i, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let scale = (2.0 / fan_in as f64).sqrt();
        let weight: Vec<f32> = (0..fan_in * fan_out)
            .map(|_| (rng.next_normal() * scale) as f32)
            .collect();
        let bias: Vec<f32> = (0..fan_out).map(|_| (rng.next_normal() * 0.1) as f32).collect();
        layers.push(Layer::Dense { in_dim: fan_in, out_dim: fan_out, weight, bias });
        if i + 2 < dims.len() {
            layers.push(Layer::Relu);
        }
    }
    Network::new(layers, vec![dims[0]]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_net(w: Vec<Vec<f32>>, b: Vec<f32>) -> Network {
        let d = w[0].len();
        Network::new(vec![Layer::dense(w, b)], vec![d]).unwrap()
    }

    /// Fixed 2-2-2 ReLU net with small integer weights; scores at (1, 0) and
    /// (1, 1) are frozen from hand matrix arithmetic.
    fn fixed_222() -> Network {
        Network::new(
            vec![
                Layer::dense(vec![vec![1.0, -2.0], vec![3.0, 1.0]], vec![0.5, -1.0]),
                Layer::Relu,
                Layer::dense(vec![vec![2.0, -1.0], vec![0.0, 1.0]], vec![0.0, 0.25]),
            ],
            vec![2],
        )
        .unwrap()
    }

    #[test]
    fn forward_linear_hand_arithmetic() {
        let net = linear_net(vec![vec![2.0, -1.0]], vec![0.0]);
        let s = net.forward(&Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(s.data(), &[1.0]);
    }

    #[test]
    fn forward_relu_clamps() {
        let net = Network::new(
            vec![Layer::dense(vec![vec![3.0]], vec![0.0]), Layer::Relu],
            vec![1],
        )
        .unwrap();
        let s = net.forward(&Tensor::from_vec(vec![-1.0])).unwrap();
        assert_eq!(s.data(), &[0.0]);
    }

    #[test]
    fn forward_222_matches_hand_matrix_products() {
        // x = (1, 0): hidden pre = (1*1+0, 3*1+0) + (0.5, -1) = (1.5, 2.0);
        // relu keeps both; out = (2*1.5 - 1*2.0, 0*1.5 + 1*2.0) + (0, 0.25)
        //     = (1.0, 2.25).
        // x = (0, 1): hidden pre = (-2+0.5, 1-1) = (-1.5, 0.0); relu = (0, 0);
        // out = (0, 0.25).
        let net = fixed_222();
        let s = net.forward(&Tensor::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(s.data(), &[1.0, 2.25]);
        let s = net.forward(&Tensor::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(s.data(), &[0.0, 0.25]);
    }

    #[test]
    fn predict_argmax_and_ties() {
        let net = linear_net(vec![vec![1.0], vec![1.0]], vec![0.2, 0.9]);
        assert_eq!(net.predict(&Tensor::from_vec(vec![0.0])).unwrap(), 1);
        let net = linear_net(vec![vec![1.0], vec![1.0]], vec![0.5, 0.5]);
        assert_eq!(net.predict(&Tensor::from_vec(vec![0.0])).unwrap(), 0);
    }

    #[test]
    fn predict_222_matches_forward_oracle() {
        let net = fixed_222();
        // scores (1.0, 2.25) from the forward fixture.
        assert_eq!(net.predict(&Tensor::from_vec(vec![1.0, 0.0])).unwrap(), 1);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let net = fixed_222();
        assert!(net.forward(&Tensor::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn gradient_of_linear_net_is_w() {
        let net = linear_net(vec![vec![2.0, -1.0]], vec![0.7]);
        for x in [vec![0.0, 0.0], vec![3.0, -5.0]] {
            let g = net.input_gradient(&Tensor::from_vec(x), 0).unwrap();
            assert_eq!(g.data(), &[2.0, -1.0]);
        }
    }

    #[test]
    fn gradient_zero_for_inactive_unit() {
        let net = Network::new(
            vec![Layer::dense(vec![vec![3.0]], vec![0.0]), Layer::Relu],
            vec![1],
        )
        .unwrap();
        let g = net.input_gradient(&Tensor::from_vec(vec![-1.0]), 0).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let net = Network::new(
            vec![Layer::dense(vec![vec![1.0]], vec![0.0]), Layer::Relu],
            vec![1],
        )
        .unwrap();
        let g = net.input_gradient(&Tensor::from_vec(vec![0.0]), 0).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    /// Central finite differences in f64 over perturbed f32 inputs.
    fn fd_gradient(net: &Network, x: &Tensor, c: usize, h: f32) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut hi = x.clone();
                hi.data_mut()[i] += h;
                let mut lo = x.clone();
                lo.data_mut()[i] -= h;
                let fh = net.forward(&hi).unwrap().data()[c] as f64;
                let fl = net.forward(&lo).unwrap().data()[c] as f64;
                (fh - fl) / (2.0 * h as f64)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences_dense() {
        let net = random_dense_net(&[2, 8, 2], 99);
        let mut rng = rng::CounterRng::new(5);
        for _ in 0..20 {
            let x = Tensor::from_vec(vec![
                rng.next_range(-1.0, 1.0) as f32,
                rng.next_range(-1.0, 1.0) as f32,
            ]);
            for c in 0..2 {
                let g = net.input_gradient(&x, c).unwrap();
                let fd = fd_gradient(&net, &x, c, 1e-3);
                for (a, b) in g.data().iter().zip(&fd) {
                    assert!((*a as f64 - b).abs() < 1e-4, "grad {a} vs fd {b}");
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_conv_softplus() {
        let net = Network::new(
            vec![
                Layer::Conv2d {
                    in_ch: 1,
                    out_ch: 2,
                    kh: 2,
                    kw: 2,
                    stride: 1,
                    pad: 1,
                    weight: vec![0.5, -0.25, 0.75, 0.1, -0.6, 0.3, 0.2, -0.4],
                    bias: vec![0.05, -0.1],
                },
                Layer::Relu,
                Layer::Flatten,
                Layer::Softplus { beta: 2.0 },
                Layer::dense(
                    vec![(0..50).map(|i| 0.1 * ((i % 7) as f32 - 3.0)).collect(), (0..50)
                        .map(|i| 0.05 * ((i % 5) as f32 - 2.0))
                        .collect()],
                    vec![0.0, 0.1],
                ),
            ],
            vec![1, 4, 4],
        )
        .unwrap();
        let mut rng = rng::CounterRng::new(17);
        for _ in 0..5 {
            let x = Tensor::new(
                vec![1, 4, 4],
                (0..16).map(|_| rng.next_range(-1.0, 1.0) as f32).collect(),
            )
            .unwrap();
            for c in 0..2 {
                let g = net.input_gradient(&x, c).unwrap();
                let fd = fd_gradient(&net, &x, c, 1e-3);
                for (a, b) in g.data().iter().zip(&fd) {
                    assert!((*a as f64 - b).abs() < 1e-4, "grad {a} vs fd {b}");
                }
            }
        }
    }

    #[test]
    fn activation_pattern_single_unit() {
        let net = Network::new(
            vec![Layer::dense(vec![vec![3.0]], vec![0.0]), Layer::Relu],
            vec![1],
        )
        .unwrap();
        assert_eq!(
            net.activation_pattern(&Tensor::from_vec(vec![1.0])).unwrap().bits,
            vec![true]
        );
        assert_eq!(
            net.activation_pattern(&Tensor::from_vec(vec![-1.0])).unwrap().bits,
            vec![false]
        );
    }

    #[test]
    fn pattern_flips_one_bit_across_facet() {
        // 2-4-2 net; crossing the hyperplane of exactly one hidden unit flips
        // exactly that unit's bit. Unit 0 has pre-activation x0 - 0.5.
        let net = Network::new(
            vec![
                Layer::dense(
                    vec![
                        vec![1.0, 0.0],
                        vec![0.0, 1.0],
                        vec![1.0, 1.0],
                        vec![1.0, -1.0],
                    ],
                    vec![-0.5, 0.3, 2.0, 3.0],
                ),
                Layer::Relu,
                Layer::dense(vec![vec![1.0, 0.5, -0.5, 0.25], vec![-1.0, 0.5, 0.5, -0.25]], vec![0.0, 0.0]),
            ],
            vec![2],
        )
        .unwrap();
        let a = net.activation_pattern(&Tensor::from_vec(vec![0.4, 0.0])).unwrap();
        let b = net.activation_pattern(&Tensor::from_vec(vec![0.6, 0.0])).unwrap();
        let diff: usize = a.bits.iter().zip(&b.bits).filter(|(p, q)| p != q).count();
        assert_eq!(diff, 1);
        assert!(!a.bits[0] && b.bits[0]);
    }

    #[test]
    fn local_linear_model_of_linear_net() {
        let net = linear_net(vec![vec![2.0, -1.0]], vec![0.7]);
        let region = net.local_linear_model(&Tensor::from_vec(vec![0.3, 0.4])).unwrap();
        assert_eq!(region.weights[0].data(), &[2.0, -1.0]);
        assert!((region.biases[0] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn local_linear_model_reproduces_forward_in_region() {
        let net = random_dense_net(&[2, 8, 2], 42);
        let x = Tensor::from_vec(vec![0.35, -0.2]);
        let region = net.local_linear_model(&x).unwrap();
        let mut rng = rng::CounterRng::new(7);
        let mut checked = 0;
        while checked < 10 {
            let dx = 0.02 * rng.next_range(-1.0, 1.0) as f32;
            let dy = 0.02 * rng.next_range(-1.0, 1.0) as f32;
            let p = Tensor::from_vec(vec![0.35 + dx, -0.2 + dy]);
            if net.activation_pattern(&p).unwrap() != region.pattern {
                continue;
            }
            let exact = net.forward(&p).unwrap();
            let affine = region.scores(&p);
            for (e, a) in exact.data().iter().zip(&affine) {
                let denom = (*e as f64).abs().max(1.0);
                assert!(((*e as f64) - a).abs() / denom <= 1e-5);
            }
            checked += 1;
        }
    }

    #[test]
    fn local_linear_model_rejects_facet_point() {
        let net = Network::new(
            vec![Layer::dense(vec![vec![1.0]], vec![0.0]), Layer::Relu,
                 Layer::dense(vec![vec![1.0]], vec![0.0])],
            vec![1],
        )
        .unwrap();
        match net.local_linear_model(&Tensor::from_vec(vec![0.0])) {
            Err(Error::BoundaryPoint) => {}
            other => panic!("expected boundary-point error, got {other:?}"),
        }
    }

    #[test]
    fn gradient_constant_within_region() {
        let net = random_dense_net(&[2, 8, 2], 1234);
        let a = Tensor::from_vec(vec![0.11, 0.07]);
        let b = Tensor::from_vec(vec![0.112, 0.071]);
        if net.activation_pattern(&a).unwrap() == net.activation_pattern(&b).unwrap() {
            let ga = net.input_gradient(&a, 0).unwrap();
            let gb = net.input_gradient(&b, 0).unwrap();
            for (p, q) in ga.data().iter().zip(gb.data()) {
                assert!((p - q).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn smoothed_predict_sigma_zero_is_predict() {
        let net = random_dense_net(&[2, 8, 3], 3);
        let mut rng = rng::CounterRng::new(8);
        for _ in 0..20 {
            let x = Tensor::from_vec(vec![
                rng.next_range(-2.0, 2.0) as f32,
                rng.next_range(-2.0, 2.0) as f32,
            ]);
            assert_eq!(
                net.smoothed_predict(&x, 0.0, 25, 99).unwrap(),
                net.predict(&x).unwrap()
            );
        }
    }

    #[test]
    fn smoothed_predict_far_from_boundary_matches_predict() {
        // Margin of the hyperplane x0 = 0 at x = (3, 0) is 3.0 = 10 sigma;
        // a huge Monte-Carlo run and the n = 100 vote must both agree with
        // the noiseless prediction.
        let net = linear_net(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![3.0, 0.0]);
        let sigma = 0.3;
        assert_eq!(net.smoothed_predict(&x, sigma, 100, 7).unwrap(), 0);
        assert_eq!(net.smoothed_predict(&x, sigma, 100_000, 8).unwrap(), 0);
    }

    #[test]
    fn smoothed_predict_single_sample_is_first_draw() {
        let net = random_dense_net(&[2, 6, 2], 21);
        let x = Tensor::from_vec(vec![0.2, -0.1]);
        let (sigma, seed) = (0.5, 31);
        let noisy = perturbed(&x, sigma, seed, 0);
        assert_eq!(
            net.smoothed_predict(&x, sigma, 1, seed).unwrap(),
            net.predict(&noisy).unwrap()
        );
    }
}
