//! `BDRYNET1` model file format.
//!
//! Layout: magic `BDRYNET1` | u32-LE layer count | per layer a u8 kind
//! (0=dense, 1=relu, 2=softplus, 3=conv2d, 4=flatten) followed by its
//! payload. Dense: u32 in, u32 out, `out*in` f32-LE row-major weights, `out`
//! f32-LE biases. Softplus: f32-LE beta. Conv2d: u32 in_ch, out_ch, kh, kw,
//! stride, pad, then `out_ch*in_ch*kh*kw` weights and `out_ch` biases.
//! All floats are little-endian f32; non-finite weights are rejected.
//!
//! The format does not record the input shape. On load it is reconstructed
//! from the layers: a dense-first network has input `[in]`; a conv-first
//! network is assumed to take square images, and the spatial side is solved
//! from the first dense layer after the convolutional stack.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{conv_out, Layer, Network};
use crate::tensor::ByteReader;

pub const MODEL_MAGIC: &[u8; 8] = b"BDRYNET1";

const KIND_DENSE: u8 = 0;
const KIND_RELU: u8 = 1;
const KIND_SOFTPLUS: u8 = 2;
const KIND_CONV2D: u8 = 3;
const KIND_FLATTEN: u8 = 4;

/// Serializes a network into the `BDRYNET1` byte format.
pub fn model_to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        match layer {
            Layer::Dense { in_dim, out_dim, weight, bias } => {
                out.push(KIND_DENSE);
                out.extend_from_slice(&(*in_dim as u32).to_le_bytes());
                out.extend_from_slice(&(*out_dim as u32).to_le_bytes());
                for v in weight {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in bias {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Layer::Relu => out.push(KIND_RELU),
            Layer::Softplus { beta } => {
                out.push(KIND_SOFTPLUS);
                out.extend_from_slice(&beta.to_le_bytes());
            }
            Layer::Conv2d { in_ch, out_ch, kh, kw, stride, pad, weight, bias } => {
                out.push(KIND_CONV2D);
                for v in [*in_ch, *out_ch, *kh, *kw, *stride, *pad] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                for v in weight {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in bias {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Layer::Flatten => out.push(KIND_FLATTEN),
        }
    }
    out
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let bytes = model_to_bytes(net);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Network> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    model_from_bytes(&bytes)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::Format { offset: 0, reason: "bad magic, expected BDRYNET1".into() });
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos();
        let kind = r.u8()?;
        let layer = match kind {
            KIND_DENSE => {
                let in_dim = r.u32()? as usize;
                let out_dim = r.u32()? as usize;
                let weight = read_finite(&mut r, in_dim * out_dim)?;
                let bias = read_finite(&mut r, out_dim)?;
                Layer::Dense { in_dim, out_dim, weight, bias }
            }
            KIND_RELU => Layer::Relu,
            KIND_SOFTPLUS => {
                let beta_at = r.pos();
                let beta = r.f32()?;
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::Format {
                        offset: beta_at,
                        reason: format!("softplus beta must be positive, got {beta}"),
                    });
                }
                Layer::Softplus { beta }
            }
            KIND_CONV2D => {
                let in_ch = r.u32()? as usize;
                let out_ch = r.u32()? as usize;
                let kh = r.u32()? as usize;
                let kw = r.u32()? as usize;
                let stride = r.u32()? as usize;
                let pad = r.u32()? as usize;
                if stride == 0 {
                    return Err(Error::Format { offset: at, reason: "conv stride must be >= 1".into() });
                }
                let weight = read_finite(&mut r, out_ch * in_ch * kh * kw)?;
                let bias = read_finite(&mut r, out_ch)?;
                Layer::Conv2d { in_ch, out_ch, kh, kw, stride, pad, weight, bias }
            }
            KIND_FLATTEN => Layer::Flatten,
            other => {
                return Err(Error::Format {
                    offset: at,
                    reason: format!("unknown layer kind {other}"),
                })
            }
        };
        layers.push(layer);
    }
    if r.remaining() != 0 {
        return Err(Error::Format {
            offset: r.pos(),
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    let input_shape = infer_input_shape(&layers)
        .ok_or_else(|| Error::Format { offset: 12, reason: "cannot infer input shape from layer list".into() })?;
    Network::new(layers, input_shape)
}

fn read_finite(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.pos();
        let v = r.f32()?;
        if !v.is_finite() {
            return Err(Error::Format { offset: at, reason: format!("non-finite weight {v}") });
        }
        out.push(v);
    }
    Ok(out)
}

/// Input shape implied by the layer list. Dense-first gives `[in]`. For a
/// conv-first stack a square spatial input is assumed; its side is solved
/// from the first dense layer after the stack.
fn infer_input_shape(layers: &[Layer]) -> Option<Vec<usize>> {
    for (i, layer) in layers.iter().enumerate() {
        match layer {
            Layer::Relu | Layer::Softplus { .. } | Layer::Flatten => continue,
            Layer::Dense { in_dim, .. } => return Some(vec![*in_dim]),
            Layer::Conv2d { in_ch, .. } => {
                return solve_conv_input(&layers[i..]).map(|side| vec![*in_ch, side, side])
            }
        }
    }
    None
}

/// Solves the square input side for a conv stack by walking back from the
/// first dense layer after it.
fn solve_conv_input(layers: &[Layer]) -> Option<usize> {
    // Collect the conv chain and the dense layer that pins the flat size.
    let mut convs = Vec::new();
    let mut dense_in = None;
    let mut last_out_ch = 0;
    for layer in layers {
        match layer {
            Layer::Conv2d { out_ch, kh, kw, stride, pad, .. } => {
                if kh != kw {
                    return None;
                }
                convs.push((*kh, *stride, *pad));
                last_out_ch = *out_ch;
            }
            Layer::Relu | Layer::Softplus { .. } | Layer::Flatten => continue,
            Layer::Dense { in_dim, .. } => {
                dense_in = Some(*in_dim);
                break;
            }
        }
    }
    let dense_in = dense_in?;
    if last_out_ch == 0 || dense_in % last_out_ch != 0 {
        return None;
    }
    let spatial = dense_in / last_out_ch;
    let side_out = (spatial as f64).sqrt().round() as usize;
    if side_out * side_out != spatial {
        return None;
    }
    // Invert each conv: side_in = (side_out - 1) * stride + k - 2 * pad.
    let mut side = side_out;
    for &(k, stride, pad) in convs.iter().rev() {
        let grown = (side - 1) * stride + k;
        if grown < 2 * pad {
            return None;
        }
        side = grown - 2 * pad;
    }
    // Confirm the forward pass reproduces the flat size.
    let mut check = side;
    for &(k, stride, pad) in &convs {
        check = conv_out(check, k, stride, pad)?;
    }
    (check == side_out).then_some(side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::random_dense_net;

    #[test]
    fn round_trip_dense_relu_dense() {
        let net = random_dense_net(&[3, 5, 2], 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bnet");
        save_model(&net, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(net, loaded);
        // Byte-exact round trip as well.
        assert_eq!(model_to_bytes(&net), model_to_bytes(&loaded));
    }

    #[test]
    fn round_trip_conv_net() {
        let net = Network::new(
            vec![
                Layer::Conv2d {
                    in_ch: 1,
                    out_ch: 2,
                    kh: 3,
                    kw: 3,
                    stride: 1,
                    pad: 1,
                    weight: (0..18).map(|i| i as f32 * 0.1 - 0.9).collect(),
                    bias: vec![0.1, -0.2],
                },
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense {
                    in_dim: 2 * 8 * 8,
                    out_dim: 2,
                    weight: (0..256).map(|i| (i % 11) as f32 * 0.01).collect(),
                    bias: vec![0.0, 0.0],
                },
            ],
            vec![1, 8, 8],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bnet");
        save_model(&net, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(net, loaded);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = model_to_bytes(&random_dense_net(&[2, 2], 1));
        bytes[0] = b'X';
        match model_from_bytes(&bytes).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn truncated_dense_payload_is_format_error() {
        // Declares a 2x3 dense layer but carries only 5 of 6 weights.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MODEL_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(KIND_DENSE);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        match model_from_bytes(&bytes).unwrap_err() {
            Error::Format { offset, reason } => {
                assert!(offset > 0);
                assert!(reason.contains("truncated"), "{reason}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn non_finite_weight_is_format_error() {
        let net = random_dense_net(&[2, 2], 1);
        let mut bytes = model_to_bytes(&net);
        // First weight starts after magic(8) + count(4) + kind(1) + dims(8).
        bytes[21..25].copy_from_slice(&f32::INFINITY.to_le_bytes());
        match model_from_bytes(&bytes).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 21),
            e => panic!("unexpected {e:?}"),
        }
    }
}
