//! Deterministic synthetic datasets.

use crate::error::{Error, Result};
use crate::metrics::BoundingBox;
use crate::rng::{substream, CounterRng};
use crate::tensor::Tensor;

/// Inputs, labels, and (for image-like kinds) ground-truth boxes.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub name: String,
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub boxes: Option<Vec<BoundingBox>>,
    pub num_classes: usize,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Stable per-instance identifiers `i0000`, `i0001`, ...
    pub fn id(&self, index: usize) -> String {
        format!("i{index:04}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs2d,
    Rings2d,
    Patches8x8,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "blobs2d" => Ok(DatasetKind::Blobs2d),
            "rings2d" => Ok(DatasetKind::Rings2d),
            "patches8x8" => Ok(DatasetKind::Patches8x8),
            other => Err(Error::Config(format!("unknown dataset kind '{other}'"))),
        }
    }
}

/// Builds a synthetic dataset. Labels alternate so every prefix is balanced;
/// the same `(kind, n, seed)` always produces bitwise-identical data.
pub fn synth_dataset(kind: DatasetKind, n: usize, seed: u64) -> Result<ToyDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("dataset size must be >= 1".into()));
    }
    let mut rng = CounterRng::new(substream(seed, 0xda7a));
    match kind {
        DatasetKind::Blobs2d => {
            let mut inputs = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let label = i % 2;
                let center = if label == 0 { (-1.0, -1.0) } else { (1.0, 1.0) };
                inputs.push(Tensor::from_vec(vec![
                    (center.0 + 0.5 * rng.next_normal()) as f32,
                    (center.1 + 0.5 * rng.next_normal()) as f32,
                ]));
                labels.push(label);
            }
            Ok(ToyDataset { name: "blobs2d".into(), inputs, labels, boxes: None, num_classes: 2 })
        }
        DatasetKind::Rings2d => {
            let mut inputs = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let label = i % 2;
                let radius = if label == 0 {
                    rng.next_range(0.0, 0.8)
                } else {
                    rng.next_range(1.2, 2.0)
                };
                let angle = rng.next_range(0.0, std::f64::consts::TAU);
                inputs.push(Tensor::from_vec(vec![
                    (radius * angle.cos()) as f32,
                    (radius * angle.sin()) as f32,
                ]));
                labels.push(label);
            }
            Ok(ToyDataset { name: "rings2d".into(), inputs, labels, boxes: None, num_classes: 2 })
        }
        DatasetKind::Patches8x8 => {
            let mut inputs = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            let mut boxes = Vec::with_capacity(n);
            for i in 0..n {
                let label = i % 2;
                // Class-correlated bright 3x3 patch: left half for class 0,
                // right half for class 1. The patch rectangle is the box.
                let px = if label == 0 { rng.next_index(3) } else { 3 + rng.next_index(3) };
                let py = rng.next_index(6);
                let mut img = vec![0.0f32; 64];
                for v in img.iter_mut() {
                    *v = rng.next_range(0.0, 0.2) as f32;
                }
                for y in py..py + 3 {
                    for x in px..px + 3 {
                        img[y * 8 + x] = rng.next_range(0.8, 1.0) as f32;
                    }
                }
                inputs.push(Tensor::new(vec![1, 8, 8], img).unwrap());
                labels.push(label);
                boxes.push(BoundingBox::new(px, py, px + 3, py + 3).unwrap());
            }
            Ok(ToyDataset {
                name: "patches8x8".into(),
                inputs,
                labels,
                boxes: Some(boxes),
                num_classes: 2,
            })
        }
    }
}

/// Per-instance extras for the two-patch baseline-sensitivity suite.
#[derive(Debug, Clone)]
pub struct TwoPatchInfo {
    /// Box of the polarity-opposed distractor patch.
    pub distractor: Vec<BoundingBox>,
    /// Whether the causally relevant patch is white (1.0) rather than black
    /// (0.0) on the 0.5 background.
    pub relevant_is_white: Vec<bool>,
    /// Background gray level used for masking.
    pub background: f32,
}

/// Two planted 3x3 patches of opposite polarity on a mid-gray 8x8 image.
/// The class is carried by the relevant patch's horizontal position (left
/// half class 0, right half class 1); the distractor's position carries no
/// label information. The relevant patch's polarity alternates across
/// instances so both colors appear in both classes.
pub fn two_patch_dataset(n: usize, seed: u64) -> Result<(ToyDataset, TwoPatchInfo)> {
    if n == 0 {
        return Err(Error::InvalidInput("dataset size must be >= 1".into()));
    }
    let mut rng = CounterRng::new(substream(seed, 0x2b0c));
    let background = 0.5f32;
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut boxes = Vec::with_capacity(n);
    let mut distractor = Vec::with_capacity(n);
    let mut relevant_is_white = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let white = (i / 2) % 2 == 0;
        let rx = if label == 0 { rng.next_index(3) } else { 3 + rng.next_index(3) };
        let ry = rng.next_index(6);
        // Distractor anywhere that does not overlap the relevant patch.
        let (dx, dy) = loop {
            let dx = rng.next_index(6);
            let dy = rng.next_index(6);
            if dx + 3 <= rx || rx + 3 <= dx || dy + 3 <= ry || ry + 3 <= dy {
                break (dx, dy);
            }
        };
        let mut img = vec![background; 64];
        let rel_value = if white { 1.0 } else { 0.0 };
        let dis_value = if white { 0.0 } else { 1.0 };
        for y in ry..ry + 3 {
            for x in rx..rx + 3 {
                img[y * 8 + x] = rel_value;
            }
        }
        for y in dy..dy + 3 {
            for x in dx..dx + 3 {
                img[y * 8 + x] = dis_value;
            }
        }
        inputs.push(Tensor::new(vec![1, 8, 8], img).unwrap());
        labels.push(label);
        boxes.push(BoundingBox::new(rx, ry, rx + 3, ry + 3).unwrap());
        distractor.push(BoundingBox::new(dx, dy, dx + 3, dy + 3).unwrap());
        relevant_is_white.push(white);
    }
    Ok((
        ToyDataset {
            name: "twopatch8x8".into(),
            inputs,
            labels,
            boxes: Some(boxes),
            num_classes: 2,
        },
        TwoPatchInfo { distractor, relevant_is_white, background },
    ))
}
