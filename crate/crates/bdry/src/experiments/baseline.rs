//! Baseline-sensitivity study: fixed black/white IG baselines versus the
//! boundary baseline, with a counterfactual patch-masking check.

use rayon::prelude::*;

use crate::attribution::{boundary_integrated_gradients, integrated_gradients, IgConfig};
use crate::error::{Error, Result};
use crate::experiments::{instance_boundary, ExperimentReport, StudyParams, ToyDataset, TwoPatchInfo};
use crate::metrics::{energy_game, BoundingBox, PixelAttribution};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Columns reported per instance: the energy-game score of IG(black),
/// IG(white), and BIG on the causally relevant patch; whether BIG beats IG
/// under the adversarially chosen same-color baseline; and whether masking
/// each method's top-ranked patch flips the prediction.
const COLUMNS: [&str; 6] =
    ["eg_ig_black", "eg_ig_white", "eg_big", "big_beats_same", "flip_big", "flip_ig_black"];

/// Runs the two-patch suite. The "same-color" baseline is white for
/// instances whose relevant patch is white and black otherwise, the setting
/// where the IG term `(x - x_b)` vanishes on the relevant patch.
pub fn run_baseline_sensitivity(
    net: &Network,
    dataset: &ToyDataset,
    info: &TwoPatchInfo,
    params: &StudyParams,
    config_echo: String,
) -> Result<ExperimentReport> {
    let boxes = dataset
        .boxes
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("two-patch dataset must carry boxes".into()))?;
    let mut report =
        ExperimentReport::new("baseline-sensitivity", "method", &COLUMNS, config_echo);

    let outcomes: Vec<Result<Vec<f64>>> = dataset
        .inputs
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<Vec<f64>> {
            if net.predict(x)? != dataset.labels[idx] {
                return Err(Error::InvalidInput("misclassified".into()));
            }
            let relevant = boxes[idx];
            let distractor = info.distractor[idx];
            let ig_cfg = IgConfig { steps: params.ig_steps };

            let black = Tensor::zeros(x.shape().to_vec());
            let white = Tensor::new(x.shape().to_vec(), vec![1.0; x.len()]).unwrap();
            let ig_black = integrated_gradients(net, x, &black, None, ig_cfg)?;
            let ig_white = integrated_gradients(net, x, &white, None, ig_cfg)?;
            let boundary = instance_boundary(net, x, params)?;
            let big = boundary_integrated_gradients(net, x, &boundary, ig_cfg)?;

            let eg_black = eg_or_zero(&ig_black.values, &relevant)?;
            let eg_white = eg_or_zero(&ig_white.values, &relevant)?;
            let eg_big = eg_or_zero(&big.values, &relevant)?;
            let eg_same = if info.relevant_is_white[idx] { eg_white } else { eg_black };
            let big_beats_same = f64::from(eg_big > eg_same);

            let flip_big = flips_when_masking_top(net, x, &big.values, &relevant, &distractor, info)?;
            let flip_black =
                flips_when_masking_top(net, x, &ig_black.values, &relevant, &distractor, info)?;
            Ok(vec![
                eg_black,
                eg_white,
                eg_big,
                big_beats_same,
                f64::from(flip_big),
                f64::from(flip_black),
            ])
        })
        .collect();

    for (idx, outcome) in outcomes.into_iter().enumerate() {
        let id = dataset.id(idx);
        match outcome {
            Ok(values) => {
                report.push_row(&id, "baseline", values);
                report.evaluated += 1;
            }
            Err(e) => report.skip(&id, &e.to_string()),
        }
    }
    report.finish_summary();
    Ok(report)
}

/// Energy-game score, with an all-nonpositive map scored as zero: such a map
/// localizes nothing.
fn eg_or_zero(values: &Tensor, bbox: &BoundingBox) -> Result<f64> {
    let pixels = PixelAttribution::from_tensor(values)?;
    match energy_game(&pixels, bbox) {
        Ok(v) => Ok(v),
        Err(Error::UndefinedMetric(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Masks the patch the attribution ranks highest (by summed score inside
/// each planted rectangle) to the background gray and reports whether the
/// prediction flips.
fn flips_when_masking_top(
    net: &Network,
    x: &Tensor,
    values: &Tensor,
    relevant: &BoundingBox,
    distractor: &BoundingBox,
    info: &TwoPatchInfo,
) -> Result<bool> {
    let pixels = PixelAttribution::from_tensor(values)?;
    let top = if patch_mass(&pixels, relevant) >= patch_mass(&pixels, distractor) {
        relevant
    } else {
        distractor
    };
    let mut masked = x.clone();
    let (h, w) = (x.shape()[1], x.shape()[2]);
    debug_assert_eq!(x.shape()[0], 1);
    for y in top.y_min..top.y_max.min(h) {
        for xx in top.x_min..top.x_max.min(w) {
            masked.data_mut()[y * w + xx] = info.background;
        }
    }
    Ok(net.predict(&masked)? != net.predict(x)?)
}

fn patch_mass(pixels: &PixelAttribution, bbox: &BoundingBox) -> f64 {
    let mut sum = 0.0f64;
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            sum += pixels.values()[y * pixels.width() + x] as f64;
        }
    }
    sum
}
