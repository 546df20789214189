//! Localization study: bounding-box metrics per attribution method.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::{
    attribution_by_name, instance_boundary, needs_boundary, ExperimentReport, StudyParams,
    ToyDataset,
};
use crate::metrics::{score_instance, PixelAttribution};
use crate::nn::Network;

/// Scores every requested method on every correctly classified instance
/// against its ground-truth box: localization, energy game, positive
/// percentage, concentration. Misclassified instances, boundary failures,
/// and undefined metrics become skip entries; the summary carries per-method
/// means in the usual table layout.
pub fn run_localization(
    net: &Network,
    dataset: &ToyDataset,
    methods: &[String],
    params: &StudyParams,
    config_echo: String,
) -> Result<ExperimentReport> {
    let boxes = dataset
        .boxes
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("localization needs a dataset with boxes".into()))?;
    let mut report =
        ExperimentReport::new("localization", "method", &["loc", "eg", "pp", "con"], config_echo);
    let wants_boundary = methods.iter().any(|m| needs_boundary(m));

    type InstanceOutcome = Vec<(String, Result<Vec<f64>>)>;
    let outcomes: Vec<Result<InstanceOutcome>> = dataset
        .inputs
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<InstanceOutcome> {
            if net.predict(x)? != dataset.labels[idx] {
                return Err(Error::InvalidInput("misclassified".into()));
            }
            let boundary = if wants_boundary {
                Some(instance_boundary(net, x, params)?)
            } else {
                None
            };
            let mut per_method = Vec::new();
            for method in methods {
                let scored = attribution_by_name(net, x, method, boundary.as_ref(), params, idx)
                    .and_then(|map| {
                        let pixels = PixelAttribution::from_tensor(&map.values)?;
                        let row = score_instance(&dataset.id(idx), method, &pixels, &boxes[idx])?;
                        Ok(vec![row.loc, row.eg, row.pp, row.con])
                    });
                per_method.push((method.clone(), scored));
            }
            Ok(per_method)
        })
        .collect();

    for (idx, outcome) in outcomes.into_iter().enumerate() {
        let id = dataset.id(idx);
        match outcome {
            Ok(per_method) => {
                let mut any = false;
                for (method, scored) in per_method {
                    match scored {
                        Ok(values) => {
                            report.push_row(&id, &method, values);
                            any = true;
                        }
                        Err(e) => report.skip(&format!("{id}/{method}"), &e.to_string()),
                    }
                }
                if any {
                    report.evaluated += 1;
                } else {
                    report.skip(&id, "all methods undefined");
                }
            }
            Err(e) => report.skip(&id, &e.to_string()),
        }
    }
    report.finish_summary();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{synth_dataset, train_toy, DatasetKind, StudyParams, ToyArch};
    use crate::metrics::{energy_game, localization, positive_percentage, BoundingBox};

    #[test]
    fn indicator_map_scores_perfectly() {
        // An attribution equal to the ground-truth patch indicator.
        let mut values = vec![0.0f32; 64];
        let b = BoundingBox::new(2, 3, 5, 6).unwrap();
        for y in b.y_min..b.y_max {
            for x in b.x_min..b.x_max {
                values[y * 8 + x] = 1.0;
            }
        }
        let attr = PixelAttribution::new(values, 8, 8).unwrap();
        assert_eq!(localization(&attr, &b).unwrap(), 1.0);
        assert_eq!(energy_game(&attr, &b).unwrap(), 1.0);
        assert_eq!(positive_percentage(&attr, &b).unwrap(), 1.0);
    }

    #[test]
    fn uniform_positive_map_gets_area_ratio_energy() {
        let attr = PixelAttribution::new(vec![0.5; 64], 8, 8).unwrap();
        let b = BoundingBox::new(0, 0, 4, 4).unwrap();
        let eg = energy_game(&attr, &b).unwrap();
        assert!((eg - 16.0 / 64.0).abs() < 1e-9);
    }

    #[test]
    fn pipeline_produces_rows_for_gradient_methods() {
        let ds = synth_dataset(DatasetKind::Patches8x8, 10, 3).unwrap();
        let net = train_toy(
            &ds,
            &ToyArch::Dense(vec![16]),
            80,
            0.3,
            None,
            crate::attack::AttackNorm::L2,
            2,
        )
        .unwrap();
        let params = StudyParams::new(vec![], 7);
        let methods = vec!["sm".to_string(), "gti".to_string(), "ig".to_string()];
        let report = run_localization(&net, &ds, &methods, &params, String::new()).unwrap();
        let (evaluated, skipped) = report.instance_accounting();
        assert_eq!(evaluated + skipped, ds.len());
        assert!(report.mean_of("ig", "eg").is_some());
    }
}
