//! Correlation study: does alignment with the boundary variant predict
//! localization quality?

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::{
    attribution_by_name, instance_boundary, ExperimentReport, StudyParams, ToyDataset,
};
use crate::metrics::{attribution_l2_distance, pearson_correlation, score_instance, PixelAttribution};
use crate::nn::Network;

/// Pearson coefficients of one attribution pair against the four
/// localization metrics of the pair's base method. `None` marks a
/// zero-variance column, flagged rather than reported.
#[derive(Debug, Clone)]
pub struct CorrelationRow {
    pub pair: String,
    pub coefficients: [Option<f64>; 4],
}

const PAIRS: [(&str, &str, &str); 3] =
    [("sm_bsm", "sm", "bsm"), ("ig_agi", "ig", "agi"), ("ig_big", "ig", "big")];

/// For each pair X-Y in {SM-BSM, IG-AGI, IG-BIG}: per instance, the
/// alignment `-||X - Y||` and the localization scores of X; then the Pearson
/// coefficient of alignment against each score column. Needs at least three
/// evaluable instances.
pub fn run_correlation(
    net: &Network,
    dataset: &ToyDataset,
    params: &StudyParams,
    config_echo: String,
) -> Result<(ExperimentReport, Vec<CorrelationRow>)> {
    let boxes = dataset
        .boxes
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("correlation needs a dataset with boxes".into()))?;
    let mut report = ExperimentReport::new(
        "correlation",
        "pair",
        &["alignment", "loc", "eg", "pp", "con"],
        config_echo,
    );

    type InstanceData = Vec<(String, Vec<f64>)>;
    let outcomes: Vec<Result<InstanceData>> = dataset
        .inputs
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<InstanceData> {
            if net.predict(x)? != dataset.labels[idx] {
                return Err(Error::InvalidInput("misclassified".into()));
            }
            let boundary = instance_boundary(net, x, params)?;
            let mut rows = Vec::new();
            for (pair, base, variant) in PAIRS {
                let base_map = attribution_by_name(net, x, base, Some(&boundary), params, idx)?;
                let variant_map =
                    attribution_by_name(net, x, variant, Some(&boundary), params, idx)?;
                let alignment = -attribution_l2_distance(&base_map.values, &variant_map.values)?;
                let pixels = PixelAttribution::from_tensor(&base_map.values)?;
                let scores = score_instance(&dataset.id(idx), base, &pixels, &boxes[idx])?;
                rows.push((
                    pair.to_string(),
                    vec![alignment, scores.loc, scores.eg, scores.pp, scores.con],
                ));
            }
            Ok(rows)
        })
        .collect();

    for (idx, outcome) in outcomes.into_iter().enumerate() {
        let id = dataset.id(idx);
        match outcome {
            Ok(rows) => {
                for (pair, values) in rows {
                    report.push_row(&id, &pair, values);
                }
                report.evaluated += 1;
            }
            Err(e) => report.skip(&id, &e.to_string()),
        }
    }
    if report.evaluated < 3 {
        return Err(Error::InvalidInput(format!(
            "correlation needs >= 3 evaluable instances, got {}",
            report.evaluated
        )));
    }
    report.finish_summary();

    let mut correlations = Vec::new();
    let mut flags = Vec::new();
    for (pair, _, _) in PAIRS {
        let columns: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                report
                    .rows
                    .iter()
                    .filter(|r| r.key == pair)
                    .map(|r| r.values[i])
                    .collect()
            })
            .collect();
        let mut coefficients = [None; 4];
        for (metric_idx, slot) in coefficients.iter_mut().enumerate() {
            match pearson_correlation(&columns[0], &columns[metric_idx + 1]) {
                Ok(c) => *slot = Some(c),
                Err(Error::UndefinedMetric(_)) => {
                    flags.push((format!("pearson/{pair}/{metric_idx}"), "zero variance"));
                }
                Err(e) => return Err(e),
            }
        }
        correlations.push(CorrelationRow { pair: pair.to_string(), coefficients });
    }
    for (id, reason) in flags {
        report.skip(&id, reason);
    }
    Ok((report, correlations))
}

/// CSV for the coefficient table: `pair,loc,eg,pp,con`, `na` for flagged
/// zero-variance columns.
pub fn correlations_csv(rows: &[CorrelationRow]) -> String {
    let mut s = String::from("pair,loc,eg,pp,con\n");
    for row in rows {
        s.push_str(&row.pair);
        for c in &row.coefficients {
            match c {
                Some(v) => s.push_str(&format!(",{v:.6}")),
                None => s.push_str(",na"),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson_correlation;

    #[test]
    fn planted_monotone_relation_is_detected() {
        // Alignment and Loc both monotone in a planted parameter t.
        let t: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let alignment: Vec<f64> = t.iter().map(|v| -1.0 + 0.9 * v).collect();
        let loc: Vec<f64> = t.iter().map(|v| 0.2 + 0.7 * v * v).collect();
        let c = pearson_correlation(&alignment, &loc).unwrap();
        assert!(c >= 0.9, "coefficient {c}");
    }

    #[test]
    fn identical_alignments_flag_zero_variance() {
        let alignment = vec![1.0, 1.0, 1.0, 1.0];
        let loc = vec![0.1, 0.4, 0.2, 0.9];
        assert!(matches!(
            pearson_correlation(&alignment, &loc),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn two_instances_are_too_few() {
        let net = crate::nn::random_dense_net(&[2, 4, 2], 1);
        let mut ds = crate::experiments::synth_dataset(
            crate::experiments::DatasetKind::Blobs2d,
            2,
            3,
        )
        .unwrap();
        ds.boxes = Some(vec![
            crate::metrics::BoundingBox::new(0, 0, 1, 1).unwrap(),
            crate::metrics::BoundingBox::new(0, 0, 1, 1).unwrap(),
        ]);
        let params = StudyParams::new(vec![crate::attack::AttackConfig::pgd_default(0)], 1);
        assert!(run_correlation(&net, &ds, &params, String::new()).is_err());
    }
}
