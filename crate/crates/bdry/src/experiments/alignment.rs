//! Alignment study: distances between attributions and their boundary
//! variants, per network.

use rayon::prelude::*;

use crate::error::Result;
use crate::experiments::{
    attribution_by_name, instance_boundary, ExperimentReport, StudyParams, ToyDataset,
};
use crate::metrics::attribution_l2_distance;
use crate::nn::Network;

/// For every labeled network and every correctly classified instance,
/// reports `||SM - BSM||`, `||IG - AGI||`, and `||IG - BIG||` (IG uses the
/// zero baseline). Misclassified instances and boundary-search failures are
/// skipped with a reason; the summary holds per-network means.
pub fn run_alignment(
    nets: &[(String, Network)],
    dataset: &ToyDataset,
    params: &StudyParams,
    config_echo: String,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(
        "alignment",
        "net",
        &["sm_bsm", "ig_agi", "ig_big"],
        config_echo,
    );
    for (label, net) in nets {
        let outcomes: Vec<Result<Vec<f64>>> = dataset
            .inputs
            .par_iter()
            .enumerate()
            .map(|(idx, x)| -> Result<Vec<f64>> {
                if net.predict(x)? != dataset.labels[idx] {
                    return Err(crate::error::Error::InvalidInput("misclassified".into()));
                }
                let boundary = instance_boundary(net, x, params)?;
                let sm = attribution_by_name(net, x, "sm", None, params, idx)?;
                let bsm = attribution_by_name(net, x, "bsm", Some(&boundary), params, idx)?;
                let ig = attribution_by_name(net, x, "ig", None, params, idx)?;
                let big = attribution_by_name(net, x, "big", Some(&boundary), params, idx)?;
                let agi = attribution_by_name(net, x, "agi", None, params, idx)?;
                Ok(vec![
                    attribution_l2_distance(&sm.values, &bsm.values)?,
                    attribution_l2_distance(&ig.values, &agi.values)?,
                    attribution_l2_distance(&ig.values, &big.values)?,
                ])
            })
            .collect();
        for (idx, outcome) in outcomes.into_iter().enumerate() {
            let id = dataset.id(idx);
            match outcome {
                Ok(values) => {
                    report.push_row(&id, label, values);
                    report.evaluated += 1;
                }
                Err(e) => report.skip(&format!("{id}/{label}"), &e.to_string()),
            }
        }
    }
    report.finish_summary();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackConfig;
    use crate::experiments::{synth_dataset, DatasetKind, StudyParams};
    use crate::nn::Layer;

    fn linear_pair() -> (String, Network) {
        let net = Network::new(
            vec![Layer::dense(
                vec![vec![-1.0, -1.0], vec![1.0, 1.0]],
                vec![0.0, 0.0],
            )],
            vec![2],
        )
        .unwrap();
        ("linear".to_string(), net)
    }

    fn wide_attacks(seed: u64) -> Vec<AttackConfig> {
        let mut pgd = AttackConfig::pgd_default(seed);
        pgd.epsilons = vec![0.5, 1.0, 2.0, 4.0];
        pgd.clip = (-6.0, 6.0);
        let mut cw = AttackConfig::cw_default(seed);
        cw.clip = (-6.0, 6.0);
        cw.max_steps = 200;
        vec![pgd, cw]
    }

    #[test]
    fn linear_model_aligns_exactly() {
        let ds = synth_dataset(DatasetKind::Blobs2d, 10, 3).unwrap();
        let params = StudyParams::new(wide_attacks(1), 5);
        let report = run_alignment(&[linear_pair()], &ds, &params, String::new()).unwrap();
        let (evaluated, skipped) = report.instance_accounting();
        assert_eq!(evaluated + skipped, ds.len());
        let mean = report.mean_of("linear", "sm_bsm").unwrap();
        assert!(mean <= 1e-6, "sm-bsm mean {mean}");
    }

    #[test]
    fn empty_report_on_empty_slice() {
        let mut ds = synth_dataset(DatasetKind::Blobs2d, 2, 3).unwrap();
        ds.inputs.clear();
        ds.labels.clear();
        let params = StudyParams::new(wide_attacks(1), 5);
        let report = run_alignment(&[linear_pair()], &ds, &params, String::new()).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.instance_accounting(), (0, 0));
    }
}
