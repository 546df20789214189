use bdry::attack::{AttackConfig, boundary_search_ensemble, AttackNorm};
use bdry::experiments::*;
use bdry::attribution::*;
use bdry::metrics::attribution_l2_distance;
use bdry::rng::{substream, CounterRng};
use bdry::tensor::Tensor;
use bdry::metrics::BoundingBox;

fn blobs_scaled(n: usize, seed: u64, center: f64, std: f64) -> ToyDataset {
    let mut rng = CounterRng::new(substream(seed, 0xda7a));
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let c = if label == 0 { (-center, -center) } else { (center, center) };
        inputs.push(Tensor::from_vec(vec![(c.0 + std*rng.next_normal()) as f32, (c.1 + std*rng.next_normal()) as f32]));
        labels.push(label);
    }
    ToyDataset { name: "blobs".into(), inputs, labels, boxes: None::<Vec<BoundingBox>>.into(), num_classes: 2 }
}

fn attacks(seed: u64, scale: f64) -> Vec<AttackConfig> {
    let mut pgd = AttackConfig::pgd_default(seed);
    pgd.epsilons = vec![0.25*scale, 0.5*scale, 1.0*scale, 2.0*scale, 4.0*scale];
    pgd.clip = (-6.0, 6.0);
    let mut cw = AttackConfig::cw_default(seed);
    cw.max_steps = 200; cw.clip = (-6.0, 6.0);
    vec![pgd, cw]
}

fn main() {
    for (center, std) in [(0.6, 0.3), (0.5, 0.25), (0.8, 0.4)] {
        for seed in [1u64, 2, 3] {
            let train = blobs_scaled(40, 7 + seed, center, std);
            let eval = blobs_scaled(30, 99, center, std);
            let mut line = format!("c{center} s{std} seed {seed}:");
            let mut dists = vec![];
            for robust in [None, Some(0.5)] {
                let net = train_toy(&train, &ToyArch::Dense(vec![16]), 300, 0.5, robust, AttackNorm::L2, seed).unwrap();
                let (mut dsm, mut dig, mut m) = (0.0, 0.0, 0);
                for (i, x) in eval.inputs.iter().enumerate() {
                    if net.predict(x).unwrap() != eval.labels[i] { continue; }
                    let Ok(b) = boundary_search_ensemble(&net, x, &attacks(3, center)) else { continue };
                    if !b.success { continue; }
                    let sm = saliency_map(&net, x, None).unwrap();
                    let bsm = boundary_saliency_map(&net, x, &b).unwrap();
                    let ig = integrated_gradients(&net, x, &Tensor::zeros(vec![2]), None, IgConfig{steps:20}).unwrap();
                    let big = boundary_integrated_gradients(&net, x, &b, IgConfig{steps:20}).unwrap();
                    dsm += attribution_l2_distance(&sm.values, &bsm.values).unwrap();
                    dig += attribution_l2_distance(&ig.values, &big.values).unwrap();
                    m += 1;
                }
                line += &format!(" | {:?}: sm {:.3} ig {:.3} n{}", robust.map(|_|"rob").unwrap_or("std"), dsm/m as f64, dig/m as f64, m);
                dists.push((dsm/m as f64, dig/m as f64));
            }
            let ok = dists[1].0 < dists[0].0 && dists[1].1 < dists[0].1;
            println!("{line} | {}", if ok { "OK" } else { "X" });
        }
    }
}
