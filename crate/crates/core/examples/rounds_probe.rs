use rotavg_core::baselines::*;
use rotavg_core::eval;
use rotavg_core::graph::spt_initialize;
use rotavg_core::mpnn::{infer, ModelArch};
use rotavg_core::synth::{DatasetSpec, SynthConfig, generate};
use rotavg_core::train::{train, LossAggregation, LrSchedule, TrainConfig};
use rotavg_core::ViewGraph;

fn make(count: usize, seed: u64, k: usize, chord: f64) -> Vec<ViewGraph> {
    let spec = DatasetSpec {
        template: SynthConfig {
            node_count: 100, base_connectivity: k, long_edge_prob: chord,
            noise_sigma_deg: 5.0, outlier_fraction: 0.15, seed,
        },
        count, node_count_min: 100, node_count_max: 250,
    };
    (0..count).map(|i| generate(&spec.graph_config(i)).unwrap().graph).collect()
}

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let count: usize = a[1].parse().unwrap();
    let epochs: usize = a[2].parse().unwrap();
    let k: usize = a[3].parse().unwrap();
    let chord: f64 = a[4].parse().unwrap();
    let train_rounds: usize = a[5].parse().unwrap();

    let train_graphs = make(count, 1000, k, chord);
    let val_graphs = make(10, 9000, k, chord);
    let cfg = TrainConfig {
        epochs, rounds: train_rounds, absolute_weight: 0.25, learning_rate: 2e-3,
        lr_schedule: LrSchedule::Cosine, loss_aggregation: LossAggregation::Mean, gauge_augmentation: true, seed: 7,
    };
    let out = train(&train_graphs, &val_graphs, &ModelArch::default(), &cfg).unwrap();

    let med_of = |pool: &[f64]| eval::median(pool);
    let mut e_wei = Vec::new();
    for g in &val_graphs {
        let truth = g.ground_truth.clone().unwrap();
        let init = spt_initialize(g).unwrap();
        let w = weiszfeld_l1(g, &init, 100, 1e-4).unwrap();
        e_wei.extend(eval::aligned_errors_deg(&w.values, &truth).unwrap());
    }
    println!("weiszfeld med {:.3}", med_of(&e_wei));
    for infer_rounds in [train_rounds, train_rounds + 4, 2 * train_rounds, 3 * train_rounds, 6 * train_rounds] {
        let mut model = out.checkpoint.model.clone();
        model.rounds = infer_rounds;
        let mut pool = Vec::new();
        for g in &val_graphs {
            let truth = g.ground_truth.clone().unwrap();
            let net = infer(g, &model).unwrap();
            pool.extend(eval::aligned_errors_deg(&net, &truth).unwrap());
        }
        let n = pool.len() as f64;
        println!("infer rounds {infer_rounds:3}: med {:.3} mean {:.2} %>30 {:.2}",
            med_of(&pool), pool.iter().sum::<f64>() / n,
            100.0 * pool.iter().filter(|&&x| x > 30.0).count() as f64 / n);
    }
}
