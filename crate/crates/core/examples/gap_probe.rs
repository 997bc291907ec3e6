use rotavg_core::eval;
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
    let augment: bool = a[1].parse().unwrap();
    let train_graphs = make(60, 1000, 3, 0.02);
    let val_graphs = make(10, 9000, 3, 0.02);
    let cfg = TrainConfig {
        epochs: 25, rounds: 8, absolute_weight: 0.25, learning_rate: 2e-3,
        lr_schedule: LrSchedule::Cosine, loss_aggregation: LossAggregation::Mean,
        gauge_augmentation: augment, seed: 7,
    };
    let out = train(&train_graphs, &val_graphs, &ModelArch::default(), &cfg).unwrap();
    let pool_med = |graphs: &[ViewGraph]| {
        let mut pool = Vec::new();
        for g in graphs {
            let truth = g.ground_truth.clone().unwrap();
            let net = infer(g, &out.checkpoint.model).unwrap();
            pool.extend(eval::aligned_errors_deg(&net, &truth).unwrap());
        }
        eval::median(&pool)
    };
    println!("augment={augment}: train-set med {:.3}, val med {:.3}",
        pool_med(&train_graphs[..10]), pool_med(&val_graphs));
}
