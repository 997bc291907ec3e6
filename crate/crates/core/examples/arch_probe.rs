use rotavg_core::baselines::*;
use rotavg_core::eval;
use rotavg_core::graph::spt_initialize;
use rotavg_core::mpnn::{infer, ModelArch};
use rotavg_core::synth::{DatasetSpec, SynthConfig, generate};
use rotavg_core::train::{train, LossAggregation, LrSchedule, TrainConfig};
use rotavg_core::ViewGraph;

fn make(count: usize, seed: u64) -> Vec<ViewGraph> {
    let spec = DatasetSpec {
        template: SynthConfig {
            node_count: 100, base_connectivity: 3, long_edge_prob: 0.02,
            noise_sigma_deg: 5.0, outlier_fraction: 0.15, seed,
        },
        count, node_count_min: 100, node_count_max: 250,
    };
    (0..count).map(|i| generate(&spec.graph_config(i)).unwrap().graph).collect()
}

fn main() {
    let train_graphs = make(60, 1000);
    let val_graphs = make(10, 9000);
    let arch = ModelArch {
        message_hidden: vec![96, 96],
        message_dim: 48,
        attention_hidden: vec![32],
        readout_hidden: vec![96],
    };
    let cfg = TrainConfig {
        epochs: 25, rounds: 8, absolute_weight: 0.25, learning_rate: 2e-3,
        lr_schedule: LrSchedule::Cosine, loss_aggregation: LossAggregation::Mean,
        gauge_augmentation: false, seed: 7,
    };
    let t0 = std::time::Instant::now();
    let out = train(&train_graphs, &val_graphs, &arch, &cfg).unwrap();
    println!("train {:.0}s", t0.elapsed().as_secs_f64());
    let mut pool = Vec::new();
    let mut e_wei = Vec::new();
    for g in &val_graphs {
        let truth = g.ground_truth.clone().unwrap();
        let net = infer(g, &out.checkpoint.model).unwrap();
        pool.extend(eval::aligned_errors_deg(&net, &truth).unwrap());
        let init = spt_initialize(g).unwrap();
        let w = weiszfeld_l1(g, &init, 100, 1e-4).unwrap();
        e_wei.extend(eval::aligned_errors_deg(&w.values, &truth).unwrap());
    }
    let n = pool.len() as f64;
    println!("big-arch net: med {:.3} mean {:.2} %>30 {:.2} | wei med {:.3}",
        eval::median(&pool), pool.iter().sum::<f64>() / n,
        100.0 * pool.iter().filter(|&&x| x > 30.0).count() as f64 / n, eval::median(&e_wei));
}
