use rotavg_core::baselines::*;
use rotavg_core::eval;
use rotavg_core::graph::spt_initialize;
use rotavg_core::mpnn::{infer, ModelArch};
use rotavg_core::synth::{DatasetSpec, SynthConfig, generate};
use rotavg_core::train::{train, LossAggregation, LrSchedule, TrainConfig};
use rotavg_core::ViewGraph;

fn make(count: usize, seed: u64, nmin: usize, nmax: usize, k: usize, chord: f64, sigma: f64, p: f64) -> Vec<ViewGraph> {
    let spec = DatasetSpec {
        template: SynthConfig {
            node_count: nmin, base_connectivity: k, long_edge_prob: chord,
            noise_sigma_deg: sigma, outlier_fraction: p, seed,
        },
        count, node_count_min: nmin, node_count_max: nmax,
    };
    (0..count).map(|i| generate(&spec.graph_config(i)).unwrap().graph).collect()
}

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let count: usize = a[1].parse().unwrap();
    let epochs: usize = a[2].parse().unwrap();
    let k: usize = a[3].parse().unwrap();
    let chord: f64 = a[4].parse().unwrap();
    let rounds: usize = a[5].parse().unwrap();
    let lr: f64 = a[6].parse().unwrap();
    let sigma: f64 = a.get(7).map_or(5.0, |s| s.parse().unwrap());
    let final_loss: bool = a.get(9).map_or(false, |s| s.parse().unwrap());
    let p: f64 = a.get(8).map_or(0.15, |s| s.parse().unwrap());

    let train_graphs = make(count, 1000, 100, 250, k, chord, sigma, p);
    let val_graphs = make(10, 9000, 100, 250, k, chord, sigma, p);
    let mean_edges = train_graphs.iter().map(|g| g.edges().len()).sum::<usize>() / count;
    println!("cfg: {count} graphs, {epochs} ep, k={k} chord={chord} rounds={rounds} lr={lr} sigma={sigma} p={p}; avg edges {mean_edges}");
    let cfg = TrainConfig {
        epochs, rounds, absolute_weight: 0.25, learning_rate: lr,
        lr_schedule: LrSchedule::Cosine, loss_aggregation: if final_loss { LossAggregation::Final } else { LossAggregation::Mean }, gauge_augmentation: false, seed: 7,
    };
    let t0 = std::time::Instant::now();
    let out = train(&train_graphs, &val_graphs, &ModelArch::default(), &cfg).unwrap();
    println!("train: {:.0}s best {:?}", t0.elapsed().as_secs_f64(), out.best_epoch);

    let mut pools: Vec<(&str, Vec<f64>)> = vec![("init", vec![]), ("net", vec![]), ("wei", vec![]), ("irls", vec![])];
    for g in &val_graphs {
        let truth = g.ground_truth.clone().unwrap();
        let init = spt_initialize(g).unwrap();
        pools[0].1.extend(eval::aligned_errors_deg(&init, &truth).unwrap());
        let net = infer(g, &out.checkpoint.model).unwrap();
        pools[1].1.extend(eval::aligned_errors_deg(&net, &truth).unwrap());
        let w = weiszfeld_l1(g, &init, 100, 1e-4).unwrap();
        pools[2].1.extend(eval::aligned_errors_deg(&w.values, &truth).unwrap());
        let ir = irls_average(g, &init, &[RobustCost::L1, RobustCost::LHalf], 100, 1e-4).unwrap();
        pools[3].1.extend(eval::aligned_errors_deg(&ir.values, &truth).unwrap());
    }
    for (name, e) in &pools {
        let n = e.len() as f64;
        let mut s = e.clone();
        s.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let q = |f: f64| s[((n - 1.0) * f) as usize];
        println!("{name:5} mean {:6.2} med {:6.3} p90 {:6.2} %>30 {:5.2}",
            e.iter().sum::<f64>() / n, eval::median(e), q(0.9),
            100.0 * e.iter().filter(|&&x| x > 30.0).count() as f64 / n);
    }
    for row in out.log.iter().step_by(5.max(epochs / 8)) {
        println!("  ep {}: loss {:.5} val_med {:.3}", row.epoch, row.train_loss, row.val.unwrap().median_deg);
    }
}
