use rotavg_core::baselines::*;
use rotavg_core::eval;
use rotavg_core::graph::spt_initialize;
use rotavg_core::synth::{DatasetSpec, SynthConfig, generate};
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
    for (k, chord) in [(2usize, 0.005), (2, 0.002), (1, 0.01), (2, 0.01), (3, 0.005)] {
        let graphs = make(10, 4242, k, chord);
        let deg = graphs.iter().map(|g| 2.0 * g.edges().len() as f64 / g.node_count() as f64).sum::<f64>() / 10.0;
        let mut pools: Vec<(&str, Vec<f64>)> = vec![("init", vec![]), ("wei", vec![]), ("irls", vec![])];
        for g in &graphs {
            let truth = g.ground_truth.clone().unwrap();
            let init = spt_initialize(g).unwrap();
            pools[0].1.extend(eval::aligned_errors_deg(&init, &truth).unwrap());
            let w = weiszfeld_l1(g, &init, 100, 1e-4).unwrap();
            pools[1].1.extend(eval::aligned_errors_deg(&w.values, &truth).unwrap());
            let ir = irls_average(g, &init, &[RobustCost::L1, RobustCost::LHalf], 100, 1e-4).unwrap();
            pools[2].1.extend(eval::aligned_errors_deg(&ir.values, &truth).unwrap());
        }
        print!("k={k} chord={chord} deg {deg:.1}: ");
        for (name, e) in &pools {
            let n = e.len() as f64;
            print!("{name} {:.2}/{:.2}/{:.2}  ", e.iter().sum::<f64>() / n, eval::median(e),
                100.0 * e.iter().filter(|&&x| x > 30.0).count() as f64 / n);
        }
        println!();
    }
}
