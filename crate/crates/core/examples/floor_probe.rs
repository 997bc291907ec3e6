use rotavg_core::baselines::*;
use rotavg_core::eval;
use rotavg_core::graph::spt_initialize;
use rotavg_core::synth::{generate, SynthConfig};

fn main() {
    for (iters, tol) in [(100usize, 1e-4f64), (300, 1e-5)] {
        for seed in [11u64, 12, 13] {
            let graph = generate(&SynthConfig {
                node_count: 80, base_connectivity: 3, long_edge_prob: 0.02,
                noise_sigma_deg: 5.0, outlier_fraction: 0.0, seed,
            }).unwrap().graph;
            let init = spt_initialize(&graph).unwrap();
            let truth = graph.ground_truth.clone().unwrap();
            let med = |vals: &[rotavg_core::UnitQuaternion]| eval::median(&eval::aligned_errors_deg(vals, &truth).unwrap());
            let l2 = irls_average(&graph, &init, &[RobustCost::L2], iters, tol).unwrap();
            let l1 = irls_average(&graph, &init, &[RobustCost::L1], iters, tol).unwrap();
            println!("iters {iters} tol {tol:.0e} seed {seed}: l2 {:.3} ({} sw, conv {}) l1 {:.3} ({} sw) diff {:.3}",
                med(&l2.values), l2.stage_traces[0].len()-1, l2.converged,
                med(&l1.values), l1.stage_traces[0].len()-1,
                (med(&l2.values) - med(&l1.values)).abs());
        }
    }
}
