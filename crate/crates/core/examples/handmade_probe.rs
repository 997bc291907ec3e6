use rotavg_core::baselines::*;
use rotavg_core::eval;
use rotavg_core::graph::spt_initialize;
use rotavg_core::mpnn::{infer, ModelArch, MraModel};
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

/// Hand-built robust averaging step:
///   message  = vec(e_uv) (pass-through, rest zero)
///   logit    = beta * e_w + alpha * n_uv  (crushes high-discrepancy edges)
///   readout  = normalize(1, gain * M)     (chordal mean correction)
fn handmade(gain: f64, beta: f64, alpha: f64) -> MraModel {
    let arch = ModelArch {
        message_hidden: vec![],
        message_dim: 3,
        attention_hidden: vec![],
        readout_hidden: vec![],
    };
    let mut m = MraModel::new(&arch, 8, 0.25, 0);
    // f_m: 12 -> 3 linear, rows pick e_x, e_y, e_z (inputs 9, 10, 11).
    let w = &mut m.message_net.layers[0].weight.data;
    w.fill(0.0);
    w[0 * 12 + 9] = 1.0;
    w[1 * 12 + 10] = 1.0;
    w[2 * 12 + 11] = 1.0;
    m.message_net.layers[0].bias.data.fill(0.0);
    // f_a: 5 -> 1 linear on (n, e_w, e_x, e_y, e_z).
    let a = &mut m.attention_net.layers[0].weight.data;
    a.fill(0.0);
    a[0] = alpha;
    a[1] = beta;
    m.attention_net.layers[0].bias.data.fill(0.0);
    // f_ro: 3 -> 4 linear (w-row bias 1, vec rows pick message * gain).
    let r = &mut m.readout_net.layers[0].weight.data;
    r.fill(0.0);
    r[1 * 3 + 0] = gain;
    r[2 * 3 + 1] = gain;
    r[3 * 3 + 2] = gain;
    m.readout_net.layers[0].bias.data = vec![1.0, 0.0, 0.0, 0.0];
    m
}

fn main() {
    let val = make(10, 9000, 3, 0.02);
    let mut e_wei = Vec::new();
    for g in &val {
        let truth = g.ground_truth.clone().unwrap();
        let init = spt_initialize(g).unwrap();
        let w = weiszfeld_l1(g, &init, 100, 1e-4).unwrap();
        e_wei.extend(eval::aligned_errors_deg(&w.values, &truth).unwrap());
    }
    println!("weiszfeld med {:.3}", eval::median(&e_wei));
    for (gain, beta, alpha) in [(1.0, 0.0, 0.0), (1.0, 10.0, 0.0), (1.0, 20.0, 2.0), (0.7, 20.0, 2.0), (1.3, 30.0, 2.0)] {
        for rounds in [8usize, 32] {
            let mut model = handmade(gain, beta, alpha);
            model.rounds = rounds;
            let mut pool = Vec::new();
            for g in &val {
                let truth = g.ground_truth.clone().unwrap();
                let net = infer(g, &model).unwrap();
                pool.extend(eval::aligned_errors_deg(&net, &truth).unwrap());
            }
            let n = pool.len() as f64;
            println!("gain {gain} beta {beta} alpha {alpha} rounds {rounds:2}: med {:.3} mean {:.2} %>30 {:.2}",
                eval::median(&pool), pool.iter().sum::<f64>() / n,
                100.0 * pool.iter().filter(|&&x| x > 30.0).count() as f64 / n);
        }
    }
}
