//! Synthetic view-graph generator with ground truth, controllable inlier
//! noise and outlier contamination.
//!
//! Topology is a trajectory lattice (node `i` connects to `j` when
//! `|i - j| <= k`) plus sparse random chords, which mimics capture paths
//! where the center of the graph is densely connected and the outskirts are
//! sparse. Inlier observations are perturbed by a small random-axis rotation
//! with folded-normal angle; outliers are uniform random rotations.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, ViewGraph};
use crate::so3::UnitQuaternion;

/// Angle std-dev of the ground-truth random-walk step, in degrees.
const WALK_STEP_SIGMA_DEG: f64 = 15.0;

/// Configuration for one synthetic graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub node_count: usize,
    /// Lattice radius: node `i` connects to `j` whenever `|i - j| <= k`.
    pub base_connectivity: usize,
    /// Probability of adding a chord between each non-lattice node pair.
    pub long_edge_prob: f64,
    /// Std-dev of the inlier angular noise, in degrees.
    pub noise_sigma_deg: f64,
    /// Fraction of edges replaced by uniform random rotations.
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 3 {
            return Err(Error::InvalidConfig(format!(
                "node_count must be >= 3, got {}",
                self.node_count
            )));
        }
        if self.base_connectivity < 1 {
            return Err(Error::InvalidConfig(
                "base_connectivity must be >= 1".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidConfig(format!(
                "outlier_fraction must be in [0, 1), got {}",
                self.outlier_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.long_edge_prob) {
            return Err(Error::InvalidConfig(format!(
                "long_edge_prob must be in [0, 1], got {}",
                self.long_edge_prob
            )));
        }
        if !(self.noise_sigma_deg >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise_sigma_deg must be >= 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// A generated graph together with generator-only metadata. The outlier
/// labels are never consumed by any solver; they exist for evaluation.
#[derive(Clone, Debug)]
pub struct GeneratedGraph {
    pub graph: ViewGraph,
    /// Indices into `graph.edges()` of the outlier-contaminated edges.
    pub outlier_edges: Vec<usize>,
}

/// Sidecar metadata written next to each generated graph file.
#[derive(Serialize, Deserialize)]
pub struct GraphMeta {
    pub config: SynthConfig,
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Outlier edges as `(u, v)` pairs.
    pub outlier_edges: Vec<(usize, usize)>,
}

/// Uniform random rotation (4D Gaussian, normalized).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    loop {
        let raw = [
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
        ];
        if let Ok(q) = UnitQuaternion::normalize(raw) {
            return q;
        }
    }
}

/// Small random rotation: uniform axis, folded-normal angle.
fn noise_rotation<R: Rng + ?Sized>(rng: &mut R, sigma_rad: f64) -> UnitQuaternion {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    if sigma_rad == 0.0 {
        return UnitQuaternion::IDENTITY;
    }
    let normal = Normal::new(0.0, sigma_rad).expect("finite sigma");
    let angle: f64 = normal.sample(rng);
    UnitQuaternion::from_axis_angle(axis, angle.abs()).expect("unit axis")
}

/// Generates one view-graph with ground truth. Deterministic for a fixed
/// config.
pub fn generate(cfg: &SynthConfig) -> Result<GeneratedGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.node_count;

    // Ground truth: smooth random walk on SO(3).
    let walk_sigma = WALK_STEP_SIGMA_DEG.to_radians();
    let mut truth = Vec::with_capacity(n);
    truth.push(random_rotation(&mut rng));
    for i in 1..n {
        let step = noise_rotation(&mut rng, walk_sigma);
        truth.push(step.compose(truth[i - 1]));
    }

    // Topology: lattice plus chords. Consecutive-index edges guarantee
    // connectivity.
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n.min(i + cfg.base_connectivity + 1) {
            pairs.push((i, j));
        }
    }
    if cfg.long_edge_prob > 0.0 {
        for i in 0..n {
            for j in (i + cfg.base_connectivity + 1)..n {
                if rng.gen::<f64>() < cfg.long_edge_prob {
                    pairs.push((i, j));
                }
            }
        }
    }

    let sigma_rad = cfg.noise_sigma_deg.to_radians();
    let mut edges = Vec::with_capacity(pairs.len());
    let mut outliers = Vec::new();
    for (idx, (u, v)) in pairs.into_iter().enumerate() {
        let clean = truth[v].compose(truth[u].inverse());
        let perturb = if rng.gen::<f64>() < cfg.outlier_fraction {
            outliers.push(idx);
            random_rotation(&mut rng)
        } else {
            noise_rotation(&mut rng, sigma_rad)
        };
        edges.push(Edge {
            u,
            v,
            rotation: perturb.compose(clean),
        });
    }

    let graph = ViewGraph::new(n, edges, Some(truth))?;
    Ok(GeneratedGraph {
        graph,
        outlier_edges: outliers,
    })
}

/// A batch of graphs derived from one template.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub template: SynthConfig,
    pub count: usize,
    pub node_count_min: usize,
    pub node_count_max: usize,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::InvalidConfig("count must be >= 1".to_string()));
        }
        if self.node_count_min > self.node_count_max {
            return Err(Error::InvalidConfig(
                "node_count_min must be <= node_count_max".to_string(),
            ));
        }
        let mut probe = self.template.clone();
        probe.node_count = self.node_count_min;
        probe.validate()
    }

    /// Per-graph config: seed `template.seed + index`, node count jittered
    /// uniformly within the configured range (from an independent stream so
    /// the jitter does not correlate with the graph content).
    pub fn graph_config(&self, index: usize) -> SynthConfig {
        let mut cfg = self.template.clone();
        cfg.seed = self.template.seed.wrapping_add(index as u64);
        cfg.node_count = if self.node_count_min == self.node_count_max {
            self.node_count_min
        } else {
            let mut jitter = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            jitter.gen_range(self.node_count_min..=self.node_count_max)
        };
        cfg
    }
}

/// File stem for the `index`-th graph of a dataset.
pub fn dataset_stem(index: usize) -> String {
    format!("graph_{index:04}")
}

/// Writes `<stem>.txt` and `<stem>.meta.json` for a generated graph.
pub fn write_graph_files(dir: &Path, stem: &str, cfg: &SynthConfig, gen: &GeneratedGraph) -> Result<PathBuf> {
    let graph_path = dir.join(format!("{stem}.txt"));
    let mut w = std::io::BufWriter::new(std::fs::File::create(&graph_path)?);
    gen.graph.serialize(&mut w)?;
    w.flush()?;

    let meta = GraphMeta {
        config: cfg.clone(),
        n_nodes: gen.graph.node_count(),
        n_edges: gen.graph.edges().len(),
        outlier_edges: gen
            .outlier_edges
            .iter()
            .map(|&i| (gen.graph.edges()[i].u, gen.graph.edges()[i].v))
            .collect(),
    };
    let meta_path = dir.join(format!("{stem}.meta.json"));
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(meta_path, text)?;
    Ok(graph_path)
}

/// Generates `spec.count` graph files into `dir` using up to `threads`
/// workers. Output bytes are independent of the scheduling because each
/// graph is fully determined by its own derived config.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path, threads: usize) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    std::fs::create_dir_all(dir)?;
    let threads = threads.max(1).min(spec.count);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<PathBuf>>>> =
        (0..spec.count).map(|_| std::sync::Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= spec.count {
                    break;
                }
                let cfg = spec.graph_config(i);
                let outcome = generate(&cfg)
                    .and_then(|gen| write_graph_files(dir, &dataset_stem(i), &cfg, &gen));
                *results[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    results
        .into_iter()
        .map(|cell| cell.into_inner().unwrap().expect("worker visited every index"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{check_connected, edge_discrepancies};
    use crate::so3::geodesic_distance;

    fn base_cfg() -> SynthConfig {
        SynthConfig {
            node_count: 100,
            base_connectivity: 3,
            long_edge_prob: 0.01,
            noise_sigma_deg: 5.0,
            outlier_fraction: 0.0,
            seed: 17,
        }
    }

    #[test]
    fn noise_free_edges_are_exact() {
        let mut cfg = base_cfg();
        cfg.noise_sigma_deg = 0.0;
        let gen = generate(&cfg).unwrap();
        let truth = gen.graph.ground_truth.clone().unwrap();
        for e in gen.graph.edges() {
            let clean = truth[e.v].compose(truth[e.u].inverse());
            assert!(geodesic_distance(&e.rotation, &clean).radians() < 1e-15);
        }
        let feats = edge_discrepancies(&gen.graph, &truth).unwrap();
        for f in feats {
            assert!(f.angle() < 1e-12);
        }
    }

    #[test]
    fn inlier_noise_matches_folded_normal_mean() {
        let cfg = base_cfg();
        let gen = generate(&cfg).unwrap();
        let truth = gen.graph.ground_truth.clone().unwrap();
        let errors: Vec<f64> = gen
            .graph
            .edges()
            .iter()
            .map(|e| {
                let clean = truth[e.v].compose(truth[e.u].inverse());
                geodesic_distance(&e.rotation, &clean).degrees()
            })
            .collect();
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        // Folded normal mean = sigma * sqrt(2/pi) = 3.9894 deg for sigma 5.
        let expect = 5.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean - expect).abs() < 0.6,
            "mean {mean:.3} vs folded-normal {expect:.3}"
        );
    }

    #[test]
    fn outlier_fraction_matches_labels() {
        let mut labelled = 0usize;
        let mut above_3sigma = 0usize;
        let mut total = 0usize;
        for seed in 0..10 {
            let mut cfg = base_cfg();
            cfg.outlier_fraction = 0.2;
            cfg.seed = seed;
            let gen = generate(&cfg).unwrap();
            let truth = gen.graph.ground_truth.clone().unwrap();
            labelled += gen.outlier_edges.len();
            total += gen.graph.edges().len();
            for e in gen.graph.edges() {
                let clean = truth[e.v].compose(truth[e.u].inverse());
                if geodesic_distance(&e.rotation, &clean).degrees() > 15.0 {
                    above_3sigma += 1;
                }
            }
        }
        let frac = labelled as f64 / total as f64;
        assert!((frac - 0.2).abs() < 0.03, "labelled fraction {frac:.4}");
        // Gross errors should track the labels closely.
        let diff = (above_3sigma as f64 - labelled as f64).abs() / total as f64;
        assert!(diff < 0.02, "3-sigma count {above_3sigma} vs labels {labelled}");
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let cfg = base_cfg();
        let a = generate(&cfg).unwrap().graph.to_text();
        let b = generate(&cfg).unwrap().graph.to_text();
        assert_eq!(a, b);
        let mut other = cfg;
        other.seed = 18;
        assert_ne!(a, generate(&other).unwrap().graph.to_text());
    }

    #[test]
    fn generated_graphs_are_connected() {
        for seed in 0..5 {
            let mut cfg = base_cfg();
            cfg.seed = seed;
            cfg.outlier_fraction = 0.3;
            let gen = generate(&cfg).unwrap();
            assert!(check_connected(&gen.graph).0);
        }
    }

    #[test]
    fn gauge_freedom_leaves_observations_unchanged() {
        let cfg = base_cfg();
        let gen = generate(&cfg).unwrap();
        let truth = gen.graph.ground_truth.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = random_rotation(&mut rng);
        for e in gen.graph.edges() {
            let before = truth[e.v].compose(truth[e.u].inverse());
            let after = truth[e.v]
                .compose(s)
                .compose(truth[e.u].compose(s).inverse());
            assert!(geodesic_distance(&before, &after).radians() < 1e-12);
        }
    }

    #[test]
    fn dataset_files_regenerate_identically() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            template: base_cfg(),
            count: 4,
            node_count_min: 20,
            node_count_max: 40,
        };
        let paths = generate_dataset(&spec, dir.path(), 2).unwrap();
        let first: Vec<String> = paths
            .iter()
            .map(|p| std::fs::read_to_string(p).unwrap())
            .collect();
        let paths2 = generate_dataset(&spec, dir.path(), 1).unwrap();
        for (p, original) in paths2.iter().zip(&first) {
            assert_eq!(&std::fs::read_to_string(p).unwrap(), original);
        }
        // Distinct master seeds give distinct graphs.
        let mut other = spec.clone();
        other.template.seed = 1234;
        let paths3 = generate_dataset(&other, dir.path(), 1).unwrap();
        for (p, original) in paths3.iter().zip(&first) {
            assert_ne!(&std::fs::read_to_string(p).unwrap(), original);
        }
        // Single graph with a pinned node count matches a direct generate().
        let single = DatasetSpec {
            template: base_cfg(),
            count: 1,
            node_count_min: 100,
            node_count_max: 100,
        };
        let p = generate_dataset(&single, dir.path(), 1).unwrap();
        let direct = generate(&single.graph_config(0)).unwrap().graph.to_text();
        assert_eq!(std::fs::read_to_string(&p[0]).unwrap(), direct);
    }
}
