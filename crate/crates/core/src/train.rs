//! Training loop for the message-passing rotation-averaging model, plus
//! checkpoint and training-log files.
//!
//! Batch size is one graph: for each training graph the full unrolled
//! message-passing program (initialization features, every round, the
//! per-round losses) is recorded on a tape, backpropagated, and applied as
//! one optimizer step. Ground truth is gauge-fixed to the initialization
//! root's frame before computing losses, so the absolute term measures
//! deviation rather than an unobservable global offset.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::eval;
use crate::graph::{
    relative_neighborhood_sizes, spt_initialize, spt_root, ViewGraph,
};
use crate::mpnn::{ModelArch, MraModel};
use crate::nn::{adam_step, AdamState, TapedMlp};
use crate::so3::UnitQuaternion;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// How per-round losses combine into the per-graph loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossAggregation {
    /// Average over rounds (keeps the scale independent of the round count).
    Mean,
    /// Sum over rounds.
    Sum,
    /// Only the final round's loss.
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate down to 1% of it.
    Cosine,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rounds: usize,
    pub absolute_weight: f64,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub loss_aggregation: LossAggregation,
    /// Right-compose the initialization and ground truth with a fresh random
    /// rotation on every step, so the nets cannot key on the global frame.
    pub gauge_augmentation: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            rounds: 4,
            absolute_weight: 0.25,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            loss_aggregation: LossAggregation::Mean,
            gauge_augmentation: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".to_string()));
        }
        if self.rounds < 1 {
            return Err(Error::InvalidConfig("rounds must be >= 1".to_string()));
        }
        if !(self.absolute_weight >= 0.0) {
            return Err(Error::InvalidConfig(
                "absolute_weight must be >= 0".to_string(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be > 0".to_string(),
            ));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let min = self.learning_rate * 0.01;
                if self.epochs <= 1 {
                    return self.learning_rate;
                }
                let t = epoch as f64 / (self.epochs - 1) as f64;
                min + 0.5 * (self.learning_rate - min) * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Versioned model checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: MraModel,
    pub optimizer: Option<AdamState>,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(model: MraModel, train_config: Option<TrainConfig>, seed: u64) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model,
            optimizer: None,
            train_config,
            seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw
            .get("format_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(raw)?;
        ckpt.model.validate()?;
        Ok(ckpt)
    }
}

/// Validation statistics pooled over all held-out graphs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ValStats {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub rms_deg: f64,
    pub pct_gt10: f64,
    pub pct_gt30: f64,
}

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<ValStats>,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Epoch whose model was checkpointed (lowest validation median).
    pub best_epoch: Option<usize>,
}

/// Everything about one training graph that stays constant across epochs.
struct GraphPrep {
    init: Vec<UnitQuaternion>,
    nbr_sizes: Vec<f64>,
    /// Ground truth right-composed with the inverse of the root's truth, so
    /// the initialization and the truth share a global frame.
    truth: Vec<UnitQuaternion>,
    /// Per-slot ground-truth relative rotations `R_v * R_u^-1`.
    truth_rel: Vec<UnitQuaternion>,
    /// Per-slot observed rotations oriented toward the destination.
    directed: Vec<UnitQuaternion>,
}

impl GraphPrep {
    fn build(graph: &ViewGraph) -> Result<Self> {
        let truth_raw = graph
            .ground_truth
            .as_ref()
            .ok_or(Error::MissingGroundTruth)?;
        let init = spt_initialize(graph)?;
        let root = spt_root(graph);
        let gauge = truth_raw[root].inverse();
        let truth: Vec<UnitQuaternion> = truth_raw.iter().map(|q| q.compose(gauge)).collect();

        let mut truth_rel = Vec::with_capacity(graph.directed_count());
        let mut directed = Vec::with_capacity(graph.directed_count());
        for v in 0..graph.node_count() {
            for adj in graph.adjacency(v) {
                truth_rel.push(truth[v].compose(truth[adj.neighbor].inverse()));
                directed.push(graph.edge_rotation_toward(adj.edge, v));
            }
        }
        Ok(GraphPrep {
            init,
            nbr_sizes: relative_neighborhood_sizes(graph),
            truth,
            truth_rel,
            directed,
        })
    }
}

struct TapedModel {
    message: TapedMlp,
    attention: TapedMlp,
    readout: TapedMlp,
}

impl TapedModel {
    fn register(model: &MraModel, tape: &mut Tape) -> Self {
        TapedModel {
            message: model.message_net.register(tape),
            attention: model.attention_net.register(tape),
            readout: model.readout_net.register(tape),
        }
    }

    fn param_ids(&self) -> Vec<ValueId> {
        let mut ids = self.message.param_ids();
        ids.extend(self.attention.param_ids());
        ids.extend(self.readout.param_ids());
        ids
    }
}

/// Records the full unrolled loss of one graph on the tape and returns the
/// scalar loss node. `gauge` right-composes the initialization and the
/// (gauge-fixed) truth, leaving the observations untouched.
fn build_graph_loss(
    tape: &mut Tape,
    graph: &ViewGraph,
    prep: &GraphPrep,
    gauge: &UnitQuaternion,
    taped: &TapedModel,
    cfg: &TrainConfig,
) -> Result<ValueId> {
    let n = graph.node_count();
    let offsets = graph.slot_offsets();
    let slots = graph.directed_count();

    let init: Vec<UnitQuaternion> = prep.init.iter().map(|q| q.compose(*gauge)).collect();
    let features = crate::graph::edge_discrepancies(graph, &init)?;

    let mut rot: Vec<ValueId> = init.iter().map(|q| tape.leaf(&q.components())).collect();
    let mut feat: Vec<ValueId> = features.iter().map(|q| tape.leaf(&q.components())).collect();
    let nbr: Vec<ValueId> = prep.nbr_sizes.iter().map(|&s| tape.leaf(&[s])).collect();
    let directed: Vec<ValueId> = prep
        .directed
        .iter()
        .map(|q| tape.leaf(&q.components()))
        .collect();
    let truth: Vec<ValueId> = prep
        .truth
        .iter()
        .map(|q| tape.leaf(&q.compose(*gauge).components()))
        .collect();
    let truth_rel: Vec<ValueId> = prep
        .truth_rel
        .iter()
        .map(|q| tape.leaf(&q.components()))
        .collect();

    let mut round_losses = Vec::with_capacity(cfg.rounds);
    let mut msgs: Vec<ValueId> = Vec::new();
    let mut logits: Vec<ValueId> = Vec::new();
    let mut conj: Vec<ValueId> = Vec::with_capacity(n);

    for _round in 0..cfg.rounds {
        // Synchronous node updates from the previous round's state.
        let mut new_rot = Vec::with_capacity(n);
        for v in 0..n {
            let adj = graph.adjacency(v);
            msgs.clear();
            logits.clear();
            for (k, a) in adj.iter().enumerate() {
                let slot = offsets[v] + k;
                let input = tape.concat(&[rot[v], rot[a.neighbor], feat[slot]]);
                msgs.push(taped.message.forward(tape, input)?);
                let attn_in = tape.concat(&[nbr[slot], feat[slot]]);
                logits.push(taped.attention.forward(tape, attn_in)?);
            }
            let weights = tape.softmax(&logits)?;
            let aggregate = tape.weighted_sum(weights, &msgs)?;
            let raw = taped.readout.forward(tape, aggregate)?;
            let correction = tape.quat_normalize(raw)?;
            new_rot.push(tape.quat_compose(rot[v], correction)?);
        }
        rot = new_rot;

        conj.clear();
        for &r in &rot {
            conj.push(tape.quat_conjugate(r)?);
        }
        // Recompute discrepancy features from the new rotations.
        let mut new_feat = Vec::with_capacity(slots);
        for v in 0..n {
            for (k, a) in graph.adjacency(v).iter().enumerate() {
                let slot = offsets[v] + k;
                let inner = tape.quat_compose(directed[slot], rot[a.neighbor])?;
                new_feat.push(tape.quat_compose(conj[v], inner)?);
            }
        }
        feat = new_feat;

        // Per-round loss: neighbor-averaged relative term plus weighted
        // absolute term, averaged over nodes.
        let mut terms = Vec::with_capacity(slots + n);
        let mut coeffs = Vec::with_capacity(slots + n);
        for v in 0..n {
            let deg = graph.degree(v) as f64;
            for (k, a) in graph.adjacency(v).iter().enumerate() {
                let slot = offsets[v] + k;
                let pred_rel = tape.quat_compose(rot[v], conj[a.neighbor])?;
                terms.push(tape.quat_distance(truth_rel[slot], pred_rel)?);
                coeffs.push(1.0 / (n as f64 * deg));
            }
            terms.push(tape.quat_distance(truth[v], rot[v])?);
            coeffs.push(cfg.absolute_weight / n as f64);
        }
        round_losses.push(tape.combine(&terms, &coeffs)?);
    }

    match cfg.loss_aggregation {
        LossAggregation::Mean => {
            let c = 1.0 / cfg.rounds as f64;
            tape.combine(&round_losses, &vec![c; round_losses.len()])
        }
        LossAggregation::Sum => tape.combine(&round_losses, &vec![1.0; round_losses.len()]),
        LossAggregation::Final => tape.combine(&round_losses[round_losses.len() - 1..], &[1.0]),
    }
}

/// One training step on one graph; returns the loss value.
#[allow(clippy::too_many_arguments)]
fn train_step(
    tape: &mut Tape,
    graph: &ViewGraph,
    prep: &GraphPrep,
    gauge: &UnitQuaternion,
    model: &mut MraModel,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<f64> {
    tape.reset();
    let taped = TapedModel::register(model, tape);
    let loss_id = build_graph_loss(tape, graph, prep, gauge, &taped, cfg)?;
    let loss = tape.value(loss_id)[0];
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    tape.backward(loss_id)?;
    let param_ids = taped.param_ids();
    let grads: Vec<&[f64]> = param_ids.iter().map(|&id| tape.grad(id)).collect();
    let mut tensors = model.tensors_mut();
    adam_step(adam, &mut tensors, &grads, lr)?;
    Ok(loss)
}

fn pooled_val_stats(model: &MraModel, val_graphs: &[ViewGraph]) -> Result<ValStats> {
    let mut errors = Vec::new();
    for g in val_graphs {
        let truth = g.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
        let pred = crate::mpnn::infer(g, model)?;
        errors.extend(eval::aligned_errors_deg(&pred, truth)?);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let gt = |t: f64| 100.0 * errors.iter().filter(|&&e| e > t).count() as f64 / n;
    Ok(ValStats {
        mean_deg: mean,
        median_deg: eval::median(&errors),
        rms_deg: rms,
        pct_gt10: gt(10.0),
        pct_gt30: gt(30.0),
    })
}

/// Trains a fresh model. Every training graph needs ground truth; the
/// checkpoint holds the model with the best pooled validation median (the
/// final model when `val_graphs` is empty).
pub fn train(
    train_graphs: &[ViewGraph],
    val_graphs: &[ViewGraph],
    arch: &ModelArch,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_graphs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preps: Vec<GraphPrep> = train_graphs
        .iter()
        .map(GraphPrep::build)
        .collect::<Result<_>>()?;

    let mut model = MraModel::new(arch, cfg.rounds, cfg.absolute_weight, cfg.seed);
    model.validate()?;
    let mut adam = AdamState::for_sizes(&model.tensor_sizes());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut gauge_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9a63));
    let mut tape = Tape::new();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, MraModel)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_graphs.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for &gi in &order {
            let gauge = if cfg.gauge_augmentation {
                crate::synth::random_rotation(&mut gauge_rng)
            } else {
                UnitQuaternion::IDENTITY
            };
            let loss = train_step(
                &mut tape,
                &train_graphs[gi],
                &preps[gi],
                &gauge,
                &mut model,
                &mut adam,
                cfg,
                lr,
            )
            .map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch },
                other => other,
            })?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / train_graphs.len() as f64;

        let val = if val_graphs.is_empty() {
            None
        } else {
            let stats = pooled_val_stats(&model, val_graphs)?;
            let better = best
                .as_ref()
                .map_or(true, |(_, best_median, _)| stats.median_deg < *best_median);
            if better {
                best = Some((epoch, stats.median_deg, model.clone()));
            }
            Some(stats)
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}{}",
            val.map_or(String::new(), |v| format!(
                ", val median {:.3} deg",
                v.median_deg
            ))
        );
        log.push(EpochLog {
            epoch,
            train_loss,
            val,
        });
    }

    let (best_epoch, final_model) = match best {
        Some((epoch, _, m)) => (Some(epoch), m),
        None => (None, model),
    };
    Ok(TrainOutput {
        checkpoint: Checkpoint::new(final_model, Some(cfg.clone()), cfg.seed),
        log,
        best_epoch,
    })
}

/// Writes the per-epoch training log as CSV.
pub fn write_training_log<W: std::io::Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(
        w,
        "epoch,train_loss,val_mean,val_median,val_rms,val_gt10,val_gt30"
    )?;
    for row in log {
        match &row.val {
            Some(v) => writeln!(
                w,
                "{},{:.6},{:.3},{:.3},{:.3},{:.3},{:.3}",
                row.epoch, row.train_loss, v.mean_deg, v.median_deg, v.rms_deg, v.pct_gt10, v.pct_gt30
            )?,
            None => writeln!(w, "{},{:.6},,,,,", row.epoch, row.train_loss)?,
        }
    }
    Ok(())
}

/// Loads every `*.txt` graph in a directory, sorted by file name.
pub fn load_graph_dir(dir: &Path) -> Result<Vec<ViewGraph>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    paths
        .iter()
        .map(|p| {
            let file = std::fs::File::open(p)?;
            ViewGraph::parse(std::io::BufReader::new(file))
        })
        .collect()
}
