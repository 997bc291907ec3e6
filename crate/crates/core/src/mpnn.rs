//! Attention-weighted message-passing rotation averaging.
//!
//! Each node carries a unit quaternion. One round computes, per directed
//! edge into `v`, a message from the endpoint rotations and the edge
//! discrepancy feature, plus an attention logit from the discrepancy and the
//! source node's relative neighborhood size. Logits are softmax-normalized
//! over the neighbors of `v`, messages are aggregated by the weights, and a
//! readout net maps the aggregate to a corrective rotation applied
//! multiplicatively to the node. All node updates within a round read only
//! the previous round's state (synchronous update); discrepancy features are
//! then recomputed from the new rotations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::error::{Error, Result};
use crate::graph::{edge_discrepancies, relative_neighborhood_sizes, spt_initialize, ViewGraph};
use crate::nn::MlpParams;
use crate::so3::{quaternion_distance, UnitQuaternion};

/// Input dimension of the message net: three quaternions
/// `(R_v, R_u, e_uv)`.
pub const MESSAGE_INPUT_DIM: usize = 12;
/// Input dimension of the attention net: relative neighborhood size plus
/// the discrepancy quaternion.
pub const ATTENTION_INPUT_DIM: usize = 5;

/// Hidden-layer widths and message dimensionality of the three nets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelArch {
    pub message_hidden: Vec<usize>,
    pub message_dim: usize,
    pub attention_hidden: Vec<usize>,
    pub readout_hidden: Vec<usize>,
}

impl Default for ModelArch {
    fn default() -> Self {
        ModelArch {
            message_hidden: vec![64, 64],
            message_dim: 32,
            attention_hidden: vec![32],
            readout_hidden: vec![64],
        }
    }
}

impl ModelArch {
    fn message_dims(&self) -> Vec<usize> {
        let mut dims = vec![MESSAGE_INPUT_DIM];
        dims.extend(&self.message_hidden);
        dims.push(self.message_dim);
        dims
    }

    fn attention_dims(&self) -> Vec<usize> {
        let mut dims = vec![ATTENTION_INPUT_DIM];
        dims.extend(&self.attention_hidden);
        dims.push(1);
        dims
    }

    fn readout_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.message_dim];
        dims.extend(&self.readout_hidden);
        dims.push(4);
        dims
    }
}

/// The three learnable nets plus iteration count and the absolute-loss
/// weight.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MraModel {
    pub message_net: MlpParams,
    pub attention_net: MlpParams,
    pub readout_net: MlpParams,
    /// Number of message-passing rounds per inference.
    pub rounds: usize,
    /// Weight of the absolute term in the training loss.
    pub absolute_weight: f64,
}

impl MraModel {
    /// Seeded model whose readout initially outputs the exact identity
    /// rotation (zero final weights, unit-quaternion bias), so an untrained
    /// model preserves its initialization.
    pub fn new(arch: &ModelArch, rounds: usize, absolute_weight: f64, seed: u64) -> Self {
        let mut model = Self::new_unpinned(arch, rounds, absolute_weight, seed);
        model.readout_net.pin_output(&[1.0, 0.0, 0.0, 0.0]);
        model
    }

    /// Seeded model with a fully random readout; used where the readout must
    /// move from the first step (e.g. gradient checks).
    pub fn new_unpinned(arch: &ModelArch, rounds: usize, absolute_weight: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MraModel {
            message_net: MlpParams::new(&arch.message_dims(), &mut rng),
            attention_net: MlpParams::new(&arch.attention_dims(), &mut rng),
            readout_net: MlpParams::new(&arch.readout_dims(), &mut rng),
            rounds,
            absolute_weight,
        }
    }

    pub fn message_dim(&self) -> usize {
        self.message_net.out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.message_net.validate()?;
        self.attention_net.validate()?;
        self.readout_net.validate()?;
        if self.message_net.in_dim() != MESSAGE_INPUT_DIM
            || self.attention_net.in_dim() != ATTENTION_INPUT_DIM
            || self.attention_net.out_dim() != 1
            || self.readout_net.in_dim() != self.message_net.out_dim()
            || self.readout_net.out_dim() != 4
        {
            return Err(Error::ShapeMismatch {
                expected: "message 12->d, attention 5->1, readout d->4".to_string(),
                got: format!(
                    "message {}->{}, attention {}->{}, readout {}->{}",
                    self.message_net.in_dim(),
                    self.message_net.out_dim(),
                    self.attention_net.in_dim(),
                    self.attention_net.out_dim(),
                    self.readout_net.in_dim(),
                    self.readout_net.out_dim()
                ),
            });
        }
        if self.rounds < 1 {
            return Err(Error::InvalidConfig("rounds must be >= 1".to_string()));
        }
        if !(self.absolute_weight >= 0.0) {
            return Err(Error::InvalidConfig(
                "absolute_weight must be >= 0".to_string(),
            ));
        }
        Ok(())
    }

    /// Mutable views of every parameter tensor, in the fixed optimizer order
    /// (message, attention, readout; weight then bias per layer).
    pub fn tensors_mut(&mut self) -> Vec<&mut crate::nn::Tensor> {
        let mut out = Vec::new();
        for mlp in [
            &mut self.message_net,
            &mut self.attention_net,
            &mut self.readout_net,
        ] {
            for layer in mlp.layers.iter_mut() {
                out.push(&mut layer.weight);
                out.push(&mut layer.bias);
            }
        }
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for mlp in [&self.message_net, &self.attention_net, &self.readout_net] {
            for layer in &mlp.layers {
                out.push(layer.weight.len());
                out.push(layer.bias.len());
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.message_net.param_count()
            + self.attention_net.param_count()
            + self.readout_net.param_count()
    }
}

/// Per-round state: node rotations, per-directed-slot discrepancy features,
/// and the attention weights of the round that produced it.
#[derive(Clone, Debug)]
pub struct IterationState {
    pub rotations: Vec<UnitQuaternion>,
    /// Slot layout of [`ViewGraph::slot_offsets`].
    pub features: Vec<UnitQuaternion>,
    /// Attention weights, same layout; uniform before the first round.
    pub weights: Vec<f64>,
}

impl IterationState {
    /// State at round zero: shortest-path-tree rotations, their discrepancy
    /// features, uniform weights.
    pub fn initial(graph: &ViewGraph) -> Result<Self> {
        let rotations = spt_initialize(graph)?;
        Self::from_rotations(graph, rotations)
    }

    pub fn from_rotations(graph: &ViewGraph, rotations: Vec<UnitQuaternion>) -> Result<Self> {
        let features = edge_discrepancies(graph, &rotations)?;
        let mut weights = vec![0.0; graph.directed_count()];
        for v in 0..graph.node_count() {
            let deg = graph.degree(v);
            let start = graph.slot_offsets()[v];
            for w in &mut weights[start..start + deg] {
                *w = 1.0 / deg as f64;
            }
        }
        Ok(IterationState {
            rotations,
            features,
            weights,
        })
    }

    /// Checks the state invariants: unit rotations and per-node weight sums
    /// of one.
    pub fn validate(&self, graph: &ViewGraph) -> Result<()> {
        for q in self.rotations.iter().chain(&self.features) {
            let norm: f64 = q.components().iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("non-unit rotation, norm {norm}")));
            }
        }
        for v in 0..graph.node_count() {
            let start = graph.slot_offsets()[v];
            let sum: f64 = self.weights[start..start + graph.degree(v)].iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "attention weights of node {v} sum to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// One synchronous message-passing round (untaped). `nbr_sizes` is the
/// output of [`relative_neighborhood_sizes`], constant per graph.
pub fn forward_iteration(
    graph: &ViewGraph,
    state: &IterationState,
    model: &MraModel,
    nbr_sizes: &[f64],
) -> Result<IterationState> {
    let n = graph.node_count();
    let offsets = graph.slot_offsets();
    let msg_dim = model.message_dim();

    let mut new_rotations = vec![UnitQuaternion::IDENTITY; n];
    let mut new_weights = vec![0.0; graph.directed_count()];
    let mut msg_input = [0.0; MESSAGE_INPUT_DIM];
    let mut attn_input = [0.0; ATTENTION_INPUT_DIM];
    let mut messages: Vec<f64> = Vec::new();
    let mut logits: Vec<f64> = Vec::new();
    let mut aggregate = vec![0.0; msg_dim];

    for v in 0..n {
        let adj = graph.adjacency(v);
        if adj.is_empty() {
            return Err(Error::DisconnectedGraph { components: 2 });
        }
        messages.clear();
        logits.clear();
        let rv = state.rotations[v].components();
        for (k, a) in adj.iter().enumerate() {
            let slot = offsets[v] + k;
            let ru = state.rotations[a.neighbor].components();
            let e = state.features[slot].components();
            msg_input[..4].copy_from_slice(&rv);
            msg_input[4..8].copy_from_slice(&ru);
            msg_input[8..].copy_from_slice(&e);
            messages.extend(model.message_net.forward(&msg_input)?);

            attn_input[0] = nbr_sizes[slot];
            attn_input[1..].copy_from_slice(&e);
            logits.push(model.attention_net.forward(&attn_input)?[0]);
        }
        kernels::softmax_in_place(&mut logits);
        debug_assert!((logits.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        new_weights[offsets[v]..offsets[v] + adj.len()].copy_from_slice(&logits);

        aggregate.fill(0.0);
        for (k, w) in logits.iter().enumerate() {
            let msg = &messages[k * msg_dim..(k + 1) * msg_dim];
            for j in 0..msg_dim {
                aggregate[j] += w * msg[j];
            }
        }
        let raw = model.readout_net.forward(&aggregate)?;
        let correction =
            UnitQuaternion::normalize([raw[0], raw[1], raw[2], raw[3]])?;
        new_rotations[v] = state.rotations[v].compose(correction);
    }

    let features = edge_discrepancies(graph, &new_rotations)?;
    Ok(IterationState {
        rotations: new_rotations,
        features,
        weights: new_weights,
    })
}

/// Full inference: shortest-path-tree initialization followed by
/// `model.rounds` message-passing rounds. Deterministic for a fixed model
/// and graph.
pub fn infer(graph: &ViewGraph, model: &MraModel) -> Result<Vec<UnitQuaternion>> {
    let (rotations, _) = infer_with_trace(graph, model)?;
    Ok(rotations)
}

/// Inference that also returns the state after every round (the last entry
/// is the initial state when `rounds` is zero).
pub fn infer_with_trace(
    graph: &ViewGraph,
    model: &MraModel,
) -> Result<(Vec<UnitQuaternion>, Vec<IterationState>)> {
    if graph.node_count() == 1 {
        return Ok((
            vec![UnitQuaternion::IDENTITY],
            vec![IterationState {
                rotations: vec![UnitQuaternion::IDENTITY],
                features: Vec::new(),
                weights: Vec::new(),
            }],
        ));
    }
    let nbr_sizes = relative_neighborhood_sizes(graph);
    let mut states = vec![IterationState::initial(graph)?];
    for _ in 0..model.rounds {
        let next = forward_iteration(graph, states.last().unwrap(), model, &nbr_sizes)?;
        states.push(next);
    }
    let rotations = states.last().unwrap().rotations.clone();
    Ok((rotations, states))
}

/// The two training-loss terms, averaged as in the per-round loss:
/// `relative` is the neighbor-averaged, node-averaged sign-invariant
/// quaternion distance between predicted and ground-truth relative
/// rotations `R_v * R_u^-1`; `absolute` is the node-averaged distance to the
/// ground-truth absolutes.
pub fn loss_terms(
    graph: &ViewGraph,
    values: &[UnitQuaternion],
) -> Result<(f64, f64)> {
    let truth = graph
        .ground_truth
        .as_ref()
        .ok_or(Error::MissingGroundTruth)?;
    if values.len() != graph.node_count() {
        return Err(Error::MissingEstimate);
    }
    let n = graph.node_count();
    let mut relative = 0.0;
    let mut absolute = 0.0;
    for v in 0..n {
        let adj = graph.adjacency(v);
        let mut acc = 0.0;
        for a in adj {
            let u = a.neighbor;
            let pred_rel = values[v].compose(values[u].inverse());
            let true_rel = truth[v].compose(truth[u].inverse());
            acc += quaternion_distance(&true_rel, &pred_rel);
        }
        if !adj.is_empty() {
            relative += acc / adj.len() as f64;
        }
        absolute += quaternion_distance(&truth[v], &values[v]);
    }
    Ok((relative / n as f64, absolute / n as f64))
}

/// Scalar loss `relative + absolute_weight * absolute`; zero iff the values
/// equal the ground truth node for node.
pub fn compute_loss(
    graph: &ViewGraph,
    values: &[UnitQuaternion],
    absolute_weight: f64,
) -> Result<f64> {
    let (relative, absolute) = loss_terms(graph, values)?;
    Ok(relative + absolute_weight * absolute)
}
