//! Classical iterative solvers used as comparison anchors: Weiszfeld l1
//! averaging on SO(3) and two-stage iteratively reweighted least squares
//! (l1 roughing, l1/2 refinement).
//!
//! Both solvers sweep nodes in ascending id order (Gauss-Seidel) and update
//! each node in the tangent space at its current estimate: log-map the
//! neighbor predictions, take a weighted mean, exp-map back. Per-node steps
//! are backtracked whenever they would increase the node's local objective,
//! which keeps the recorded global objective non-increasing.

use crate::error::Result;
use crate::graph::{require_connected, ViewGraph};
use crate::so3::{geodesic_distance, UnitQuaternion};

/// Residual floor for inverse-distance weights (radians). Large enough that
/// exactly-fit edges (the spanning-tree edges of a fresh initialization)
/// cannot lock their endpoints in place with runaway weights.
pub const RESIDUAL_FLOOR: f64 = 1e-3;

/// Robust cost `rho` applied to per-edge angular residuals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobustCost {
    L2,
    L1,
    LHalf,
}

impl RobustCost {
    pub fn rho(&self, r: f64) -> f64 {
        match self {
            RobustCost::L2 => r * r,
            RobustCost::L1 => r,
            RobustCost::LHalf => r.sqrt(),
        }
    }

    /// IRLS weight `rho'(r) / r`, residual floored at [`RESIDUAL_FLOOR`].
    pub fn weight(&self, r: f64) -> f64 {
        let r = r.max(RESIDUAL_FLOOR);
        match self {
            RobustCost::L2 => 2.0,
            RobustCost::L1 => 1.0 / r,
            RobustCost::LHalf => 0.5 / (r * r.sqrt()),
        }
    }
}

/// Solver result. `converged` is false when the sweep budget ran out before
/// the update tolerance was met; the values are still returned.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub values: Vec<UnitQuaternion>,
    pub converged: bool,
    /// Objective recorded before the first sweep and after each sweep, one
    /// trace per cost stage.
    pub stage_traces: Vec<Vec<f64>>,
}

/// Eq-style objective: `sum_edges rho(d_theta(R_uv, R_v * R_u^-1))`.
pub fn objective_value(graph: &ViewGraph, values: &[UnitQuaternion], cost: RobustCost) -> f64 {
    graph
        .edges()
        .iter()
        .map(|e| {
            let pred = values[e.v].compose(values[e.u].inverse());
            cost.rho(geodesic_distance(&e.rotation, &pred).radians())
        })
        .sum()
}

/// Weiszfeld iteration for the geodesic l1 median of `points`, starting at
/// `init`. Steps that would increase the objective are halved.
pub fn geodesic_l1_median(
    init: UnitQuaternion,
    points: &[UnitQuaternion],
    max_iters: usize,
    tol: f64,
) -> UnitQuaternion {
    let objective = |q: &UnitQuaternion| -> f64 {
        points
            .iter()
            .map(|p| geodesic_distance(q, p).radians())
            .sum()
    };
    let mut q = init;
    for _ in 0..max_iters {
        let mut num = [0.0; 3];
        let mut den = 0.0;
        for p in points {
            let delta = q.inverse().compose(*p).log();
            let dist = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2])
                .sqrt()
                .max(RESIDUAL_FLOOR);
            let w = 1.0 / dist;
            for j in 0..3 {
                num[j] += w * delta[j];
            }
            den += w;
        }
        let mut step = [num[0] / den, num[1] / den, num[2] / den];
        let before = objective(&q);
        let mut accepted = None;
        for _ in 0..8 {
            let cand = q.compose(UnitQuaternion::exp(step));
            if objective(&cand) <= before + 1e-15 {
                accepted = Some(cand);
                break;
            }
            for s in &mut step {
                *s *= 0.5;
            }
        }
        let Some(next) = accepted else { break };
        let moved = geodesic_distance(&q, &next).radians();
        q = next;
        if moved < tol {
            break;
        }
    }
    q
}

/// Neighbor predictions for node `v`: the directed observation composed with
/// the neighbor's current value.
fn proposals(graph: &ViewGraph, values: &[UnitQuaternion], v: usize) -> Vec<UnitQuaternion> {
    graph
        .adjacency(v)
        .iter()
        .map(|a| {
            graph
                .edge_rotation_toward(a.edge, v)
                .compose(values[a.neighbor])
        })
        .collect()
}

/// Weiszfeld l1 averaging: every node is moved to the geodesic median of its
/// neighbors' predictions, sweeping until the largest node update drops
/// below `tol` (default 1e-4 rad) or `max_iters` sweeps.
pub fn weiszfeld_l1(
    graph: &ViewGraph,
    init: &[UnitQuaternion],
    max_iters: usize,
    tol: f64,
) -> Result<SolveOutcome> {
    require_connected(graph)?;
    let mut values = init.to_vec();
    let mut trace = vec![objective_value(graph, &values, RobustCost::L1)];
    let mut converged = false;
    for _ in 0..max_iters {
        let mut max_update: f64 = 0.0;
        for v in 0..graph.node_count() {
            let points = proposals(graph, &values, v);
            let next = geodesic_l1_median(values[v], &points, 20, tol * 0.1);
            max_update = max_update.max(geodesic_distance(&values[v], &next).radians());
            values[v] = next;
        }
        trace.push(objective_value(graph, &values, RobustCost::L1));
        if max_update < tol {
            converged = true;
            break;
        }
    }
    Ok(SolveOutcome {
        values,
        converged,
        stage_traces: vec![trace],
    })
}

/// Iteratively reweighted least squares with a cost schedule (default l1
/// roughing then l1/2 refinement). Each outer iteration recomputes per-edge
/// weights from the current residuals, then runs one Gauss-Seidel sweep of
/// weighted tangent-space means.
pub fn irls_average(
    graph: &ViewGraph,
    init: &[UnitQuaternion],
    schedule: &[RobustCost],
    max_iters_per_stage: usize,
    tol: f64,
) -> Result<SolveOutcome> {
    require_connected(graph)?;
    let mut values = init.to_vec();
    let mut stage_traces = Vec::with_capacity(schedule.len());
    let mut converged = true;

    for &cost in schedule {
        let mut trace = vec![objective_value(graph, &values, cost)];
        let mut stage_converged = false;
        for _ in 0..max_iters_per_stage {
            // Edge weights frozen for this sweep.
            let weights: Vec<f64> = graph
                .edges()
                .iter()
                .map(|e| {
                    let pred = values[e.v].compose(values[e.u].inverse());
                    cost.weight(geodesic_distance(&e.rotation, &pred).radians())
                })
                .collect();

            let mut max_update: f64 = 0.0;
            for v in 0..graph.node_count() {
                let adj = graph.adjacency(v);
                let points = proposals(graph, &values, v);
                let edge_w: Vec<f64> = adj.iter().map(|a| weights[a.edge]).collect();

                let local = |q: &UnitQuaternion| -> f64 {
                    points
                        .iter()
                        .zip(&edge_w)
                        .map(|(p, w)| {
                            let d = geodesic_distance(q, p).radians();
                            w * d * d
                        })
                        .sum()
                };

                let mut num = [0.0; 3];
                let mut den = 0.0;
                for (p, w) in points.iter().zip(&edge_w) {
                    let delta = values[v].inverse().compose(*p).log();
                    for j in 0..3 {
                        num[j] += w * delta[j];
                    }
                    den += w;
                }
                let mut step = [num[0] / den, num[1] / den, num[2] / den];
                let before = local(&values[v]);
                for _ in 0..8 {
                    let cand = values[v].compose(UnitQuaternion::exp(step));
                    if local(&cand) <= before + 1e-15 {
                        max_update =
                            max_update.max(geodesic_distance(&values[v], &cand).radians());
                        values[v] = cand;
                        break;
                    }
                    for s in &mut step {
                        *s *= 0.5;
                    }
                }
            }
            trace.push(objective_value(graph, &values, cost));
            if max_update < tol {
                stage_converged = true;
                break;
            }
        }
        converged &= stage_converged;
        stage_traces.push(trace);
    }
    Ok(SolveOutcome {
        values,
        converged,
        stage_traces,
    })
}
