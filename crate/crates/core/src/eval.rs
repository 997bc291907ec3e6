//! Gauge alignment between predicted and ground-truth graphs, the metric
//! suite, and the degree-vs-error diagnostic.
//!
//! Two graphs only share a frame up to one global rotation, so every metric
//! first solves `S = argmin sum_v d_theta(truth_v, pred_v * S)^2`: a
//! closed-form chordal initialization (principal eigenvector of the
//! quaternion outer-product sum) refined by Gauss-Newton on the geodesic
//! sum of squares.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ViewGraph;
use crate::so3::{geodesic_distance, UnitQuaternion};

/// Exceedance thresholds reported by [`MetricsReport`], in degrees.
pub const ERROR_THRESHOLDS_DEG: [f64; 5] = [10.0, 15.0, 30.0, 60.0, 90.0];

/// Aligned per-node errors plus the summary statistics.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub errors_deg: Vec<f64>,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub rms_deg: f64,
    pub pct_gt10: f64,
    pub pct_gt15: f64,
    pub pct_gt30: f64,
    pub pct_gt60: f64,
    pub pct_gt90: f64,
    pub alignment: UnitQuaternion,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub seconds: f64,
}

/// 3x3 linear solve via Cramer's rule; the Gauss-Newton normal matrix here
/// is symmetric positive definite and tiny.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut m = *a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        let dk = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        out[k] = dk / det;
    }
    Some(out)
}

/// Inverse left Jacobian of SO(3): `I - [w]/2 + c [w]^2` with
/// `c = 1/theta^2 - cot(theta/2) / (2 theta)`.
fn inv_left_jacobian(w: &[f64; 3]) -> [[f64; 3]; 3] {
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    let c = if theta < 1e-4 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let half = theta / 2.0;
        1.0 / theta2 - (half.cos() / half.sin()) / (2.0 * theta)
    };
    let wx = [
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ];
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for col in 0..3 {
            let mut wx2 = 0.0;
            for k in 0..3 {
                wx2 += wx[r][k] * wx[k][col];
            }
            out[r][col] = (if r == col { 1.0 } else { 0.0 }) - 0.5 * wx[r][col] + c * wx2;
        }
    }
    out
}

fn sum_sq_objective(pred: &[UnitQuaternion], truth: &[UnitQuaternion], s: &UnitQuaternion) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| {
            let d = geodesic_distance(&p.compose(*s), t).radians();
            d * d
        })
        .sum()
}

/// Global gauge rotation minimizing the geodesic sum of squares between
/// `pred * S` and `truth`.
pub fn align(pred: &[UnitQuaternion], truth: &[UnitQuaternion]) -> Result<UnitQuaternion> {
    if pred.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} truth rotations", pred.len()),
            got: format!("{}", truth.len()),
        });
    }

    // Chordal closed form: principal eigenvector of sum_v q_v q_v^T with
    // q_v the quaternion of pred_v^-1 * truth_v (sign-invariant).
    let mut m = [[0.0; 4]; 4];
    for (p, t) in pred.iter().zip(truth) {
        let q = p.inverse().compose(*t).components();
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] += q[r] * q[c];
            }
        }
    }
    let mut best: Option<([f64; 4], f64)> = None;
    for start in 0..4 {
        let mut v = [0.0; 4];
        v[start] = 1.0;
        for _ in 0..200 {
            let mut next = [0.0; 4];
            for r in 0..4 {
                for c in 0..4 {
                    next[r] += m[r][c] * v[c];
                }
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-30 {
                break;
            }
            for x in &mut next {
                *x /= norm;
            }
            v = next;
        }
        let mut rayleigh = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                rayleigh += v[r] * m[r][c] * v[c];
            }
        }
        if best.map_or(true, |(_, b)| rayleigh > b) {
            best = Some((v, rayleigh));
        }
    }
    let (v, _) = best.expect("at least one start");
    let mut s = UnitQuaternion::normalize(v)?;

    // Gauss-Newton refinement on the geodesic objective with backtracking,
    // so the objective never increases.
    let mut objective = sum_sq_objective(pred, truth, &s);
    for _ in 0..50 {
        let mut h = [[0.0; 3]; 3];
        let mut rhs = [0.0; 3];
        for (p, t) in pred.iter().zip(truth) {
            let w = p.compose(s).inverse().compose(*t).log();
            let a = inv_left_jacobian(&w);
            for r in 0..3 {
                // J^T w with J = inv_left_jacobian: J w = w, so the right
                // side reduces to the plain residual sum.
                rhs[r] += w[r];
                for c in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += a[k][r] * a[k][c];
                    }
                    h[r][c] += acc;
                }
            }
        }
        let Some(mut delta) = solve3(&h, &rhs) else { break };
        let mut improved = false;
        for _ in 0..20 {
            let cand = s.compose(UnitQuaternion::exp(delta));
            let cand_obj = sum_sq_objective(pred, truth, &cand);
            if cand_obj <= objective + 1e-15 {
                s = cand;
                objective = cand_obj;
                improved = true;
                break;
            }
            for d in &mut delta {
                *d *= 0.5;
            }
        }
        if !improved {
            break;
        }
        let step = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
        if step < 1e-10 {
            break;
        }
    }
    Ok(s)
}

/// Per-node geodesic errors in degrees after alignment.
pub fn aligned_errors_deg(pred: &[UnitQuaternion], truth: &[UnitQuaternion]) -> Result<Vec<f64>> {
    let s = align(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| geodesic_distance(&p.compose(s), t).degrees())
        .collect())
}

/// Median with the midpoint convention for even counts.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty slice");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summary statistics over a list of aligned errors (degrees).
pub fn summarize(
    errors_deg: Vec<f64>,
    alignment: UnitQuaternion,
    n_edges: usize,
    seconds: f64,
) -> MetricsReport {
    let n = errors_deg.len();
    let nf = n as f64;
    let mean = errors_deg.iter().sum::<f64>() / nf;
    let rms = (errors_deg.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
    let pct = |t: f64| 100.0 * errors_deg.iter().filter(|&&e| e > t).count() as f64 / nf;
    MetricsReport {
        mean_deg: mean,
        median_deg: median(&errors_deg),
        rms_deg: rms,
        pct_gt10: pct(ERROR_THRESHOLDS_DEG[0]),
        pct_gt15: pct(ERROR_THRESHOLDS_DEG[1]),
        pct_gt30: pct(ERROR_THRESHOLDS_DEG[2]),
        pct_gt60: pct(ERROR_THRESHOLDS_DEG[3]),
        pct_gt90: pct(ERROR_THRESHOLDS_DEG[4]),
        alignment,
        n_nodes: n,
        n_edges,
        seconds,
        errors_deg,
    }
}

/// Aligns and summarizes. `seconds` is the caller-measured solve time.
pub fn metrics(
    pred: &[UnitQuaternion],
    truth: &[UnitQuaternion],
    n_edges: usize,
    seconds: f64,
) -> Result<MetricsReport> {
    let s = align(pred, truth)?;
    let errors: Vec<f64> = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| geodesic_distance(&p.compose(s), t).degrees())
        .collect();
    Ok(summarize(errors, s, n_edges, seconds))
}

pub const METRICS_CSV_HEADER: &str =
    "graph,solver,n_nodes,n_edges,mean_deg,median_deg,rms_deg,pct_gt10,pct_gt15,pct_gt30,pct_gt60,pct_gt90,seconds";

impl MetricsReport {
    pub fn csv_row(&self, graph_label: &str, solver: &str) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.6}",
            graph_label,
            solver,
            self.n_nodes,
            self.n_edges,
            self.mean_deg,
            self.median_deg,
            self.rms_deg,
            self.pct_gt10,
            self.pct_gt15,
            self.pct_gt30,
            self.pct_gt60,
            self.pct_gt90,
            self.seconds
        )
    }
}

/// One row of the degree-vs-error diagnostic.
#[derive(Clone, Debug)]
pub struct DegreeErrorRow {
    pub node: usize,
    pub degree: usize,
    pub error_deg: f64,
    pub stage: String,
}

pub const DEGREE_ERROR_CSV_HEADER: &str = "node,degree,error_deg,stage";

/// Per-node degree and aligned error, for scatter plots before and after
/// averaging (distinguished by the `stage` label).
pub fn degree_error_table(
    graph: &ViewGraph,
    values: &[UnitQuaternion],
    stage: &str,
) -> Result<Vec<DegreeErrorRow>> {
    let truth = graph
        .ground_truth
        .as_ref()
        .ok_or(Error::MissingGroundTruth)?;
    let errors = aligned_errors_deg(values, truth)?;
    Ok(errors
        .into_iter()
        .enumerate()
        .map(|(node, error_deg)| DegreeErrorRow {
            node,
            degree: graph.degree(node),
            error_deg,
            stage: stage.to_string(),
        })
        .collect())
}

pub fn write_degree_error_csv<W: std::io::Write>(
    mut w: W,
    rows: &[DegreeErrorRow],
) -> std::io::Result<()> {
    writeln!(w, "{DEGREE_ERROR_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:.3},{}", r.node, r.degree, r.error_deg, r.stage)?;
    }
    Ok(())
}

/// Ranks with average-rank tie handling (1-based).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("no NaN"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Runs `f` `repeats` times and returns the median wall-clock seconds along
/// with the last output.
pub fn time_median<T>(repeats: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    assert!(repeats >= 1);
    let mut times = Vec::with_capacity(repeats);
    let mut out = None;
    for _ in 0..repeats {
        let start = std::time::Instant::now();
        out = Some(f());
        times.push(start.elapsed().as_secs_f64());
    }
    (median(&times), out.expect("at least one repeat"))
}

/// One row of the runtime table.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub solver: String,
    pub median_seconds: f64,
    pub repeats: usize,
}

pub const BENCH_CSV_HEADER: &str = "n_nodes,n_edges,solver,median_seconds,repeats";

pub fn write_bench_csv<W: std::io::Write>(mut w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{}",
            r.n_nodes, r.n_edges, r.solver, r.median_seconds, r.repeats
        )?;
    }
    Ok(())
}
