//! Tape-based reverse-mode automatic differentiation over small dense
//! vectors.
//!
//! The op set is exactly what the message-passing solver needs: affine
//! layers, leaky-ReLU, concatenation, softmax over a neighbor set, weighted
//! sums, quaternion composition/conjugation/normalization, the sign-flip
//! invariant quaternion distance, and scalar linear combinations.
//!
//! Values and gradients live in flat arenas so a tape can be reset and
//! refilled without reallocating. A forward pass through the tape calls the
//! same numeric kernels as the untaped inference path, which keeps the two
//! bit-identical.

use crate::error::{Error, Result};
use crate::so3;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(pub(crate) u32);

#[derive(Clone, Copy, Debug)]
struct ArgRange {
    start: u32,
    len: u32,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Affine { w: ValueId, b: ValueId, x: ValueId },
    LeakyRelu { x: ValueId, slope: f64 },
    Concat { args: ArgRange },
    Softmax { args: ArgRange },
    WeightedSum { weights: ValueId, args: ArgRange },
    QuatCompose { a: ValueId, b: ValueId, sign: f64 },
    QuatConjugate { a: ValueId, sign: f64 },
    QuatNormalize { x: ValueId, sign: f64 },
    QuatDistance { a: ValueId, b: ValueId, minus_branch: bool },
    Combine { args: ArgRange, coeffs: ArgRange },
}

/// Reverse-mode tape.
#[derive(Default)]
pub struct Tape {
    ops: Vec<Op>,
    offsets: Vec<usize>,
    data: Vec<f64>,
    grad: Vec<f64>,
    args: Vec<ValueId>,
    coeffs: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            offsets: vec![0],
            ..Default::default()
        }
    }

    /// Clears the tape, keeping allocated capacity.
    pub fn reset(&mut self) {
        self.ops.clear();
        self.offsets.clear();
        self.offsets.push(0);
        self.data.clear();
        self.grad.clear();
        self.args.clear();
        self.coeffs.clear();
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn range(&self, id: ValueId) -> std::ops::Range<usize> {
        let i = id.0 as usize;
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn dim(&self, id: ValueId) -> usize {
        self.range(id).len()
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.data[self.range(id)]
    }

    /// Gradient of the last `backward` call with respect to `id`.
    pub fn grad(&self, id: ValueId) -> &[f64] {
        &self.grad[self.range(id)]
    }

    fn push(&mut self, op: Op, dim: usize) -> ValueId {
        let id = ValueId(self.ops.len() as u32);
        self.ops.push(op);
        self.data.resize(self.data.len() + dim, 0.0);
        self.offsets.push(self.data.len());
        id
    }

    fn out_slice(&mut self, id: ValueId) -> &mut [f64] {
        let r = self.range(id);
        &mut self.data[r]
    }

    fn push_args(&mut self, ids: &[ValueId]) -> ArgRange {
        let start = self.args.len() as u32;
        self.args.extend_from_slice(ids);
        ArgRange {
            start,
            len: ids.len() as u32,
        }
    }

    fn check_finite(&self, id: ValueId) {
        debug_assert!(
            self.value(id).iter().all(|v| v.is_finite()),
            "non-finite value produced by op {:?}",
            self.ops[id.0 as usize]
        );
    }

    /// Records an input or parameter leaf.
    pub fn leaf(&mut self, values: &[f64]) -> ValueId {
        let id = self.push(Op::Leaf, values.len());
        self.out_slice(id).copy_from_slice(values);
        id
    }

    /// Affine layer `W x + b`, with `W` stored row-major.
    pub fn affine(&mut self, w: ValueId, b: ValueId, x: ValueId) -> Result<ValueId> {
        let rows = self.dim(b);
        let cols = self.dim(x);
        if self.dim(w) != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} weight"),
                got: format!("{} values", self.dim(w)),
            });
        }
        let id = self.push(Op::Affine { w, b, x }, rows);
        let (wr, br, xr, or) = (self.range(w), self.range(b), self.range(x), self.range(id));
        let (head, out) = self.data.split_at_mut(or.start);
        kernels::affine(&head[wr], &head[br], &head[xr], &mut out[..rows]);
        self.check_finite(id);
        Ok(id)
    }

    pub fn leaky_relu(&mut self, x: ValueId, slope: f64) -> ValueId {
        let dim = self.dim(x);
        let id = self.push(Op::LeakyRelu { x, slope }, dim);
        let (xr, or) = (self.range(x), self.range(id));
        let (head, out) = self.data.split_at_mut(or.start);
        kernels::leaky_relu(&head[xr], slope, &mut out[..dim]);
        id
    }

    pub fn concat(&mut self, parts: &[ValueId]) -> ValueId {
        let dim = parts.iter().map(|&p| self.dim(p)).sum();
        let args = self.push_args(parts);
        let id = self.push(Op::Concat { args }, dim);
        let or = self.range(id);
        let mut at = or.start;
        for &p in parts {
            let pr = self.range(p);
            let (head, out) = self.data.split_at_mut(at);
            let len = pr.len();
            out[..len].copy_from_slice(&head[pr]);
            at += len;
        }
        id
    }

    /// Softmax over scalar logits; output has one weight per input.
    pub fn softmax(&mut self, logits: &[ValueId]) -> Result<ValueId> {
        if logits.is_empty() {
            return Err(Error::EmptySet);
        }
        for &l in logits {
            if self.dim(l) != 1 {
                return Err(Error::ShapeMismatch {
                    expected: "scalar logit".to_string(),
                    got: format!("dim {}", self.dim(l)),
                });
            }
        }
        let args = self.push_args(logits);
        let id = self.push(Op::Softmax { args }, logits.len());
        let or = self.range(id);
        for (k, &l) in logits.iter().enumerate() {
            self.data[or.start + k] = self.data[self.offsets[l.0 as usize]];
        }
        kernels::softmax_in_place(&mut self.data[or]);
        self.check_finite(id);
        Ok(id)
    }

    /// `sum_i weights[i] * items[i]` with equal-dimension items.
    pub fn weighted_sum(&mut self, weights: ValueId, items: &[ValueId]) -> Result<ValueId> {
        if items.is_empty() {
            return Err(Error::EmptySet);
        }
        let dim = self.dim(items[0]);
        if self.dim(weights) != items.len() || items.iter().any(|&i| self.dim(i) != dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("{} items of dim {dim}", self.dim(weights)),
                got: format!("{} items", items.len()),
            });
        }
        let args = self.push_args(items);
        let id = self.push(Op::WeightedSum { weights, args }, dim);
        let or = self.range(id);
        let wr = self.range(weights);
        for (k, &item) in items.iter().enumerate() {
            let ir = self.range(item);
            let wk = self.data[wr.start + k];
            for j in 0..dim {
                self.data[or.start + j] += wk * self.data[ir.start + j];
            }
        }
        self.check_finite(id);
        Ok(id)
    }

    fn quat_of(&self, id: ValueId) -> [f64; 4] {
        let r = self.range(id);
        [
            self.data[r.start],
            self.data[r.start + 1],
            self.data[r.start + 2],
            self.data[r.start + 3],
        ]
    }

    fn expect_quat(&self, id: ValueId) -> Result<()> {
        if self.dim(id) != 4 {
            return Err(Error::ShapeMismatch {
                expected: "quaternion (dim 4)".to_string(),
                got: format!("dim {}", self.dim(id)),
            });
        }
        Ok(())
    }

    /// Quaternion composition with canonical output sign.
    pub fn quat_compose(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.expect_quat(a)?;
        self.expect_quat(b)?;
        let mut c = so3::hamilton(&self.quat_of(a), &self.quat_of(b));
        let sign = if so3::canonical_flip(&c) { -1.0 } else { 1.0 };
        for v in &mut c {
            *v *= sign;
        }
        let id = self.push(Op::QuatCompose { a, b, sign }, 4);
        self.out_slice(id).copy_from_slice(&c);
        Ok(id)
    }

    /// Conjugate (inverse for unit quaternions), canonical output sign.
    pub fn quat_conjugate(&mut self, a: ValueId) -> Result<ValueId> {
        self.expect_quat(a)?;
        let q = self.quat_of(a);
        let mut c = [q[0], -q[1], -q[2], -q[3]];
        let sign = if so3::canonical_flip(&c) { -1.0 } else { 1.0 };
        for v in &mut c {
            *v *= sign;
        }
        let id = self.push(Op::QuatConjugate { a, sign }, 4);
        self.out_slice(id).copy_from_slice(&c);
        Ok(id)
    }

    /// Normalizes a raw 4-vector onto the unit sphere (canonical sign). The
    /// gradient is the normalization Jacobian `(I - q q^T) / |x|`.
    pub fn quat_normalize(&mut self, x: ValueId) -> Result<ValueId> {
        self.expect_quat(x)?;
        let raw = self.quat_of(x);
        let (q, _, flipped) = so3::normalize_parts(&raw)?;
        let sign = if flipped { -1.0 } else { 1.0 };
        let id = self.push(Op::QuatNormalize { x, sign }, 4);
        self.out_slice(id).copy_from_slice(&q);
        Ok(id)
    }

    /// Sign-flip invariant quaternion distance `min(|a-b|, |a+b|)`; ties take
    /// the minus branch.
    pub fn quat_distance(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.expect_quat(a)?;
        self.expect_quat(b)?;
        let qa = self.quat_of(a);
        let qb = self.quat_of(b);
        let mut minus = 0.0;
        let mut plus = 0.0;
        for i in 0..4 {
            minus += (qa[i] - qb[i]) * (qa[i] - qb[i]);
            plus += (qa[i] + qb[i]) * (qa[i] + qb[i]);
        }
        let minus_branch = minus <= plus;
        let id = self.push(Op::QuatDistance { a, b, minus_branch }, 1);
        let val = if minus_branch { minus } else { plus };
        self.out_slice(id)[0] = val.sqrt();
        Ok(id)
    }

    /// Scalar linear combination `sum_i coeffs[i] * items[i]`.
    pub fn combine(&mut self, items: &[ValueId], coeffs: &[f64]) -> Result<ValueId> {
        if items.len() != coeffs.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coefficients", items.len()),
                got: format!("{}", coeffs.len()),
            });
        }
        for &i in items {
            if self.dim(i) != 1 {
                return Err(Error::ShapeMismatch {
                    expected: "scalar term".to_string(),
                    got: format!("dim {}", self.dim(i)),
                });
            }
        }
        let args = self.push_args(items);
        let cstart = self.coeffs.len() as u32;
        self.coeffs.extend_from_slice(coeffs);
        let coeffs_range = ArgRange {
            start: cstart,
            len: coeffs.len() as u32,
        };
        let id = self.push(
            Op::Combine {
                args,
                coeffs: coeffs_range,
            },
            1,
        );
        let mut acc = 0.0;
        for (k, &item) in items.iter().enumerate() {
            acc += coeffs[k] * self.data[self.offsets[item.0 as usize]];
        }
        self.out_slice(id)[0] = acc;
        self.check_finite(id);
        Ok(id)
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate into every
    /// node reachable from the loss; untouched nodes keep zero.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if loss.0 as usize >= self.ops.len() {
            return Err(Error::TapeCorrupt(format!(
                "loss id {} out of range ({} ops)",
                loss.0,
                self.ops.len()
            )));
        }
        if self.dim(loss) != 1 {
            return Err(Error::TapeCorrupt(format!(
                "loss must be scalar, has dim {}",
                self.dim(loss)
            )));
        }
        self.grad.clear();
        self.grad.resize(self.data.len(), 0.0);
        self.grad[self.offsets[loss.0 as usize]] = 1.0;

        let Tape {
            ops,
            offsets,
            data,
            grad,
            args,
            coeffs,
        } = self;
        let range = |id: ValueId| offsets[id.0 as usize]..offsets[id.0 as usize + 1];

        let mut gout: Vec<f64> = Vec::new();
        for idx in (0..=loss.0 as usize).rev() {
            let out_range = offsets[idx]..offsets[idx + 1];
            gout.clear();
            gout.extend_from_slice(&grad[out_range.clone()]);
            if gout.iter().all(|&g| g == 0.0) {
                continue;
            }
            match ops[idx] {
                Op::Leaf => {}
                Op::Affine { w, b, x } => {
                    let (wr, br, xr) = (range(w), range(b), range(x));
                    let rows = br.len();
                    let cols = xr.len();
                    {
                        let gb = &mut grad[br];
                        for r in 0..rows {
                            gb[r] += gout[r];
                        }
                    }
                    {
                        let xv = &data[xr.clone()];
                        let gw = &mut grad[wr.clone()];
                        for r in 0..rows {
                            let gr = gout[r];
                            if gr != 0.0 {
                                let row = &mut gw[r * cols..(r + 1) * cols];
                                for c in 0..cols {
                                    row[c] += gr * xv[c];
                                }
                            }
                        }
                    }
                    {
                        let wv = &data[wr];
                        let gx = &mut grad[xr];
                        for r in 0..rows {
                            let gr = gout[r];
                            if gr != 0.0 {
                                let row = &wv[r * cols..(r + 1) * cols];
                                for c in 0..cols {
                                    gx[c] += row[c] * gr;
                                }
                            }
                        }
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xr = range(x);
                    let xv = &data[xr.clone()];
                    let gx = &mut grad[xr];
                    for j in 0..gout.len() {
                        gx[j] += gout[j] * if xv[j] > 0.0 { 1.0 } else { slope };
                    }
                }
                Op::Concat { args: ar } => {
                    let ids = &args[ar.start as usize..(ar.start + ar.len) as usize];
                    let mut at = 0;
                    for &p in ids {
                        let pr = range(p);
                        let len = pr.len();
                        let gp = &mut grad[pr];
                        for j in 0..len {
                            gp[j] += gout[at + j];
                        }
                        at += len;
                    }
                }
                Op::Softmax { args: ar } => {
                    let ids = &args[ar.start as usize..(ar.start + ar.len) as usize];
                    let y = &data[out_range.clone()];
                    let dot: f64 = y.iter().zip(&gout).map(|(yi, gi)| yi * gi).sum();
                    for (k, &l) in ids.iter().enumerate() {
                        grad[offsets[l.0 as usize]] += y[k] * (gout[k] - dot);
                    }
                }
                Op::WeightedSum { weights, args: ar } => {
                    let ids = &args[ar.start as usize..(ar.start + ar.len) as usize];
                    let wr = range(weights);
                    for (k, &item) in ids.iter().enumerate() {
                        let wk = data[wr.start + k];
                        let ir = range(item);
                        let gi = &mut grad[ir];
                        for j in 0..gout.len() {
                            gi[j] += wk * gout[j];
                        }
                    }
                    for (k, &item) in ids.iter().enumerate() {
                        let ir = range(item);
                        let iv = &data[ir];
                        let mut acc = 0.0;
                        for j in 0..gout.len() {
                            acc += gout[j] * iv[j];
                        }
                        grad[wr.start + k] += acc;
                    }
                }
                Op::QuatCompose { a, b, sign } => {
                    let (ar, br) = (range(a), range(b));
                    let av = [data[ar.start], data[ar.start + 1], data[ar.start + 2], data[ar.start + 3]];
                    let bv = [data[br.start], data[br.start + 1], data[br.start + 2], data[br.start + 3]];
                    let g = [sign * gout[0], sign * gout[1], sign * gout[2], sign * gout[3]];
                    {
                        let ga = &mut grad[ar];
                        ga[0] += g[0] * bv[0] + g[1] * bv[1] + g[2] * bv[2] + g[3] * bv[3];
                        ga[1] += -g[0] * bv[1] + g[1] * bv[0] - g[2] * bv[3] + g[3] * bv[2];
                        ga[2] += -g[0] * bv[2] + g[1] * bv[3] + g[2] * bv[0] - g[3] * bv[1];
                        ga[3] += -g[0] * bv[3] - g[1] * bv[2] + g[2] * bv[1] + g[3] * bv[0];
                    }
                    {
                        let gb = &mut grad[br];
                        gb[0] += g[0] * av[0] + g[1] * av[1] + g[2] * av[2] + g[3] * av[3];
                        gb[1] += -g[0] * av[1] + g[1] * av[0] + g[2] * av[3] - g[3] * av[2];
                        gb[2] += -g[0] * av[2] - g[1] * av[3] + g[2] * av[0] + g[3] * av[1];
                        gb[3] += -g[0] * av[3] + g[1] * av[2] - g[2] * av[1] + g[3] * av[0];
                    }
                }
                Op::QuatConjugate { a, sign } => {
                    let ar = range(a);
                    let ga = &mut grad[ar];
                    ga[0] += sign * gout[0];
                    ga[1] -= sign * gout[1];
                    ga[2] -= sign * gout[2];
                    ga[3] -= sign * gout[3];
                }
                Op::QuatNormalize { x, sign } => {
                    let xr = range(x);
                    let xv = &data[xr.clone()];
                    let norm = xv.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let q = [xv[0] / norm, xv[1] / norm, xv[2] / norm, xv[3] / norm];
                    let dot: f64 = (0..4).map(|j| q[j] * gout[j]).sum();
                    let gx = &mut grad[xr];
                    for j in 0..4 {
                        gx[j] += sign * (gout[j] - q[j] * dot) / norm;
                    }
                }
                Op::QuatDistance { a, b, minus_branch } => {
                    let y = data[out_range.start];
                    if y < 1e-12 {
                        continue;
                    }
                    let (ar, br) = (range(a), range(b));
                    let s = if minus_branch { -1.0 } else { 1.0 };
                    let g = gout[0];
                    for j in 0..4 {
                        let m = data[ar.start + j] + s * data[br.start + j];
                        grad[ar.start + j] += g * m / y;
                        grad[br.start + j] += s * g * m / y;
                    }
                }
                Op::Combine { args: ar, coeffs: cr } => {
                    let ids = &args[ar.start as usize..(ar.start + ar.len) as usize];
                    let cs = &coeffs[cr.start as usize..(cr.start + cr.len) as usize];
                    let g = gout[0];
                    for (k, &item) in ids.iter().enumerate() {
                        grad[offsets[item.0 as usize]] += cs[k] * g;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Numeric kernels shared by the taped and untaped forward paths.
pub(crate) mod kernels {
    /// `out = W x + b`, `W` row-major with `out.len()` rows.
    pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
        let cols = x.len();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = b[r];
            for c in 0..cols {
                acc += row[c] * x[c];
            }
            *o = acc;
        }
    }

    pub fn leaky_relu(x: &[f64], slope: f64, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = if v > 0.0 { v } else { slope * v };
        }
    }

    /// Stabilized softmax (max subtraction), in place.
    pub fn softmax_in_place(vals: &mut [f64]) {
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in vals.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in vals.iter_mut() {
            *v /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite difference of `f` along leaf `id`, component `j`.
    fn finite_diff(
        build: &dyn Fn(&mut Tape, &[Vec<f64>]) -> ValueId,
        leaves: &[Vec<f64>],
        leaf: usize,
        j: usize,
        h: f64,
    ) -> f64 {
        let eval = |delta: f64| {
            let mut shifted = leaves.to_vec();
            shifted[leaf][j] += delta;
            let mut tape = Tape::new();
            let out = build(&mut tape, &shifted);
            tape.value(out)[0]
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    /// Checks analytic gradients of a scalar-valued program against central
    /// finite differences for every leaf component.
    fn grad_check(build: &dyn Fn(&mut Tape, &[Vec<f64>]) -> ValueId, leaves: &[Vec<f64>]) {
        let mut tape = Tape::new();
        let out = build(&mut tape, leaves);
        tape.backward(out).unwrap();
        for (leaf, vals) in leaves.iter().enumerate() {
            let analytic = tape.grad(ValueId(leaf as u32)).to_vec();
            for j in 0..vals.len() {
                let fd = finite_diff(build, leaves, leaf, j, 1e-5);
                let err = (analytic[j] - fd).abs();
                let tol = 1e-7 + 1e-4 * analytic[j].abs().max(fd.abs());
                assert!(
                    err < tol,
                    "leaf {leaf}[{j}]: analytic {} vs fd {fd}",
                    analytic[j]
                );
            }
        }
    }

    fn unit(v: [f64; 4]) -> Vec<f64> {
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        v.iter().map(|c| c / n).collect()
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 2.0, 3.0]);
        let c = tape.leaf(&[5.0]);
        tape.backward(c).unwrap();
        assert!(tape.grad(x).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        // loss = sum of a single linear layer's output = 1^T (Wx + b), so
        // dW = outer(1, x) and db = 1.
        let mut tape = Tape::new();
        let w = tape.leaf(&[0.5, -1.0, 2.0, 0.0, 1.0, 3.0]);
        let b = tape.leaf(&[0.1, 0.2]);
        let x = tape.leaf(&[1.5, -2.5, 4.0]);
        let y = tape.affine(w, b, x).unwrap();
        // Reduce with a second affine whose weight is all ones.
        let ones_w = tape.leaf(&[1.0, 1.0]);
        let zero_b = tape.leaf(&[0.0]);
        let loss = tape.affine(ones_w, zero_b, y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w), &[1.5, -2.5, 4.0, 1.5, -2.5, 4.0]);
        assert_eq!(tape.grad(b), &[1.0, 1.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let ls: Vec<ValueId> = [0.0, 0.0, 0.0, 0.0]
            .iter()
            .map(|&v| tape.leaf(&[v]))
            .collect();
        let y = tape.softmax(&ls).unwrap();
        assert_eq!(tape.value(y), &[0.25, 0.25, 0.25, 0.25]);

        let single = tape.leaf(&[3.7]);
        let y = tape.softmax(&[single]).unwrap();
        assert_eq!(tape.value(y), &[1.0]);

        let a = tape.leaf(&[0.0]);
        let b = tape.leaf(&[3.0f64.ln()]);
        let y = tape.softmax(&[a, b]).unwrap();
        let vals = tape.value(y);
        assert!((vals[0] - 0.25).abs() < 1e-12);
        assert!((vals[1] - 0.75).abs() < 1e-12);

        assert!(matches!(tape.softmax(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut tape = Tape::new();
        let base: Vec<ValueId> = [0.3, -1.2, 2.0].iter().map(|&v| tape.leaf(&[v])).collect();
        let shifted: Vec<ValueId> = [100.3, 98.8, 102.0].iter().map(|&v| tape.leaf(&[v])).collect();
        let ya = tape.softmax(&base).unwrap();
        let yb = tape.softmax(&shifted).unwrap();
        let (a, b) = (tape.value(ya).to_vec(), tape.value(yb).to_vec());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        let sum: f64 = a.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quat_normalize_tangent_gradient() {
        // At raw (1,0,0,0) the Jacobian is I - e0 e0^T: the w component's
        // gradient w.r.t. itself is zero.
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 0.0, 0.0, 0.0]);
        let q = tape.quat_normalize(x).unwrap();
        let pick_w = tape.leaf(&[1.0, 0.0, 0.0, 0.0]);
        let zero = tape.leaf(&[0.0]);
        let loss = tape.affine(pick_w, zero, q).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(x)[0].abs() < 1e-15);

        assert!(matches!(
            {
                let z = tape.leaf(&[0.0; 4]);
                tape.quat_normalize(z)
            },
            Err(Error::DegenerateQuaternion { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        // A program exercising every differentiable op.
        let build = |tape: &mut Tape, leaves: &[Vec<f64>]| -> ValueId {
            let ids: Vec<ValueId> = leaves.iter().map(|v| tape.leaf(v)).collect();
            let (qa, qb, w, b, raw, l0, l1) =
                (ids[0], ids[1], ids[2], ids[3], ids[4], ids[5], ids[6]);
            let comp = tape.quat_compose(qa, qb).unwrap();
            let conj = tape.quat_conjugate(comp).unwrap();
            let named = tape.quat_normalize(raw).unwrap();
            let cat = tape.concat(&[conj, named]);
            let h = tape.affine(w, b, cat).unwrap();
            let h = tape.leaky_relu(h, 0.01);
            let sm = tape.softmax(&[l0, l1]).unwrap();
            let mix = tape.weighted_sum(sm, &[h, named]).unwrap();
            let d = tape.quat_distance(mix, qa).unwrap();
            let d2 = tape.quat_distance(conj, qb).unwrap();
            tape.combine(&[d, d2], &[0.75, 0.25]).unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let mut leaves = vec![
                unit([
                    rng.gen_range(0.2..1.0),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ]),
                unit([
                    rng.gen_range(0.2..1.0),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ]),
                (0..32).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                (0..4).map(|_| rng.gen_range(-0.2..0.2)).collect(),
                (0..4).map(|_| rng.gen_range(0.3..1.0)).collect(),
                vec![rng.gen_range(-1.0..1.0)],
                vec![rng.gen_range(-1.0..1.0)],
            ];
            // Keep leaky-relu inputs away from the kink.
            leaves[3] = leaves[3].iter().map(|v| v + 0.3).collect();
            grad_check(&build, &leaves);
        }
    }

    #[test]
    fn taped_forward_matches_kernel_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let (wi, bi, xi) = (tape.leaf(&w), tape.leaf(&b), tape.leaf(&x));
        let y = tape.affine(wi, bi, xi).unwrap();
        let y = tape.leaky_relu(y, 0.01);
        let mut direct = vec![0.0; 3];
        kernels::affine(&w, &b, &x, &mut direct);
        let mut relu = vec![0.0; 3];
        kernels::leaky_relu(&direct, 0.01, &mut relu);
        assert_eq!(tape.value(y), relu.as_slice());
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::TapeCorrupt(_))));
    }

    #[test]
    fn reset_reuses_tape() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0]);
        let y = tape.combine(&[x], &[2.0]).unwrap();
        assert_eq!(tape.value(y), &[2.0]);
        tape.reset();
        assert!(tape.is_empty());
        let x = tape.leaf(&[3.0]);
        let y = tape.combine(&[x], &[2.0]).unwrap();
        assert_eq!(tape.value(y), &[6.0]);
    }
}
