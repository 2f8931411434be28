//! Reverse-mode automatic differentiation over a Wengert list.
//!
//! Every node value is a flat f64 vector (scalars are length-1 vectors);
//! matrices only appear as [`ParamStore`] tensors, engaged through ops like
//! [`Tape::matvec`]. Backward accumulates gradients into per-node buffers
//! and, for parameter-touching ops, into a [`Grads`] aligned with the
//! store. The finite-difference harness in `gradcheck` is the arbiter for
//! every derivative implemented here.

use super::store::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = W·x
    MatVec { w: ParamId, x: Var },
    /// y = x + b
    AddBias { x: Var, b: ParamId },
    /// y = P[row] (trainable embedding row)
    ParamRow { p: ParamId, row: usize },
    /// y = flattened parameter tensor
    ParamVec { p: ParamId },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// y = scale·x + shift (elementwise, constants); the shift is baked
    /// into the forward value and has zero derivative
    AffineConst { x: Var, scale: f64 },
    /// y = s·x where s is a scalar node
    MulScalar { x: Var, s: Var },
    Sigmoid(Var),
    Tanh(Var),
    /// y = x[start .. start+len]
    Slice { x: Var, start: usize },
    Concat(Vec<Var>),
    /// scalar y = uᵀv
    Dot(Var, Var),
    SqrtScalar(Var),
    /// scalar y = num/den
    DivScalar { num: Var, den: Var },
    LnScalar(Var),
    /// scalar y = max(0, x)
    MaxZero(Var),
    Softmax(Var),
    /// y[i] = xs[i][0] — scalars stacked into a vector
    Stack(Vec<Var>),
    /// y = Σ w[i]·v_i
    WeightedSum { weights: Var, values: Vec<Var> },
    /// scalar y = x[index]
    Pick { x: Var, index: usize },
    /// scalar y = Σ x[i] over the given indices
    SumPick { x: Var, indices: Vec<usize> },
    SumScalars(Vec<Var>),
    /// y = x ⊙ mask (inverted-dropout mask baked in at forward time)
    Dropout { x: Var, mask: Vec<f64> },
    /// scalar y = max(z,0) − z·t + ln(1+e^(−|z|)) for scalar logit z
    BceWithLogits { logit: Var, target: f64 },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Tape<'s> {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    // ---- forward ops ----

    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> Var {
        self.push(vec![value], Op::Leaf)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.push(vec![0.0; len], Op::Leaf)
    }

    pub fn matvec(&mut self, w: ParamId, x: Var) -> Result<Var> {
        let t = self.store.get(w);
        let xv = &self.nodes[x.0].value;
        if t.cols() != xv.len() {
            return Err(Error::DimensionMismatch(format!(
                "matvec `{}` {}x{} with input of length {}",
                self.store.name(w),
                t.rows(),
                t.cols(),
                xv.len()
            )));
        }
        let y = t.matvec(xv);
        Ok(self.push(y, Op::MatVec { w, x }))
    }

    pub fn add_bias(&mut self, x: Var, b: ParamId) -> Result<Var> {
        let t = self.store.get(b);
        let xv = &self.nodes[x.0].value;
        if t.len() != xv.len() {
            return Err(Error::DimensionMismatch(format!(
                "bias `{}` of length {} added to vector of length {}",
                self.store.name(b),
                t.len(),
                xv.len()
            )));
        }
        let y: Vec<f64> = xv.iter().zip(t.as_slice()).map(|(a, b)| a + b).collect();
        Ok(self.push(y, Op::AddBias { x, b }))
    }

    /// Affine map y = W·x + b.
    pub fn affine(&mut self, w: ParamId, x: Var, b: ParamId) -> Result<Var> {
        let h = self.matvec(w, x)?;
        self.add_bias(h, b)
    }

    pub fn param_row(&mut self, p: ParamId, row: usize) -> Var {
        let y = self.store.get(p).row(row).to_vec();
        self.push(y, Op::ParamRow { p, row })
    }

    pub fn param_vec(&mut self, p: ParamId) -> Var {
        let y = self.store.get(p).as_slice().to_vec();
        self.push(y, Op::ParamVec { p })
    }

    fn binary_elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.len() != bv.len() {
            return Err(Error::DimensionMismatch(format!(
                "elementwise op on lengths {} and {}",
                av.len(),
                bv.len()
            )));
        }
        let y: Vec<f64> = av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push(y, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn affine_const(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let y: Vec<f64> = self.nodes[x.0].value.iter().map(|v| scale * v + shift).collect();
        self.push(y, Op::AffineConst { x, scale })
    }

    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.len_of(s) != 1 {
            return Err(Error::DimensionMismatch("mul_scalar needs a scalar node".into()));
        }
        let sv = self.nodes[s.0].value[0];
        let y: Vec<f64> = self.nodes[x.0].value.iter().map(|v| sv * v).collect();
        Ok(self.push(y, Op::MulScalar { x, s }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(y, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y: Vec<f64> = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(y, Op::Tanh(x))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if start + len > xv.len() {
            return Err(Error::DimensionMismatch(format!(
                "slice {start}..{} of vector with length {}",
                start + len,
                xv.len()
            )));
        }
        let y = xv[start..start + len].to_vec();
        Ok(self.push(y, Op::Slice { x, start }))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat of zero vectors".into()));
        }
        let mut y = Vec::new();
        for p in parts {
            y.extend_from_slice(&self.nodes[p.0].value);
        }
        Ok(self.push(y, Op::Concat(parts.to_vec())))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.len() != bv.len() {
            return Err(Error::DimensionMismatch(format!(
                "dot of lengths {} and {}",
                av.len(),
                bv.len()
            )));
        }
        let y: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        Ok(self.push(vec![y], Op::Dot(a, b)))
    }

    pub fn sqrt_scalar(&mut self, x: Var) -> Result<Var> {
        let v = self.scalar_value(x);
        if v < 0.0 {
            return Err(Error::NonFinite("sqrt of negative scalar".into()));
        }
        Ok(self.push(vec![v.sqrt()], Op::SqrtScalar(x)))
    }

    pub fn div_scalar(&mut self, num: Var, den: Var) -> Result<Var> {
        let d = self.scalar_value(den);
        if d == 0.0 {
            return Err(Error::ZeroVector);
        }
        let y = self.scalar_value(num) / d;
        Ok(self.push(vec![y], Op::DivScalar { num, den }))
    }

    pub fn ln_scalar(&mut self, x: Var) -> Result<Var> {
        let v = self.scalar_value(x);
        if v <= 0.0 {
            return Err(Error::NonFinite(format!("ln of non-positive scalar {v}")));
        }
        Ok(self.push(vec![v.ln()], Op::LnScalar(x)))
    }

    pub fn max_zero(&mut self, x: Var) -> Var {
        let v = self.scalar_value(x);
        self.push(vec![v.max(0.0)], Op::MaxZero(x))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let m = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let y: Vec<f64> = exps.iter().map(|e| e / z).collect();
        self.push(y, Op::Softmax(x))
    }

    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        if scalars.is_empty() {
            return Err(Error::EmptyInput("stack of zero scalars".into()));
        }
        let mut y = Vec::with_capacity(scalars.len());
        for s in scalars {
            if self.len_of(*s) != 1 {
                return Err(Error::DimensionMismatch("stack needs scalar nodes".into()));
            }
            y.push(self.nodes[s.0].value[0]);
        }
        Ok(self.push(y, Op::Stack(scalars.to_vec())))
    }

    pub fn weighted_sum(&mut self, weights: Var, values: &[Var]) -> Result<Var> {
        let wv = self.nodes[weights.0].value.clone();
        if wv.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} values",
                wv.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("weighted sum of zero values".into()));
        }
        let dim = self.len_of(values[0]);
        let mut y = vec![0.0; dim];
        for (w, v) in wv.iter().zip(values) {
            for (acc, x) in y.iter_mut().zip(&self.nodes[v.0].value) {
                *acc += w * x;
            }
        }
        Ok(self.push(
            y,
            Op::WeightedSum {
                weights,
                values: values.to_vec(),
            },
        ))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if index >= xv.len() {
            return Err(Error::DimensionMismatch(format!(
                "pick index {index} from vector of length {}",
                xv.len()
            )));
        }
        let y = xv[index];
        Ok(self.push(vec![y], Op::Pick { x, index }))
    }

    pub fn sum_pick(&mut self, x: Var, indices: Vec<usize>) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let mut y = 0.0;
        for &i in &indices {
            if i >= xv.len() {
                return Err(Error::DimensionMismatch(format!(
                    "sum_pick index {i} from vector of length {}",
                    xv.len()
                )));
            }
            y += xv[i];
        }
        Ok(self.push(vec![y], Op::SumPick { x, indices }))
    }

    pub fn sum_scalars(&mut self, scalars: &[Var]) -> Result<Var> {
        if scalars.is_empty() {
            return Err(Error::EmptyInput("sum of zero scalars".into()));
        }
        let mut y = 0.0;
        for s in scalars {
            y += self.scalar_value(*s);
        }
        Ok(self.push(vec![y], Op::SumScalars(scalars.to_vec())))
    }

    pub fn mean_scalars(&mut self, scalars: &[Var]) -> Result<Var> {
        let s = self.sum_scalars(scalars)?;
        Ok(self.affine_const(s, 1.0 / scalars.len() as f64, 0.0))
    }

    /// Inverted dropout: each element is zeroed with probability `rate`,
    /// otherwise scaled by 1/(1−rate). The mask is drawn here and baked
    /// into the tape.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!("dropout rate {rate} outside [0,1)")));
        }
        use rand::RngCore;
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                if u < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let y: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        Ok(self.push(y, Op::Dropout { x, mask }))
    }

    /// Numerically stable binary cross-entropy on a scalar logit.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        if self.len_of(logit) != 1 {
            return Err(Error::DimensionMismatch("bce_with_logits needs a scalar logit".into()));
        }
        let z = self.scalar_value(logit);
        let y = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        Ok(self.push(vec![y], Op::BceWithLogits { logit, target }))
    }

    /// Cosine similarity of two vector nodes.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let ab = self.dot(a, b)?;
        let aa = self.dot(a, a)?;
        let bb = self.dot(b, b)?;
        let na = self.sqrt_scalar(aa)?;
        let nb = self.sqrt_scalar(bb)?;
        let denom = self.mul(na, nb)?;
        self.div_scalar(ab, denom)
    }

    // ---- backward ----

    /// Backpropagate from a scalar loss node, accumulating parameter
    /// gradients into `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Grads) -> Result<()> {
        if self.len_of(loss) != 1 {
            return Err(Error::DimensionMismatch("loss must be a scalar node".into()));
        }
        if !self.scalar_value(loss).is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let t = self.store.get(*w);
                    let xv = &self.nodes[x.0].value;
                    // dL/dx += Wᵀ·g
                    let dx = t.matvec_transposed(&g);
                    acc(&mut adj, x.0, &dx);
                    // dL/dW[r][c] += g[r]·x[c]
                    let gw = grads.slot_mut(*w, t.rows(), t.cols());
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        let row = gw.row_mut(r);
                        for (cell, xc) in row.iter_mut().zip(xv) {
                            *cell += gr * xc;
                        }
                    }
                }
                Op::AddBias { x, b } => {
                    acc(&mut adj, x.0, &g);
                    let t = self.store.get(*b);
                    let gb = grads.slot_mut(*b, t.rows(), t.cols());
                    for (cell, gv) in gb.as_mut_slice().iter_mut().zip(&g) {
                        *cell += gv;
                    }
                }
                Op::ParamRow { p, row } => {
                    let t = self.store.get(*p);
                    let gp = grads.slot_mut(*p, t.rows(), t.cols());
                    for (cell, gv) in gp.row_mut(*row).iter_mut().zip(&g) {
                        *cell += gv;
                    }
                }
                Op::ParamVec { p } => {
                    let t = self.store.get(*p);
                    let gp = grads.slot_mut(*p, t.rows(), t.cols());
                    for (cell, gv) in gp.as_mut_slice().iter_mut().zip(&g) {
                        *cell += gv;
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut adj, a.0, &g);
                    acc(&mut adj, b.0, &g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, a.0, &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    acc(&mut adj, b.0, &neg);
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let da: Vec<f64> = g.iter().zip(&bv).map(|(gv, b)| gv * b).collect();
                    let db: Vec<f64> = g.iter().zip(&av).map(|(gv, a)| gv * a).collect();
                    acc(&mut adj, a.0, &da);
                    acc(&mut adj, b.0, &db);
                }
                Op::AffineConst { x, scale } => {
                    let dx: Vec<f64> = g.iter().map(|v| v * scale).collect();
                    acc(&mut adj, x.0, &dx);
                }
                Op::MulScalar { x, s } => {
                    let sv = self.nodes[s.0].value[0];
                    let xv = &self.nodes[x.0].value;
                    let dx: Vec<f64> = g.iter().map(|v| v * sv).collect();
                    acc(&mut adj, x.0, &dx);
                    let ds: f64 = g.iter().zip(xv).map(|(gv, x)| gv * x).sum();
                    acc(&mut adj, s.0, &[ds]);
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gv, y)| gv * y * (1.0 - y))
                        .collect();
                    acc(&mut adj, x.0, &dx);
                }
                Op::Tanh(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gv, y)| gv * (1.0 - y * y))
                        .collect();
                    acc(&mut adj, x.0, &dx);
                }
                Op::Slice { x, start } => {
                    let len = self.nodes[x.0].value.len();
                    let mut dx = vec![0.0; len];
                    dx[*start..*start + g.len()].copy_from_slice(&g);
                    acc(&mut adj, x.0, &dx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        acc(&mut adj, p.0, &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Dot(a, b) => {
                    let g0 = g[0];
                    let da: Vec<f64> = self.nodes[b.0].value.iter().map(|v| g0 * v).collect();
                    let db: Vec<f64> = self.nodes[a.0].value.iter().map(|v| g0 * v).collect();
                    acc(&mut adj, a.0, &da);
                    acc(&mut adj, b.0, &db);
                }
                Op::SqrtScalar(x) => {
                    let y = node.value[0];
                    // d sqrt(x)/dx = 1/(2 sqrt(x)); guard the x = 0 corner
                    let dx = if y == 0.0 { 0.0 } else { g[0] / (2.0 * y) };
                    acc(&mut adj, x.0, &[dx]);
                }
                Op::DivScalar { num, den } => {
                    let n = self.nodes[num.0].value[0];
                    let d = self.nodes[den.0].value[0];
                    acc(&mut adj, num.0, &[g[0] / d]);
                    acc(&mut adj, den.0, &[-g[0] * n / (d * d)]);
                }
                Op::LnScalar(x) => {
                    let v = self.nodes[x.0].value[0];
                    acc(&mut adj, x.0, &[g[0] / v]);
                }
                Op::MaxZero(x) => {
                    let v = self.nodes[x.0].value[0];
                    let dx = if v > 0.0 { g[0] } else { 0.0 };
                    acc(&mut adj, x.0, &[dx]);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot: f64 = g.iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                    let dx: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| yv * (gv - dot)).collect();
                    acc(&mut adj, x.0, &dx);
                }
                Op::Stack(scalars) => {
                    for (s, gv) in scalars.iter().zip(&g) {
                        acc(&mut adj, s.0, &[*gv]);
                    }
                }
                Op::WeightedSum { weights, values } => {
                    let wv = self.nodes[weights.0].value.clone();
                    let mut dw = vec![0.0; wv.len()];
                    for (k, v) in values.iter().enumerate() {
                        let vv = &self.nodes[v.0].value;
                        dw[k] = g.iter().zip(vv).map(|(gv, x)| gv * x).sum();
                        let dv: Vec<f64> = g.iter().map(|gv| gv * wv[k]).collect();
                        acc(&mut adj, v.0, &dv);
                    }
                    acc(&mut adj, weights.0, &dw);
                }
                Op::Pick { x, index } => {
                    let len = self.nodes[x.0].value.len();
                    let mut dx = vec![0.0; len];
                    dx[*index] = g[0];
                    acc(&mut adj, x.0, &dx);
                }
                Op::SumPick { x, indices } => {
                    let len = self.nodes[x.0].value.len();
                    let mut dx = vec![0.0; len];
                    for &idx in indices {
                        dx[idx] += g[0];
                    }
                    acc(&mut adj, x.0, &dx);
                }
                Op::SumScalars(scalars) => {
                    for s in scalars {
                        acc(&mut adj, s.0, &[g[0]]);
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx: Vec<f64> = g.iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    acc(&mut adj, x.0, &dx);
                }
                Op::BceWithLogits { logit, target } => {
                    let z = self.nodes[logit.0].value[0];
                    let p = 1.0 / (1.0 + (-z).exp());
                    acc(&mut adj, logit.0, &[g[0] * (p - target)]);
                }
            }
        }
        Ok(())
    }
}

fn acc(adj: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
    match &mut adj[idx] {
        Some(buf) => {
            for (a, b) in buf.iter_mut().zip(g) {
                *a += b;
            }
        }
        None => adj[idx] = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    #[test]
    fn softmax_sums_to_one() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.leaf(vec![1.0, -2.0, 0.5, 3.0]);
        let y = tape.softmax(x);
        let s: f64 = tape.value(y).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(tape.value(y).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn matvec_backward_matches_hand_computation() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), true)
            .unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.leaf(vec![1.0, -1.0]);
        let y = tape.matvec(w, x).unwrap();
        // loss = y[0] + 2*y[1]
        let p0 = tape.pick(y, 0).unwrap();
        let p1 = tape.pick(y, 1).unwrap();
        let p1s = tape.affine_const(p1, 2.0, 0.0);
        let loss = tape.add(p0, p1s).unwrap();
        let mut grads = Grads::new(&store);
        tape.backward(loss, &mut grads).unwrap();
        // dL/dW = [[1·x0, 1·x1], [2·x0, 2·x1]]
        let gw = grads.get(w).unwrap();
        assert_eq!(gw.as_slice(), &[1.0, -1.0, 2.0, -2.0]);
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.leaf(vec![0.2, -0.7, 1.1]);
        let b = tape.leaf(vec![0.2, -0.7, 1.1]);
        let c = tape.cosine(a, b).unwrap();
        assert!((tape.scalar_value(c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bce_with_logits_is_stable_at_extremes() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let z = tape.leaf_scalar(500.0);
        let l = tape.bce_with_logits(z, 1.0).unwrap();
        assert!(tape.scalar_value(l).is_finite());
        let z = tape.leaf_scalar(-500.0);
        let l = tape.bce_with_logits(z, 0.0).unwrap();
        assert!(tape.scalar_value(l).is_finite());
    }
}
