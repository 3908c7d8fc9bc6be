use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatVec(Var, Var),
    MatVecT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    OneMinus(Var),
    Softmax(Var),
    /// Negative log-probability of the target class; caches the softmax.
    CrossEntropy(Var, usize, Vec<f64>),
    Concat(Vec<Var>),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Sum(Var),
    AddN(Vec<Var>),
    Mask(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    /// `None` for parameter nodes, which read through to the store.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Accumulated gradients, keyed by parameter id and by leaf variable.
///
/// Successive `backward` calls add into the same buffers until
/// [`Gradients::clear`] is called.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    params: HashMap<ParamId, Tensor>,
    leaves: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn leaf(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (*k, v))
    }

    pub fn clear(&mut self) {
        self.params.clear();
        self.leaves.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty() && self.leaves.is_empty()
    }

    fn add_param(&mut self, id: ParamId, shape: &[usize], g: &[f64]) {
        let t = self.params.entry(id).or_insert_with(|| Tensor::zeros(shape));
        for (d, s) in t.data_mut().iter_mut().zip(g) {
            *d += s;
        }
    }

    fn add_leaf(&mut self, v: Var, shape: &[usize], g: &[f64]) {
        let t = self.leaves.entry(v).or_insert_with(|| Tensor::zeros(shape));
        for (d, s) in t.data_mut().iter_mut().zip(g) {
            *d += s;
        }
    }
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Parameters are read through from the borrowed [`ParamStore`]; each
/// parameter appears on the tape at most once.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn empty_store() -> &'static ParamStore {
    static EMPTY: OnceLock<ParamStore> = OnceLock::new();
    EMPTY.get_or_init(ParamStore::new)
}

impl Tape<'static> {
    /// A tape with no parameter store, for pure tensor computations.
    pub fn standalone() -> Self {
        Tape::new(empty_store())
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor::vector(data))
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(Tensor::zeros(&[n]))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return dim_err(format!("matmul {m}x{k} by {k2}x{n}"));
        }
        let ad = self.data(a);
        let bd = self.data(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = ad[i * k + p];
                let brow = &bd[p * n..(p + 1) * n];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg, "matmul")
    }

    /// `w[m×k] · x[k]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, k) = self.value(w).dims2()?;
        if self.shape(x) != [k] {
            return dim_err(format!("matvec {m}x{k} by {:?}", self.shape(x)));
        }
        let wd = self.data(w);
        let xd = self.data(x);
        let out: Vec<f64> = wd.chunks_exact(k).map(|row| dot(row, xd)).collect();
        let rg = self.rg(&[w, x]);
        self.push(Tensor::vector(out), Op::MatVec(w, x), rg, "matvec")
    }

    /// `mᵀ · p` for `m[n×d]`, `p[n]`: the `p`-weighted sum of the rows of `m`.
    pub fn matvec_t(&mut self, m: Var, p: Var) -> Result<Var> {
        let (n, d) = self.value(m).dims2()?;
        if self.shape(p) != [n] {
            return dim_err(format!("matvec_t {n}x{d} by {:?}", self.shape(p)));
        }
        let md = self.data(m);
        let pd = self.data(p);
        let mut out = vec![0.0; d];
        for (row, &w) in md.chunks_exact(d).zip(pd) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
        let rg = self.rg(&[m, p]);
        self.push(Tensor::vector(out), Op::MatVecT(m, p), rg, "matvec_t")
    }

    fn broadcast_check(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            return Ok(());
        }
        if sb.len() == 1 && sa.len() >= 2 && sa[sa.len() - 1] == sb[0] {
            return Ok(());
        }
        dim_err(format!("{what}: shapes {sa:?} and {sb:?} are not compatible"))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &'static str) -> Result<Var> {
        self.broadcast_check(a, b, name)?;
        let ad = self.data(a);
        let bd = self.data(b);
        let nb = bd.len();
        let out: Vec<f64> = ad.iter().enumerate().map(|(i, &x)| f(x, bd[i % nb])).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(shape, out)?, op, rg, name)
    }

    /// Elementwise sum; `b` may be a row vector broadcast over `a`'s rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op, name: &'static str) -> Result<Var> {
        let t = self.value(a);
        let out: Vec<f64> = t.data().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push(Tensor::new(shape, out)?, op, rg, name)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a), "sigmoid")
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a), "one_minus")
    }

    pub fn softmax(&mut self, v: Var) -> Result<Var> {
        if self.shape(v).len() != 1 || self.value(v).is_empty() {
            return dim_err(format!("softmax needs a non-empty vector, got {:?}", self.shape(v)));
        }
        let out = softmax(self.data(v));
        let rg = self.rg(&[v]);
        self.push(Tensor::vector(out), Op::Softmax(v), rg, "softmax")
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let x = self.data(logits);
        if self.shape(logits).len() != 1 || x.is_empty() {
            return dim_err("cross_entropy needs a non-empty vector");
        }
        if target >= x.len() {
            return Err(Error::Contract(format!("target {target} outside {} classes", x.len())));
        }
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = x.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        let nll = lse - x[target];
        let probs: Vec<f64> = x.iter().map(|v| (v - lse).exp()).collect();
        let rg = self.rg(&[logits]);
        self.push(
            Tensor::scalar(nll),
            Op::CrossEntropy(logits, target, probs),
            rg,
            "cross_entropy",
        )
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return dim_err("concat takes vectors");
            }
            out.extend_from_slice(self.data(p));
        }
        let rg = self.rg(parts);
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), rg, "concat")
    }

    pub fn slice(&mut self, v: Var, start: usize, len: usize) -> Result<Var> {
        let d = self.data(v);
        if self.shape(v).len() != 1 || start + len > d.len() {
            return dim_err(format!("slice {start}+{len} of {:?}", self.shape(v)));
        }
        let out = d[start..start + len].to_vec();
        let rg = self.rg(&[v]);
        self.push(Tensor::vector(out), Op::Slice(v, start), rg, "slice")
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return dim_err("stack_rows of nothing");
        }
        let d = self.value(rows[0]).len();
        let mut out = Vec::with_capacity(d * rows.len());
        for &r in rows {
            if self.shape(r) != [d] {
                return dim_err(format!("stack_rows: row of shape {:?}, expected [{d}]", self.shape(r)));
            }
            out.extend_from_slice(self.data(r));
        }
        let rg = self.rg(rows);
        self.push(
            Tensor::new(vec![rows.len(), d], out)?,
            Op::StackRows(rows.to_vec()),
            rg,
            "stack_rows",
        )
    }

    /// Row `idx` of a matrix (embedding lookup).
    pub fn row(&mut self, m: Var, idx: usize) -> Result<Var> {
        let (r, c) = self.value(m).dims2()?;
        if idx >= r {
            return Err(Error::Contract(format!("row {idx} outside {r} rows")));
        }
        let out = self.data(m)[idx * c..(idx + 1) * c].to_vec();
        let rg = self.rg(&[m]);
        self.push(Tensor::vector(out), Op::Row(m, idx), rg, "row")
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, v: Var) -> Result<Var> {
        let s: f64 = self.data(v).iter().sum();
        let rg = self.rg(&[v]);
        self.push(Tensor::scalar(s), Op::Sum(v), rg, "sum")
    }

    /// Elementwise sum of same-shaped tensors.
    pub fn add_n(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| Error::Dimension("add_n of nothing".into()))?;
        let shape = self.shape(first).to_vec();
        let mut out = vec![0.0; self.value(first).len()];
        for &v in vars {
            if self.shape(v) != shape.as_slice() {
                return dim_err(format!("add_n: {:?} vs {:?}", self.shape(v), shape));
            }
            for (o, x) in out.iter_mut().zip(self.data(v)) {
                *o += x;
            }
        }
        let rg = self.rg(vars);
        self.push(Tensor::new(shape, out)?, Op::AddN(vars.to_vec()), rg, "add_n")
    }

    /// `w·x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    /// Evaluation mode (or rate 0) returns the input unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, v: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(v);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(v).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out: Vec<f64> = self.data(v).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(v).to_vec();
        let rg = self.rg(&[v]);
        self.push(Tensor::new(shape, out)?, Op::Mask(v, mask), rg, "dropout")
    }

    /// Back-propagates from the scalar `loss`, adding into `grads`.
    ///
    /// The tape is left intact, so calling this twice doubles every gradient.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        if self.value(loss).len() != 1 || self.value(loss).rank() > 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut g: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        g[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads.add_leaf(Var(idx), self.shape(Var(idx)), &gout);
                }
                Op::Param(id) => {
                    grads.add_param(*id, self.params.get(*id).shape(), &gout);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let n = self.value(*b).dims2()?.1;
                    let ad = self.data(*a);
                    let bd = self.data(*b);
                    if self.requires_grad(*a) {
                        let ga = self.acc(&mut g, *a);
                        for i in 0..m {
                            for p in 0..k {
                                ga[i * k + p] += dot(&gout[i * n..(i + 1) * n], &bd[p * n..(p + 1) * n]);
                            }
                        }
                    }
                    if self.requires_grad(*b) {
                        let gb = self.acc(&mut g, *b);
                        for i in 0..m {
                            for p in 0..k {
                                let av = ad[i * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += av * gout[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let k = self.value(*x).len();
                    let wd = self.data(*w);
                    let xd = self.data(*x);
                    if self.requires_grad(*w) {
                        let gw = self.acc(&mut g, *w);
                        for (row, &go) in gw.chunks_exact_mut(k).zip(&gout) {
                            if go != 0.0 {
                                for (r, xv) in row.iter_mut().zip(xd) {
                                    *r += go * xv;
                                }
                            }
                        }
                    }
                    if self.requires_grad(*x) {
                        let gx = self.acc(&mut g, *x);
                        for (row, &go) in wd.chunks_exact(k).zip(&gout) {
                            for (gxv, wv) in gx.iter_mut().zip(row) {
                                *gxv += go * wv;
                            }
                        }
                    }
                }
                Op::MatVecT(m, p) => {
                    let d = gout.len();
                    let md = self.data(*m);
                    let pd = self.data(*p);
                    if self.requires_grad(*m) {
                        let gm = self.acc(&mut g, *m);
                        for (row, &w) in gm.chunks_exact_mut(d).zip(pd) {
                            for (r, go) in row.iter_mut().zip(&gout) {
                                *r += w * go;
                            }
                        }
                    }
                    if self.requires_grad(*p) {
                        let gp = self.acc(&mut g, *p);
                        for (gpv, row) in gp.iter_mut().zip(md.chunks_exact(d)) {
                            *gpv += dot(row, &gout);
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if self.requires_grad(*a) {
                        let ga = self.acc(&mut g, *a);
                        for (x, go) in ga.iter_mut().zip(&gout) {
                            *x += go;
                        }
                    }
                    if self.requires_grad(*b) {
                        let gb = self.acc(&mut g, *b);
                        let nb = gb.len();
                        for (i, go) in gout.iter().enumerate() {
                            gb[i % nb] += sign * go;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let ad = self.data(*a);
                    let bd = self.data(*b);
                    let nb = bd.len();
                    if self.requires_grad(*a) {
                        let ga = self.acc(&mut g, *a);
                        for (i, go) in gout.iter().enumerate() {
                            ga[i] += go * bd[i % nb];
                        }
                    }
                    if self.requires_grad(*b) {
                        let gb = self.acc(&mut g, *b);
                        for (i, go) in gout.iter().enumerate() {
                            gb[i % nb] += go * ad[i];
                        }
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let ga = self.acc(&mut g, *a);
                    for ((x, go), yv) in ga.iter_mut().zip(&gout).zip(y) {
                        *x += go * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let ga = self.acc(&mut g, *a);
                    for ((x, go), yv) in ga.iter_mut().zip(&gout).zip(y) {
                        *x += go * yv * (1.0 - yv);
                    }
                }
                Op::OneMinus(a) => {
                    let ga = self.acc(&mut g, *a);
                    for (x, go) in ga.iter_mut().zip(&gout) {
                        *x -= go;
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let s = dot(y, &gout);
                    let ga = self.acc(&mut g, *a);
                    for ((x, go), yv) in ga.iter_mut().zip(&gout).zip(y) {
                        *x += yv * (go - s);
                    }
                }
                Op::CrossEntropy(a, target, probs) => {
                    let go = gout[0];
                    let ga = self.acc(&mut g, *a);
                    for (x, p) in ga.iter_mut().zip(probs) {
                        *x += go * p;
                    }
                    ga[*target] -= go;
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        if self.requires_grad(p) {
                            let gp = self.acc(&mut g, p);
                            for (x, go) in gp.iter_mut().zip(&gout[off..off + n]) {
                                *x += go;
                            }
                        }
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let ga = self.acc(&mut g, *a);
                    for (x, go) in ga[*start..*start + gout.len()].iter_mut().zip(&gout) {
                        *x += go;
                    }
                }
                Op::StackRows(rows) => {
                    let d = self.value(rows[0]).len();
                    for (i, &r) in rows.iter().enumerate() {
                        if self.requires_grad(r) {
                            let gr = self.acc(&mut g, r);
                            for (x, go) in gr.iter_mut().zip(&gout[i * d..(i + 1) * d]) {
                                *x += go;
                            }
                        }
                    }
                }
                Op::Row(m, idx) => {
                    let c = gout.len();
                    let gm = self.acc(&mut g, *m);
                    for (x, go) in gm[idx * c..(idx + 1) * c].iter_mut().zip(&gout) {
                        *x += go;
                    }
                }
                Op::Sum(a) => {
                    let go = gout[0];
                    let ga = self.acc(&mut g, *a);
                    for x in ga.iter_mut() {
                        *x += go;
                    }
                }
                Op::AddN(vars) => {
                    for &v in vars {
                        if self.requires_grad(v) {
                            let gv = self.acc(&mut g, v);
                            for (x, go) in gv.iter_mut().zip(&gout) {
                                *x += go;
                            }
                        }
                    }
                }
                Op::Mask(a, mask) => {
                    let ga = self.acc(&mut g, *a);
                    for ((x, go), m) in ga.iter_mut().zip(&gout).zip(mask) {
                        *x += go * m;
                    }
                }
            }
        }
        Ok(())
    }

    fn acc<'g>(&self, g: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let n = self.value(v).len();
        g[v.0].get_or_insert_with(|| vec![0.0; n])
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_difference, rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[i * k + p] * b.data()[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::standalone();
        let a = t.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.data(c), &[3.0, 4.0]);
        assert_eq!(t.shape(c), &[2, 1]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = rand_tensor(&mut rng, &[2, 3]);
        let b = rand_tensor(&mut rng, &[3, 2]);
        let expect = naive_matmul(&a, &b);
        let mut t = Tape::standalone();
        let (va, vb) = (t.constant(a), t.constant(b));
        let c = t.matmul(va, vb).unwrap();
        for (x, y) in t.data(c).iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut t = Tape::standalone();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(t.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn grad_of_sum_matmul_is_ones_times_bt() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_tensor(&mut rng, &[2, 3]);
        let b = rand_tensor(&mut rng, &[3, 4]);
        let mut t = Tape::standalone();
        let va = t.leaf(a, true);
        let vb = t.constant(b.clone());
        let c = t.matmul(va, vb).unwrap();
        let s = t.sum(c).unwrap();
        let mut g = Gradients::new();
        t.backward(s, &mut g).unwrap();
        let ga = g.leaf(va).unwrap();
        // (ones[2x4] · Bᵀ)[i][p] = Σ_j B[p][j]
        for i in 0..2 {
            for p in 0..3 {
                let row_sum: f64 = b.data()[p * 4..p * 4 + 4].iter().sum();
                assert!((ga.data()[i * 3 + p] - row_sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elementwise_basics() {
        let mut t = Tape::standalone();
        let z = t.vector(vec![0.0]);
        let s = t.sigmoid(z).unwrap();
        let h = t.tanh(z).unwrap();
        assert_eq!(t.data(s), &[0.5]);
        assert_eq!(t.data(h), &[0.0]);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut t = Tape::standalone();
        let x = t.leaf(Tensor::vector(vec![0.0]), true);
        let s = t.sigmoid(x).unwrap();
        let l = t.sum(s).unwrap();
        let mut g = Gradients::new();
        t.backward(l, &mut g).unwrap();
        let analytic = g.leaf(x).unwrap().data()[0];
        let fd = finite_difference(sigmoid, 0.0, 1e-6);
        assert!((analytic - 0.25).abs() < 1e-15);
        assert!(rel_error(analytic, fd) < 1e-8);
    }

    #[test]
    fn bias_broadcast_and_mismatch() {
        let mut t = Tape::standalone();
        let m = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.vector(vec![10.0, 20.0]);
        let s = t.add(m, b).unwrap();
        assert_eq!(t.data(s), &[11.0, 22.0, 13.0, 24.0]);
        let bad = t.vector(vec![1.0, 2.0, 3.0]);
        assert!(t.add(m, bad).is_err());
        assert!(t.mul(b, bad).is_err());
    }

    #[test]
    fn softmax_cases() {
        let mut t = Tape::standalone();
        let one = t.vector(vec![-3.7]);
        let s1 = t.softmax(one).unwrap();
        assert_eq!(t.data(s1), &[1.0]);
        let two = t.vector(vec![0.0, 0.0]);
        let s2 = t.softmax(two).unwrap();
        assert_eq!(t.data(s2), &[0.5, 0.5]);
        let three = t.vector(vec![1.0, 2.0, 3.0]);
        let s3 = t.softmax(three).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, p) in t.data(s3).iter().enumerate() {
            assert!((p - ((i + 1) as f64).exp() / z).abs() < 1e-12);
        }
        let empty = t.vector(vec![]);
        assert!(matches!(t.softmax(empty), Err(Error::Dimension(_))));
    }

    #[test]
    fn square_gradient_and_additivity() {
        let mut t = Tape::standalone();
        let x = t.leaf(Tensor::vector(vec![3.0]), true);
        let sq = t.mul(x, x).unwrap();
        let l = t.sum(sq).unwrap();
        let mut g = Gradients::new();
        t.backward(l, &mut g).unwrap();
        assert_eq!(g.leaf(x).unwrap().data(), &[6.0]);
        t.backward(l, &mut g).unwrap();
        assert_eq!(g.leaf(x).unwrap().data(), &[12.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::standalone();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = t.tanh(x).unwrap();
        let mut g = Gradients::new();
        assert!(matches!(t.backward(y, &mut g), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut t = Tape::standalone();
        let x = t.vector(vec![f64::MAX]);
        assert!(matches!(t.add(x, x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = Tape::standalone();
        let x = t.vector(vec![1.0; 16]);
        assert_eq!(t.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.2, false, &mut rng).unwrap(), x);
        assert!(matches!(t.dropout(x, 1.0, true, &mut rng), Err(Error::Config(_))));
        assert!(matches!(t.dropout(x, -0.1, true, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_survivor_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut t = Tape::standalone();
        let n = 1_000_000;
        let x = t.vector(vec![1.0; n]);
        let y = t.dropout(x, 0.2, true, &mut rng).unwrap();
        let survivors = t.data(y).iter().filter(|v| **v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.8).abs() < 0.01, "survivor fraction {frac}");
        assert!(t.data(y).iter().all(|v| *v == 0.0 || (*v - 1.25).abs() < 1e-15));
    }
}
