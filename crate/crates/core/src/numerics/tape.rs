//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! A tape is rebuilt for every forward pass. Parameters enter as leaves bound to a
//! [`ParamStore`] entry; [`Tape::backward`] walks the record once in reverse and adds the
//! resulting gradients into the store. All reductions run in ascending index order so repeated
//! runs are bit-identical.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operation selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementwiseKind {
    Sigmoid,
    Tanh,
    Multiply,
    Add,
    Scale(f64),
}

impl ElementwiseKind {
    fn arity(self) -> usize {
        match self {
            Self::Sigmoid | Self::Tanh | Self::Scale(_) => 1,
            Self::Multiply | Self::Add => 2,
        }
    }
}

impl FromStr for ElementwiseKind {
    type Err = Error;

    /// Accepts `sigmoid`, `tanh`, `multiply`, `add` and `scale=<factor>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "multiply" => Ok(Self::Multiply),
            "add" => Ok(Self::Add),
            _ => s
                .strip_prefix("scale=")
                .and_then(|f| f.parse().ok())
                .map(Self::Scale)
                .ok_or_else(|| Error::UnknownKind(s.to_string())),
        }
    }
}

/// Deliberate derivative faults, used to confirm that gradient checking catches real bugs.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    pub tanh_derivative: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Affine { terms: Vec<(Var, Var)>, bias: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    ScaleBy { x: Var, s: Var },
    Sigmoid(Var),
    Tanh(Var),
    Sum(Vec<Var>),
    Concat(Vec<Var>),
    Row { table: Var, index: usize },
    SoftmaxCrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
    faults: Faults,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_faults(faults: Faults) -> Self {
        Self {
            faults,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Binds a stored parameter as a leaf. Each parameter is copied onto the tape once; later
    /// calls return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param(id), true);
        self.bound.insert(id, v);
        v
    }

    /// `W·x + b`.
    pub fn linear_map(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        self.affine(&[(w, x)], Some(b))
    }

    /// `W·x` without bias.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.affine(&[(w, x)], None)
    }

    /// `Σ_terms W·x + b`, with each term's dot products summed in ascending column order and
    /// the bias added last.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let Some(&(w0, _)) = terms.first() else {
            return Err(Error::dim("affine", "no terms"));
        };
        let rows = self
            .value(w0)
            .dims2()
            .ok_or_else(|| Error::dim("linear_map", "weight is not a matrix"))?
            .0;
        let mut out = vec![0.0; rows];
        for (t, &(w, x)) in terms.iter().enumerate() {
            let (m, n) = self.value(w).dims2().ok_or_else(|| {
                Error::dim("linear_map", format!("term {t}: weight is not a matrix"))
            })?;
            let xv = self.value(x);
            if m != rows || xv.shape().len() != 1 || xv.len() != n {
                return Err(Error::dim(
                    "linear_map",
                    format!(
                        "term {t}: W {:?} cannot map x {:?} into {rows} rows",
                        self.value(w).shape(),
                        xv.shape()
                    ),
                ));
            }
            let wd = self.data(w);
            let xd = self.data(x);
            for (i, o) in out.iter_mut().enumerate() {
                let row = &wd[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for j in 0..n {
                    acc += row[j] * xd[j];
                }
                *o += acc;
            }
        }
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape().len() != 1 || bv.len() != rows {
                return Err(Error::dim(
                    "linear_map",
                    format!("bias {:?} does not match {rows} rows", bv.shape()),
                ));
            }
            for (o, bi) in out.iter_mut().zip(self.data(b)) {
                *o += bi;
            }
        }
        let needs = terms.iter().any(|&(w, x)| self.needs(w) || self.needs(x))
            || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            Tensor::vector(out),
            Op::Affine {
                terms: terms.to_vec(),
                bias,
            },
            needs,
        ))
    }

    pub fn elementwise(&mut self, kind: ElementwiseKind, operands: &[Var]) -> Result<Var> {
        if operands.len() != kind.arity() {
            return Err(Error::dim(
                "elementwise",
                format!("{kind:?} takes {} operands, got {}", kind.arity(), operands.len()),
            ));
        }
        match kind {
            ElementwiseKind::Sigmoid => Ok(self.sigmoid(operands[0])),
            ElementwiseKind::Tanh => Ok(self.tanh(operands[0])),
            ElementwiseKind::Scale(c) => Ok(self.scale(operands[0], c)),
            ElementwiseKind::Multiply => self.mul(operands[0], operands[1]),
            ElementwiseKind::Add => self.add(operands[0], operands[1]),
        }
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let shape = src.shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::unchecked(shape, data).expect("shape preserved"), op, needs)
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(
                name,
                format!("operands have shapes {:?} and {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = av.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::unchecked(shape, data)?, op, needs))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |v| v * c)
    }

    /// `a + c` for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Shift(a), |v| v + c)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("multiply", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `s · x` where `s` is a one-element node.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::dim(
                "scale_by",
                format!("scale has shape {:?}", self.value(s).shape()),
            ));
        }
        let sv = self.scalar(s);
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| sv * v).collect();
        let shape = xv.shape().to_vec();
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(Tensor::unchecked(shape, data)?, Op::ScaleBy { x, s }, needs))
    }

    /// Elementwise sum of equally shaped nodes, accumulated in slice order.
    pub fn sum(&mut self, items: &[Var]) -> Result<Var> {
        let Some(&first) = items.first() else {
            return Err(Error::dim("sum", "no operands"));
        };
        let shape = self.value(first).shape().to_vec();
        let mut out = vec![0.0; self.value(first).len()];
        for &v in items {
            if self.value(v).shape() != shape.as_slice() {
                return Err(Error::dim(
                    "sum",
                    format!("operand {:?} differs from {shape:?}", self.value(v).shape()),
                ));
            }
            for (o, x) in out.iter_mut().zip(self.data(v)) {
                *o += x;
            }
        }
        let needs = items.iter().any(|&v| self.needs(v));
        Ok(self.push(Tensor::unchecked(shape, out)?, Op::Sum(items.to_vec()), needs))
    }

    /// Concatenates rank-1 nodes.
    pub fn concat(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::dim("concat", "no operands"));
        }
        let mut out = Vec::new();
        for &v in items {
            if self.value(v).shape().len() != 1 {
                return Err(Error::dim("concat", "operands must be vectors"));
            }
            out.extend_from_slice(self.data(v));
        }
        let needs = items.iter().any(|&v| self.needs(v));
        Ok(self.push(Tensor::vector(out), Op::Concat(items.to_vec()), needs))
    }

    /// Row `index` of a matrix node.
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let (rows, _) = self
            .value(table)
            .dims2()
            .ok_or_else(|| Error::dim("row", "table is not a matrix"))?;
        if index >= rows {
            return Err(Error::Vocabulary(format!(
                "token id {index} out of range for table with {rows} rows"
            )));
        }
        let data = self.value(table).row(index).to_vec();
        let needs = self.needs(table);
        Ok(self.push(Tensor::vector(data), Op::Row { table, index }, needs))
    }

    /// `-log softmax(logits)[target]`, computed through a max-shifted log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let l = self.value(logits);
        if l.shape().len() != 1 || target >= l.len() {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("target {target} outside logits {:?}", l.shape()),
            ));
        }
        let probs = softmax(l.data());
        let loss = log_sum_exp(l.data()) - l.data()[target];
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            needs,
        ))
    }

    /// Propagates `d loss / d node` back through the record and adds the parameter gradients
    /// into `store`. Calling it again adds the same gradients a second time.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    let cols = p.value.shape()[1..].iter().product::<usize>().max(1);
                    for (k, (dst, src)) in p.grad.data_mut().iter_mut().zip(&g).enumerate() {
                        if p.frozen_row == Some(k / cols) {
                            continue;
                        }
                        *dst += src;
                    }
                }
                Op::Affine { terms, bias } => {
                    for &(w, x) in terms {
                        let (m, n) = self.value(w).dims2().expect("checked in forward");
                        if self.needs(w) {
                            let xd = self.data(x);
                            let gw = slot(&mut grads, w, m * n);
                            for i in 0..m {
                                let gi = g[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                let row = &mut gw[i * n..(i + 1) * n];
                                for j in 0..n {
                                    row[j] += gi * xd[j];
                                }
                            }
                        }
                        if self.needs(x) {
                            let wd = self.data(w);
                            let gx = slot(&mut grads, x, n);
                            for i in 0..m {
                                let gi = g[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                let row = &wd[i * n..(i + 1) * n];
                                for j in 0..n {
                                    gx[j] += row[j] * gi;
                                }
                            }
                        }
                    }
                    if let Some(b) = *bias {
                        accumulate(&mut grads, self, b, &g);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, self, *a, &g);
                    accumulate(&mut grads, self, *b, &g);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let d: Vec<f64> = g.iter().zip(self.data(b)).map(|(g, y)| g * y).collect();
                        accumulate(&mut grads, self, a, &d);
                    }
                    if self.needs(b) {
                        let d: Vec<f64> = g.iter().zip(self.data(a)).map(|(g, x)| g * x).collect();
                        accumulate(&mut grads, self, b, &d);
                    }
                }
                Op::Scale(a, c) => {
                    let d: Vec<f64> = g.iter().map(|g| g * c).collect();
                    accumulate(&mut grads, self, *a, &d);
                }
                Op::Shift(a) => accumulate(&mut grads, self, *a, &g),
                Op::ScaleBy { x, s } => {
                    let (x, s) = (*x, *s);
                    if self.needs(x) {
                        let sv = self.scalar(s);
                        let d: Vec<f64> = g.iter().map(|g| g * sv).collect();
                        accumulate(&mut grads, self, x, &d);
                    }
                    if self.needs(s) {
                        let ds: f64 = g.iter().zip(self.data(x)).map(|(g, x)| g * x).sum();
                        accumulate(&mut grads, self, s, &[ds]);
                    }
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    accumulate(&mut grads, self, *a, &d);
                }
                Op::Tanh(a) => {
                    let broken = self.faults.tanh_derivative;
                    let d: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, y)| if broken { g * (1.0 - y) } else { g * (1.0 - y * y) })
                        .collect();
                    accumulate(&mut grads, self, *a, &d);
                }
                Op::Sum(items) => {
                    for &v in items {
                        accumulate(&mut grads, self, v, &g);
                    }
                }
                Op::Concat(items) => {
                    let mut off = 0;
                    for &v in items {
                        let n = self.value(v).len();
                        accumulate(&mut grads, self, v, &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Row { table, index } => {
                    if self.needs(*table) {
                        let (rows, cols) = self.value(*table).dims2().expect("checked in forward");
                        let gt = slot(&mut grads, *table, rows * cols);
                        for (dst, src) in gt[index * cols..(index + 1) * cols].iter_mut().zip(&g) {
                            *dst += src;
                        }
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let mut d: Vec<f64> = probs.iter().map(|p| g[0] * p).collect();
                    d[*target] -= g[0];
                    accumulate(&mut grads, self, *logits, &d);
                }
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], tape: &Tape, v: Var, g: &[f64]) {
    if !tape.needs(v) {
        return;
    }
    let dst = slot(grads, v, g.len());
    for (d, s) in dst.iter_mut().zip(g) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.register(name, t).unwrap();
        (s, id)
    }

    fn vec_const(tape: &mut Tape, v: &[f64]) -> Var {
        tape.constant(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn linear_map_examples() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::matrix(2, 2, vec![1., 0., 0., 1.]).unwrap());
        let x = vec_const(&mut tape, &[3., 4.]);
        let z = vec_const(&mut tape, &[0., 0.]);
        let y = tape.linear_map(eye, x, z).unwrap();
        assert_eq!(tape.value(y).data(), &[3., 4.]);

        let zero = tape.constant(Tensor::zeros(&[2, 2]));
        let x = vec_const(&mut tape, &[5., 6.]);
        let b = vec_const(&mut tape, &[1., 2.]);
        let y = tape.linear_map(zero, x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1., 2.]);

        let w = tape.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let x = vec_const(&mut tape, &[1., 1.]);
        let b = vec_const(&mut tape, &[0., 1.]);
        let y = tape.linear_map(w, x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[3., 8.]);
    }

    #[test]
    fn linear_map_shape_errors_name_operands() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::zeros(&[2, 3]));
        let x = vec_const(&mut tape, &[1., 1.]);
        let b = vec_const(&mut tape, &[0., 0.]);
        let err = tape.linear_map(w, x, b).unwrap_err().to_string();
        assert!(err.contains("linear_map") && err.contains("[2, 3]") && err.contains("[2]"));
        let x3 = vec_const(&mut tape, &[1., 1., 1.]);
        let b3 = vec_const(&mut tape, &[0., 0., 0.]);
        assert!(tape.linear_map(w, x3, b3).unwrap_err().to_string().contains("bias"));
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let z = vec_const(&mut tape, &[0.0]);
        let s = tape.elementwise(ElementwiseKind::Sigmoid, &[z]).unwrap();
        let t = tape.elementwise(ElementwiseKind::Tanh, &[z]).unwrap();
        assert_eq!(tape.scalar(s), 0.5);
        assert_eq!(tape.scalar(t), 0.0);
        let l3 = vec_const(&mut tape, &[3f64.ln()]);
        let s = tape.sigmoid(l3);
        assert!((tape.scalar(s) - 0.75).abs() < 1e-15);

        let a = vec_const(&mut tape, &[1., 2.]);
        let b = vec_const(&mut tape, &[3., 4., 5.]);
        assert!(tape.elementwise(ElementwiseKind::Multiply, &[a, b]).is_err());
        assert!(tape.elementwise(ElementwiseKind::Add, &[a]).is_err());
        assert!(matches!("relu".parse::<ElementwiseKind>(), Err(Error::UnknownKind(_))));
        assert_eq!("scale=2".parse::<ElementwiseKind>().unwrap(), ElementwiseKind::Scale(2.0));
    }

    #[test]
    fn square_has_derivative_two_x_and_accumulates() {
        let (mut store, id) = store_with("x", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.mul(x, x).unwrap();
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(id).grad.data(), &[6.0]);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(id).grad.data(), &[12.0]);
    }

    #[test]
    fn disconnected_parameter_gets_zero() {
        let mut store = ParamStore::new();
        let a = store.register("a", Tensor::scalar(2.0)).unwrap();
        let b = store.register("b", Tensor::scalar(5.0)).unwrap();
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let _bv = tape.param(&store, b);
        let y = tape.tanh(av);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(b).grad.data(), &[0.0]);
        assert!(store.get(a).grad.data()[0] != 0.0);
    }

    #[test]
    fn backward_rejects_vector_loss() {
        let (mut store, id) = store_with("w", Tensor::vector(vec![1., 2.]));
        let mut tape = Tape::new();
        let w = tape.param(&store, id);
        let y = tape.sigmoid(w);
        assert!(matches!(tape.backward(y, &mut store), Err(Error::NotScalar { .. })));
    }

    #[test]
    fn frozen_row_never_receives_gradient() {
        let (mut store, id) = store_with(
            "emb",
            Tensor::matrix(2, 2, vec![0.0, 0.0, 0.5, 0.5]).unwrap(),
        );
        store.get_mut(id).frozen_row = Some(0);
        let mut tape = Tape::new();
        let t = tape.param(&store, id);
        let r0 = tape.row(t, 0).unwrap();
        let r1 = tape.row(t, 1).unwrap();
        let s = tape.sum(&[r0, r1]).unwrap();
        let ones = tape.constant(Tensor::matrix(1, 2, vec![1., 1.]).unwrap());
        let l = tape.matvec(ones, s).unwrap();
        tape.backward(l, &mut store).unwrap();
        assert_eq!(store.get(id).grad.data(), &[0., 0., 1., 1.]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::zeros(&[10]));
        let ce = tape.softmax_cross_entropy(l, 3).unwrap();
        assert!((tape.scalar(ce) - 10f64.ln()).abs() < 1e-12);
        assert!(tape.softmax_cross_entropy(l, 10).is_err());
    }

    #[test]
    fn linearity_of_linear_map() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::matrix(2, 3, vec![0.3, -1.2, 2.0, 0.7, 0.1, -0.4]).unwrap());
        let x = [0.5, -2.0, 1.5];
        let y = [1.1, 0.2, -0.7];
        let a = -1.7;
        let xy: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + y).collect();
        let zero = vec_const(&mut tape, &[0., 0.]);
        let xyv = vec_const(&mut tape, &xy);
        let xv = vec_const(&mut tape, &x);
        let yv = vec_const(&mut tape, &y);
        let l = tape.linear_map(w, xyv, zero).unwrap();
        let lx = tape.linear_map(w, xv, zero).unwrap();
        let ly = tape.linear_map(w, yv, zero).unwrap();
        for i in 0..2 {
            let rhs = a * tape.value(lx).data()[i] + tape.value(ly).data()[i];
            assert!((tape.value(l).data()[i] - rhs).abs() < 1e-12);
        }
    }
}
