//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A `Tape` records every forward operation in topological order; `backward`
//! replays the record once, in reverse, accumulating gradients into the
//! leaves. One tape is one training context and is strictly single-threaded.

use crate::autodiff::mat::{matmul_acc, Mat};
use crate::error::{CiderError, Result};

/// Floor applied to every log / division argument so BCE and KLD terms
/// cannot produce -inf.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on the active tape. Cheap to copy; only valid for the
/// tape that produced it.
#[derive(Debug, Clone, Copy)]
pub struct Tensor {
    pub id: usize,
    pub rows: usize,
    pub cols: usize,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    ScalarMul(usize, f64),
    ScalarAdd(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    ConcatCols(usize, usize),
    Mask(usize, Mat),
    Clamp(usize, f64, f64),
    RowSoftmax(usize),
    Wbce {
        pred: usize,
        target: Mat,
        pos_weight: f64,
    },
    Mse {
        pred: usize,
        target: Mat,
    },
    SoftmaxCe {
        logits: usize,
        class: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Matmul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScalarMul(..) => "scalar_mul",
            Op::ScalarAdd(..) => "scalar_add",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Abs(..) => "abs",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::ConcatCols(..) => "concat_cols",
            Op::Mask(..) => "mask",
            Op::Clamp(..) => "clamp",
            Op::RowSoftmax(..) => "row_softmax",
            Op::Wbce { .. } => "weighted_bce",
            Op::Mse { .. } => "mse",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
        }
    }
}

struct Node {
    op: Op,
    value: Mat,
    grad: Option<Mat>,
    requires_grad: bool,
}

/// One training context: a Wengert list of recorded operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf: gradients accumulate here during backward.
    pub fn leaf(&mut self, value: Mat) -> Tensor {
        self.push_unchecked(Op::Leaf, value, true)
    }

    /// A non-trainable input; backward never visits it.
    pub fn constant(&mut self, value: Mat) -> Tensor {
        self.push_unchecked(Op::Constant, value, false)
    }

    pub fn value(&self, t: Tensor) -> &Mat {
        &self.nodes[t.id].value
    }

    /// Gradient of a leaf after `backward`; None if backward never reached it.
    pub fn grad(&self, t: Tensor) -> Option<&Mat> {
        self.nodes[t.id].grad.as_ref()
    }

    /// Gradient of a leaf, as a contract: missing gradient is an error.
    pub fn leaf_grad(&self, t: Tensor) -> Result<&Mat> {
        self.nodes[t.id]
            .grad
            .as_ref()
            .ok_or_else(|| CiderError::contract("parameter has no gradient; run backward first"))
    }

    fn push_unchecked(&mut self, op: Op, value: Mat, requires_grad: bool) -> Tensor {
        let id = self.nodes.len();
        let (rows, cols) = (value.rows, value.cols);
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            requires_grad,
        });
        Tensor {
            id,
            rows,
            cols,
            requires_grad,
        }
    }

    fn push(&mut self, op: Op, value: Mat, requires_grad: bool) -> Result<Tensor> {
        if !value.all_finite() {
            return Err(CiderError::Numeric {
                op: op.name().to_string(),
            });
        }
        Ok(self.push_unchecked(op, value, requires_grad))
    }

    fn shape_err(op: &'static str, a: Tensor, b: Tensor) -> CiderError {
        CiderError::dim(
            op,
            format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols),
        )
    }

    // ---- primitives ------------------------------------------------------

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(Self::shape_err("matmul", a, b));
        }
        let value = self.nodes[a.id].value.matmul(&self.nodes[b.id].value)?;
        self.push(Op::Matmul(a.id, b.id), value, a.requires_grad || b.requires_grad)
    }

    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.nodes[a.id].value.transpose();
        self.push(Op::Transpose(a.id), value, a.requires_grad)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Self::shape_err("add", a, b));
        }
        let value = self.nodes[a.id].value.zip(&self.nodes[b.id].value, |x, y| x + y)?;
        self.push(Op::Add(a.id, b.id), value, a.requires_grad || b.requires_grad)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Self::shape_err("sub", a, b));
        }
        let value = self.nodes[a.id].value.zip(&self.nodes[b.id].value, |x, y| x - y)?;
        self.push(Op::Sub(a.id, b.id), value, a.requires_grad || b.requires_grad)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Self::shape_err("mul", a, b));
        }
        let value = self.nodes[a.id].value.zip(&self.nodes[b.id].value, |x, y| x * y)?;
        self.push(Op::Mul(a.id, b.id), value, a.requires_grad || b.requires_grad)
    }

    pub fn scalar_mul(&mut self, a: Tensor, c: f64) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(|x| x * c);
        self.push(Op::ScalarMul(a.id, c), value, a.requires_grad)
    }

    pub fn scalar_add(&mut self, a: Tensor, c: f64) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(|x| x + c);
        self.push(Op::ScalarAdd(a.id), value, a.requires_grad)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a.id), value, a.requires_grad)
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(|x| x.max(0.0));
        self.push(Op::Relu(a.id), value, a.requires_grad)
    }

    pub fn exp(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(f64::exp);
        self.push(Op::Exp(a.id), value, a.requires_grad)
    }

    /// Natural log with argument floored at `LOG_FLOOR`.
    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(|x| x.max(LOG_FLOOR).ln());
        self.push(Op::Log(a.id), value, a.requires_grad)
    }

    pub fn abs(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(f64::abs);
        self.push(Op::Abs(a.id), value, a.requires_grad)
    }

    /// Sum of every entry, as a 1x1 tensor.
    pub fn sum(&mut self, a: Tensor) -> Result<Tensor> {
        let value = Mat::from_vec(1, 1, vec![self.nodes[a.id].value.sum()])?;
        self.push(Op::Sum(a.id), value, a.requires_grad)
    }

    /// Mean of every entry, as a 1x1 tensor.
    pub fn mean(&mut self, a: Tensor) -> Result<Tensor> {
        let n = a.len().max(1) as f64;
        let value = Mat::from_vec(1, 1, vec![self.nodes[a.id].value.sum() / n])?;
        self.push(Op::Mean(a.id), value, a.requires_grad)
    }

    /// [A | B] along columns; row counts must match.
    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows {
            return Err(Self::shape_err("concat_cols", a, b));
        }
        let mut out = Mat::zeros(a.rows, a.cols + b.cols);
        for i in 0..a.rows {
            let av = &self.nodes[a.id].value;
            let bv = &self.nodes[b.id].value;
            out.data[i * out.cols..i * out.cols + a.cols]
                .copy_from_slice(&av.data[i * a.cols..(i + 1) * a.cols]);
            out.data[i * out.cols + a.cols..(i + 1) * out.cols]
                .copy_from_slice(&bv.data[i * b.cols..(i + 1) * b.cols]);
        }
        self.push(Op::ConcatCols(a.id, b.id), out, a.requires_grad || b.requires_grad)
    }

    /// Entrywise product with a fixed (non-recorded) mask matrix.
    pub fn mask(&mut self, a: Tensor, mask: &Mat) -> Result<Tensor> {
        if a.rows != mask.rows || a.cols != mask.cols {
            return Err(CiderError::dim(
                "mask",
                format!("{}x{} vs {}x{}", a.rows, a.cols, mask.rows, mask.cols),
            ));
        }
        let value = self.nodes[a.id].value.zip(mask, |x, m| x * m)?;
        self.push(Op::Mask(a.id, mask.clone()), value, a.requires_grad)
    }

    pub fn clamp(&mut self, a: Tensor, lo: f64, hi: f64) -> Result<Tensor> {
        let value = self.nodes[a.id].value.map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a.id, lo, hi), value, a.requires_grad)
    }

    /// Softmax within each row.
    pub fn row_softmax(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        let mut out = Mat::zeros(a.rows, a.cols);
        for i in 0..a.rows {
            let row = &v.data[i * a.cols..(i + 1) * a.cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                out.data[i * a.cols + j] = e;
                z += e;
            }
            for j in 0..a.cols {
                out.data[i * a.cols + j] /= z;
            }
        }
        self.push(Op::RowSoftmax(a.id), out, a.requires_grad)
    }

    /// Weighted binary cross-entropy against a fixed 0/1 target, mean-reduced
    /// over every entry. `pos_weight` multiplies the positive-class term.
    pub fn weighted_bce(&mut self, pred: Tensor, target: &Mat, pos_weight: f64) -> Result<Tensor> {
        if pred.rows != target.rows || pred.cols != target.cols {
            return Err(CiderError::dim(
                "weighted_bce",
                format!(
                    "{}x{} vs {}x{}",
                    pred.rows, pred.cols, target.rows, target.cols
                ),
            ));
        }
        let p = &self.nodes[pred.id].value;
        let n = p.len() as f64;
        let mut acc = 0.0;
        for (&pv, &tv) in p.data.iter().zip(target.data.iter()) {
            let ph = pv.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
            acc -= pos_weight * tv * ph.ln() + (1.0 - tv) * (1.0 - ph).ln();
        }
        let value = Mat::from_vec(1, 1, vec![acc / n])?;
        self.push(
            Op::Wbce {
                pred: pred.id,
                target: target.clone(),
                pos_weight,
            },
            value,
            pred.requires_grad,
        )
    }

    /// Mean squared error against a fixed target.
    pub fn mse(&mut self, pred: Tensor, target: &Mat) -> Result<Tensor> {
        if pred.rows != target.rows || pred.cols != target.cols {
            return Err(CiderError::dim(
                "mse",
                format!(
                    "{}x{} vs {}x{}",
                    pred.rows, pred.cols, target.rows, target.cols
                ),
            ));
        }
        let p = &self.nodes[pred.id].value;
        let n = p.len() as f64;
        let acc: f64 = p
            .data
            .iter()
            .zip(target.data.iter())
            .map(|(&pv, &tv)| (pv - tv) * (pv - tv))
            .sum();
        let value = Mat::from_vec(1, 1, vec![acc / n])?;
        self.push(
            Op::Mse {
                pred: pred.id,
                target: target.clone(),
            },
            value,
            pred.requires_grad,
        )
    }

    /// Softmax cross-entropy of a 1xC logit row against an integer class.
    pub fn softmax_cross_entropy(&mut self, logits: Tensor, class: usize) -> Result<Tensor> {
        if logits.rows != 1 {
            return Err(CiderError::dim(
                "softmax_cross_entropy",
                format!("logits must be 1xC, got {}x{}", logits.rows, logits.cols),
            ));
        }
        if class >= logits.cols {
            return Err(CiderError::contract(format!(
                "class {class} out of range for {} logits",
                logits.cols
            )));
        }
        let row = &self.nodes[logits.id].value.data;
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        let value = Mat::from_vec(1, 1, vec![lse - row[class]])?;
        self.push(
            Op::SoftmaxCe {
                logits: logits.id,
                class,
            },
            value,
            logits.requires_grad,
        )
    }

    // ---- backward --------------------------------------------------------

    /// Reverse sweep from a scalar loss. Every `requires_grad` node reachable
    /// from the loss receives its accumulated gradient. Calling twice on the
    /// same tape is a contract error.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if !loss.is_scalar() {
            return Err(CiderError::contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                loss.rows, loss.cols
            )));
        }
        if self.backward_done {
            return Err(CiderError::contract(
                "backward already ran on this tape; build a fresh tape",
            ));
        }
        self.backward_done = true;
        self.nodes[loss.id].grad = Some(Mat::from_vec(1, 1, vec![1.0])?);

        for id in (0..=loss.id).rev() {
            let Some(g) = self.nodes[id].grad.take() else {
                continue;
            };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf | Op::Constant => {
                    // leaves keep their gradient
                    self.nodes[id].grad = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    if self.nodes[a].requires_grad {
                        // dA = g · Bᵀ
                        let bt = self.nodes[b].value.transpose();
                        let mut da = Mat::zeros(self.nodes[a].value.rows, self.nodes[a].value.cols);
                        matmul_acc(&g.data, g.rows, g.cols, &bt.data, bt.cols, &mut da.data);
                        self.accumulate(a, da);
                    }
                    if self.nodes[b].requires_grad {
                        // dB = Aᵀ · g
                        let at = self.nodes[a].value.transpose();
                        let mut db = Mat::zeros(self.nodes[b].value.rows, self.nodes[b].value.cols);
                        matmul_acc(&at.data, at.rows, at.cols, &g.data, g.cols, &mut db.data);
                        self.accumulate(b, db);
                    }
                }
                Op::Transpose(a) => self.accumulate_if(a, || g.transpose()),
                Op::Add(a, b) => {
                    self.accumulate_if(a, || g.clone());
                    self.accumulate_if(b, || g.clone());
                }
                Op::Sub(a, b) => {
                    self.accumulate_if(a, || g.clone());
                    self.accumulate_if(b, || g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    if self.nodes[a].requires_grad {
                        let da = g.zip(&self.nodes[b].value, |gv, bv| gv * bv)?;
                        self.accumulate(a, da);
                    }
                    if self.nodes[b].requires_grad {
                        let db = g.zip(&self.nodes[a].value, |gv, av| gv * av)?;
                        self.accumulate(b, db);
                    }
                }
                Op::ScalarMul(a, c) => self.accumulate_if(a, || g.map(|x| x * c)),
                Op::ScalarAdd(a) => self.accumulate_if(a, || g.clone()),
                Op::Sigmoid(a) => {
                    if self.nodes[a].requires_grad {
                        let y = &self.nodes[id].value;
                        let da = g.zip(y, |gv, yv| gv * yv * (1.0 - yv))?;
                        self.accumulate(a, da);
                    }
                }
                Op::Relu(a) => {
                    if self.nodes[a].requires_grad {
                        let x = &self.nodes[a].value;
                        let da = g.zip(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                        self.accumulate(a, da);
                    }
                }
                Op::Exp(a) => {
                    if self.nodes[a].requires_grad {
                        let y = &self.nodes[id].value;
                        let da = g.zip(y, |gv, yv| gv * yv)?;
                        self.accumulate(a, da);
                    }
                }
                Op::Log(a) => {
                    if self.nodes[a].requires_grad {
                        let x = &self.nodes[a].value;
                        let da = g.zip(x, |gv, xv| if xv > LOG_FLOOR { gv / xv } else { 0.0 })?;
                        self.accumulate(a, da);
                    }
                }
                Op::Abs(a) => {
                    if self.nodes[a].requires_grad {
                        let x = &self.nodes[a].value;
                        let da = g.zip(x, |gv, xv| gv * sign(xv))?;
                        self.accumulate(a, da);
                    }
                }
                Op::Sum(a) => {
                    if self.nodes[a].requires_grad {
                        let gv = g.data[0];
                        let shape = (self.nodes[a].value.rows, self.nodes[a].value.cols);
                        self.accumulate(a, Mat::filled(shape.0, shape.1, gv));
                    }
                }
                Op::Mean(a) => {
                    if self.nodes[a].requires_grad {
                        let n = self.nodes[a].value.len().max(1) as f64;
                        let gv = g.data[0] / n;
                        let shape = (self.nodes[a].value.rows, self.nodes[a].value.cols);
                        self.accumulate(a, Mat::filled(shape.0, shape.1, gv));
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ar, ac) = (self.nodes[a].value.rows, self.nodes[a].value.cols);
                    let bc = self.nodes[b].value.cols;
                    if self.nodes[a].requires_grad {
                        let mut da = Mat::zeros(ar, ac);
                        for i in 0..ar {
                            da.data[i * ac..(i + 1) * ac]
                                .copy_from_slice(&g.data[i * g.cols..i * g.cols + ac]);
                        }
                        self.accumulate(a, da);
                    }
                    if self.nodes[b].requires_grad {
                        let mut db = Mat::zeros(ar, bc);
                        for i in 0..ar {
                            db.data[i * bc..(i + 1) * bc]
                                .copy_from_slice(&g.data[i * g.cols + ac..(i + 1) * g.cols]);
                        }
                        self.accumulate(b, db);
                    }
                }
                Op::Mask(a, mask) => {
                    if self.nodes[a].requires_grad {
                        let da = g.zip(&mask, |gv, mv| gv * mv)?;
                        self.accumulate(a, da);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    if self.nodes[a].requires_grad {
                        let x = &self.nodes[a].value;
                        let da = g.zip(x, |gv, xv| if xv >= lo && xv <= hi { gv } else { 0.0 })?;
                        self.accumulate(a, da);
                    }
                }
                Op::RowSoftmax(a) => {
                    if self.nodes[a].requires_grad {
                        let s = &self.nodes[id].value;
                        let mut da = Mat::zeros(s.rows, s.cols);
                        for i in 0..s.rows {
                            let srow = &s.data[i * s.cols..(i + 1) * s.cols];
                            let grow = &g.data[i * s.cols..(i + 1) * s.cols];
                            let dot: f64 = srow.iter().zip(grow).map(|(&sv, &gv)| sv * gv).sum();
                            for j in 0..s.cols {
                                da.data[i * s.cols + j] = srow[j] * (grow[j] - dot);
                            }
                        }
                        self.accumulate(a, da);
                    }
                }
                Op::Wbce {
                    pred,
                    target,
                    pos_weight,
                } => {
                    if self.nodes[pred].requires_grad {
                        let p = &self.nodes[pred].value;
                        let n = p.len() as f64;
                        let gv = g.data[0];
                        let mut da = Mat::zeros(p.rows, p.cols);
                        for (k, (&pv, &tv)) in p.data.iter().zip(target.data.iter()).enumerate() {
                            let ph = pv.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
                            let mut d = 0.0;
                            if pv > LOG_FLOOR {
                                d -= pos_weight * tv / ph;
                            }
                            if pv < 1.0 - LOG_FLOOR {
                                d += (1.0 - tv) / (1.0 - ph);
                            }
                            da.data[k] = gv * d / n;
                        }
                        self.accumulate(pred, da);
                    }
                }
                Op::Mse { pred, target } => {
                    if self.nodes[pred].requires_grad {
                        let p = &self.nodes[pred].value;
                        let n = p.len() as f64;
                        let gv = g.data[0];
                        let da = p.zip(&target, |pv, tv| gv * 2.0 * (pv - tv) / n)?;
                        self.accumulate(pred, da);
                    }
                }
                Op::SoftmaxCe { logits, class } => {
                    if self.nodes[logits].requires_grad {
                        let x = &self.nodes[logits].value;
                        let m = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = x.data.iter().map(|&v| (v - m).exp()).sum();
                        let gv = g.data[0];
                        let mut da = Mat::zeros(1, x.cols);
                        for j in 0..x.cols {
                            let s = (x.data[j] - m).exp() / z;
                            da.data[j] = gv * (s - if j == class { 1.0 } else { 0.0 });
                        }
                        self.accumulate(logits, da);
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: usize, delta: Mat) {
        match &mut self.nodes[id].grad {
            Some(existing) => {
                for (e, d) in existing.data.iter_mut().zip(delta.data.iter()) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_if(&mut self, id: usize, make: impl FnOnce() -> Mat) {
        if self.nodes[id].requires_grad {
            let delta = make();
            self.accumulate(id, delta);
        }
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
