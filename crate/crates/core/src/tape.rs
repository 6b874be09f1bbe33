//! Taped reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a forward computation as a flat list of nodes, each
//! holding its operation, its computed value, and a gradient accumulator.
//! Because every op only references earlier nodes, creation order is a
//! topological order and the backward pass is a single reverse sweep.
//!
//! The tape is rebuilt for every forward pass; trainable parameters live in
//! a [`ParamStore`] outside the tape and receive gradients when a backward
//! pass reaches their leaf nodes. Several loss roots may be differentiated
//! on one tape (one backward per root), which is how per-objective
//! gradients are extracted from a single shared forward pass. Running
//! backward twice on the same root without re-recording the forward pass is
//! rejected as a state error.
//!
//! Ops validate shapes but deliberately not values: a non-finite number
//! produced mid-graph (an overflowing network, say) propagates to the loss,
//! where the training loop's divergence guard can report the step that blew
//! up instead of dying inside an op.

use crate::error::{Error, Result};
use crate::params::{GroupId, ParamStore};
use crate::scalar::{real, Scalar};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    /// Input or target data; gradients stop here.
    Const,
    /// Leaf bound to `store.tensor(group, slot)`; gradients are scattered
    /// into the store's accumulator for that tensor.
    Param { group: GroupId, slot: usize },
    /// `y = W x + b` with matrix `w`, vector `x`, optional bias `b`.
    Affine {
        w: ValueId,
        x: ValueId,
        b: Option<ValueId>,
    },
    /// Element-wise `max(0, x)`. The derivative at exactly zero is zero.
    Relu { x: ValueId },
    /// Numerically stable softmax over a vector.
    Softmax { x: ValueId },
    /// Stacks equal-length vectors into the rows of a matrix.
    StackRows { rows: Vec<ValueId> },
    /// `y = wᵀ M` for vector `w` and matrix `m`: a convex combination of
    /// the rows of `m` when `w` lies on the simplex.
    VecMat { w: ValueId, m: ValueId },
    /// Mean squared error between two same-shape tensors.
    Mse { pred: ValueId, target: ValueId },
    /// Arithmetic mean of scalar nodes (batch reduction).
    Mean { terms: Vec<ValueId> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op,
    value: Tensor<T>,
    grad: Tensor<T>,
}

/// Records a forward computation and differentiates it in reverse.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    spent_roots: Vec<usize>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            spent_roots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The value computed for a node during the forward pass.
    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> ValueId {
        let grad = Tensor::zeros(value.shape().to_vec());
        self.nodes.push(Node { op, value, grad });
        ValueId(self.nodes.len() - 1)
    }

    /// Records a constant (input or target). Gradients do not flow past it.
    pub fn constant(&mut self, value: Tensor<T>) -> ValueId {
        self.push(Op::Const, value)
    }

    /// Records a leaf for one tensor of a parameter group. The current
    /// value is copied onto the tape; a later backward pass accumulates
    /// into the store's matching gradient slot.
    pub fn param(&mut self, store: &ParamStore<T>, group: GroupId, slot: usize) -> ValueId {
        let value = store.tensor(group, slot).clone();
        self.push(Op::Param { group, slot }, value)
    }

    /// Records `y = W x + b`. `w` must be a matrix, `x` a vector with
    /// `w.cols()` entries, and `b` (when present) a vector with `w.rows()`
    /// entries.
    pub fn affine(&mut self, w: ValueId, x: ValueId, b: Option<ValueId>) -> Result<ValueId> {
        let wt = self.value(w);
        let xt = self.value(x);
        if wt.rank() != 2 || xt.rank() != 1 || wt.cols() != xt.len() {
            return Err(Error::DimensionMismatch {
                op: "affine",
                lhs: format!("weight shape {:?}", wt.shape()),
                rhs: format!("input shape {:?}", xt.shape()),
            });
        }
        let (rows, cols) = (wt.rows(), wt.cols());
        let mut out = vec![T::zero(); rows];
        for i in 0..rows {
            let mut acc = T::zero();
            let row = wt.row(i);
            for j in 0..cols {
                acc += row[j] * xt.data()[j];
            }
            out[i] = acc;
        }
        if let Some(b) = b {
            let bt = self.value(b);
            if bt.rank() != 1 || bt.len() != rows {
                return Err(Error::DimensionMismatch {
                    op: "affine",
                    lhs: format!("output of {rows} entries"),
                    rhs: format!("bias shape {:?}", bt.shape()),
                });
            }
            for (o, &bv) in out.iter_mut().zip(bt.data()) {
                *o += bv;
            }
        }
        Ok(self.push(Op::Affine { w, x, b }, Tensor::from_parts(vec![rows], out)))
    }

    /// Records element-wise `max(0, x)`.
    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Op::Relu { x }, Tensor::from_parts(shape, data))
    }

    /// Records a numerically stable softmax over a non-empty vector.
    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId> {
        let xt = self.value(x);
        if xt.rank() != 1 || xt.is_empty() {
            return Err(Error::Domain(format!(
                "softmax needs a non-empty vector, got shape {:?}",
                xt.shape()
            )));
        }
        let max = xt
            .data()
            .iter()
            .cloned()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
        let exps: Vec<T> = xt.data().iter().map(|&v| (v - max).exp()).collect();
        let sum: T = exps.iter().cloned().sum();
        let out: Vec<T> = exps.iter().map(|&e| e / sum).collect();
        let n = out.len();
        Ok(self.push(Op::Softmax { x }, Tensor::from_parts(vec![n], out)))
    }

    /// Records the stacking of equal-length vectors into matrix rows.
    pub fn stack_rows(&mut self, rows: &[ValueId]) -> Result<ValueId> {
        if rows.is_empty() {
            return Err(Error::Domain("stack_rows needs at least one row".into()));
        }
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let rt = self.value(r);
            if rt.rank() != 1 || rt.len() != width {
                return Err(Error::DimensionMismatch {
                    op: "stack_rows",
                    lhs: format!("row of {width} entries"),
                    rhs: format!("row shape {:?}", rt.shape()),
                });
            }
            data.extend_from_slice(rt.data());
        }
        let shape = vec![rows.len(), width];
        Ok(self.push(
            Op::StackRows {
                rows: rows.to_vec(),
            },
            Tensor::from_parts(shape, data),
        ))
    }

    /// Records `y = wᵀ M` (vector-matrix product).
    pub fn vec_mat(&mut self, w: ValueId, m: ValueId) -> Result<ValueId> {
        let wt = self.value(w);
        let mt = self.value(m);
        if wt.rank() != 1 || mt.rank() != 2 || wt.len() != mt.rows() {
            return Err(Error::DimensionMismatch {
                op: "vec_mat",
                lhs: format!("weights shape {:?}", wt.shape()),
                rhs: format!("matrix shape {:?}", mt.shape()),
            });
        }
        let (n, p) = (mt.rows(), mt.cols());
        let mut out = vec![T::zero(); p];
        for i in 0..n {
            let wi = wt.data()[i];
            let row = mt.row(i);
            for j in 0..p {
                out[j] += wi * row[j];
            }
        }
        Ok(self.push(Op::VecMat { w, m }, Tensor::from_parts(vec![p], out)))
    }

    /// Records the mean squared error between two same-shape tensors.
    pub fn mse(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId> {
        let pt = self.value(pred);
        let tt = self.value(target);
        if pt.shape() != tt.shape() || pt.is_empty() {
            return Err(Error::DimensionMismatch {
                op: "mse",
                lhs: format!("{:?}", pt.shape()),
                rhs: format!("{:?}", tt.shape()),
            });
        }
        let n = real::<T>(pt.len() as f64);
        let sum: T = pt
            .data()
            .iter()
            .zip(tt.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Op::Mse { pred, target }, Tensor::scalar(sum / n)))
    }

    /// Records the arithmetic mean of scalar nodes.
    pub fn mean(&mut self, terms: &[ValueId]) -> Result<ValueId> {
        if terms.is_empty() {
            return Err(Error::Domain("mean needs at least one term".into()));
        }
        let mut sum = T::zero();
        for &t in terms {
            let tt = self.value(t);
            if tt.len() != 1 {
                return Err(Error::DimensionMismatch {
                    op: "mean",
                    lhs: "scalar term".into(),
                    rhs: format!("shape {:?}", tt.shape()),
                });
            }
            sum += tt.item();
        }
        let n = real::<T>(terms.len() as f64);
        Ok(self.push(
            Op::Mean {
                terms: terms.to_vec(),
            },
            Tensor::scalar(sum / n),
        ))
    }

    /// Reverse pass from a scalar root. Gradients of parameter leaves are
    /// accumulated into `store`; the caller decides when accumulators are
    /// zeroed. Calling this twice for the same root without recording a new
    /// forward pass is an error.
    pub fn backward(&mut self, root: ValueId, store: &mut ParamStore<T>) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Domain(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        if self.spent_roots.contains(&root.0) {
            return Err(Error::State(
                "backward already ran for this root; record a new forward pass first".into(),
            ));
        }
        self.spent_roots.push(root.0);

        for node in &mut self.nodes {
            node.grad.fill_zero();
        }
        self.nodes[root.0].grad.data_mut()[0] = T::one();

        for idx in (0..=root.0).rev() {
            // Copy the node's grad out so its input nodes can be mutated.
            let grad = self.nodes[idx].grad.clone();
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Const => {}
                Op::Param { group, slot } => {
                    store.accumulate_grad(group, slot, &grad)?;
                }
                Op::Affine { w, x, b } => {
                    let (rows, cols) = {
                        let wt = &self.nodes[w.0].value;
                        (wt.rows(), wt.cols())
                    };
                    for i in 0..rows {
                        let gi = grad.data()[i];
                        for j in 0..cols {
                            let xj = self.nodes[x.0].value.data()[j];
                            self.nodes[w.0].grad.data_mut()[i * cols + j] += gi * xj;
                        }
                    }
                    for j in 0..cols {
                        let mut acc = T::zero();
                        for i in 0..rows {
                            acc += self.nodes[w.0].value.data()[i * cols + j] * grad.data()[i];
                        }
                        self.nodes[x.0].grad.data_mut()[j] += acc;
                    }
                    if let Some(b) = b {
                        for i in 0..rows {
                            self.nodes[b.0].grad.data_mut()[i] += grad.data()[i];
                        }
                    }
                }
                Op::Relu { x } => {
                    for (i, &g) in grad.data().iter().enumerate() {
                        if self.nodes[x.0].value.data()[i] > T::zero() {
                            self.nodes[x.0].grad.data_mut()[i] += g;
                        }
                    }
                }
                Op::Softmax { x } => {
                    // dL/dx = s ∘ (g − ⟨g, s⟩) where s is the softmax output.
                    let s = self.nodes[idx].value.clone();
                    let dot: T = s
                        .data()
                        .iter()
                        .zip(grad.data())
                        .map(|(&si, &gi)| si * gi)
                        .sum();
                    for i in 0..s.len() {
                        self.nodes[x.0].grad.data_mut()[i] +=
                            s.data()[i] * (grad.data()[i] - dot);
                    }
                }
                Op::StackRows { rows } => {
                    let width = grad.cols();
                    for (r, &row_id) in rows.iter().enumerate() {
                        for j in 0..width {
                            self.nodes[row_id.0].grad.data_mut()[j] +=
                                grad.data()[r * width + j];
                        }
                    }
                }
                Op::VecMat { w, m } => {
                    let (n, p) = {
                        let mt = &self.nodes[m.0].value;
                        (mt.rows(), mt.cols())
                    };
                    for i in 0..n {
                        let mut acc = T::zero();
                        for j in 0..p {
                            acc += self.nodes[m.0].value.data()[i * p + j] * grad.data()[j];
                        }
                        self.nodes[w.0].grad.data_mut()[i] += acc;
                    }
                    for i in 0..n {
                        let wi = self.nodes[w.0].value.data()[i];
                        for j in 0..p {
                            self.nodes[m.0].grad.data_mut()[i * p + j] += wi * grad.data()[j];
                        }
                    }
                }
                Op::Mse { pred, target } => {
                    let g = grad.data()[0];
                    let n = real::<T>(self.nodes[pred.0].value.len() as f64);
                    let two = real::<T>(2.0);
                    for i in 0..self.nodes[pred.0].value.len() {
                        let diff = self.nodes[pred.0].value.data()[i]
                            - self.nodes[target.0].value.data()[i];
                        let d = g * two * diff / n;
                        self.nodes[pred.0].grad.data_mut()[i] += d;
                        self.nodes[target.0].grad.data_mut()[i] -= d;
                    }
                }
                Op::Mean { terms } => {
                    let share = grad.data()[0] / real::<T>(terms.len() as f64);
                    for &t in &terms {
                        self.nodes[t.0].grad.data_mut()[0] += share;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Central finite-difference gradient of `f` with respect to the listed
/// parameter groups, flattened in [`ParamStore::flatten_grads`] order.
///
/// This is the independent oracle the analytic backward pass is validated
/// against; it never touches the tape. `eps` must be positive.
pub fn finite_diff_grad<T: Scalar, F>(
    store: &mut ParamStore<T>,
    ids: &[GroupId],
    eps: T,
    mut f: F,
) -> Result<Vec<T>>
where
    F: FnMut(&ParamStore<T>) -> Result<T>,
{
    assert!(eps > T::zero(), "finite_diff_grad needs eps > 0");
    let two_eps = eps + eps;
    let mut out = Vec::with_capacity(store.param_count(ids));
    for &id in ids {
        let slots = store.group(id).tensors.len();
        for slot in 0..slots {
            let len = store.tensor(id, slot).len();
            for index in 0..len {
                store.nudge(id, slot, index, eps);
                let plus = f(store)?;
                store.nudge(id, slot, index, -two_eps);
                let minus = f(store)?;
                store.nudge(id, slot, index, eps);
                out.push((plus - minus) / two_eps);
            }
        }
    }
    Ok(out)
}
