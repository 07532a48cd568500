//! Reverse-mode autodiff over 2-D tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its
//! value, parent ids and a backward closure. [`Graph::backward`] walks
//! the tape in reverse creation order (a valid reverse topological
//! order, visiting each node once) and accumulates gradients into the
//! trainable leaves. Gradients persist across `backward` calls until
//! [`Graph::zero_grad`].
//!
//! All values are `f64`; shapes are `(rows, cols)` with scalars as
//! `(1, 1)`. A graph is single-threaded; distinct graphs are
//! independent.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

pub type Shape = (usize, usize);

fn len(shape: Shape) -> usize {
    shape.0 * shape.1
}

/// Called with the node's upstream gradient; pushes `(parent_id, grad)`
/// contributions through the sink.
type BackwardFn = Box<dyn Fn(&[f64], &mut dyn FnMut(usize, Vec<f64>))>;

struct Node {
    shape: Shape,
    value: Rc<Vec<f64>>,
    backward: Option<BackwardFn>,
    trainable: bool,
    grad: RefCell<Option<Vec<f64>>>,
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node; cheap to copy, tied to its graph's lifetime.
#[derive(Clone, Copy)]
pub struct Tensor<'g> {
    graph: &'g Graph,
    id: usize,
    shape: Shape,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape)
            .finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(
        &self,
        shape: Shape,
        value: Vec<f64>,
        backward: Option<BackwardFn>,
        trainable: bool,
    ) -> Tensor<'_> {
        debug_assert_eq!(value.len(), len(shape));
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            shape,
            value: Rc::new(value),
            backward,
            trainable,
            grad: RefCell::new(None),
        });
        Tensor {
            graph: self,
            id,
            shape,
        }
    }

    /// Non-trainable leaf.
    pub fn constant(&self, shape: Shape, value: Vec<f64>) -> Tensor<'_> {
        assert_eq!(value.len(), len(shape), "constant data length");
        self.push(shape, value, None, false)
    }

    pub fn scalar(&self, value: f64) -> Tensor<'_> {
        self.constant((1, 1), vec![value])
    }

    pub fn zeros(&self, shape: Shape) -> Tensor<'_> {
        self.constant(shape, vec![0.0; len(shape)])
    }

    /// Trainable leaf sharing `data` (values are never mutated by the
    /// graph).
    pub fn param(&self, shape: Shape, data: Rc<Vec<f64>>) -> Tensor<'_> {
        assert_eq!(data.len(), len(shape), "param data length");
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            shape,
            value: data,
            backward: None,
            trainable: true,
            grad: RefCell::new(None),
        });
        Tensor {
            graph: self,
            id,
            shape,
        }
    }

    /// Backpropagate from a scalar loss, accumulating gradients into
    /// every reachable trainable leaf.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<()> {
        if loss.shape != (1, 1) {
            return Err(Error::NonScalarLoss(loss.shape));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if node.trainable {
                let mut slot = node.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grad) {
                            *a += g;
                        }
                    }
                    None => *slot = Some(grad.clone()),
                }
            }
            if let Some(backward) = &node.backward {
                backward(&grad, &mut |parent, contribution| {
                    debug_assert!(parent < id, "tape order violated");
                    match grads[parent].as_mut() {
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&contribution) {
                                *a += g;
                            }
                        }
                        None => grads[parent] = Some(contribution),
                    }
                });
            }
        }
        Ok(())
    }

    pub fn zero_grad(&self) {
        for node in self.nodes.borrow().iter() {
            *node.grad.borrow_mut() = None;
        }
    }
}

// ---------------------------------------------------------------------------
// matmul kernels (ndarray-backed)
// ---------------------------------------------------------------------------

fn mat_mul_into(
    (m, k): Shape,
    n: usize,
    a: &[f64],
    b: &[f64],
    ta: bool,
    tb: bool,
    out: &mut [f64],
) {
    // logical op: out[m x n] = A' * B' where A' is a (possibly
    // transposed) view of `a` and likewise for `b`
    let a_view = if ta {
        ArrayView2::from_shape((k, m), a).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).unwrap()
    };
    let b_view = if tb {
        ArrayView2::from_shape((n, k), b).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).unwrap()
    };
    let out_view = ArrayViewMut2::from_shape((m, n), out).unwrap();
    let mut out_view = out_view;
    general_mat_mul(1.0, &a_view, &b_view, 0.0, &mut out_view);
}

impl<'g> Tensor<'g> {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.0
    }

    pub fn cols(&self) -> usize {
        self.shape.1
    }

    /// Shared handle to the node's value.
    pub fn data(&self) -> Rc<Vec<f64>> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    /// The value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape, (1, 1), "item() requires a scalar");
        self.data()[0]
    }

    /// Accumulated gradient of a trainable leaf, if backward has run.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.graph.nodes.borrow()[self.id].grad.borrow().clone()
    }

    fn same_graph(&self, other: &Tensor<'g>) {
        debug_assert!(
            std::ptr::eq(self.graph, other.graph),
            "tensors belong to different graphs"
        );
    }

    fn require_same_shape(&self, other: &Tensor<'g>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape,
                rhs: other.shape,
            });
        }
        Ok(())
    }

    // -- elementwise ------------------------------------------------------

    pub fn add(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.same_graph(&other);
        self.require_same_shape(&other, "add")?;
        let a = self.data();
        let b = other.data();
        let value = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
        let (pa, pb) = (self.id, other.id);
        Ok(self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                sink(pa, g.to_vec());
                sink(pb, g.to_vec());
            })),
            false,
        ))
    }

    pub fn sub(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.same_graph(&other);
        self.require_same_shape(&other, "sub")?;
        let a = self.data();
        let b = other.data();
        let value = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        let (pa, pb) = (self.id, other.id);
        Ok(self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                sink(pa, g.to_vec());
                sink(pb, g.iter().map(|x| -x).collect());
            })),
            false,
        ))
    }

    pub fn mul(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.same_graph(&other);
        self.require_same_shape(&other, "mul")?;
        let a = self.data();
        let b = other.data();
        let value = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let (pa, pb) = (self.id, other.id);
        let (ra, rb) = (a, b);
        Ok(self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                sink(pa, g.iter().zip(rb.iter()).map(|(g, y)| g * y).collect());
                sink(pb, g.iter().zip(ra.iter()).map(|(g, x)| g * x).collect());
            })),
            false,
        ))
    }

    pub fn scale(self, c: f64) -> Tensor<'g> {
        let a = self.data();
        let value = a.iter().map(|x| x * c).collect();
        let pa = self.id;
        self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                sink(pa, g.iter().map(|x| x * c).collect());
            })),
            false,
        )
    }

    fn unary(
        self,
        f: impl Fn(f64) -> f64,
        dfdx_from_x_y: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor<'g> {
        let a = self.data();
        let value: Vec<f64> = a.iter().map(|&x| f(x)).collect();
        let y = Rc::new(value.clone());
        let pa = self.id;
        self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                sink(
                    pa,
                    g.iter()
                        .zip(a.iter().zip(y.iter()))
                        .map(|(g, (&x, &yv))| g * dfdx_from_x_y(x, yv))
                        .collect(),
                );
            })),
            false,
        )
    }

    pub fn sigmoid(self) -> Tensor<'g> {
        self.unary(
            |x| 1.0 / (1.0 + (-x).exp()),
            |_, y| y * (1.0 - y),
        )
    }

    pub fn relu(self) -> Tensor<'g> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(self) -> Tensor<'g> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Tensor<'g> {
        self.unary(f64::ln, |x, _| 1.0 / x)
    }

    /// ELU + 1: `x + 1` for positive `x`, `exp(x)` otherwise. Output is
    /// strictly positive.
    pub fn elu_plus_one(self) -> Tensor<'g> {
        self.unary(
            |x| if x > 0.0 { x + 1.0 } else { x.exp() },
            |x, y| if x > 0.0 { 1.0 } else { y },
        )
    }

    // -- linear algebra ----------------------------------------------------

    pub fn matmul(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.same_graph(&other);
        let (m, k) = self.shape;
        let (k2, n) = other.shape;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape,
                rhs: other.shape,
            });
        }
        let a = self.data();
        let b = other.data();
        let mut value = vec![0.0; m * n];
        mat_mul_into((m, k), n, &a, &b, false, false, &mut value);
        let (pa, pb) = (self.id, other.id);
        Ok(self.graph.push(
            (m, n),
            value,
            Some(Box::new(move |g, sink| {
                // dA = G * B^T, dB = A^T * G
                let mut da = vec![0.0; m * k];
                mat_mul_into((m, n), k, g, &b, false, true, &mut da);
                sink(pa, da);
                let mut db = vec![0.0; k * n];
                mat_mul_into((k, m), n, &a, g, true, false, &mut db);
                sink(pb, db);
            })),
            false,
        ))
    }

    pub fn transpose(self) -> Tensor<'g> {
        let (m, n) = self.shape;
        let a = self.data();
        let mut value = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                value[j * m + i] = a[i * n + j];
            }
        }
        let pa = self.id;
        self.graph.push(
            (n, m),
            value,
            Some(Box::new(move |g, sink| {
                let mut da = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        da[i * n + j] = g[j * m + i];
                    }
                }
                sink(pa, da);
            })),
            false,
        )
    }

    // -- reductions and broadcasting ----------------------------------------

    pub fn sum_all(self) -> Tensor<'g> {
        let a = self.data();
        let value = vec![a.iter().sum()];
        let pa = self.id;
        let n = a.len();
        self.graph.push(
            (1, 1),
            value,
            Some(Box::new(move |g, sink| {
                sink(pa, vec![g[0]; n]);
            })),
            false,
        )
    }

    /// Column sums: `[m, n] -> [1, n]`.
    pub fn sum_axis0(self) -> Tensor<'g> {
        let (m, n) = self.shape;
        let a = self.data();
        let mut value = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                value[j] += a[i * n + j];
            }
        }
        let pa = self.id;
        self.graph.push(
            (1, n),
            value,
            Some(Box::new(move |g, sink| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    da[i * n..(i + 1) * n].copy_from_slice(g);
                }
                sink(pa, da);
            })),
            false,
        )
    }

    /// Row sums: `[m, n] -> [m, 1]`.
    pub fn sum_axis1(self) -> Tensor<'g> {
        let (m, n) = self.shape;
        let a = self.data();
        let mut value = vec![0.0; m];
        for i in 0..m {
            value[i] = a[i * n..(i + 1) * n].iter().sum();
        }
        let pa = self.id;
        self.graph.push(
            (m, 1),
            value,
            Some(Box::new(move |g, sink| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[i];
                    }
                }
                sink(pa, da);
            })),
            false,
        )
    }

    /// Expand `[1, n]`, `[m, 1]` or `[1, 1]` to `[rows, cols]`; backward
    /// sums over the broadcast axes.
    pub fn broadcast_to(self, target: Shape) -> Result<Tensor<'g>> {
        let (m, n) = self.shape;
        let (tm, tn) = target;
        let row_ok = m == tm || m == 1;
        let col_ok = n == tn || n == 1;
        if !row_ok || !col_ok {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                lhs: self.shape,
                rhs: target,
            });
        }
        let a = self.data();
        let mut value = vec![0.0; tm * tn];
        for i in 0..tm {
            for j in 0..tn {
                value[i * tn + j] = a[(if m == 1 { 0 } else { i }) * n + if n == 1 { 0 } else { j }];
            }
        }
        let pa = self.id;
        Ok(self.graph.push(
            target,
            value,
            Some(Box::new(move |g, sink| {
                let mut da = vec![0.0; m * n];
                for i in 0..tm {
                    for j in 0..tn {
                        da[(if m == 1 { 0 } else { i }) * n + if n == 1 { 0 } else { j }] +=
                            g[i * tn + j];
                    }
                }
                sink(pa, da);
            })),
            false,
        ))
    }

    // -- row-wise nonlinearities --------------------------------------------

    /// Softmax over each row.
    pub fn softmax_rows(self) -> Tensor<'g> {
        let (m, n) = self.shape;
        let a = self.data();
        let mut value = vec![0.0; m * n];
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                value[i * n + j] = e;
                total += e;
            }
            for j in 0..n {
                value[i * n + j] /= total;
            }
        }
        let y = Rc::new(value.clone());
        let pa = self.id;
        self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..n {
                        da[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                sink(pa, da);
            })),
            false,
        )
    }

    /// Row-wise guarded division: `out[r] = num[r] / den[r]`, or zero
    /// when `den[r] < eps`. Guarded rows pass no gradient.
    pub fn guarded_div_rows(self, den: Tensor<'g>, eps: f64) -> Result<Tensor<'g>> {
        self.same_graph(&den);
        let (m, n) = self.shape;
        if den.shape != (m, 1) {
            return Err(Error::ShapeMismatch {
                op: "guarded_div_rows",
                lhs: self.shape,
                rhs: den.shape,
            });
        }
        let num = self.data();
        let d = den.data();
        let mut value = vec![0.0; m * n];
        for i in 0..m {
            if d[i] >= eps {
                for j in 0..n {
                    value[i * n + j] = num[i * n + j] / d[i];
                }
            }
        }
        let (pn, pd) = (self.id, den.id);
        Ok(self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                let mut dnum = vec![0.0; m * n];
                let mut dden = vec![0.0; m];
                for i in 0..m {
                    if d[i] >= eps {
                        let mut acc = 0.0;
                        for j in 0..n {
                            dnum[i * n + j] = g[i * n + j] / d[i];
                            acc += g[i * n + j] * num[i * n + j];
                        }
                        dden[i] = -acc / (d[i] * d[i]);
                    }
                }
                sink(pn, dnum);
                sink(pd, dden);
            })),
            false,
        ))
    }

    /// Per-row layer normalization with gain and bias of shape `[1, n]`.
    pub fn layer_norm(self, gain: Tensor<'g>, bias: Tensor<'g>, eps: f64) -> Result<Tensor<'g>> {
        self.same_graph(&gain);
        self.same_graph(&bias);
        let (m, n) = self.shape;
        if gain.shape != (1, n) || bias.shape != (1, n) {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape,
                rhs: gain.shape,
            });
        }
        let x = self.data();
        let g_data = gain.data();
        let b_data = bias.data();
        let mut value = vec![0.0; m * n];
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..n {
                let xh = (row[j] - mean) * inv;
                xhat[i * n + j] = xh;
                value[i * n + j] = xh * g_data[j] + b_data[j];
            }
        }
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        let (px, pg, pb) = (self.id, gain.id, bias.id);
        Ok(self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                let mut dx = vec![0.0; m * n];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for i in 0..m {
                    let xh = &xhat[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for j in 0..n {
                        let dxhat = gr[j] * g_data[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xh[j];
                        dgain[j] += gr[j] * xh[j];
                        dbias[j] += gr[j];
                    }
                    mean_dxhat /= n as f64;
                    mean_dxhat_xhat /= n as f64;
                    for j in 0..n {
                        let dxhat = gr[j] * g_data[j];
                        dx[i * n + j] =
                            inv_std[i] * (dxhat - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
                sink(px, dx);
                sink(pg, dgain);
                sink(pb, dbias);
            })),
            false,
        ))
    }

    /// Rotate each row's `(2i, 2i+1)` pairs by the angles whose cosines
    /// and sines are given (length `cols / 2`). Orthonormal, so backward
    /// rotates the gradient by the negated angles.
    pub fn rotary(self, cos: Rc<Vec<f64>>, sin: Rc<Vec<f64>>) -> Result<Tensor<'g>> {
        let (m, n) = self.shape;
        if n % 2 != 0 || cos.len() != n / 2 || sin.len() != n / 2 {
            return Err(Error::ShapeMismatch {
                op: "rotary",
                lhs: self.shape,
                rhs: (1, cos.len() * 2),
            });
        }
        let a = self.data();
        let mut value = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..n / 2 {
                let x0 = a[i * n + 2 * p];
                let x1 = a[i * n + 2 * p + 1];
                value[i * n + 2 * p] = x0 * cos[p] - x1 * sin[p];
                value[i * n + 2 * p + 1] = x0 * sin[p] + x1 * cos[p];
            }
        }
        let pa = self.id;
        Ok(self.graph.push(
            self.shape,
            value,
            Some(Box::new(move |g, sink| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..n / 2 {
                        let g0 = g[i * n + 2 * p];
                        let g1 = g[i * n + 2 * p + 1];
                        da[i * n + 2 * p] = g0 * cos[p] + g1 * sin[p];
                        da[i * n + 2 * p + 1] = -g0 * sin[p] + g1 * cos[p];
                    }
                }
                sink(pa, da);
            })),
            false,
        ))
    }

    // -- gather / scatter -----------------------------------------------------

    /// Rows of an embedding table: `table[ids[i], :]`.
    pub fn embedding_lookup(self, ids: &[usize]) -> Result<Tensor<'g>> {
        let (v, d) = self.shape;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::BadArgument(format!(
                "embedding_lookup: id {bad} out of range (table has {v} rows)"
            )));
        }
        let table = self.data();
        let n = ids.len();
        let mut value = vec![0.0; n * d];
        for (i, &id) in ids.iter().enumerate() {
            value[i * d..(i + 1) * d].copy_from_slice(&table[id * d..(id + 1) * d]);
        }
        let pa = self.id;
        let ids = ids.to_vec();
        Ok(self.graph.push(
            (n, d),
            value,
            Some(Box::new(move |g, sink| {
                let mut dt = vec![0.0; v * d];
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[i * d + j];
                    }
                }
                sink(pa, dt);
            })),
            false,
        ))
    }

    /// Split along columns into pieces of the given widths.
    pub fn split_cols(self, widths: &[usize]) -> Result<Vec<Tensor<'g>>> {
        let (m, n) = self.shape;
        if widths.iter().sum::<usize>() != n {
            return Err(Error::ShapeMismatch {
                op: "split_cols",
                lhs: self.shape,
                rhs: (1, widths.iter().sum()),
            });
        }
        let a = self.data();
        let mut outs = Vec::with_capacity(widths.len());
        let mut offset = 0;
        for &w in widths {
            let mut value = vec![0.0; m * w];
            for i in 0..m {
                value[i * w..(i + 1) * w]
                    .copy_from_slice(&a[i * n + offset..i * n + offset + w]);
            }
            let pa = self.id;
            let start = offset;
            outs.push(self.graph.push(
                (m, w),
                value,
                Some(Box::new(move |g, sink| {
                    let mut da = vec![0.0; m * n];
                    for i in 0..m {
                        da[i * n + start..i * n + start + w]
                            .copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    sink(pa, da);
                })),
                false,
            ));
            offset += w;
        }
        Ok(outs)
    }

    /// Cross-entropy against `targets` with label smoothing, averaged
    /// over rows. The smoothed target distribution puts `1 - eps + eps/V`
    /// on the target class and `eps/V` elsewhere.
    pub fn cross_entropy_label_smoothing(
        self,
        targets: &[usize],
        smoothing: f64,
    ) -> Result<Tensor<'g>> {
        let (t, v) = self.shape;
        if targets.len() != t {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy_label_smoothing",
                lhs: self.shape,
                rhs: (targets.len(), 1),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= v) {
            return Err(Error::BadArgument(format!(
                "cross_entropy: target {bad} out of range (vocab {v})"
            )));
        }
        let logits = self.data();
        let mut probs = vec![0.0; t * v];
        let mut total = 0.0;
        for i in 0..t {
            let row = &logits[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..v {
                let e = (row[j] - max).exp();
                probs[i * v + j] = e;
                z += e;
            }
            let lse = max + z.ln();
            for j in 0..v {
                probs[i * v + j] /= z;
            }
            let row_sum: f64 = row.iter().sum();
            total += lse - (1.0 - smoothing) * row[targets[i]] - smoothing / v as f64 * row_sum;
        }
        let value = vec![total / t as f64];
        let probs = Rc::new(probs);
        let targets = targets.to_vec();
        let pa = self.id;
        Ok(self.graph.push(
            (1, 1),
            value,
            Some(Box::new(move |g, sink| {
                let scale = g[0] / t as f64;
                let mut da = vec![0.0; t * v];
                for i in 0..t {
                    for j in 0..v {
                        let q = if j == targets[i] {
                            1.0 - smoothing + smoothing / v as f64
                        } else {
                            smoothing / v as f64
                        };
                        da[i * v + j] = scale * (probs[i * v + j] - q);
                    }
                }
                sink(pa, da);
            })),
            false,
        ))
    }
}

/// Concatenate along columns: all parts share the row count.
pub fn concat_cols<'g>(parts: &[Tensor<'g>]) -> Result<Tensor<'g>> {
    assert!(!parts.is_empty(), "concat_cols of nothing");
    let m = parts[0].rows();
    for p in parts {
        if p.rows() != m {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: parts[0].shape(),
                rhs: p.shape(),
            });
        }
    }
    let n: usize = parts.iter().map(|p| p.cols()).sum();
    let datas: Vec<Rc<Vec<f64>>> = parts.iter().map(|p| p.data()).collect();
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let mut value = vec![0.0; m * n];
    let mut offset = 0;
    for (data, &w) in datas.iter().zip(&widths) {
        for i in 0..m {
            value[i * n + offset..i * n + offset + w].copy_from_slice(&data[i * w..(i + 1) * w]);
        }
        offset += w;
    }
    Ok(parts[0].graph.push(
        (m, n),
        value,
        Some(Box::new(move |g, sink| {
            let mut offset = 0;
            for (&pid, &w) in ids.iter().zip(&widths) {
                let mut dp = vec![0.0; m * w];
                for i in 0..m {
                    dp[i * w..(i + 1) * w]
                        .copy_from_slice(&g[i * n + offset..i * n + offset + w]);
                }
                sink(pid, dp);
                offset += w;
            }
        })),
        false,
    ))
}

/// Concatenate along rows: all parts share the column count.
pub fn concat_rows<'g>(parts: &[Tensor<'g>]) -> Result<Tensor<'g>> {
    assert!(!parts.is_empty(), "concat_rows of nothing");
    let n = parts[0].cols();
    for p in parts {
        if p.cols() != n {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                lhs: parts[0].shape(),
                rhs: p.shape(),
            });
        }
    }
    let m: usize = parts.iter().map(|p| p.rows()).sum();
    let datas: Vec<Rc<Vec<f64>>> = parts.iter().map(|p| p.data()).collect();
    let heights: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let mut value = Vec::with_capacity(m * n);
    for data in &datas {
        value.extend_from_slice(data);
    }
    Ok(parts[0].graph.push(
        (m, n),
        value,
        Some(Box::new(move |g, sink| {
            let mut row = 0;
            for (&pid, &h) in ids.iter().zip(&heights) {
                sink(pid, g[row * n..(row + h) * n].to_vec());
                row += h;
            }
        })),
        false,
    ))
}
