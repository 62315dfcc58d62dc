//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in execution order, so node indices are
//! already a topological order. [`Tape::backward`] sweeps the nodes in
//! reverse and accumulates gradients additively, which handles fan-out.
//!
//! Parameters enter a tape through [`Tape::param`]; after the backward sweep
//! their gradients are added into the owning [`ParamStore`] with
//! [`ParamStore::accumulate`].

mod check;
pub(crate) mod kernels;

use std::collections::HashMap;

pub use check::{grad_check, grad_check_params, relative_error, GradCheck, REL_ERROR_FLOOR};
pub use kernels::{sigmoid, BatchStats};

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Param,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: kernels::BatchNormSaved,
    },
    /// Batch norm with fixed statistics; `centered` holds `(x - mean) * inv_std`.
    BatchNormFixed {
        gamma: Var,
        beta: Var,
        input: Var,
        centered: Tensor,
        inv_std: Vec<f64>,
    },
    Relu6(Var),
    Sigmoid(Var),
    Resize(Var),
    AvgPool(Var),
    WeightedSum {
        inputs: Vec<Var>,
        weights: Vec<Var>,
    },
    LinComb {
        inputs: Vec<Var>,
        coeffs: Vec<f64>,
    },
    Diff {
        input: Var,
        axis: usize,
    },
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
    Stack(Vec<Var>),
    BinaryEntropy {
        input: Var,
        eps: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Computation tape. Single-threaded; build one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a parameter; repeated calls with the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        kernels::conv2d_check(self.value(input), self.value(kernel), self.value(bias), stride)?;
        let out = kernels::conv2d_forward(self.value(input), self.value(kernel), self.value(bias), stride);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
        ))
    }

    fn check_affine(&self, input: Var, gamma: Var, beta: Var) -> Result<usize> {
        let c = self.shape(input)[1];
        let (g, b) = (self.value(gamma).numel(), self.value(beta).numel());
        if g != c || b != c {
            return Err(Error::shape(
                "batch_norm",
                format!("input has C={c} channels but gamma has {g} and beta has {b}"),
            ));
        }
        Ok(c)
    }

    /// Training-mode batch norm over the `N, H, W` axes. Also returns the
    /// batch statistics so callers can update running averages.
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        self.check_affine(input, gamma, beta)?;
        let (out, saved, stats) =
            kernels::batch_norm_train(self.value(input), self.value(gamma), self.value(beta), eps);
        let v = self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            },
        );
        Ok((v, stats))
    }

    /// Inference-mode batch norm with stored statistics.
    pub fn batch_norm_fixed(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let c = self.check_affine(input, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batch_norm", format!("running statistics length != C={c}")));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let x = self.value(input);
        let [_, _, h, w] = x.shape();
        let hw = h * w;
        let mut centered = x.clone();
        for (i, v) in centered.data_mut().iter_mut().enumerate() {
            let ch = (i / hw) % c;
            *v = (*v - mean[ch]) * inv_std[ch];
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = centered.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let ch = (i / hw) % c;
            *v = g[ch] * *v + b[ch];
        }
        Ok(self.push(
            out,
            Op::BatchNormFixed {
                gamma,
                beta,
                input,
                centered,
                inv_std,
            },
        ))
    }

    pub fn relu6(&mut self, input: Var) -> Var {
        let out = self.value(input).map(kernels::relu6);
        self.push(out, Op::Relu6(input))
    }

    /// Elementwise logistic function.
    pub fn sigmoid(&mut self, input: Var) -> Var {
        let out = self.value(input).map(kernels::sigmoid);
        self.push(out, Op::Sigmoid(input))
    }

    /// Bilinear resize with half-pixel centers. Same-size targets are the identity.
    pub fn bilinear_resize(&mut self, input: Var, target_h: usize, target_w: usize) -> Result<Var> {
        if target_h == 0 || target_w == 0 {
            return Err(Error::Invalid("resize target must be at least 1x1".into()));
        }
        let out = kernels::resize_forward(self.value(input), target_h, target_w);
        Ok(self.push(out, Op::Resize(input)))
    }

    /// Adaptive average pooling to `out_h × out_w`; the input must be at least that large.
    pub fn avg_pool_to(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [_, _, h, w] = self.shape(input);
        if h < out_h || w < out_w {
            return Err(Error::shape(
                "avg_pool_to",
                format!("input {h}x{w} is smaller than target {out_h}x{out_w}"),
            ));
        }
        let out = kernels::avg_pool_forward(self.value(input), out_h, out_w);
        Ok(self.push(out, Op::AvgPool(input)))
    }

    /// `Σ weights[i] · inputs[i]`, where every weight is a scalar node.
    pub fn weighted_sum(&mut self, inputs: &[Var], weights: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Invalid("weighted_sum needs at least one input".into()));
        }
        if inputs.len() != weights.len() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} inputs but {} weights", inputs.len(), weights.len()),
            ));
        }
        let shape = self.shape(inputs[0]);
        let mut out = Tensor::zeros(shape);
        for (&x, &w) in inputs.iter().zip(weights) {
            if self.shape(x) != shape {
                return Err(Error::shape(
                    "weighted_sum",
                    format!("input shape {:?} differs from {:?}", self.shape(x), shape),
                ));
            }
            let wv = self.value(w).item().map_err(|_| Error::shape("weighted_sum", "weights must be scalars"))?;
            for (o, xv) in out.data_mut().iter_mut().zip(self.value(x).data()) {
                *o += wv * xv;
            }
        }
        Ok(self.push(
            out,
            Op::WeightedSum {
                inputs: inputs.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// `Σ coeffs[i] · inputs[i]` with constant coefficients.
    pub fn linear_combination(&mut self, inputs: &[Var], coeffs: &[f64]) -> Result<Var> {
        if inputs.is_empty() || inputs.len() != coeffs.len() {
            return Err(Error::Invalid("linear_combination needs matching non-empty inputs".into()));
        }
        let shape = self.shape(inputs[0]);
        let mut out = Tensor::zeros(shape);
        for (&x, &c) in inputs.iter().zip(coeffs) {
            if self.shape(x) != shape {
                return Err(Error::shape("linear_combination", "inputs differ in shape"));
            }
            for (o, xv) in out.data_mut().iter_mut().zip(self.value(x).data()) {
                *o += c * xv;
            }
        }
        Ok(self.push(
            out,
            Op::LinComb {
                inputs: inputs.to_vec(),
                coeffs: coeffs.to_vec(),
            },
        ))
    }

    pub fn add(&mut self, inputs: &[Var]) -> Result<Var> {
        self.linear_combination(inputs, &vec![1.0; inputs.len()])
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        self.linear_combination(&[input], &[factor]).expect("single input is always valid")
    }

    /// Forward difference along width: `out[.., x] = in[.., x+1] - in[.., x]`.
    pub fn diff_x(&mut self, input: Var) -> Result<Var> {
        self.diff(input, 3)
    }

    /// Forward difference along height.
    pub fn diff_y(&mut self, input: Var) -> Result<Var> {
        self.diff(input, 2)
    }

    fn diff(&mut self, input: Var, axis: usize) -> Result<Var> {
        if self.shape(input)[axis] < 2 {
            return Err(Error::shape("diff", "axis must have at least 2 elements"));
        }
        let out = kernels::diff_forward(self.value(input), axis);
        Ok(self.push(out, Op::Diff { input, axis }))
    }

    /// Mean squared difference, as a scalar node.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let s: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        let out = Tensor::scalar(s / x.len() as f64);
        Ok(self.push(out, Op::Mse(a, b)))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        self.push(out, Op::Sum(input))
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let out = Tensor::scalar(v.sum() / v.numel() as f64);
        self.push(out, Op::Mean(input))
    }

    /// Packs scalar nodes into a `[1, K, 1, 1]` vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        if scalars.is_empty() {
            return Err(Error::Invalid("stack needs at least one scalar".into()));
        }
        let mut data = Vec::with_capacity(scalars.len());
        for &s in scalars {
            data.push(self.value(s).item()?);
        }
        let out = Tensor::new([1, scalars.len(), 1, 1], data)?;
        Ok(self.push(out, Op::Stack(scalars.to_vec())))
    }

    /// Mean binary entropy of the elements, each clamped to `[eps, 1-eps]`.
    pub fn binary_entropy_mean(&mut self, input: Var, eps: f64) -> Var {
        let v = self.value(input);
        let s: f64 = v.data().iter().map(|&w| kernels::binary_entropy(w, eps)).sum();
        let out = Tensor::scalar(s / v.numel() as f64);
        self.push(out, Op::BinaryEntropy { input, eps })
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != [1, 1, 1, 1] {
            return Err(Error::shape("backward", format!("loss must be a scalar, got {shape:?}")));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                } => {
                    let (dx, dk, db) =
                        kernels::conv2d_backward(self.value(*input), self.value(*kernel), *stride, &g);
                    acc(&mut grads, *input, dx);
                    acc(&mut grads, *kernel, dk);
                    let bshape = self.shape(*bias);
                    acc(&mut grads, *bias, Tensor::new(bshape, db.into_data())?);
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    saved,
                } => {
                    let (dx, dg, db) = kernels::batch_norm_train_backward(saved, self.value(*gamma), &g);
                    acc(&mut grads, *input, dx);
                    acc(&mut grads, *gamma, Tensor::new(self.shape(*gamma), dg.into_data())?);
                    acc(&mut grads, *beta, Tensor::new(self.shape(*beta), db.into_data())?);
                }
                Op::BatchNormFixed {
                    gamma,
                    beta,
                    input,
                    centered,
                    inv_std,
                } => {
                    let [_, c, h, w] = g.shape();
                    let hw = h * w;
                    let gam = self.value(*gamma).data();
                    let mut dx = g.clone();
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for (i, d) in dx.data_mut().iter_mut().enumerate() {
                        let ch = (i / hw) % c;
                        let gv = g.data()[i];
                        dg[ch] += gv * centered.data()[i];
                        db[ch] += gv;
                        *d = gv * gam[ch] * inv_std[ch];
                    }
                    acc(&mut grads, *input, dx);
                    acc(&mut grads, *gamma, Tensor::new(self.shape(*gamma), dg)?);
                    acc(&mut grads, *beta, Tensor::new(self.shape(*beta), db)?);
                }
                Op::Relu6(x) => {
                    let mut dx = g.clone();
                    for (d, &xv) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                        *d *= kernels::relu6_grad(xv);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let mut dx = g.clone();
                    for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= y * (1.0 - y);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Resize(x) => {
                    let dx = kernels::resize_backward(self.shape(*x), &g);
                    acc(&mut grads, *x, dx);
                }
                Op::AvgPool(x) => {
                    let dx = kernels::avg_pool_backward(self.shape(*x), &g);
                    acc(&mut grads, *x, dx);
                }
                Op::WeightedSum { inputs, weights } => {
                    for (&x, &w) in inputs.iter().zip(weights) {
                        let wv = self.value(w).data()[0];
                        let dot: f64 = g.data().iter().zip(self.value(x).data()).map(|(a, b)| a * b).sum();
                        acc(&mut grads, x, g.map(|v| v * wv));
                        acc(&mut grads, w, Tensor::scalar(dot));
                    }
                }
                Op::LinComb { inputs, coeffs } => {
                    for (&x, &c) in inputs.iter().zip(coeffs) {
                        acc(&mut grads, x, g.map(|v| v * c));
                    }
                }
                Op::Diff { input, axis } => {
                    let dx = kernels::diff_backward(self.shape(*input), *axis, &g);
                    acc(&mut grads, *input, dx);
                }
                Op::Mse(a, b) => {
                    let gv = g.data()[0];
                    let (x, y) = (self.value(*a), self.value(*b));
                    let k = 2.0 * gv / x.numel() as f64;
                    let da = Tensor::new(
                        x.shape(),
                        x.data().iter().zip(y.data()).map(|(p, q)| k * (p - q)).collect(),
                    )?;
                    let db = da.map(|v| -v);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Sum(x) => {
                    let gv = g.data()[0];
                    acc(&mut grads, *x, Tensor::full(self.shape(*x), gv));
                }
                Op::Mean(x) => {
                    let shape = self.shape(*x);
                    let n: usize = shape.iter().product();
                    acc(&mut grads, *x, Tensor::full(shape, g.data()[0] / n as f64));
                }
                Op::Stack(scalars) => {
                    for (&s, &gv) in scalars.iter().zip(g.data()) {
                        acc(&mut grads, s, Tensor::scalar(gv));
                    }
                }
                Op::BinaryEntropy { input, eps } => {
                    let x = self.value(*input);
                    let k = g.data()[0] / x.numel() as f64;
                    let dx = x.map(|w| k * kernels::binary_entropy_grad(w, *eps));
                    acc(&mut grads, *input, dx);
                }
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            tape_len: self.nodes.len(),
            param_nodes: self.params.clone(),
        })
    }
}

/// Gradients produced by one backward sweep, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    tape_len: usize,
    param_nodes: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` influences the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn tape_len(&self) -> usize {
        self.tape_len
    }

    /// Gradients of the parameters reachable from the loss, ordered by id.
    pub fn params(&self) -> Vec<(ParamId, &Tensor)> {
        let mut out: Vec<_> = self
            .param_nodes
            .iter()
            .filter_map(|(&id, &v)| self.wrt(v).map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

impl ParamStore {
    /// Adds parameter gradients from a backward sweep into each parameter's
    /// accumulator.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.params() {
            self.get_mut(id).grad.add_assign(g);
        }
    }
}
