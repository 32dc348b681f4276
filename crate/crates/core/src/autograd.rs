//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so a reverse sweep over the tape is a valid topological
//! order for the backward pass. Everything runs on the calling thread, which
//! keeps results bit-reproducible.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{gemm_acc, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        cols: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    SpatialMean(Var),
    ExpandSpatial(Var),
    SumAll(Var),
    SumLastAxis(Var),
    NormalizeRows(Var, f64),
    Concat(Var, Var),
    Reshape(Var),
    GradReverse(Var, f64),
    /// Scalar whose gradient with respect to its input was computed eagerly.
    Fused(Vec<(Var, Tensor)>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`]. Only leaf
/// nodes (inputs and parameters) retain their gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(String, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for every parameter bound on the graph, keyed by name.
    /// Parameters that did not influence the output get no entry.
    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params
            .iter()
            .filter_map(|(name, v)| self.grads[v.0].as_ref().map(|g| (name.as_str(), g)))
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<String, Var>,
    bound_order: Vec<(String, Var)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Adds a constant or differentiable input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds a named parameter from `store`; repeated binds of the same name
    /// return the same node so gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown parameter {name}")))?
            .clone();
        let v = self.input(t);
        self.bound.insert(name.to_string(), v);
        self.bound_order.push((name.to_string(), v));
        Ok(v)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "div")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::Offset(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    /// Identity on the forward pass; multiplies incoming gradients by
    /// `-lambda` on the backward pass.
    pub fn grad_reverse(&mut self, a: Var, lambda: f64) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::GradReverse(a, lambda))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// `[N, D] -> [N]`.
    pub fn sum_last_axis(&mut self, a: Var) -> Result<Var> {
        let (n, d) = self.value(a).dims2()?;
        let x = self.value(a).data();
        let out = (0..n).map(|i| x[i * d..(i + 1) * d].iter().sum()).collect();
        let v = Tensor::new(vec![n], out)?;
        Ok(self.push(v, Op::SumLastAxis(a)))
    }

    /// `[N, C]` rows divided by `sqrt(|row|^2 + eps)`.
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Result<Var> {
        let (n, d) = self.value(a).dims2()?;
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(n * d);
        for row in x.chunks(d) {
            let s = (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            out.extend(row.iter().map(|v| v / s));
        }
        let v = Tensor::new(vec![n, d], out)?;
        Ok(self.push(v, Op::NormalizeRows(a, eps)))
    }

    /// `[N, C, H, W] -> [N, C]` mean over spatial positions.
    pub fn spatial_mean(&mut self, a: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(a).dims4()?;
        let hw = h * w;
        let x = self.value(a).data();
        let out = (0..n * c)
            .map(|i| x[i * hw..(i + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        let v = Tensor::new(vec![n, c], out)?;
        Ok(self.push(v, Op::SpatialMean(a)))
    }

    /// `[N, C] -> [N, C, H, W]` broadcast over spatial positions.
    pub fn expand_spatial(&mut self, a: Var, h: usize, w: usize) -> Result<Var> {
        let (n, c) = self.value(a).dims2()?;
        let hw = h * w;
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(n * c * hw);
        for &val in x {
            out.extend(std::iter::repeat_n(val, hw));
        }
        let v = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(v, Op::ExpandSpatial(a)))
    }

    /// Concatenates two `[N, *]` matrices along the second axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, da) = self.value(a).dims2()?;
        let (nb, db) = self.value(b).dims2()?;
        if na != nb {
            return Err(Error::Shape(format!("concat rows {na} vs {nb}")));
        }
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(na * (da + db));
        for i in 0..na {
            out.extend_from_slice(&xa[i * da..(i + 1) * da]);
            out.extend_from_slice(&xb[i * db..(i + 1) * db]);
        }
        let v = Tensor::new(vec![na, da + db], out)?;
        Ok(self.push(v, Op::Concat(a, b)))
    }

    /// `x: [N, D]`, `w: [D, O]`, `b: [O]` -> `x·w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        let (dw, o) = self.value(w).dims2()?;
        if d != dw || self.value(b).len() != o {
            return Err(Error::Shape(format!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; n * o];
        let bias = self.value(b).data();
        for row in out.chunks_mut(o) {
            row.copy_from_slice(bias);
        }
        gemm_acc(
            n,
            d,
            o,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            &mut out,
        );
        let v = Tensor::new(vec![n, o], out)?;
        Ok(self.push(v, Op::Linear { x, w, b }))
    }

    /// 2-D convolution with square kernels and symmetric zero padding.
    /// `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, k, k2) = self.value(w).dims4()?;
        if wcin != cin || k != k2 || self.value(b).len() != cout {
            return Err(Error::Shape(format!(
                "conv2d: input {:?}, weight {:?}, bias {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        if h + 2 * pad < k || wd + 2 * pad < k || stride == 0 {
            return Err(Error::Shape(format!(
                "conv2d: kernel {k} stride {stride} does not fit {h}x{wd}"
            )));
        }
        let geo = ConvGeometry {
            cin,
            h,
            w: wd,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (wd + 2 * pad - k) / stride + 1,
        };
        let kk = cin * k * k;
        let l = geo.ho * geo.wo;
        let xin = self.value(x).data();
        let wt = self.value(w).data();
        let bias = self.value(b).data();
        let mut cols = vec![0.0; n * kk * l];
        let mut out = vec![0.0; n * cout * l];
        let in_per = cin * h * wd;
        for i in 0..n {
            let c = &mut cols[i * kk * l..(i + 1) * kk * l];
            geo.im2col(&xin[i * in_per..(i + 1) * in_per], c);
            let o = &mut out[i * cout * l..(i + 1) * cout * l];
            for (co, row) in o.chunks_mut(l).enumerate() {
                row.fill(bias[co]);
            }
            gemm_acc(cout, kk, l, wt, false, c, false, o);
        }
        let v = Tensor::new(vec![n, cout, geo.ho, geo.wo], out)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
        ))
    }

    /// Records a scalar node whose value and input gradient were computed
    /// by the caller (used for losses with hand-derived gradients).
    pub fn fused_scalar(&mut self, x: Var, value: f64, grad: Tensor) -> Result<Var> {
        self.fused_scalar_multi(value, vec![(x, grad)])
    }

    /// [`Graph::fused_scalar`] over several inputs.
    pub fn fused_scalar_multi(&mut self, value: f64, parts: Vec<(Var, Tensor)>) -> Result<Var> {
        for (x, grad) in &parts {
            if grad.shape() != self.shape(*x) {
                return Err(Error::Shape(format!(
                    "fused gradient {:?} vs input {:?}",
                    grad.shape(),
                    self.shape(*x)
                )));
            }
        }
        Ok(self.push(Tensor::scalar(value), Op::Fused(parts)))
    }

    /// Summed binary cross-entropy between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let x = self.value(logits);
        if x.len() != targets.len() {
            return Err(Error::Shape(format!(
                "bce: {} logits vs {} targets",
                x.len(),
                targets.len()
            )));
        }
        let mut total = 0.0;
        let mut grad = Tensor::zeros(x.shape());
        for ((g, &z), &t) in grad.data_mut().iter_mut().zip(x.data()).zip(targets) {
            total += bce_logit(z, t);
            *g = sigmoid(z) - t;
        }
        self.fused_scalar(logits, total, grad)
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |u, y| u * y);
                    let gb = g.zip_map(self.value(*a), |u, x| u * x);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let ga = g.zip_map(bv, |u, y| u / y);
                    let gb = g
                        .zip_map(&node.value, |u, q| u * q)
                        .zip_map(bv, |uq, y| -uq / y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|u| u * k)),
                Op::Offset(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |u, s| u * s * (1.0 - s));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |u, e| u * e);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Ln(a) => {
                    let ga = g.zip_map(self.value(*a), |u, x| u / x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sqrt(a) => {
                    let ga = g.zip_map(&node.value, |u, r| u * 0.5 / r);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(*a), |u, x| 2.0 * u * x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |u, x| if x > 0.0 { u } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let ga = g.zip_map(self.value(*a), |u, x| if x > 0.0 { u } else { slope * u });
                    accumulate(&mut grads, *a, ga);
                }
                Op::GradReverse(a, lambda) => {
                    accumulate(&mut grads, *a, g.map(|u| -lambda * u));
                }
                Op::Reshape(a) => {
                    let ga = g.reshape(self.shape(*a))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let u = g.item();
                    accumulate(&mut grads, *a, Tensor::full(self.shape(*a), u));
                }
                Op::SumLastAxis(a) => {
                    let (n, d) = self.value(*a).dims2()?;
                    let ga = Tensor::from_fn(&[n, d], |i| g.data()[i / d]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::NormalizeRows(a, eps) => {
                    let (_, d) = self.value(*a).dims2()?;
                    let x = self.value(*a).data();
                    let mut ga = Vec::with_capacity(x.len());
                    for (row, gr) in x.chunks(d).zip(g.data().chunks(d)) {
                        let s2 = row.iter().map(|v| v * v).sum::<f64>() + eps;
                        let s = s2.sqrt();
                        let xg: f64 = row.iter().zip(gr).map(|(u, v)| u * v).sum();
                        ga.extend(row.iter().zip(gr).map(|(xj, gj)| gj / s - xj * xg / (s2 * s)));
                    }
                    accumulate(&mut grads, *a, Tensor::new(self.shape(*a).to_vec(), ga)?);
                }
                Op::SpatialMean(a) => {
                    let (n, c, h, w) = self.value(*a).dims4()?;
                    let hw = h * w;
                    let ga = Tensor::from_fn(&[n, c, h, w], |i| g.data()[i / hw] / hw as f64);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ExpandSpatial(a) => {
                    let (n, c) = self.value(*a).dims2()?;
                    let hw = g.len() / (n * c).max(1);
                    let ga = Tensor::from_fn(&[n, c], |i| {
                        g.data()[i * hw..(i + 1) * hw].iter().sum()
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(a, b) => {
                    let (n, da) = self.value(*a).dims2()?;
                    let (_, db) = self.value(*b).dims2()?;
                    let d = da + db;
                    let ga = Tensor::from_fn(&[n, da], |i| g.data()[(i / da) * d + i % da]);
                    let gb = Tensor::from_fn(&[n, db], |i| g.data()[(i / db) * d + da + i % db]);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Linear { x, w, b } => {
                    let (n, d) = self.value(*x).dims2()?;
                    let (_, o) = self.value(*w).dims2()?;
                    let mut gx = vec![0.0; n * d];
                    gemm_acc(n, o, d, g.data(), false, self.value(*w).data(), true, &mut gx);
                    let mut gw = vec![0.0; d * o];
                    gemm_acc(d, n, o, self.value(*x).data(), true, g.data(), false, &mut gw);
                    let mut gb = vec![0.0; o];
                    for row in g.data().chunks(o) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::new(vec![n, d], gx)?);
                    accumulate(&mut grads, *w, Tensor::new(vec![d, o], gw)?);
                    accumulate(&mut grads, *b, Tensor::new(vec![o], gb)?);
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                    cols,
                } => {
                    let (n, cin, h, wd) = self.value(*x).dims4()?;
                    let (cout, _, k, _) = self.value(*w).dims4()?;
                    let (_, _, ho, wo) = node.value.dims4()?;
                    let geo = ConvGeometry {
                        cin,
                        h,
                        w: wd,
                        k,
                        stride: *stride,
                        pad: *pad,
                        ho,
                        wo,
                    };
                    let kk = cin * k * k;
                    let l = ho * wo;
                    let wt = self.value(*w).data();
                    let mut gw = vec![0.0; cout * kk];
                    let mut gb = vec![0.0; cout];
                    let mut gx = vec![0.0; n * cin * h * wd];
                    let mut dcols = vec![0.0; kk * l];
                    let in_per = cin * h * wd;
                    for i in 0..n {
                        let go = &g.data()[i * cout * l..(i + 1) * cout * l];
                        let c = &cols[i * kk * l..(i + 1) * kk * l];
                        gemm_acc(cout, l, kk, go, false, c, true, &mut gw);
                        for (co, row) in go.chunks(l).enumerate() {
                            gb[co] += row.iter().sum::<f64>();
                        }
                        dcols.fill(0.0);
                        gemm_acc(kk, cout, l, wt, true, go, false, &mut dcols);
                        geo.col2im(&dcols, &mut gx[i * in_per..(i + 1) * in_per]);
                    }
                    accumulate(&mut grads, *x, Tensor::new(vec![n, cin, h, wd], gx)?);
                    accumulate(&mut grads, *w, Tensor::new(vec![cout, cin, k, k], gw)?);
                    accumulate(&mut grads, *b, Tensor::new(vec![cout], gb)?);
                }
                Op::Fused(parts) => {
                    let u = g.item();
                    for (x, grad) in parts {
                        accumulate(&mut grads, *x, grad.map(|v| v * u));
                    }
                }
            }
        }
        Ok(Gradients {
            grads,
            params: self.bound_order.clone(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `-[t ln σ(z) + (1-t) ln(1-σ(z))]`.
pub fn bce_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let l = self.ho * self.wo;
        let mut r = 0;
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &mut cols[r * l..(r + 1) * l];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let l = self.ho * self.wo;
        let mut r = 0;
        for c in 0..self.cin {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &cols[r * l..(r + 1) * l];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += row[oy * self.wo + ox];
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}
