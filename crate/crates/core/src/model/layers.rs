//! Layers with cached forward state and hand-written backward passes.
//!
//! Each layer keeps the activations of its most recent forward call; a
//! backward call consumes them and accumulates into the parameter `grad`
//! buffers. Callers zero gradients between optimizer steps.

use ndarray::{Array1, Array3, ArrayD, Axis, IxDyn, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ops::{col2im, im2col, map_batch, ConvGeom, Tensor};

pub const INIT_STD: f64 = 0.02;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// A named tensor of the network. Non-trainable entries are running
/// statistics that are checkpointed but never optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub trainable: bool,
}

impl Param {
    fn new(value: ArrayD<f64>, trainable: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self {
            value,
            grad,
            trainable,
        }
    }

    fn normal(shape: &[usize], mean: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(mean, INIT_STD).expect("finite std");
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || dist.sample(rng));
        Self::new(value, true)
    }

    fn zeros(shape: &[usize], trainable: bool) -> Self {
        Self::new(ArrayD::zeros(IxDyn(shape)), trainable)
    }

    fn filled(shape: &[usize], v: f64, trainable: bool) -> Self {
        Self::new(ArrayD::from_elem(IxDyn(shape), v), trainable)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

pub type VisitMut<'a> = dyn FnMut(&str, &mut Param) + 'a;
pub type Visit<'a> = dyn FnMut(&str, &Param) + 'a;

/// Batch normalization behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics.
    Inference,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub geom: ConvGeom,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }

    pub fn new(cin: usize, cout: usize, geom: ConvGeom, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let k = geom.kernel;
        Self {
            weight: Param::normal(&[cout, cin, k, k], 0.0, rng),
            bias: bias.then(|| Param::zeros(&[cout], true)),
            geom,
            input: None,
        }
    }

    fn cout(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let (_, cin, h, w) = x.dim();
        let g = self.geom;
        let (ho, wo) = (
            g.conv_out(h).expect("input too small for kernel"),
            g.conv_out(w).expect("input too small for kernel"),
        );
        let cout = self.cout();
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((cout, cin * g.kernel * g.kernel))
            .expect("contiguous weight");
        let bias = self.bias.as_ref().map(|b| &b.value);
        let y = map_batch(x.view(), |_, xi| {
            let cols = im2col(xi, g, ho, wo);
            let mut y = w2
                .dot(&cols)
                .into_shape_with_order((cout, ho, wo))
                .expect("output shape");
            if let Some(b) = bias {
                for (mut plane, &bv) in y.outer_iter_mut().zip(b.iter()) {
                    plane += bv;
                }
            }
            y
        });
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("backward without forward");
        let (n, cin, h, w) = x.dim();
        let (_, cout, ho, wo) = dy.dim();
        let g = self.geom;
        let kk = g.kernel * g.kernel;
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((cout, cin * kk))
            .expect("contiguous weight");
        let per_sample: Vec<(Array3<f64>, ndarray::Array2<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let cols = im2col(x.index_axis(Axis(0), i), g, ho, wo);
                let dyi = dy
                    .index_axis(Axis(0), i)
                    .into_shape_with_order((cout, ho * wo))
                    .expect("contiguous grad");
                let dw = dyi.dot(&cols.t());
                let dcols = w2.t().dot(&dyi);
                (col2im(dcols.view(), cin, h, w, g, ho, wo), dw)
            })
            .collect();
        let mut dw_total = ndarray::Array2::<f64>::zeros((cout, cin * kk));
        let mut dxs = Vec::with_capacity(n);
        for (dx, dw) in per_sample {
            dw_total += &dw;
            dxs.push(dx);
        }
        let mut gw = self
            .weight
            .grad
            .view_mut()
            .into_shape_with_order((cout, cin * kk))
            .expect("contiguous grad");
        gw += &dw_total;
        if let Some(b) = &mut self.bias {
            let db = dy.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
            b.grad += &db.into_dyn();
        }
        super::ops::stack(dxs)
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit) {
        f(&format!("{prefix}.weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }
}

/// Transposed convolution; weight layout (Cin, Cout, k, k).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub geom: ConvGeom,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }

    pub fn new(cin: usize, cout: usize, geom: ConvGeom, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let k = geom.kernel;
        Self {
            weight: Param::normal(&[cin, cout, k, k], 0.0, rng),
            bias: bias.then(|| Param::zeros(&[cout], true)),
            geom,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let x = x.as_standard_layout().into_owned();
        let (_, cin, h, w) = x.dim();
        let g = self.geom;
        let cout = self.weight.value.shape()[1];
        let (ho, wo) = (g.deconv_out(h), g.deconv_out(w));
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((cin, cout * g.kernel * g.kernel))
            .expect("contiguous weight");
        let bias = self.bias.as_ref().map(|b| &b.value);
        let y = map_batch(x.view(), |_, xi| {
            let xi = xi.into_shape_with_order((cin, h * w)).expect("contiguous input");
            let cols = w2.t().dot(&xi);
            let mut y = col2im(cols.view(), cout, ho, wo, g, h, w);
            if let Some(b) = bias {
                for (mut plane, &bv) in y.outer_iter_mut().zip(b.iter()) {
                    plane += bv;
                }
            }
            y
        });
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("backward without forward");
        let (n, cin, h, w) = x.dim();
        let cout = dy.dim().1;
        let g = self.geom;
        let kk = g.kernel * g.kernel;
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((cin, cout * kk))
            .expect("contiguous weight");
        let per_sample: Vec<(Array3<f64>, ndarray::Array2<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let dcols = im2col(dy.index_axis(Axis(0), i), g, h, w);
                let xi = x
                    .index_axis(Axis(0), i)
                    .into_shape_with_order((cin, h * w))
                    .expect("contiguous input");
                let dw = xi.dot(&dcols.t());
                let dx = w2
                    .dot(&dcols)
                    .into_shape_with_order((cin, h, w))
                    .expect("input shape");
                (dx, dw)
            })
            .collect();
        let mut dw_total = ndarray::Array2::<f64>::zeros((cin, cout * kk));
        let mut dxs = Vec::with_capacity(n);
        for (dx, dw) in per_sample {
            dw_total += &dw;
            dxs.push(dx);
        }
        let mut gw = self
            .weight
            .grad
            .view_mut()
            .into_shape_with_order((cin, cout * kk))
            .expect("contiguous grad");
        gw += &dw_total;
        if let Some(b) = &mut self.bias {
            let db = dy.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
            b.grad += &db.into_dyn();
        }
        super::ops::stack(dxs)
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit) {
        f(&format!("{prefix}.weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            gamma: Param::normal(&[c], 1.0, rng),
            beta: Param::zeros(&[c], true),
            running_mean: Param::zeros(&[c], false),
            running_var: Param::filled(&[c], 1.0, false),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = Array1::zeros(c);
                let mut var = Array1::zeros(c);
                for ch in 0..c {
                    let xc = x.index_axis(Axis(1), ch);
                    let mu = xc.sum() / m;
                    let v = xc.fold(0.0, |acc, &v| acc + (v - mu) * (v - mu)) / m;
                    mean[ch] = mu;
                    var[ch] = v;
                }
                let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                Zip::from(&mut self.running_mean.value)
                    .and(&mean.view().into_dyn())
                    .for_each(|r, &mu| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * mu);
                Zip::from(&mut self.running_var.value)
                    .and(&var.view().into_dyn())
                    .for_each(|r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias);
                (mean, var)
            }
            Mode::Inference => (
                self.running_mean.value.view().into_dimensionality().unwrap().to_owned(),
                self.running_var.value.view().into_dimensionality().unwrap().to_owned(),
            ),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut xhat = x.clone();
        for (ch, mut plane) in xhat.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, is) = (mean[ch], inv_std[ch]);
            plane.mapv_inplace(|v| (v - mu) * is);
        }
        let mut y = xhat.clone();
        for (ch, mut plane) in y.axis_iter_mut(Axis(1)).enumerate() {
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            plane.mapv_inplace(|v| v * g + b);
        }
        self.cache = Some(BnCache { xhat, inv_std });
        y
    }

    /// Gradient for batch-statistics (train-mode) normalization.
    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let BnCache { xhat, inv_std } = self.cache.take().expect("backward without forward");
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = Tensor::zeros(dy.raw_dim());
        for ch in 0..c {
            let dyc = dy.index_axis(Axis(1), ch);
            let xc = xhat.index_axis(Axis(1), ch);
            let sum_dy = dyc.sum();
            let sum_dy_xhat = Zip::from(&dyc).and(&xc).fold(0.0, |acc, &d, &x| acc + d * x);
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let g = self.gamma.value[ch];
            let k = g * inv_std[ch] / m;
            Zip::from(dx.index_axis_mut(Axis(1), ch))
                .and(&dyc)
                .and(&xc)
                .for_each(|o, &d, &x| *o = k * (m * d - sum_dy - x * sum_dy_xhat));
        }
        dx
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut) {
        f(&format!("{prefix}.gamma"), &mut self.gamma);
        f(&format!("{prefix}.beta"), &mut self.beta);
        f(&format!("{prefix}.running_mean"), &mut self.running_mean);
        f(&format!("{prefix}.running_var"), &mut self.running_var);
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit) {
        f(&format!("{prefix}.gamma"), &self.gamma);
        f(&format!("{prefix}.beta"), &self.beta);
        f(&format!("{prefix}.running_mean"), &self.running_mean);
        f(&format!("{prefix}.running_var"), &self.running_var);
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient of leaky ReLU given its output (sign is preserved for slope > 0).
pub fn leaky_relu_backward(dy: &Tensor, out: &Tensor, slope: f64) -> Tensor {
    let mut dx = dy.clone();
    Zip::from(&mut dx)
        .and(out)
        .for_each(|d, &o| if o <= 0.0 { *d *= slope });
    dx
}

pub fn relu(x: &Tensor) -> Tensor {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(dy: &Tensor, out: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    Zip::from(&mut dx)
        .and(out)
        .for_each(|d, &o| if o <= 0.0 { *d = 0.0 });
    dx
}

/// Inverted-dropout mask: kept units are scaled by 1/(1−rate).
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let keep = 1.0 / (1.0 - rate);
    let len: usize = shape.iter().product();
    let vals: Vec<f64> = (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::from_shape_vec((shape[0], shape[1], shape[2], shape[3]), vals).expect("4-d shape")
}
