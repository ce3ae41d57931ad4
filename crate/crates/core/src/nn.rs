//! Layer primitives with explicit backward passes.
//!
//! Every layer is immutable during a forward pass: `forward` returns the
//! output together with a cache, and `backward` consumes that cache, adds
//! parameter gradients into an optional gradient accumulator of the same type
//! as the layer, and returns the input gradient when asked for it. Passing
//! `None` as the accumulator freezes the layer.
//!
//! Feature maps are `[batch, channels, height, width]`; dense activations are
//! `[batch, features]`.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array, Array1, Array2, Array4, ArrayViewD, ArrayViewMutD, Axis, Dimension, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::CassError;
use crate::real::Real;

/// Named parameter tensors of a network, in a fixed traversal order.
pub trait Params<T: Real> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>);

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>);

    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same structure with every parameter set to zero; used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Sized + Clone,
    {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Negative slope 0.2.
    LeakyRelu,
    Tanh,
    Elu,
    Softplus,
    Sigmoid,
}

const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        let zero = T::zero();
        match self {
            Activation::Relu => x.max(zero),
            Activation::LeakyRelu => {
                if x > zero {
                    x
                } else {
                    x * T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > zero {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Softplus => x.max(zero) + (-x.abs()).exp().ln_1p(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        let (zero, one) = (T::zero(), T::one());
        match self {
            Activation::Relu => {
                if x > zero {
                    one
                } else {
                    zero
                }
            }
            Activation::LeakyRelu => {
                if x > zero {
                    one
                } else {
                    T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                one - t * t
            }
            Activation::Elu => {
                if x > zero {
                    one
                } else {
                    x.exp()
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (one - s)
            }
        }
    }

    pub fn forward<T: Real, D: Dimension>(self, x: &Array<T, D>) -> Array<T, D> {
        x.mapv(|v| self.apply(v))
    }

    pub fn backward<T: Real, D: Dimension>(self, pre: &Array<T, D>, dy: &Array<T, D>) -> Array<T, D> {
        Zip::from(pre).and(dy).map_collect(|&p, &g| g * self.derivative(p))
    }

    /// Weight init gain for layers feeding this nonlinearity.
    pub fn init_gain(self) -> f64 {
        match self {
            Activation::Relu => 2f64.sqrt(),
            Activation::LeakyRelu => (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt(),
            _ => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Elu => "elu",
            Activation::Softplus => "softplus",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = CassError;

    fn from_str(s: &str) -> Result<Self, CassError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "elu" => Ok(Activation::Elu),
            "softplus" => Ok(Activation::Softplus),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(CassError::config(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

fn normal_vec<T: Real>(n: usize, std: f64, rng: &mut impl Rng) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Array4<T>,
    pub bias: Array1<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Array2<T>,
    input_dim: (usize, usize, usize, usize),
}

impl<T: Real> Conv2d<T> {
    /// Fan-in scaled normal weights, zero bias.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let std = gain / (fan_in as f64).sqrt();
        let weight = Array4::from_shape_vec(
            (out_channels, in_channels, kernel, kernel),
            normal_vec(out_channels * fan_in, std, rng),
        )
        .expect("shape matches length");
        Self {
            weight,
            bias: Array1::zeros(out_channels),
            stride,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, ConvCache<T>) {
        let (b, c, h, w) = x.dim();
        let (oc, ic, k, _) = self.weight.dim();
        assert_eq!(c, ic, "conv input channels");
        let (oh, ow) = self.output_hw(h, w);
        let x = x.as_standard_layout();
        let cols = im2col(x.as_slice().expect("standard layout"), (b, c, h, w), k, self.stride, self.padding, (oh, ow));
        let wmat = self.weight_matrix();
        let y = wmat.dot(&cols);
        let mut y = y
            .into_shape_with_order((oc, b, oh, ow))
            .expect("gemm output shape")
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_owned();
        for (mut plane, &bias) in y.axis_iter_mut(Axis(1)).zip(self.bias.iter()) {
            plane.mapv_inplace(|v| v + bias);
        }
        (
            y,
            ConvCache {
                cols,
                input_dim: (b, c, h, w),
            },
        )
    }

    fn weight_matrix(&self) -> Array2<T> {
        let (oc, ic, k, _) = self.weight.dim();
        self.weight
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((oc, ic * k * k))
            .expect("weight reshape")
    }

    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        dy: &Array4<T>,
        grad: Option<&mut Conv2d<T>>,
        want_dx: bool,
    ) -> Option<Array4<T>> {
        let (b, oc, oh, ow) = dy.dim();
        let dy2 = dy
            .view()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((oc, b * oh * ow))
            .expect("dy reshape");
        if let Some(g) = grad {
            let dw = dy2.dot(&cache.cols.t());
            let dw = dw.into_shape_with_order(g.weight.dim()).expect("dw reshape");
            g.weight += &dw;
            g.bias += &dy2.sum_axis(Axis(1));
        }
        if !want_dx {
            return None;
        }
        let dcols = self.weight_matrix().t().dot(&dy2);
        Some(col2im(&dcols, cache.input_dim, self.kernel(), self.stride, self.padding, (oh, ow)))
    }
}

impl<T: Real> Params<T> for Conv2d<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        out.push((join(prefix, "weight"), self.weight.view().into_dyn()));
        out.push((join(prefix, "bias"), self.bias.view().into_dyn()));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        out.push(self.weight.view_mut().into_dyn());
        out.push(self.bias.view_mut().into_dyn());
    }
}

/// Output columns `lo..hi` whose input index `o·stride + k − pad` lies in `0..n`.
#[inline]
fn valid_range(out: usize, n: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if n + pad > k { ((n + pad - k - 1) / stride + 1).min(out) } else { 0 };
    (lo.min(hi), hi)
}

/// Unfold `x` into `[c·k·k, b·oh·ow]` patches.
fn im2col<T: Real>(
    x: &[T],
    (b, c, h, w): (usize, usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Array2<T> {
    let n = b * oh * ow;
    let mut cols = Array2::<T>::zeros((c * k * k, n));
    let dst_all = cols.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ki in 0..k {
            let (oy_lo, oy_hi) = valid_range(oh, h, ki, stride, pad);
            for kj in 0..k {
                let (ox_lo, ox_hi) = valid_range(ow, w, kj, stride, pad);
                let row = (ci * k + ki) * k + kj;
                let dst = &mut dst_all[row * n..(row + 1) * n];
                for bi in 0..b {
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ki - pad;
                        let src = &x[((bi * c + ci) * h + iy) * w..][..w];
                        let base = (bi * oh + oy) * ow;
                        let d = &mut dst[base + ox_lo..base + ox_hi];
                        let first = ox_lo * stride + kj - pad;
                        if stride == 1 {
                            d.copy_from_slice(&src[first..first + d.len()]);
                        } else {
                            for (v, s) in d.iter_mut().zip(src[first..].iter().step_by(stride)) {
                                *v = *s;
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patches back into an image.
fn col2im<T: Real>(
    cols: &Array2<T>,
    (b, c, h, w): (usize, usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Array4<T> {
    let n = b * oh * ow;
    let cols = cols.as_standard_layout();
    let src_all = cols.as_slice().expect("standard layout");
    let mut out = Array4::<T>::zeros((b, c, h, w));
    let dst_all = out.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ki in 0..k {
            let (oy_lo, oy_hi) = valid_range(oh, h, ki, stride, pad);
            for kj in 0..k {
                let (ox_lo, ox_hi) = valid_range(ow, w, kj, stride, pad);
                let row = (ci * k + ki) * k + kj;
                let src = &src_all[row * n..(row + 1) * n];
                for bi in 0..b {
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ki - pad;
                        let dst = &mut dst_all[((bi * c + ci) * h + iy) * w..][..w];
                        let base = (bi * oh + oy) * ow;
                        let s = &src[base + ox_lo..base + ox_hi];
                        let first = ox_lo * stride + kj - pad;
                        for (d, v) in dst[first..].iter_mut().step_by(stride).zip(s) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[in_features, out_features]`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let std = gain / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_vec((inputs, outputs), normal_vec(inputs * outputs, std, rng))
                .expect("shape matches length"),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.weight) + &self.bias
    }

    /// `x` is the input seen by `forward`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, grad: Option<&mut Linear<T>>, want_dx: bool) -> Option<Array2<T>> {
        if let Some(g) = grad {
            g.weight += &x.t().dot(dy);
            g.bias += &dy.sum_axis(Axis(0));
        }
        want_dx.then(|| dy.dot(&self.weight.t()))
    }
}

impl<T: Real> Params<T> for Linear<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        out.push((join(prefix, "weight"), self.weight.view().into_dyn()));
        out.push((join(prefix, "bias"), self.bias.view().into_dyn()));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        out.push(self.weight.view_mut().into_dyn());
        out.push(self.bias.view_mut().into_dyn());
    }
}

/// Nearest-neighbour 2× spatial upsampling.
pub fn upsample2x<T: Real>(x: &Array4<T>) -> Array4<T> {
    let (b, c, h, w) = x.dim();
    Array4::from_shape_fn((b, c, 2 * h, 2 * w), |(bi, ci, y, xx)| x[[bi, ci, y / 2, xx / 2]])
}

pub fn upsample2x_backward<T: Real>(dy: &Array4<T>) -> Array4<T> {
    let (b, c, h2, w2) = dy.dim();
    let mut dx = Array4::<T>::zeros((b, c, h2 / 2, w2 / 2));
    for ((bi, ci, y, xx), &g) in dy.indexed_iter() {
        dx[[bi, ci, y / 2, xx / 2]] += g;
    }
    dx
}

/// Keep the top-left `h × w` window.
pub fn crop<T: Real>(x: &Array4<T>, h: usize, w: usize) -> Array4<T> {
    x.slice(s![.., .., ..h, ..w]).to_owned()
}

pub fn crop_backward<T: Real>(dy: &Array4<T>, full_h: usize, full_w: usize) -> Array4<T> {
    let (b, c, h, w) = dy.dim();
    let mut dx = Array4::<T>::zeros((b, c, full_h, full_w));
    dx.slice_mut(s![.., .., ..h, ..w]).assign(dy);
    dx
}

/// Two 3×3 convolutions with a skip connection; the first may stride.
///
/// The skip is the identity when shapes agree and a strided 1×1 projection
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<T> {
    pub conv_a: Conv2d<T>,
    pub conv_b: Conv2d<T>,
    pub skip: Option<Conv2d<T>>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct ResBlockCache<T> {
    a: ConvCache<T>,
    a_pre: Array4<T>,
    b: ConvCache<T>,
    skip: Option<ConvCache<T>>,
    out_pre: Array4<T>,
}

impl<T: Real> ResBlock<T> {
    pub fn new(in_channels: usize, out_channels: usize, stride: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let gain = act.init_gain();
        let conv_a = Conv2d::new(in_channels, out_channels, 3, stride, 1, gain, rng);
        let conv_b = Conv2d::new(out_channels, out_channels, 3, 1, 1, gain, rng);
        let skip = (stride != 1 || in_channels != out_channels)
            .then(|| Conv2d::new(in_channels, out_channels, 1, stride, 0, 1.0, rng));
        Self {
            conv_a,
            conv_b,
            skip,
            act,
        }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, ResBlockCache<T>) {
        let (a_pre, a) = self.conv_a.forward(x);
        let a1 = self.act.forward(&a_pre);
        let (bout, b) = self.conv_b.forward(&a1);
        let (shortcut, skip) = match &self.skip {
            Some(conv) => {
                let (s, c) = conv.forward(x);
                (s, Some(c))
            }
            None => (x.clone(), None),
        };
        let out_pre = bout + &shortcut;
        let out = self.act.forward(&out_pre);
        (
            out,
            ResBlockCache {
                a,
                a_pre,
                b,
                skip,
                out_pre,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &ResBlockCache<T>,
        dy: &Array4<T>,
        grad: Option<&mut ResBlock<T>>,
        want_dx: bool,
    ) -> Option<Array4<T>> {
        let (ga, gb, gs) = match grad {
            Some(g) => (Some(&mut g.conv_a), Some(&mut g.conv_b), g.skip.as_mut()),
            None => (None, None, None),
        };
        let d_pre = self.act.backward(&cache.out_pre, dy);
        let d_a1 = self.conv_b.backward(&cache.b, &d_pre, gb, true).expect("requested");
        let d_a = self.act.backward(&cache.a_pre, &d_a1);
        let dx_main = self.conv_a.backward(&cache.a, &d_a, ga, want_dx);
        let dx_skip = match (&self.skip, &cache.skip) {
            (Some(conv), Some(c)) => conv.backward(c, &d_pre, gs, want_dx),
            _ => want_dx.then(|| d_pre.clone()),
        };
        match (dx_main, dx_skip) {
            (Some(a), Some(b)) => Some(a + &b),
            _ => None,
        }
    }
}

impl<T: Real> Params<T> for ResBlock<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        self.conv_a.collect(&join(prefix, "conv_a"), out);
        self.conv_b.collect(&join(prefix, "conv_b"), out);
        if let Some(skip) = &self.skip {
            skip.collect(&join(prefix, "skip"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        self.conv_a.collect_mut(out);
        self.conv_b.collect_mut(out);
        if let Some(skip) = &mut self.skip {
            skip.collect_mut(out);
        }
    }
}
