use rand::Rng as _;

use crate::error::{invalid, shape, Error, Result};
use crate::prelude::*;
use crate::rng::Rng;

use super::{Mode, Real, Tensor};

/// Kernel geometry of a square 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    /// 3×3 kernel, stride 1, padding 1, dilation 1: output extent equals input.
    pub const SAME3: Self = Self { kernel: 3, stride: 1, pad: 1, dilation: 1 };

    pub fn output_extent(&self, n: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = n + 2 * self.pad;
        (padded >= span && self.stride > 0).then(|| (padded - span) / self.stride + 1)
    }
}

fn kaiming_uniform<T: Real>(data: &mut [T], fan_in: usize, rng: &mut Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in data {
        *v = T::lit(rng.random_range(-bound..bound));
    }
}

fn take_cache<C>(cache: &mut Option<C>, layer: &str) -> Result<C> {
    cache.take().ok_or_else(|| invalid(format!("{layer}: backward called without a recorded forward")))
}

/// Adds one backward pass's contribution to a gradient accumulator in a
/// single step, so repeated passes sum exactly.
fn accumulate<T: Real>(grad: &mut [T], local: &[T]) {
    grad.iter_mut().zip(local).for_each(|(g, &v)| *g += v);
}

fn dims4(t: &Tensor<impl Real>, layer: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(shape(format!("{layer} expects [N, C, H, W], got {s:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Convolution

/// Cross-correlation with zero padding, lowered to GEMM through im2col.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    pub geometry: ConvGeometry,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, geometry: ConvGeometry) -> Self {
        let k = geometry.kernel;
        let mut weight = Tensor::zeros(&[out_channels, in_channels, k, k]);
        weight.set_requires_grad(true);
        let mut bias = Tensor::zeros(&[out_channels]);
        bias.set_requires_grad(true);
        Self { weight, bias, geometry, cache: None }
    }

    /// Kaiming-uniform (fan-in, ReLU gain) weights and zero bias.
    pub fn init(&mut self, rng: &mut Rng) {
        let fan_in = self.in_channels() * self.geometry.kernel * self.geometry.kernel;
        kaiming_uniform(self.weight.data_mut(), fan_in, rng);
        self.bias.data_mut().fill(T::zero());
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn out_dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
        let (n, c, h, w) = dims4(x, "conv2d")?;
        if c != self.in_channels() {
            return Err(shape(format!(
                "conv2d expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let g = self.geometry;
        match (g.output_extent(h), g.output_extent(w)) {
            (Some(ho), Some(wo)) => Ok((n, h, w, ho, wo)),
            _ => Err(shape(format!("conv2d kernel does not fit a {h}x{w} input"))),
        }
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w, ho, wo) = self.out_dims(x)?;
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let kdim = cin * self.geometry.kernel * self.geometry.kernel;
        let plane = ho * wo;
        let mut col = vec![T::zero(); kdim * plane];
        let mut out = Tensor::zeros(&[n, cout, ho, wo]);
        let bias = self.bias.data();
        for (img, dst) in x.data().chunks_exact(cin * h * w).zip(out.data_mut().chunks_exact_mut(cout * plane)) {
            im2col(img, cin, h, w, self.geometry, ho, wo, &mut col);
            T::gemm(
                cout,
                kdim,
                plane,
                T::one(),
                (self.weight.data(), kdim, 1),
                (&col, plane, 1),
                T::zero(),
                (dst, plane, 1),
            );
            for (row, &b) in dst.chunks_exact_mut(plane).zip(bias) {
                row.iter_mut().for_each(|v| *v += b);
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(&x)?;
        self.cache = Some(x);
        Ok(y)
    }

    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.apply(&x)
    }

    pub fn backward(&mut self, dy: Tensor<T>, want_dx: bool) -> Result<Option<Tensor<T>>> {
        let x = take_cache(&mut self.cache, "conv2d")?;
        let (n, h, w, ho, wo) = self.out_dims(&x)?;
        let (cin, cout) = (self.in_channels(), self.out_channels());
        if dy.shape() != [n, cout, ho, wo] {
            return Err(shape(format!("conv2d output gradient has shape {:?}", dy.shape())));
        }
        let kdim = cin * self.geometry.kernel * self.geometry.kernel;
        let plane = ho * wo;
        let mut col = vec![T::zero(); kdim * plane];
        let mut dcol = vec![T::zero(); if want_dx { kdim * plane } else { 0 }];
        let mut dx = want_dx.then(|| Tensor::zeros(x.shape()));
        let mut gw = vec![T::zero(); if self.weight.requires_grad() { cout * kdim } else { 0 }];
        let mut gb = vec![T::zero(); if self.bias.requires_grad() { cout } else { 0 }];

        for (i, (img, g)) in x.data().chunks_exact(cin * h * w).zip(dy.data().chunks_exact(cout * plane)).enumerate() {
            im2col(img, cin, h, w, self.geometry, ho, wo, &mut col);
            if !gw.is_empty() {
                T::gemm(cout, plane, kdim, T::one(), (g, plane, 1), (&col, 1, plane), T::one(), (&mut gw, kdim, 1));
            }
            for (b, row) in gb.iter_mut().zip(g.chunks_exact(plane)) {
                *b += row.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(
                    kdim,
                    cout,
                    plane,
                    T::one(),
                    (self.weight.data(), 1, kdim),
                    (g, plane, 1),
                    T::zero(),
                    (&mut dcol, plane, 1),
                );
                let dst = &mut dx.data_mut()[i * cin * h * w..(i + 1) * cin * h * w];
                col2im(&dcol, cin, h, w, self.geometry, ho, wo, dst);
            }
        }
        if let Some(g) = self.weight.grad_mut() {
            accumulate(g, &gw);
        }
        if let Some(g) = self.bias.grad_mut() {
            accumulate(g, &gb);
        }
        Ok(dx)
    }
}

/// Output columns `ow` whose input column `ow·stride + offset − pad` lies in
/// `[0, w)`.
fn valid_cols(wo: usize, w: usize, stride: usize, offset: usize, pad: usize) -> (usize, usize) {
    // first ow with ow·stride + offset >= pad
    let lo = if offset >= pad { 0 } else { (pad - offset).div_ceil(stride) };
    // last ow with ow·stride + offset < w + pad
    let hi = if w + pad > offset { ((w + pad - offset - 1) / stride + 1).min(wo) } else { 0 };
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(img: &[T], c: usize, h: usize, w: usize, g: ConvGeometry, ho: usize, wo: usize, col: &mut [T]) {
    let k = g.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        let src_plane = &img[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(wo, w, g.stride, kj * g.dilation, g.pad);
                for oh in 0..ho {
                    let drow = &mut dst[oh * wo..(oh + 1) * wo];
                    let ih = (oh * g.stride + ki * g.dilation) as isize - g.pad as isize;
                    if ih < 0 || ih >= h as isize || lo >= hi {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &src_plane[ih as usize * w..(ih as usize + 1) * w];
                    drow[..lo].fill(T::zero());
                    drow[hi..].fill(T::zero());
                    let first = lo * g.stride + kj * g.dilation - g.pad;
                    if g.stride == 1 {
                        drow[lo..hi].copy_from_slice(&src[first..first + (hi - lo)]);
                    } else {
                        for (d, s) in drow[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, g: ConvGeometry, ho: usize, wo: usize, img: &mut [T]) {
    let k = g.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        let dst_plane = &mut img[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(wo, w, g.stride, kj * g.dilation, g.pad);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kj * g.dilation - g.pad;
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki * g.dilation) as isize - g.pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let drow = &mut dst_plane[ih as usize * w..(ih as usize + 1) * w];
                    let srow = &src[oh * wo + lo..oh * wo + hi];
                    if g.stride == 1 {
                        for (d, &s) in drow[first..first + (hi - lo)].iter_mut().zip(srow) {
                            *d += s;
                        }
                    } else {
                        for (d, &s) in drow[first..].iter_mut().step_by(g.stride).zip(srow) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: [usize; 4],
    train: bool,
}

/// Per-channel batch normalization over `N×H×W`.
///
/// Training mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate with momentum `momentum`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
    initialized: bool,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm2d<T> {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        let mut gamma = Tensor::from_vec(&[channels], vec![T::one(); channels]).expect("shape");
        gamma.set_requires_grad(true);
        let mut beta = Tensor::zeros(&[channels]);
        beta.set_requires_grad(true);
        Self {
            gamma,
            beta,
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: Self::EPS,
            momentum: Self::MOMENTUM,
            initialized: false,
            cache: None,
        }
    }

    /// Installs running statistics directly, marking them initialized.
    pub fn set_running_stats(&mut self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        let c = self.channels();
        if mean.len() != c || var.len() != c {
            return Err(shape(format!("batch-norm running stats must have {c} entries")));
        }
        if var.iter().any(|v| *v < T::zero()) {
            return Err(invalid("running variance must be non-negative"));
        }
        self.running_mean = mean;
        self.running_var = var;
        self.initialized = true;
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    fn check(&self, x: &Tensor<T>) -> Result<[usize; 4]> {
        let (n, c, h, w) = dims4(x, "batchnorm")?;
        if c != self.channels() {
            return Err(shape(format!("batchnorm expects {} channels, got {c}", self.channels())));
        }
        Ok([n, c, h, w])
    }

    fn normalize_eval(&self, x: &mut Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        if !self.initialized {
            return Err(Error::UninitializedStats);
        }
        let [_, c, h, w] = self.check(x)?;
        let plane = h * w;
        let inv_std: Vec<T> =
            self.running_var.iter().map(|v| T::lit(1.0 / (v.as_f64() + self.eps).sqrt())).collect();
        let mut xhat = x.data().to_vec();
        for (i, (chunk, hat)) in x.data_mut().chunks_exact_mut(plane).zip(xhat.chunks_exact_mut(plane)).enumerate() {
            let ch = i % c;
            let (mu, s, g, b) = (self.running_mean[ch], inv_std[ch], self.gamma.data()[ch], self.beta.data()[ch]);
            for (v, xh) in chunk.iter_mut().zip(hat.iter_mut()) {
                *xh = (*v - mu) * s;
                *v = g * *xh + b;
            }
        }
        Ok((xhat, inv_std))
    }

    pub fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let dims = self.check(&x)?;
        let (xhat, inv_std) = match mode {
            Mode::Eval => self.normalize_eval(&mut x)?,
            Mode::Train => self.normalize_train(&mut x, dims)?,
        };
        self.cache = Some(BnCache { xhat, inv_std, shape: dims, train: mode == Mode::Train });
        Ok(x)
    }

    fn normalize_train(&mut self, x: &mut Tensor<T>, [n, c, h, w]: [usize; 4]) -> Result<(Vec<T>, Vec<T>)> {
        let plane = h * w;
        let m = (n * plane) as f64;
        if n * plane < 2 {
            return Err(invalid("batchnorm training needs at least two values per channel"));
        }
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for (i, chunk) in x.data().chunks_exact(plane).enumerate() {
            sum[i % c] += lane_sum(chunk, |v| v);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
        for (i, chunk) in x.data().chunks_exact(plane).enumerate() {
            let mu = T::lit(mean[i % c]);
            sq[i % c] += lane_sum(chunk, |v| (v - mu) * (v - mu));
        }
        let var: Vec<f64> = sq.iter().map(|s| s / m).collect();
        let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + self.eps).sqrt())).collect();
        let mut xhat = vec![T::zero(); x.numel()];
        for (i, (chunk, hat)) in x.data_mut().chunks_exact_mut(plane).zip(xhat.chunks_exact_mut(plane)).enumerate() {
            let ch = i % c;
            let (mu, s, g, b) = (T::lit(mean[ch]), inv_std[ch], self.gamma.data()[ch], self.beta.data()[ch]);
            for (v, xh) in chunk.iter_mut().zip(hat.iter_mut()) {
                *xh = (*v - mu) * s;
                *v = g * *xh + b;
            }
        }
        let rho = self.momentum;
        for ch in 0..c {
            let unbiased = var[ch] * m / (m - 1.0);
            let rm = self.running_mean[ch].as_f64();
            let rv = self.running_var[ch].as_f64();
            self.running_mean[ch] = T::lit((1.0 - rho) * rm + rho * mean[ch]);
            self.running_var[ch] = T::lit((1.0 - rho) * rv + rho * unbiased);
        }
        self.initialized = true;
        Ok((xhat, inv_std))
    }

    pub fn infer(&self, mut x: Tensor<T>) -> Result<Tensor<T>> {
        self.normalize_eval(&mut x)?;
        Ok(x)
    }

    pub fn backward(&mut self, mut dy: Tensor<T>, want_dx: bool) -> Result<Option<Tensor<T>>> {
        let cache = take_cache(&mut self.cache, "batchnorm")?;
        let [n, c, h, w] = cache.shape;
        if dy.shape() != cache.shape {
            return Err(shape(format!("batchnorm output gradient has shape {:?}", dy.shape())));
        }
        let plane = h * w;
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (i, (g, xh)) in dy.data().chunks_exact(plane).zip(cache.xhat.chunks_exact(plane)).enumerate() {
            let ch = i % c;
            sum_dy[ch] += lane_sum(g, |v| v);
            sum_dy_xhat[ch] += lane_dot(g, xh);
        }
        if let Some(gg) = self.gamma.grad_mut() {
            for (g, s) in gg.iter_mut().zip(&sum_dy_xhat) {
                *g += T::lit(*s);
            }
        }
        if let Some(gb) = self.beta.grad_mut() {
            for (g, s) in gb.iter_mut().zip(&sum_dy) {
                *g += T::lit(*s);
            }
        }
        if !want_dx {
            return Ok(None);
        }
        let m = (n * plane) as f64;
        for (i, (g, xh)) in dy.data_mut().chunks_exact_mut(plane).zip(cache.xhat.chunks_exact(plane)).enumerate() {
            let ch = i % c;
            let scale = self.gamma.data()[ch] * cache.inv_std[ch];
            if cache.train {
                let mean_dy = T::lit(sum_dy[ch] / m);
                let mean_dy_xhat = T::lit(sum_dy_xhat[ch] / m);
                for (gv, &xv) in g.iter_mut().zip(xh) {
                    *gv = scale * (*gv - mean_dy - xv * mean_dy_xhat);
                }
            } else {
                g.iter_mut().for_each(|gv| *gv *= scale);
            }
        }
        Ok(Some(dy))
    }
}

const LANES: usize = 8;

/// `Σ f(x)` accumulated in eight independent lanes of `T` (so the loop
/// vectorizes) per block of 1024 values, with blocks combined in `f64`.
fn lane_sum<T: Real>(xs: &[T], f: impl Fn(T) -> T) -> f64 {
    let mut total = 0.0;
    for block in xs.chunks(1024) {
        let mut acc = [T::zero(); LANES];
        let mut it = block.chunks_exact(LANES);
        for c in &mut it {
            for (a, &v) in acc.iter_mut().zip(c) {
                *a += f(v);
            }
        }
        let tail: f64 = it.remainder().iter().map(|&v| f(v).as_f64()).sum();
        total += acc.iter().map(|a| a.as_f64()).sum::<f64>() + tail;
    }
    total
}

fn lane_dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut total = 0.0;
    for (ba, bb) in a.chunks(1024).zip(b.chunks(1024)) {
        let mut acc = [T::zero(); LANES];
        let (mut ia, mut ib) = (ba.chunks_exact(LANES), bb.chunks_exact(LANES));
        for (ca, cb) in (&mut ia).zip(&mut ib) {
            for ((s, &x), &y) in acc.iter_mut().zip(ca).zip(cb) {
                *s += x * y;
            }
        }
        let tail: f64 = ia.remainder().iter().zip(ib.remainder()).map(|(&x, &y)| (x * y).as_f64()).sum();
        total += acc.iter().map(|a| a.as_f64()).sum::<f64>() + tail;
    }
    total
}

// ---------------------------------------------------------------------------
// ReLU

/// Rectified linear unit. In guided mode the backward pass also zeroes
/// negative incoming gradients.
#[derive(Clone, Debug)]
pub struct Relu<T> {
    pub guided: bool,
    /// Nonzero where the forward input was positive.
    cache: Option<Vec<u8>>,
    _marker: core::marker::PhantomData<T>,
}

impl<T: Real> Default for Relu<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { guided: false, cache: None, _marker: core::marker::PhantomData }
    }

    pub fn infer(&self, mut x: Tensor<T>) -> Tensor<T> {
        let zero = T::zero();
        for v in x.data_mut() {
            *v = if *v < zero { zero } else { *v };
        }
        x
    }

    pub fn forward(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        let mask: Vec<u8> = x.data().iter().map(|&v| (v > T::zero()) as u8).collect();
        let zero = T::zero();
        for v in x.data_mut() {
            *v = if *v < zero { zero } else { *v };
        }
        self.cache = Some(mask);
        x
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Result<Tensor<T>> {
        let mask = take_cache(&mut self.cache, "relu")?;
        if mask.len() != dy.numel() {
            return Err(shape("relu output gradient size mismatch"));
        }
        let zero = T::zero();
        if self.guided {
            for (g, &m) in dy.data_mut().iter_mut().zip(&mask) {
                *g = if m != 0 && *g > zero { *g } else { zero };
            }
        } else {
            for (g, &m) in dy.data_mut().iter_mut().zip(&mask) {
                *g = if m != 0 { *g } else { zero };
            }
        }
        Ok(dy)
    }
}

// ---------------------------------------------------------------------------
// Max pooling

/// Max pooling with floor semantics for extents the window does not divide.
/// Ties route the gradient to the first maximum in row-major order.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    cache: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self { kernel, stride, cache: None }
    }

    pub fn output_extent(&self, n: usize) -> usize {
        if n < self.kernel {
            0
        } else {
            (n - self.kernel) / self.stride + 1
        }
    }

    fn apply<T: Real>(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Vec<u32>)> {
        let (n, c, h, w) = dims4(x, "maxpool")?;
        let (ho, wo) = (self.output_extent(h), self.output_extent(w));
        if ho == 0 || wo == 0 {
            return Err(shape(format!("maxpool window larger than {h}x{w} input")));
        }
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut arg = if record { vec![0u32; n * c * ho * wo] } else { Vec::new() };
        if self.kernel == 2 && self.stride == 2 {
            for (p, (src, dst)) in x.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(ho * wo)).enumerate() {
                for oh in 0..ho {
                    let r0 = 2 * oh * w;
                    let r1 = r0 + w;
                    for ow in 0..wo {
                        let cands = [r0 + 2 * ow, r0 + 2 * ow + 1, r1 + 2 * ow, r1 + 2 * ow + 1];
                        let mut best_idx = cands[0];
                        let mut best = src[best_idx];
                        for &i in &cands[1..] {
                            if src[i] > best {
                                best = src[i];
                                best_idx = i;
                            }
                        }
                        dst[oh * wo + ow] = best;
                        if record {
                            arg[(p * ho + oh) * wo + ow] = best_idx as u32;
                        }
                    }
                }
            }
            return Ok((out, arg));
        }
        for (p, (src, dst)) in x.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(ho * wo)).enumerate() {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for ki in 0..self.kernel {
                        let row = (oh * self.stride + ki) * w;
                        for kj in 0..self.kernel {
                            let idx = row + ow * self.stride + kj;
                            if src[idx] > best || (ki == 0 && kj == 0) {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    dst[oh * wo + ow] = best;
                    if record {
                        arg[(p * ho + oh) * wo + ow] = best_idx as u32;
                    }
                }
            }
        }
        Ok((out, arg))
    }

    pub fn forward<T: Real>(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (y, arg) = self.apply(&x, true)?;
        let s = x.shape();
        self.cache = Some((arg, [s[0], s[1], s[2], s[3]]));
        Ok(y)
    }

    pub fn infer<T: Real>(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.apply(&x, false)?.0)
    }

    pub fn backward<T: Real>(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let (arg, in_shape) = take_cache(&mut self.cache, "maxpool")?;
        if arg.len() != dy.numel() {
            return Err(shape("maxpool output gradient size mismatch"));
        }
        let [n, c, h, w] = in_shape;
        let mut dx = Tensor::zeros(&in_shape);
        let out_plane = dy.numel() / (n * c);
        for (p, (g, idx)) in dy.data().chunks_exact(out_plane).zip(arg.chunks_exact(out_plane)).enumerate() {
            let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
            for (&gv, &i) in g.iter().zip(idx) {
                dst[i as usize] += gv;
            }
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Flatten

/// `[N, ...] → [N, prod(...)]`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn infer<T: Real>(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let n = *x.shape().first().ok_or_else(|| shape("flatten of a scalar tensor"))?;
        let rest = if n == 0 { 0 } else { x.numel() / n };
        x.reshape(&[n, rest])
    }

    pub fn forward<T: Real>(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.cache = Some(x.shape().to_vec());
        self.infer(x)
    }

    pub fn backward<T: Real>(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let s = take_cache(&mut self.cache, "flatten")?;
        dy.reshape(&s)
    }
}

// ---------------------------------------------------------------------------
// Fully connected

/// `y = x·Wᵀ + b` over `[N, in]` inputs.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        let mut weight = Tensor::zeros(&[outputs, inputs]);
        weight.set_requires_grad(true);
        let mut bias = Tensor::zeros(&[outputs]);
        bias.set_requires_grad(true);
        Self { weight, bias, cache: None }
    }

    pub fn init(&mut self, rng: &mut Rng) {
        let fan_in = self.inputs();
        kaiming_uniform(self.weight.data_mut(), fan_in, rng);
        self.bias.data_mut().fill(T::zero());
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, k) = match *x.shape() {
            [n, k] => (n, k),
            ref s => return Err(shape(format!("linear expects [N, in], got {s:?}"))),
        };
        if k != self.inputs() {
            return Err(shape(format!("linear expects {} inputs, got {k}", self.inputs())));
        }
        let o = self.outputs();
        let mut y = Tensor::zeros(&[n, o]);
        T::gemm(n, k, o, T::one(), (x.data(), k, 1), (self.weight.data(), 1, k), T::zero(), (y.data_mut(), o, 1));
        for row in y.data_mut().chunks_exact_mut(o) {
            row.iter_mut().zip(self.bias.data()).for_each(|(v, &b)| *v += b);
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(&x)?;
        self.cache = Some(x);
        Ok(y)
    }

    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.apply(&x)
    }

    pub fn backward(&mut self, dy: Tensor<T>, want_dx: bool) -> Result<Option<Tensor<T>>> {
        let x = take_cache(&mut self.cache, "linear")?;
        let (n, k, o) = (x.shape()[0], self.inputs(), self.outputs());
        if dy.shape() != [n, o] {
            return Err(shape(format!("linear output gradient has shape {:?}", dy.shape())));
        }
        if let Some(gw) = self.weight.grad_mut() {
            let mut local = vec![T::zero(); o * k];
            T::gemm(o, n, k, T::one(), (dy.data(), 1, o), (x.data(), k, 1), T::zero(), (&mut local, k, 1));
            accumulate(gw, &local);
        }
        if let Some(gb) = self.bias.grad_mut() {
            let mut local = vec![T::zero(); o];
            for row in dy.data().chunks_exact(o) {
                local.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
            }
            accumulate(gb, &local);
        }
        if !want_dx {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(&[n, k]);
        T::gemm(n, o, k, T::one(), (dy.data(), o, 1), (self.weight.data(), k, 1), T::zero(), (dx.data_mut(), k, 1));
        Ok(Some(dx))
    }
}

// ---------------------------------------------------------------------------
// Fixed affine map

/// Non-trainable `y = scale·x + shift`, used to express regression outputs in
/// target units while the network itself trains on standardized targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub scale: T,
    pub shift: T,
}

impl<T: Real> Affine<T> {
    pub fn new(scale: T, shift: T) -> Self {
        Self { scale, shift }
    }

    pub fn infer(&self, mut x: Tensor<T>) -> Tensor<T> {
        let (a, b) = (self.scale, self.shift);
        x.data_mut().iter_mut().for_each(|v| *v = a * *v + b);
        x
    }

    pub fn backward(&self, mut dy: Tensor<T>) -> Tensor<T> {
        let a = self.scale;
        dy.data_mut().iter_mut().for_each(|v| *v *= a);
        dy
    }
}

// ---------------------------------------------------------------------------

/// One stage of a [`super::Sequential`] network.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm2d(BatchNorm2d<T>),
    Relu(Relu<T>),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
    Linear(Linear<T>),
    Affine(Affine<T>),
}

impl<T: Real> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm2d(_) => "batchnorm2d",
            Layer::Relu(_) => "relu",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Flatten(_) => "flatten",
            Layer::Linear(_) => "linear",
            Layer::Affine(_) => "affine",
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::BatchNorm2d(l) => l.forward(x, mode),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Linear(l) => l.forward(x),
            Layer::Affine(l) => Ok(l.infer(x)),
        }
    }

    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.infer(x),
            Layer::BatchNorm2d(l) => l.infer(x),
            Layer::Relu(l) => Ok(l.infer(x)),
            Layer::MaxPool2d(l) => l.infer(x),
            Layer::Flatten(l) => l.infer(x),
            Layer::Linear(l) => l.infer(x),
            Layer::Affine(l) => Ok(l.infer(x)),
        }
    }

    /// Returns the input gradient, or `None` when `want_dx` is false and the
    /// layer could skip computing it.
    pub fn backward(&mut self, dy: Tensor<T>, want_dx: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv2d(l) => l.backward(dy, want_dx),
            Layer::BatchNorm2d(l) => l.backward(dy, want_dx),
            Layer::Relu(l) => l.backward(dy).map(Some),
            Layer::MaxPool2d(l) => l.backward(dy).map(Some),
            Layer::Flatten(l) => l.backward(dy).map(Some),
            Layer::Linear(l) => l.backward(dy, want_dx),
            Layer::Affine(l) => Ok(Some(l.backward(dy))),
        }
    }

    /// Trainable tensors of this layer, in checkpoint order.
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm2d(l) => vec![&l.gamma, &l.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm2d(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.cache = None,
            Layer::BatchNorm2d(l) => l.cache = None,
            Layer::Relu(l) => l.cache = None,
            Layer::MaxPool2d(l) => l.cache = None,
            Layer::Flatten(l) => l.cache = None,
            Layer::Linear(l) => l.cache = None,
            Layer::Affine(_) => {}
        }
    }
}
