//! Forward and backward kernels. The tape records these; inference calls
//! them directly so both paths share the same arithmetic.

use super::tensor::{dim_err, gemm, Layout, Scalar, Tensor, TensorError};

/// Clamp applied to predictions before taking logarithms in [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn infer<T: Scalar>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self, TensorError> {
        let (&[c_in, h, w], &[c_out, wc_in, kh, kw]) = (input.shape(), weight.shape()) else {
            return Err(dim_err(
                "conv2d",
                format!("expected C×H×W input and O×C×k×k weight, got {:?} and {:?}", input.shape(), weight.shape()),
            ));
        };
        if wc_in != c_in || kh != kw {
            return Err(dim_err(
                "conv2d",
                format!("weight {:?} incompatible with input {:?}", weight.shape(), input.shape()),
            ));
        }
        if kh % 2 == 0 {
            return Err(dim_err("conv2d", format!("kernel size {kh} must be odd")));
        }
        if stride == 0 {
            return Err(dim_err("conv2d", "stride must be at least 1"));
        }
        if bias.shape() != [c_out] {
            return Err(dim_err("conv2d", format!("bias {:?} but {c_out} output channels", bias.shape())));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(dim_err("conv2d", "kernel larger than padded input"));
        }
        Ok(Self {
            c_in,
            c_out,
            kernel: kh,
            stride,
            pad,
            h,
            w,
            h_out: (h + 2 * pad - kh) / stride + 1,
            w_out: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfold input patches into a `(C·k·k) × (H'·W')` matrix.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let n = g.out_pixels();
    let mut cols = vec![T::ZERO; g.patch_len() * n];
    let k = g.kernel;
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oi in 0..g.h_out {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    let out_row = &mut dst[oi * g.w_out..(oi + 1) * g.w_out];
                    if g.stride == 1 {
                        // contiguous run of valid columns
                        let shift = kj as isize - g.pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((g.w as isize - shift).min(g.w_out as isize)).max(0) as usize;
                        if lo < hi {
                            let s0 = (lo as isize + shift) as usize;
                            out_row[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                    } else {
                        for (oj, o) in out_row.iter_mut().enumerate() {
                            let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                            if jj >= 0 && jj < g.w as isize {
                                *o = src[jj as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Fold a column matrix back onto the input grid, accumulating overlaps.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let n = g.out_pixels();
    let mut x = vec![T::ZERO; g.c_in * g.h * g.w];
    let k = g.kernel;
    for c in 0..g.c_in {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oi in 0..g.h_out {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    let src_row = &src[oi * g.w_out..(oi + 1) * g.w_out];
                    if g.stride == 1 {
                        let shift = kj as isize - g.pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((g.w as isize - shift).min(g.w_out as isize)).max(0) as usize;
                        if lo < hi {
                            let d0 = (lo as isize + shift) as usize;
                            for (d, &s) in dst[d0..d0 + (hi - lo)].iter_mut().zip(&src_row[lo..hi]) {
                                *d += s;
                            }
                        }
                        continue;
                    }
                    for oj in 0..g.w_out {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] += src[oi * g.w_out + oj];
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2D convolution of a single `C×H×W` image. Returns the output and the
/// unfolded patch matrix needed by [`conv2d_backward`].
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Vec<T>), TensorError> {
    let g = ConvGeometry::infer(input, weight, bias, stride, pad)?;
    let cols = im2col(input.data(), &g);
    let n = g.out_pixels();
    let mut out = vec![T::ZERO; g.c_out * n];
    for (o, &b) in bias.data().iter().enumerate() {
        out[o * n..(o + 1) * n].fill(b);
    }
    gemm(
        g.c_out,
        g.patch_len(),
        n,
        weight.data(),
        Layout::Normal,
        &cols,
        Layout::Normal,
        T::ONE,
        &mut out,
    );
    let out = Tensor::new([g.c_out, g.h_out, g.w_out], out)?.ensure_finite("conv2d")?;
    Ok((out, cols))
}

pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    conv2d_forward(input, weight, bias, stride, pad).map(|(out, _)| out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    g: &ConvGeometry,
    weight: &Tensor<T>,
    cols: &[T],
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>, TensorError> {
    let n = g.out_pixels();
    let p = g.patch_len();
    let dy = grad_out.data();
    let mut dw = vec![T::ZERO; g.c_out * p];
    // dW = dY · colsᵀ
    gemm(g.c_out, n, p, dy, Layout::Normal, cols, Layout::Transposed, T::ZERO, &mut dw);
    let db: Vec<T> = (0..g.c_out)
        .map(|o| dy[o * n..(o + 1) * n].iter().fold(T::ZERO, |acc, &v| acc + v))
        .collect();
    let input = if need_input {
        let mut dcols = vec![T::ZERO; p * n];
        // dcols = Wᵀ · dY
        gemm(p, g.c_out, n, weight.data(), Layout::Transposed, dy, Layout::Normal, T::ZERO, &mut dcols);
        Some(Tensor::new([g.c_in, g.h, g.w], col2im(&dcols, g))?)
    } else {
        None
    };
    Ok(ConvGrads {
        input,
        weight: Tensor::new(weight.shape().to_vec(), dw)?,
        bias: Tensor::new([g.c_out], db)?,
    })
}

/// Reduce `C×H×W` over channels to `1×H×W`. For max pooling the winning
/// channel per pixel is returned (lowest index on ties).
pub fn channel_pool_forward<T: Scalar>(
    input: &Tensor<T>,
    mode: PoolMode,
) -> Result<(Tensor<T>, Vec<u32>), TensorError> {
    let &[c, h, w] = input.shape() else {
        return Err(dim_err("channel_pool", format!("expected C×H×W, got {:?}", input.shape())));
    };
    let hw = h * w;
    let x = input.data();
    let mut out = x[..hw].to_vec();
    let mut argmax = Vec::new();
    match mode {
        PoolMode::Max => {
            argmax = vec![0u32; hw];
            for ch in 1..c {
                let plane = &x[ch * hw..(ch + 1) * hw];
                for ((o, a), &v) in out.iter_mut().zip(argmax.iter_mut()).zip(plane) {
                    if v > *o {
                        *o = v;
                        *a = ch as u32;
                    }
                }
            }
        }
        PoolMode::Avg => {
            for ch in 1..c {
                for (o, &v) in out.iter_mut().zip(&x[ch * hw..(ch + 1) * hw]) {
                    *o += v;
                }
            }
            let inv = T::ONE / T::from_f64(c as f64);
            for o in &mut out {
                *o *= inv;
            }
        }
    }
    Ok((Tensor::new([1, h, w], out)?.ensure_finite("channel_pool")?, argmax))
}

pub fn channel_pool<T: Scalar>(input: &Tensor<T>, mode: PoolMode) -> Result<Tensor<T>, TensorError> {
    channel_pool_forward(input, mode).map(|(out, _)| out)
}

pub fn channel_pool_backward<T: Scalar>(
    input_shape: &[usize],
    mode: PoolMode,
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let (c, hw) = (input_shape[0], input_shape[1] * input_shape[2]);
    let dy = grad_out.data();
    let mut dx = vec![T::ZERO; c * hw];
    match mode {
        PoolMode::Max => {
            for (i, (&a, &g)) in argmax.iter().zip(dy).enumerate() {
                dx[a as usize * hw + i] = g;
            }
        }
        PoolMode::Avg => {
            let inv = T::ONE / T::from_f64(c as f64);
            for ch in 0..c {
                for (d, &g) in dx[ch * hw..(ch + 1) * hw].iter_mut().zip(dy) {
                    *d = g * inv;
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}

fn linear_dims<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize), TensorError> {
    let (batch, n) = match *input.shape() {
        [n] => (1, n),
        [b, n] => (b, n),
        _ => return Err(dim_err("linear", format!("input must be n or B×n, got {:?}", input.shape()))),
    };
    let &[d, wn] = weight.shape() else {
        return Err(dim_err("linear", format!("weight must be d×n, got {:?}", weight.shape())));
    };
    if wn != n || bias.shape() != [d] {
        return Err(dim_err(
            "linear",
            format!("input {:?}, weight {:?}, bias {:?}", input.shape(), weight.shape(), bias.shape()),
        ));
    }
    Ok((batch, n, d))
}

/// `out = weight · input + bias`; a `B×n` input is treated as a batch of rows.
pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (batch, n, d) = linear_dims(input, weight, bias)?;
    let mut out = Vec::with_capacity(batch * d);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    gemm(batch, n, d, input.data(), Layout::Normal, weight.data(), Layout::Transposed, T::ONE, &mut out);
    let shape = if input.rank() == 1 { vec![d] } else { vec![batch, d] };
    Tensor::new(shape, out)?.ensure_finite("linear")
}

pub struct LinearGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<LinearGrads<T>, TensorError> {
    let (batch, n) = match *input.shape() {
        [n] => (1, n),
        [b, n] => (b, n),
        _ => unreachable!("validated in forward"),
    };
    let d = weight.shape()[0];
    let dy = grad_out.data();
    let mut dw = vec![T::ZERO; d * n];
    gemm(d, batch, n, dy, Layout::Transposed, input.data(), Layout::Normal, T::ZERO, &mut dw);
    let mut db = vec![T::ZERO; d];
    for row in dy.chunks(d) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    let dx = if need_input {
        let mut dx = vec![T::ZERO; batch * n];
        gemm(batch, d, n, dy, Layout::Normal, weight.data(), Layout::Normal, T::ZERO, &mut dx);
        Some(Tensor::new(input.shape().to_vec(), dx)?)
    } else {
        None
    };
    Ok(LinearGrads {
        input: dx,
        weight: Tensor::new([d, n], dw)?,
        bias: Tensor::new([d], db)?,
    })
}

pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Result<Tensor<T>, TensorError> {
    let out = match kind {
        Activation::Relu => input.map(|v| if v > T::ZERO { v } else { T::ZERO }),
        Activation::Sigmoid => input.map(sigmoid_scalar),
    };
    out.ensure_finite(match kind {
        Activation::Relu => "relu",
        Activation::Sigmoid => "sigmoid",
    })
}

pub fn activation_backward<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    kind: Activation,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let data = match kind {
        Activation::Relu => input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > T::ZERO { g } else { T::ZERO })
            .collect(),
        Activation::Sigmoid => output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&s, &g)| g * s * (T::ONE - s))
            .collect(),
    };
    Tensor::new(input.shape().to_vec(), data).expect("same shape as input")
}

/// Concatenate along `axis`; all other dimensions must agree.
pub fn concat<T: Scalar>(inputs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>, TensorError> {
    let first = inputs.first().ok_or_else(|| dim_err("concat", "no inputs"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(dim_err("concat", format!("axis {axis} out of range for rank {rank}")));
    }
    for t in inputs {
        let same = t.rank() == rank
            && t.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !same {
            return Err(dim_err("concat", format!("{:?} vs {:?} on axis {axis}", t.shape(), first.shape())));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total_axis: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for t in inputs {
            let block = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total_axis;
    Tensor::new(shape, data)
}

/// Inverse of [`concat`]: slice `input` along `axis` into the given extents.
pub fn split<T: Scalar>(input: &Tensor<T>, axis: usize, extents: &[usize]) -> Result<Vec<Tensor<T>>, TensorError> {
    if axis >= input.rank() || extents.iter().sum::<usize>() != input.shape()[axis] {
        return Err(dim_err("split", format!("extents {extents:?} on axis {axis} of {:?}", input.shape())));
    }
    let outer: usize = input.shape()[..axis].iter().product();
    let inner: usize = input.shape()[axis + 1..].iter().product();
    let full = input.shape()[axis] * inner;
    let mut parts = Vec::with_capacity(extents.len());
    let mut offset = 0;
    for &e in extents {
        let mut data = Vec::with_capacity(outer * e * inner);
        for o in 0..outer {
            let start = o * full + offset * inner;
            data.extend_from_slice(&input.data()[start..start + e * inner]);
        }
        let mut shape = input.shape().to_vec();
        shape[axis] = e;
        parts.push(Tensor::new(shape, data)?);
        offset += e;
    }
    Ok(parts)
}

fn check_same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(dim_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn check_binary_target<T: Scalar>(target: &Tensor<T>) -> Result<(), TensorError> {
    if let Some(bad) = target.data().iter().find(|&&t| t != T::ZERO && t != T::ONE) {
        return Err(TensorError::Domain {
            op: "bce_loss",
            detail: format!("target value {bad} is not 0 or 1"),
        });
    }
    Ok(())
}

/// Mean binary cross-entropy with predictions clamped to `[ε, 1−ε]`.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T, TensorError> {
    check_same_shape("bce_loss", pred, target)?;
    check_binary_target(target)?;
    let eps = T::from_f64(BCE_EPS);
    let hi = T::ONE - eps;
    let mut sum = T::ZERO;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.max(eps).min(hi);
        sum -= if t == T::ONE { p.ln() } else { (T::ONE - p).ln() };
    }
    let loss = sum / T::from_f64(pred.len() as f64);
    if !loss.is_finite() {
        return Err(TensorError::NonFinite { op: "bce_loss" });
    }
    Ok(loss)
}

pub fn bce_loss_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, grad: T) -> Tensor<T> {
    let eps = T::from_f64(BCE_EPS);
    let hi = T::ONE - eps;
    let scale = grad / T::from_f64(pred.len() as f64);
    let d = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if p < eps || p > hi {
                T::ZERO
            } else {
                scale * (p - t) / (p * (T::ONE - p))
            }
        })
        .collect();
    Tensor::new(pred.shape().to_vec(), d).expect("same shape")
}

pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T, TensorError> {
    check_same_shape("mse_loss", pred, target)?;
    let sum = pred
        .data()
        .iter()
        .zip(target.data())
        .fold(T::ZERO, |acc, (&p, &t)| acc + (p - t) * (p - t));
    let loss = sum / T::from_f64(pred.len() as f64);
    if !loss.is_finite() {
        return Err(TensorError::NonFinite { op: "mse_loss" });
    }
    Ok(loss)
}

pub fn mse_loss_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, grad: T) -> Tensor<T> {
    let scale = T::from_f64(2.0) * grad / T::from_f64(pred.len() as f64);
    let d = pred.data().iter().zip(target.data()).map(|(&p, &t)| scale * (p - t)).collect();
    Tensor::new(pred.shape().to_vec(), d).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let x = t(&[1, 3, 4], &(0..12).map(|v| v as f64 * 0.5 - 2.0).collect::<Vec<_>>());
        let out = conv2d(&x, &t(&[1, 1, 1, 1], &[1.0]), &t(&[1], &[0.0]), 1, 0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_same_padding_preserves_size() {
        let x = Tensor::<f32>::full([3, 64, 64], 0.25);
        let w = Tensor::<f32>::full([8, 3, 3, 3], 0.01);
        let b = Tensor::<f32>::zeros([8]);
        assert_eq!(conv2d(&x, &w, &b, 1, 1).unwrap().shape(), &[8, 64, 64]);
    }

    #[test]
    fn conv_output_size_formula() {
        let x = Tensor::<f64>::full([2, 9, 7], 1.0);
        let w = Tensor::<f64>::full([3, 2, 3, 3], 1.0);
        let out = conv2d(&x, &w, &Tensor::zeros([3]), 2, 1).unwrap();
        assert_eq!(out.shape(), &[3, 5, 4]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::<f64>::full([2, 5, 5], 1.0);
        assert!(conv2d(&x, &Tensor::full([3, 3, 3, 3], 1.0), &Tensor::zeros([3]), 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::full([3, 2, 2, 2], 1.0), &Tensor::zeros([3]), 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::full([3, 2, 3, 3], 1.0), &Tensor::zeros([2]), 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::full([3, 2, 3, 3], 1.0), &Tensor::zeros([3]), 0, 1).is_err());
    }

    #[test]
    fn conv_overflow_is_numeric_error() {
        let x = Tensor::<f32>::full([1, 3, 3], 1e30);
        let w = Tensor::<f32>::full([1, 1, 3, 3], 1e30);
        assert_eq!(
            conv2d(&x, &w, &Tensor::zeros([1]), 1, 1).unwrap_err(),
            TensorError::NonFinite { op: "conv2d" }
        );
    }

    #[test]
    fn pool_single_channel_and_constant() {
        let x = t(&[1, 2, 2], &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(channel_pool(&x, PoolMode::Max).unwrap(), x);
        assert_eq!(channel_pool(&x, PoolMode::Avg).unwrap(), x);
        let c = Tensor::<f64>::full([4, 3, 3], 0.7);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            assert!(channel_pool(&c, mode).unwrap().data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn max_pool_ties_pick_lowest_channel() {
        let x = t(&[3, 1, 1], &[2.0, 2.0, 1.0]);
        let (_, arg) = channel_pool_forward(&x, PoolMode::Max).unwrap();
        assert_eq!(arg, vec![0]);
        let dx = channel_pool_backward(&[3, 1, 1], PoolMode::Max, &arg, &t(&[1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_identity_and_bias_only() {
        let x = t(&[3], &[1.0, -2.0, 0.5]);
        let eye = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(linear(&x, &eye, &Tensor::zeros([3])).unwrap(), x);
        let b = t(&[2], &[4.0, -1.0]);
        assert_eq!(linear(&x, &Tensor::zeros([2, 3]), &b).unwrap(), b);
        assert!(linear(&x, &Tensor::zeros([2, 4]), &b).is_err());
    }

    #[test]
    fn activations() {
        let x = t(&[2], &[-1.0, 2.0]);
        assert_eq!(activation(&x, Activation::Relu).unwrap().data(), &[0.0, 2.0]);
        let s = activation(&t(&[1], &[0.0]), Activation::Sigmoid).unwrap();
        assert_eq!(s.data(), &[0.5]);
        let big = activation(&t(&[2], &[-40.0, 40.0]), Activation::Sigmoid).unwrap();
        assert!(big.data()[0] > 0.0 && big.data()[1] < 1.0 + 1e-12);
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor::<f64>::full([1, 2, 2], 1.0);
        let b = Tensor::<f64>::full([1, 2, 2], 2.0);
        let c = concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(concat(&[&a], 0).unwrap(), a);
        let parts = split(&c, 0, &[1, 1]).unwrap();
        assert_eq!(parts, vec![a.clone(), b]);
        assert!(concat(&[&a, &Tensor::full([1, 3, 2], 0.0)], 0).is_err());
    }

    #[test]
    fn bce_values() {
        let target = t(&[4], &[0.0, 1.0, 1.0, 0.0]);
        let half = Tensor::<f64>::full([4], 0.5);
        assert!((bce_loss(&half, &target).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&target, &target).unwrap() <= 2e-7);
        let bad = t(&[4], &[0.0, 0.5, 1.0, 0.0]);
        assert!(matches!(bce_loss(&half, &bad), Err(TensorError::Domain { .. })));
    }

    #[test]
    fn mse_values() {
        let p = t(&[3], &[1.0, 2.0, 3.0]);
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
        let q = p.map(|v| v + 0.3);
        assert!((mse_loss(&q, &p).unwrap() - 0.09).abs() < 1e-12);
        let g = mse_loss_backward(&q, &p, 1.0);
        assert!(g.data().iter().all(|&v| (v - 2.0 * 0.3 / 3.0).abs() < 1e-12));
        assert!(mse_loss(&p, &t(&[1], &[0.0])).is_err());
    }
}
