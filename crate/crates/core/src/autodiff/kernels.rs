//! Forward and backward kernels on plain tensors. The tape in the parent
//! module records which of these ran and replays the backward halves.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn relu6(x: f64) -> f64 {
    x.clamp(0.0, 6.0)
}

/// Derivative of relu6; zero at both kinks.
pub(crate) fn relu6_grad(x: f64) -> f64 {
    if x > 0.0 && x < 6.0 {
        1.0
    } else {
        0.0
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

fn conv_out(len: usize, stride: usize) -> usize {
    (len - 1) / stride + 1
}

/// Range of output indices `o` for which `o * stride + k - 1` is a valid
/// input index in `0..len`.
#[inline]
fn valid_range(k: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    if len < k {
        return (0, 0);
    }
    let hi = ((len + 1 - k - 1) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

pub(crate) fn conv2d_check(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Result<()> {
    let [_, c_in, _, _] = input.shape();
    let [k_out, k_in, kh, kw] = kernel.shape();
    if stride != 1 && stride != 2 {
        return Err(Error::Invalid(format!("conv2d stride must be 1 or 2, got {stride}")));
    }
    if kh != 3 || kw != 3 {
        return Err(Error::shape("conv2d", format!("kernel spatial axes must be 3x3, got {kh}x{kw}")));
    }
    if k_in != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input channel axis C={c_in} does not match kernel C_in={k_in}"),
        ));
    }
    if bias.numel() != k_out {
        return Err(Error::shape(
            "conv2d",
            format!("bias length {} does not match kernel C_out={k_out}", bias.numel()),
        ));
    }
    Ok(())
}

/// 3x3 convolution with zero padding 1.
pub(crate) fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Tensor {
    let [n_b, c_in, h, w] = input.shape();
    let c_out = kernel.shape()[0];
    let (ho, wo) = (conv_out(h, stride), conv_out(w, stride));
    let mut out = Tensor::zeros([n_b, c_out, ho, wo]);
    let x = input.data();
    let k = kernel.data();
    let b = bias.data();
    let o = out.data_mut();
    for n in 0..n_b {
        for co in 0..c_out {
            let plane = &mut o[(n * c_out + co) * ho * wo..][..ho * wo];
            plane.fill(b[co]);
            for ci in 0..c_in {
                let src = &x[(n * c_in + ci) * h * w..][..h * w];
                for ky in 0..3 {
                    let (oy0, oy1) = valid_range(ky, stride, h, ho);
                    for kx in 0..3 {
                        let kv = k[((co * c_in + ci) * 3 + ky) * 3 + kx];
                        let (ox0, ox1) = valid_range(kx, stride, w, wo);
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - 1;
                            let row = &src[iy * w..][..w];
                            let orow = &mut plane[oy * wo..][..wo];
                            if stride == 1 {
                                let ix0 = ox0 + kx - 1;
                                for (ov, iv) in orow[ox0..ox1].iter_mut().zip(&row[ix0..]) {
                                    *ov += kv * iv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += kv * row[ox * stride + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let [n_b, c_in, h, w] = input.shape();
    let [_, c_out, ho, wo] = grad_out.shape();
    let mut dx = Tensor::zeros(input.shape());
    let mut dk = Tensor::zeros(kernel.shape());
    let mut db = Tensor::zeros([c_out, 1, 1, 1]);
    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();
    let dxd = dx.data_mut();
    let dkd = dk.data_mut();
    let dbd = db.data_mut();
    for n in 0..n_b {
        for co in 0..c_out {
            let gplane = &g[(n * c_out + co) * ho * wo..][..ho * wo];
            dbd[co] += gplane.iter().sum::<f64>();
            for ci in 0..c_in {
                let base = (n * c_in + ci) * h * w;
                for ky in 0..3 {
                    let (oy0, oy1) = valid_range(ky, stride, h, ho);
                    for kx in 0..3 {
                        let kidx = ((co * c_in + ci) * 3 + ky) * 3 + kx;
                        let kv = k[kidx];
                        let (ox0, ox1) = valid_range(kx, stride, w, wo);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - 1;
                            let grow = &gplane[oy * wo..][..wo];
                            if stride == 1 {
                                let ix0 = ox0 + kx - 1;
                                let xrow = &x[base + iy * w + ix0..][..ox1 - ox0];
                                let dxrow = &mut dxd[base + iy * w + ix0..][..ox1 - ox0];
                                for ((gv, xv), dv) in grow[ox0..ox1].iter().zip(xrow).zip(dxrow.iter_mut()) {
                                    acc += gv * xv;
                                    *dv += kv * gv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    let ix = ox * stride + kx - 1;
                                    let gv = grow[ox];
                                    acc += gv * x[base + iy * w + ix];
                                    dxd[base + iy * w + ix] += kv * gv;
                                }
                            }
                        }
                        dkd[kidx] += acc;
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

/// Per-channel statistics gathered by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance (biased when only one element per channel).
    pub var: Vec<f64>,
}

pub(crate) struct BatchNormSaved {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

pub(crate) fn batch_norm_train(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> (Tensor, BatchNormSaved, BatchStats) {
    let [n_b, c, h, w] = input.shape();
    let hw = h * w;
    let m = (n_b * hw) as f64;
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for n in 0..n_b {
            s += x[(n * c + ch) * hw..][..hw].iter().sum::<f64>();
        }
        let mu = s / m;
        let mut v = 0.0;
        for n in 0..n_b {
            v += x[(n * c + ch) * hw..][..hw].iter().map(|&e| (e - mu) * (e - mu)).sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = v / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    {
        let xh = xhat.data_mut();
        let o = out.data_mut();
        for n in 0..n_b {
            for ch in 0..c {
                let off = (n * c + ch) * hw;
                let (g, b) = (gamma.data()[ch], beta.data()[ch]);
                for i in off..off + hw {
                    let v = (x[i] - mean[ch]) * inv_std[ch];
                    xh[i] = v;
                    o[i] = g * v + b;
                }
            }
        }
    }
    let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
    let stats = BatchStats {
        mean,
        var: var.iter().map(|v| v * unbias).collect(),
    };
    (out, BatchNormSaved { xhat, inv_std }, stats)
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub(crate) fn batch_norm_train_backward(
    saved: &BatchNormSaved,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let [n_b, c, h, w] = grad_out.shape();
    let hw = h * w;
    let m = (n_b * hw) as f64;
    let g = grad_out.data();
    let xh = saved.xhat.data();
    let mut dgamma = Tensor::zeros(gamma.shape());
    let mut dbeta = Tensor::zeros(gamma.shape());
    let mut dx = Tensor::zeros(grad_out.shape());
    for ch in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for n in 0..n_b {
            let off = (n * c + ch) * hw;
            for i in off..off + hw {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
        }
        dgamma.data_mut()[ch] = sum_gx;
        dbeta.data_mut()[ch] = sum_g;
        let scale = gamma.data()[ch] * saved.inv_std[ch] / m;
        let d = dx.data_mut();
        for n in 0..n_b {
            let off = (n * c + ch) * hw;
            for i in off..off + hw {
                d[i] = scale * (m * g[i] - sum_g - xh[i] * sum_gx);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Half-pixel-center source mapping for one axis: `(i0, i1, frac)` per
/// output index, edge-clamped.
pub(crate) fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = if i0 == in_len - 1 { 0.0 } else { src - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

pub(crate) fn resize_forward(input: &Tensor, th: usize, tw: usize) -> Tensor {
    let [n_b, c, h, w] = input.shape();
    if (h, w) == (th, tw) {
        return input.clone();
    }
    let ty = bilinear_taps(h, th);
    let tx = bilinear_taps(w, tw);
    let x = input.data();
    let mut out = Tensor::zeros([n_b, c, th, tw]);
    let o = out.data_mut();
    for p in 0..n_b * c {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut o[p * th * tw..][..th * tw];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let top = (1.0 - lx) * src[y0 * w + x0] + lx * src[y0 * w + x1];
                let bot = (1.0 - lx) * src[y1 * w + x0] + lx * src[y1 * w + x1];
                dst[oy * tw + ox] = (1.0 - ly) * top + ly * bot;
            }
        }
    }
    out
}

pub(crate) fn resize_backward(in_shape: [usize; 4], grad_out: &Tensor) -> Tensor {
    let [n_b, c, h, w] = in_shape;
    let [_, _, th, tw] = grad_out.shape();
    if (h, w) == (th, tw) {
        return grad_out.clone();
    }
    let ty = bilinear_taps(h, th);
    let tx = bilinear_taps(w, tw);
    let g = grad_out.data();
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    for p in 0..n_b * c {
        let gp = &g[p * th * tw..][..th * tw];
        let dp = &mut d[p * h * w..][..h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let gv = gp[oy * tw + ox];
                dp[y0 * w + x0] += (1.0 - ly) * (1.0 - lx) * gv;
                dp[y0 * w + x1] += (1.0 - ly) * lx * gv;
                dp[y1 * w + x0] += ly * (1.0 - lx) * gv;
                dp[y1 * w + x1] += ly * lx * gv;
            }
        }
    }
    dx
}

/// Integer window `[start, end)` of adaptive pooling cell `i`.
pub(crate) fn pool_window(i: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = i * in_len / out_len;
    let end = ((i + 1) * in_len).div_ceil(out_len);
    (start, end)
}

pub(crate) fn avg_pool_forward(input: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [n_b, c, h, w] = input.shape();
    let x = input.data();
    let mut out = Tensor::zeros([n_b, c, oh, ow]);
    let o = out.data_mut();
    for p in 0..n_b * c {
        let src = &x[p * h * w..][..h * w];
        for oy in 0..oh {
            let (y0, y1) = pool_window(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1) = pool_window(ox, w, ow);
                let mut s = 0.0;
                for y in y0..y1 {
                    s += src[y * w + x0..y * w + x1].iter().sum::<f64>();
                }
                o[p * oh * ow + oy * ow + ox] = s / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward(in_shape: [usize; 4], grad_out: &Tensor) -> Tensor {
    let [n_b, c, h, w] = in_shape;
    let [_, _, oh, ow] = grad_out.shape();
    let g = grad_out.data();
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    for p in 0..n_b * c {
        for oy in 0..oh {
            let (y0, y1) = pool_window(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1) = pool_window(ox, w, ow);
                let share = g[p * oh * ow + oy * ow + ox] / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for v in &mut d[p * h * w + y * w + x0..p * h * w + y * w + x1] {
                        *v += share;
                    }
                }
            }
        }
    }
    dx
}

/// Forward difference along width (`axis = 3`) or height (`axis = 2`).
pub(crate) fn diff_forward(input: &Tensor, axis: usize) -> Tensor {
    let [n_b, c, h, w] = input.shape();
    if axis == 3 {
        Tensor::from_fn([n_b, c, h, w - 1], |n, ch, y, x| {
            input.at(n, ch, y, x + 1) - input.at(n, ch, y, x)
        })
    } else {
        Tensor::from_fn([n_b, c, h - 1, w], |n, ch, y, x| {
            input.at(n, ch, y + 1, x) - input.at(n, ch, y, x)
        })
    }
}

pub(crate) fn diff_backward(in_shape: [usize; 4], axis: usize, grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(in_shape);
    let [n_b, c, h, w] = grad_out.shape();
    for n in 0..n_b {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let g = grad_out.at(n, ch, y, x);
                    let (y1, x1) = if axis == 3 { (y, x + 1) } else { (y + 1, x) };
                    let hi = dx.offset(n, ch, y1, x1);
                    let lo = dx.offset(n, ch, y, x);
                    dx.data_mut()[hi] += g;
                    dx.data_mut()[lo] -= g;
                }
            }
        }
    }
    dx
}

/// Binary entropy `-w ln w - (1-w) ln(1-w)` with `w` clamped to `[eps, 1-eps]`.
pub(crate) fn binary_entropy(w: f64, eps: f64) -> f64 {
    let w = w.clamp(eps, 1.0 - eps);
    -w * w.ln() - (1.0 - w) * (1.0 - w).ln()
}

/// Derivative of [`binary_entropy`]; zero where the clamp is active.
pub(crate) fn binary_entropy_grad(w: f64, eps: f64) -> f64 {
    if w < eps || w > 1.0 - eps {
        0.0
    } else {
        ((1.0 - w) / w).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bounds_check() {
        for len in 1..9 {
            for stride in 1..=2 {
                let out = conv_out(len, stride);
                for k in 0..3 {
                    let (lo, hi) = valid_range(k, stride, len, out);
                    for o in 0..out {
                        let i = (o * stride + k) as isize - 1;
                        let ok = i >= 0 && (i as usize) < len;
                        assert_eq!(ok, o >= lo && o < hi, "len {len} stride {stride} k {k} o {o}");
                    }
                }
            }
        }
    }

    #[test]
    fn pool_windows_cover_input() {
        for len in 3..20 {
            let mut covered = vec![false; len];
            for i in 0..3 {
                let (s, e) = pool_window(i, len, 3);
                assert!(s < e);
                covered[s..e].iter_mut().for_each(|c| *c = true);
            }
            assert!(covered.iter().all(|&c| c));
        }
    }

    #[test]
    fn entropy_gradient_sign() {
        assert!(binary_entropy_grad(0.7, 1e-7) < 0.0);
        assert!(binary_entropy_grad(0.3, 1e-7) > 0.0);
        assert_eq!(binary_entropy_grad(0.5, 1e-7), 0.0);
    }
}
