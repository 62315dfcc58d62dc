//! Iterative radix-2 FFT over power-of-two 1-D and 2-D complex arrays.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major complex field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub h: usize,
    pub w: usize,
    pub data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(h: usize, w: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::shape("complex field", format!("{h}x{w} needs {} values, got {}", h * w, data.len())));
        }
        Ok(Self { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![Complex64::new(0.0, 0.0); h * w],
        }
    }

    pub fn from_real(h: usize, w: usize, values: &[f64]) -> Result<Self> {
        Self::new(h, w, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.w + c]
    }
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// In-place unnormalized DFT (`inverse` flips the exponent sign, no scaling).
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    check_pow2(n)?;
    if n == 1 {
        return Ok(());
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles computed directly per index rather than by repeated
        // multiplication, which would accumulate rounding error.
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

fn transform_2d(field: &ComplexField, inverse: bool) -> Result<ComplexField> {
    check_pow2(field.h)?;
    check_pow2(field.w)?;
    let (h, w) = (field.h, field.w);
    let mut out = field.clone();
    for row in out.data.chunks_exact_mut(w) {
        fft_in_place(row, inverse)?;
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = out.data[r * w + c];
        }
        fft_in_place(&mut col, inverse)?;
        for r in 0..h {
            out.data[r * w + c] = col[r];
        }
    }
    Ok(out)
}

/// Forward 2-D DFT, unnormalized.
pub fn fft2(field: &ComplexField) -> Result<ComplexField> {
    transform_2d(field, false)
}

/// Inverse 2-D DFT, scaled by `1 / (h·w)`.
pub fn ifft2(field: &ComplexField) -> Result<ComplexField> {
    let mut out = transform_2d(field, true)?;
    let scale = 1.0 / (field.h * field.w) as f64;
    for v in &mut out.data {
        *v *= scale;
    }
    Ok(out)
}

/// Signed frequency of DFT bin `k` on an axis of length `n`.
pub fn signed_bin(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
