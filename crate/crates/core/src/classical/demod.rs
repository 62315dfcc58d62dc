//! Fourier-transform fringe demodulation.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{fft2, ifft2, signed_bin, ComplexField};
use super::{wrap_value, FringeSpec, Grid, Interferogram, PhaseMap};
use crate::error::{Error, Result};

/// `min(H, W) / 8`, capped at three quarters of the carrier distance so the
/// window stays clear of DC.
pub fn default_window_radius(h: usize, w: usize, fr: &FringeSpec) -> f64 {
    (h.min(w) as f64 / 8.0).min(0.75 * fr.carrier_magnitude())
}

/// Isolates the +carrier sideband inside a circular window, removes the
/// carrier and returns the argument of the resulting complex field.
pub fn fourier_demodulate(ig: &Interferogram, fr: &FringeSpec, window_radius: f64) -> Result<PhaseMap> {
    let (h, w) = (ig.grid.h, ig.grid.w);
    let distance = fr.carrier_magnitude();
    if !(window_radius > 0.0) {
        return Err(Error::Invalid(format!("window radius {window_radius} must be positive")));
    }
    if distance <= window_radius {
        return Err(Error::CarrierTooLow {
            distance,
            radius: window_radius,
        });
    }
    let spectrum = fft2(&ComplexField::from_real(h, w, &ig.grid.data)?)?;
    let mut masked = ComplexField::zeros(h, w);
    let r2 = window_radius * window_radius;
    for ky in 0..h {
        let fy = signed_bin(ky, h) - fr.carrier_fy;
        for kx in 0..w {
            let fx = signed_bin(kx, w) - fr.carrier_fx;
            if fx * fx + fy * fy <= r2 {
                masked.data[ky * w + kx] = spectrum.data[ky * w + kx];
            }
        }
    }
    let field = ifft2(&masked)?;
    let grid = Grid::from_fn(h, w, |r, c| {
        let carrier = 2.0 * PI * (fr.carrier_fx * c as f64 / w as f64 + fr.carrier_fy * r as f64 / h as f64);
        let v = field.at(r, c) * Complex64::from_polar(1.0, -carrier);
        wrap_value(v.arg())
    });
    Ok(PhaseMap::wrapped(grid))
}

/// Finds the carrier as the strongest spectral bin outside a DC disk of
/// `dc_radius` bins. Of the two conjugate peaks the one with `fx > 0` (or
/// `fx == 0, fy > 0`) is returned, so carriers with negative `fx` come back
/// negated.
pub fn locate_carrier(ig: &Interferogram, dc_radius: f64) -> Result<(f64, f64)> {
    let (h, w) = (ig.grid.h, ig.grid.w);
    let spectrum = fft2(&ComplexField::from_real(h, w, &ig.grid.data)?)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for ky in 0..h {
        let fy = signed_bin(ky, h);
        for kx in 0..w {
            let fx = signed_bin(kx, w);
            if fx.hypot(fy) <= dc_radius {
                continue;
            }
            if !(fx > 0.0 || (fx == 0.0 && fy > 0.0)) {
                continue;
            }
            let m = spectrum.data[ky * w + kx].norm();
            if best.is_none_or(|(bm, _, _)| m > bm) {
                best = Some((m, fx, fy));
            }
        }
    }
    best.map(|(_, fx, fy)| (fx, fy))
        .ok_or_else(|| Error::Invalid("no spectral bins outside the DC disk".into()))
}
