//! Synthetic phase objects and off-axis interferogram rendering.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{AberrationSpec, FringeSpec, Grid, Interferogram, PhaseMap};
use crate::error::{Error, Result};

fn check_pow2(h: usize, w: usize) -> Result<()> {
    for d in [h, w] {
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(d));
        }
    }
    Ok(())
}

fn blob_field(h: usize, w: usize, n_blobs: usize, rng: &mut ChaCha8Rng) -> Grid {
    let mut grid = Grid::zeros(h, w);
    let size = h.min(w) as f64;
    for _ in 0..n_blobs {
        let cy = rng.random_range(0.2..0.8) * h as f64;
        let cx = rng.random_range(0.2..0.8) * w as f64;
        let s_major = rng.random_range(size / 8.0..size / 4.0);
        let s_minor = rng.random_range(0.6..1.0) * s_major;
        let angle = rng.random_range(0.0..PI);
        let amp = rng.random_range(0.5..1.0);
        let (sin, cos) = angle.sin_cos();
        for r in 0..h {
            for c in 0..w {
                let dx = c as f64 - cx;
                let dy = r as f64 - cy;
                let u = (cos * dx + sin * dy) / s_major;
                let v = (-sin * dx + cos * dy) / s_minor;
                grid.data[r * w + c] += amp * (-0.5 * (u * u + v * v)).exp();
            }
        }
    }
    grid
}

/// Sum of random anisotropic Gaussian blobs scaled so its maximum equals
/// `peak`. Non-negative everywhere; all zeros when `n_blobs == 0`.
pub fn synth_phase_with_peak(h: usize, w: usize, n_blobs: usize, peak: f64, seed: u64) -> Result<PhaseMap> {
    check_pow2(h, w)?;
    if !(peak >= 0.0 && peak.is_finite()) {
        return Err(Error::Invalid(format!("peak phase {peak} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = blob_field(h, w, n_blobs, &mut rng);
    let max = grid.data.iter().fold(0.0f64, |m, &v| m.max(v));
    if max > 0.0 {
        let k = peak / max;
        grid.data.iter_mut().for_each(|v| *v *= k);
    }
    Ok(PhaseMap::unwrapped(grid))
}

/// Random blob phase whose peak is drawn from `[0.5, 0.95) · max_phase`,
/// so every value lies in `[0, max_phase)`.
pub fn synth_phase(h: usize, w: usize, n_blobs: usize, max_phase: f64, seed: u64) -> Result<PhaseMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let peak = rng.random_range(0.5..0.95) * max_phase;
    synth_phase_with_peak(h, w, n_blobs, peak, seed)
}

/// Renders `a + b·cos(φ + ψ + carrier)`, maps the noiseless range
/// `[a − b, a + b]` onto `[0, 1]`, adds Gaussian noise and clips.
pub fn render_interferogram(
    phase: &PhaseMap,
    ab: &AberrationSpec,
    fr: &FringeSpec,
    seed: u64,
) -> Result<Interferogram> {
    if phase.wrapped {
        return Err(Error::Invalid("render_interferogram expects an unwrapped phase".into()));
    }
    if fr.contrast == 0.0 {
        return Err(Error::ZeroContrast);
    }
    let (h, w) = (phase.h(), phase.w());
    check_pow2(h, w)?;
    fr.validate(h, w)?;
    ab.validate()?;
    let (a, b) = (fr.background, fr.contrast);
    let (lo, span) = (a - b, 2.0 * b);
    let mut grid = Grid::from_fn(h, w, |r, c| {
        let carrier = 2.0 * PI * (fr.carrier_fx * c as f64 / w as f64 + fr.carrier_fy * r as f64 / h as f64);
        let total = phase.grid.at(r, c) + ab.phase_at(r, c, h, w) + carrier;
        (a + b * total.cos() - lo) / span
    });
    if fr.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, fr.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
        for v in &mut grid.data {
            *v += noise.sample(&mut rng);
        }
    }
    for v in &mut grid.data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Interferogram { grid })
}
