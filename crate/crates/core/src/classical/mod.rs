//! Conventional off-axis phase retrieval and the synthetic scenes that feed it.
//!
//! The pipeline has three steps: [`fourier_demodulate`] isolates the +1
//! sideband and returns the wrapped phase, [`detect_residues`],
//! [`goldstein_branch_cuts`] and [`unwrap`] integrate it without crossing
//! branch cuts, and [`compensate`] subtracts a sample-free calibration
//! phase. [`retrieve_phase`] chains all three.
//!
//! Wrapped phase lives in the principal interval `(-π, π]`.

mod compensate;
mod demod;
pub mod fft;
mod goldstein;
mod pgm;
mod synth;

use std::f64::consts::PI;
use std::time::Instant;

pub use compensate::{anchor_margin, compensate, percentile};
pub use demod::{default_window_radius, fourier_demodulate, locate_carrier};
pub use goldstein::{detect_residues, goldstein_branch_cuts, unwrap, CutMask, ResidueMap, UnwrapReport};
pub use pgm::{decode_pgm, encode_pgm, Pgm};
pub use synth::{render_interferogram, synth_phase, synth_phase_with_peak};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major 2-axis real array.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::shape("grid", format!("{h}x{w} with {} values", data.len())));
        }
        Ok(Self { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        Self { h, w, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.w + c] = v;
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_grid(self.h, self.w, self.data.clone()).expect("grid dimensions are non-zero")
    }

    /// Reads a `[1, 1, H, W]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [n, c, h, w] = t.shape();
        if n != 1 || c != 1 {
            return Err(Error::shape("grid", format!("expected [1,1,H,W], got {:?}", t.shape())));
        }
        Self::new(h, w, t.data().to_vec())
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.h == other.h && self.w == other.w
    }

    /// Copy with an `m`-pixel border removed.
    pub fn interior(&self, m: usize) -> Grid {
        assert!(2 * m < self.h && 2 * m < self.w, "margin {m} too large for {}x{}", self.h, self.w);
        Grid::from_fn(self.h - 2 * m, self.w - 2 * m, |r, c| self.at(r + m, c + m))
    }
}

/// Phase in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub grid: Grid,
    pub wrapped: bool,
}

impl PhaseMap {
    pub fn unwrapped(grid: Grid) -> Self {
        Self { grid, wrapped: false }
    }

    pub fn wrapped(grid: Grid) -> Self {
        Self { grid, wrapped: true }
    }

    pub fn h(&self) -> usize {
        self.grid.h
    }

    pub fn w(&self) -> usize {
        self.grid.w
    }
}

/// Recorded fringe intensity, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    pub grid: Grid,
}

/// Carrier and intensity parameters of a fringe pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeSpec {
    /// Carrier cycles across the image width.
    pub carrier_fx: f64,
    /// Carrier cycles across the image height.
    pub carrier_fy: f64,
    pub contrast: f64,
    pub background: f64,
    pub noise_sigma: f64,
}

impl FringeSpec {
    pub fn carrier_magnitude(&self) -> f64 {
        self.carrier_fx.hypot(self.carrier_fy)
    }

    /// The carrier must be far enough from DC for the sideband to separate
    /// and well below Nyquist.
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        let m = self.carrier_magnitude();
        let limit = h.min(w) as f64 / 4.0;
        if !(m > 4.0 && m < limit) {
            return Err(Error::Invalid(format!(
                "carrier magnitude {m:.3} cycles must lie in (4, {limit})"
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::Invalid(format!("contrast {} outside (0, 1]", self.contrast)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Invalid("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Desk-scale default fringe style for 64×64 images.
    pub fn desk_default() -> Self {
        Self {
            carrier_fx: 10.0,
            carrier_fy: 6.0,
            contrast: 0.8,
            background: 0.5,
            noise_sigma: 0.0,
        }
    }

    /// A second fringe style with different orientation, period and contrast.
    pub fn alternate_style() -> Self {
        Self {
            carrier_fx: -5.0,
            carrier_fy: 11.0,
            contrast: 0.6,
            background: 0.4,
            noise_sigma: 0.0,
        }
    }
}

/// System phase aberration: linear tilt plus rotationally symmetric curvature
/// about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AberrationSpec {
    /// Radians per pixel along columns.
    pub tilt_x: f64,
    /// Radians per pixel along rows.
    pub tilt_y: f64,
    /// Radians per squared pixel.
    pub quadratic: f64,
}

impl AberrationSpec {
    pub fn phase_at(&self, r: usize, c: usize, h: usize, w: usize) -> f64 {
        let x = c as f64 - (w as f64 - 1.0) / 2.0;
        let y = r as f64 - (h as f64 - 1.0) / 2.0;
        self.tilt_x * x + self.tilt_y * y + self.quadratic * (x * x + y * y)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.tilt_x, self.tilt_y, self.quadratic].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Invalid("aberration coefficients must be finite".into()))
        }
    }

    pub fn desk_default() -> Self {
        Self {
            tilt_x: 0.03,
            tilt_y: -0.02,
            quadratic: 4e-4,
        }
    }
}

/// Wraps one value into `(-π, π]`.
pub fn wrap_value(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * (x / two_pi).round();
    if y <= -PI {
        y += two_pi;
    } else if y > PI {
        y -= two_pi;
    }
    y
}

/// Wraps every pixel into `(-π, π]`.
pub fn wrap(p: &PhaseMap) -> PhaseMap {
    let data = p.grid.data.iter().map(|&v| wrap_value(v)).collect();
    PhaseMap::wrapped(Grid {
        h: p.grid.h,
        w: p.grid.w,
        data,
    })
}

/// Outputs of every classical step, kept for inspection and timing.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub wrapped: PhaseMap,
    pub unwrapped: Option<PhaseMap>,
    pub compensated: Option<PhaseMap>,
    pub timings: StepTimings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimings {
    pub demodulate_ms: f64,
    pub unwrap_ms: f64,
    pub compensate_ms: f64,
}

/// Demodulates, unwraps and compensates a sample interferogram against a
/// sample-free calibration interferogram.
pub fn retrieve_phase(
    sample: &Interferogram,
    calibration: &Interferogram,
    fringe: &FringeSpec,
    window_radius: f64,
) -> Result<PhaseMap> {
    let r = retrieve_timed(sample, Some(calibration), fringe, window_radius, true)?;
    Ok(r.compensated.expect("compensation requested"))
}

/// The same pipeline with every intermediate kept and each step timed.
/// Without unwrapping it stops after demodulation; without a calibration
/// frame it stops after unwrapping. Calibration work is charged to the
/// step it belongs to.
pub fn retrieve_timed(
    sample: &Interferogram,
    calibration: Option<&Interferogram>,
    fringe: &FringeSpec,
    window_radius: f64,
    unwrap_phase: bool,
) -> Result<Retrieval> {
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    let mut timings = StepTimings::default();

    let t = Instant::now();
    let wrapped = fourier_demodulate(sample, fringe, window_radius)?;
    let cal_wrapped = match calibration {
        Some(c) if unwrap_phase => Some(fourier_demodulate(c, fringe, window_radius)?),
        _ => None,
    };
    timings.demodulate_ms = ms(t);
    if !unwrap_phase {
        return Ok(Retrieval {
            wrapped,
            unwrapped: None,
            compensated: None,
            timings,
        });
    }

    let t = Instant::now();
    let integrate = |wp: &PhaseMap| -> Result<PhaseMap> { Ok(unwrap(wp, &goldstein_branch_cuts(&detect_residues(wp)?))?.phase) };
    let unwrapped = integrate(&wrapped)?;
    let cal_unwrapped = cal_wrapped.as_ref().map(integrate).transpose()?;
    timings.unwrap_ms = ms(t);

    let t = Instant::now();
    let compensated = cal_unwrapped.map(|c| compensate(&unwrapped, &c)).transpose()?;
    timings.compensate_ms = ms(t);
    Ok(Retrieval {
        wrapped,
        unwrapped: Some(unwrapped),
        compensated,
        timings,
    })
}
