use super::{Grid, PhaseMap};
use crate::error::{Error, Result};

/// Value at fraction `q ∈ [0, 1]` of the sorted data (lower index, no
/// interpolation).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let mut v = values.to_vec();
    let k = ((values.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize;
    let (_, x, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *x
}

/// Border width excluded when picking the anchor; spectral leakage from the
/// non-periodic frame edge is strongest there.
pub fn anchor_margin(h: usize, w: usize) -> usize {
    h.min(w) / 16
}

/// Subtracts the calibration phase and anchors the 1st percentile of the
/// interior (see [`anchor_margin`]) at zero.
pub fn compensate(sample: &PhaseMap, calibration: &PhaseMap) -> Result<PhaseMap> {
    if !sample.grid.same_shape(&calibration.grid) {
        return Err(Error::shape(
            "compensate",
            format!(
                "sample {}x{} vs calibration {}x{}",
                sample.h(),
                sample.w(),
                calibration.h(),
                calibration.w()
            ),
        ));
    }
    if sample.wrapped || calibration.wrapped {
        return Err(Error::Invalid("compensate expects unwrapped phase maps".into()));
    }
    let mut diff: Vec<f64> = sample
        .grid
        .data
        .iter()
        .zip(&calibration.grid.data)
        .map(|(s, c)| s - c)
        .collect();
    let (h, w) = (sample.h(), sample.w());
    let m = anchor_margin(h, w);
    let interior: Vec<f64> = (m..h - m)
        .flat_map(|r| diff[r * w + m..r * w + w - m].iter().copied())
        .collect();
    let anchor = percentile(&interior, 0.01);
    diff.iter_mut().for_each(|v| *v -= anchor);
    Ok(PhaseMap::unwrapped(Grid {
        h: sample.h(),
        w: sample.w(),
        data: diff,
    }))
}
