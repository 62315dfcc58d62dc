use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classical::{
    default_window_radius, render_interferogram, retrieve_phase, synth_phase, AberrationSpec, FringeSpec, Grid,
    PhaseMap,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Phase range mapped onto `[0, 1]`.
pub const PHASE_MAX: f64 = 12.0;

/// Where ground-truth phase comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// The synthetic phase the interferogram was rendered from.
    Analytic,
    /// The classical pipeline's retrieval from the rendered frame.
    Classical,
}

impl LabelSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "classical" => Ok(Self::Classical),
            _ => Err(Error::Invalid(format!("labels must be `analytic` or `classical`, got {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n: usize,
    pub size: usize,
    pub fringe: FringeSpec,
    pub aberration: AberrationSpec,
    pub seed: u64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Blob count per phase map is drawn from this inclusive range.
    pub blobs: (usize, usize),
    pub labels: LabelSource,
}

impl DatasetSpec {
    /// 64 px frames with the default fringe style, a light noise floor and a
    /// 32/8/8 split of 48 pairs.
    pub fn desk(seed: u64) -> Self {
        let mut fringe = FringeSpec::desk_default();
        fringe.noise_sigma = 0.01;
        Self {
            n: 48,
            size: 64,
            fringe,
            aberration: AberrationSpec::desk_default(),
            seed,
            split: [32.0 / 48.0, 8.0 / 48.0, 8.0 / 48.0],
            blobs: (1, 4),
            labels: LabelSource::Analytic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Interferogram `[1, 1, H, W]` in `[0, 1]`.
    pub input: Tensor,
    /// Normalized phase `[1, 1, H, W]` in `[0, 1]`.
    pub target: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<Sample>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub phase_max: f64,
    pub size: usize,
    pub fringe: FringeSpec,
}

impl Dataset {
    /// Checks the invariants: disjoint covering splits, targets in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.pairs.len()];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Invalid(format!("split index {i} is out of range or repeated")));
            }
        }
        if seen.contains(&false) {
            return Err(Error::Invalid("splits do not cover every pair".into()));
        }
        for s in &self.pairs {
            if s.target.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invalid("target outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn split(&self, which: Split) -> &[usize] {
        match which {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Split sizes by rounding the first two fractions; the test split takes the rest.
pub fn split_sizes(n: usize, split: [f64; 3]) -> Result<[usize; 3]> {
    if split.iter().any(|f| !(*f > 0.0)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split fractions {split:?} must be positive and sum to 1")));
    }
    let a = (n as f64 * split[0]).round() as usize;
    let b = (n as f64 * split[1]).round() as usize;
    if a == 0 || b == 0 || a + b >= n {
        return Err(Error::Invalid(format!("{n} pairs cannot be split as {split:?}")));
    }
    Ok([a, b, n - a - b])
}

/// Clamps to `[0, phase_max]` and divides by `phase_max`.
pub fn normalize_phase(p: &PhaseMap, phase_max: f64) -> Result<Tensor> {
    let data = p.grid.data.iter().map(|v| v.clamp(0.0, phase_max) / phase_max).collect();
    Tensor::from_grid(p.h(), p.w(), data)
}

/// Inverse of [`normalize_phase`] on `[0, 1]`.
pub fn denormalize_phase(t: &Tensor, phase_max: f64) -> Result<PhaseMap> {
    let [n, c, h, w] = t.shape();
    if n != 1 || c != 1 {
        return Err(Error::shape("denormalize_phase", format!("expected [1, 1, H, W], got {:?}", t.shape())));
    }
    let data = t.data().iter().map(|v| v.clamp(0.0, 1.0) * phase_max).collect();
    Ok(PhaseMap::unwrapped(Grid { h, w, data }))
}

/// Renders `n` synthetic pairs. Each pair draws its own blob count, phase
/// seed and noise seed from one stream seeded by `spec.seed`.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n < 3 {
        return Err(Error::EmptyDataset(format!("{} pairs cannot fill three splits", spec.n)));
    }
    let [a, b, _] = split_sizes(spec.n, spec.split)?;
    if spec.blobs.0 > spec.blobs.1 {
        return Err(Error::Invalid(format!("blob range {:?} is empty", spec.blobs)));
    }
    let (h, w) = (spec.size, spec.size);
    spec.fringe.validate(h, w)?;
    let radius = default_window_radius(h, w, &spec.fringe);
    let calibration = match spec.labels {
        LabelSource::Analytic => None,
        LabelSource::Classical => {
            let flat = PhaseMap::unwrapped(Grid::zeros(h, w));
            let mut clean = spec.fringe;
            clean.noise_sigma = 0.0;
            Some(render_interferogram(&flat, &spec.aberration, &clean, 0)?)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let blobs = rng.random_range(spec.blobs.0..=spec.blobs.1);
        let phase_seed: u64 = rng.random();
        let noise_seed: u64 = rng.random();
        let phase = synth_phase(h, w, blobs, PHASE_MAX, phase_seed)?;
        let ig = render_interferogram(&phase, &spec.aberration, &spec.fringe, noise_seed)?;
        let label = match &calibration {
            None => phase,
            Some(cal) => retrieve_phase(&ig, cal, &spec.fringe, radius)?,
        };
        pairs.push(Sample {
            input: ig.grid.to_tensor(),
            target: normalize_phase(&label, PHASE_MAX)?,
        });
    }
    let ds = Dataset {
        pairs,
        train: (0..a).collect(),
        val: (a..a + b).collect(),
        test: (a + b..spec.n).collect(),
        phase_max: PHASE_MAX,
        size: spec.size,
        fringe: spec.fringe,
    };
    ds.validate()?;
    Ok(ds)
}
