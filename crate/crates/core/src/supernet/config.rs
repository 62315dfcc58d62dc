use crate::error::{Error, Result};

/// Encoder depths for stages 1..=8; shorter nets take a prefix.
pub const DEFAULT_ENCODER_DEPTHS: [usize; 8] = [8, 16, 24, 32, 48, 64, 96, 160];

#[derive(Debug, Clone, PartialEq)]
pub struct SuperNetConfig {
    /// Stage count `L`.
    pub levels: usize,
    pub input_h: usize,
    pub input_w: usize,
    /// Channel depth of encoder stage `l` at index `l − 1`.
    pub encoder_depths: Vec<usize>,
    /// Decoder depth is `min(depth_cap, depth_slope · l)`.
    pub depth_cap: usize,
    pub depth_slope: usize,
    /// Spatial size of the ground feature `G`.
    pub ground: (usize, usize),
    pub bn_eps: f64,
    /// Weight of the newest batch in the running statistics.
    pub bn_momentum: f64,
}

impl SuperNetConfig {
    /// Full-scale setting: eight stages, depth cap 256.
    pub fn paper(input_h: usize, input_w: usize) -> Self {
        Self {
            levels: 8,
            input_h,
            input_w,
            encoder_depths: DEFAULT_ENCODER_DEPTHS.to_vec(),
            depth_cap: 256,
            depth_slope: 8,
            ground: (3, 3),
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Desk-scale setting: `levels` stages, depth cap 64.
    pub fn desk(levels: usize, size: usize) -> Self {
        let depths = (0..levels)
            .map(|i| DEFAULT_ENCODER_DEPTHS.get(i).copied().unwrap_or(160))
            .collect();
        Self {
            levels,
            input_h: size,
            input_w: size,
            encoder_depths: depths,
            depth_cap: 64,
            depth_slope: 8,
            ground: (3, 3),
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Invalid(format!("stage count L={} must be at least 2", self.levels)));
        }
        if self.encoder_depths.len() != self.levels || self.encoder_depths.contains(&0) {
            return Err(Error::Invalid(format!(
                "need {} non-zero encoder depths, got {:?}",
                self.levels, self.encoder_depths
            )));
        }
        if self.depth_cap == 0 || self.depth_slope == 0 {
            return Err(Error::Invalid("decoder depth rule must be positive".into()));
        }
        if self.ground.0 == 0 || self.ground.1 == 0 {
            return Err(Error::Invalid("ground feature size must be positive".into()));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Invalid("batch-norm eps must be > 0 and momentum in [0, 1]".into()));
        }
        self.check_input(self.input_h, self.input_w)
    }

    /// Input sizes must halve cleanly `L` times and leave room for the
    /// ground pooling at the deepest stage.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let div = 1usize << self.levels;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::Invalid(format!(
                "input {h}x{w} is not divisible by 2^L = {div}"
            )));
        }
        if h / div < self.ground.0 || w / div < self.ground.1 {
            return Err(Error::Invalid(format!(
                "deepest stage {}x{} is smaller than the ground size {}x{}",
                h / div,
                w / div,
                self.ground.0,
                self.ground.1
            )));
        }
        Ok(())
    }

    /// Decoder depth `d_l`.
    pub fn decoder_depth(&self, l: usize) -> usize {
        self.depth_cap.min(self.depth_slope * l)
    }

    pub fn encoder_depth(&self, l: usize) -> usize {
        self.encoder_depths[l - 1]
    }

    /// Spatial size of stage `l` for an `h × w` input.
    pub fn stage_size(l: usize, h: usize, w: usize) -> (usize, usize) {
        (h >> l, w >> l)
    }
}
