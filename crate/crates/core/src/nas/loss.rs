use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the binarization term.
    pub alpha: f64,
    /// Weight of the sparsity term.
    pub beta: f64,
    /// Weight of the gradient term inside MixGE.
    pub mixge_lambda: f64,
    /// Connection weights are clamped to `[clamp_eps, 1 − clamp_eps]` inside logs.
    pub clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 5e-3,
            beta: 5e-4,
            mixge_lambda: 1.0,
            clamp_eps: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.mixge_lambda >= 0.0) {
            return Err(Error::Invalid("alpha, beta and lambda must be non-negative".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Invalid(format!("clamp eps {} must lie in (0, 0.5)", self.clamp_eps)));
        }
        Ok(())
    }
}

/// `MSE(p, g) + λ·[MSE(∂x p, ∂x g) + MSE(∂y p, ∂y g)]` with forward differences.
pub fn mixge(tape: &mut Tape, pred: Var, gt: Var, lambda: f64) -> Result<Var> {
    let base = tape.mse(pred, gt)?;
    let (px, gx) = (tape.diff_x(pred)?, tape.diff_x(gt)?);
    let (py, gy) = (tape.diff_y(pred)?, tape.diff_y(gt)?);
    let ex = tape.mse(px, gx)?;
    let ey = tape.mse(py, gy)?;
    tape.linear_combination(&[base, ex, ey], &[1.0, lambda, lambda])
}

/// Mean binary entropy of the connection weights.
pub fn binary_loss(tape: &mut Tape, weights: &[Var], eps: f64) -> Result<Var> {
    let w = tape.stack(weights)?;
    Ok(tape.binary_entropy_mean(w, eps))
}

/// Mean of all connection weights.
pub fn sparsity_loss(tape: &mut Tape, weights: &[Var]) -> Result<Var> {
    let w = tape.stack(weights)?;
    Ok(tape.mean(w))
}

/// Scalar nodes of one synthesized-loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub mixge: Var,
    pub binary: Option<Var>,
    pub sparsity: Option<Var>,
}

/// `mixge + α·binary + β·sparsity`. Without weights only MixGE remains.
pub fn synthesized_loss(tape: &mut Tape, pred: Var, gt: Var, weights: &[Var], cfg: &LossConfig) -> Result<LossTerms> {
    cfg.validate()?;
    let m = mixge(tape, pred, gt, cfg.mixge_lambda)?;
    if weights.is_empty() {
        return Ok(LossTerms {
            total: m,
            mixge: m,
            binary: None,
            sparsity: None,
        });
    }
    let b = binary_loss(tape, weights, cfg.clamp_eps)?;
    let s = sparsity_loss(tape, weights)?;
    let total = tape.linear_combination(&[m, b, s], &[1.0, cfg.alpha, cfg.beta])?;
    Ok(LossTerms {
        total,
        mixge: m,
        binary: Some(b),
        sparsity: Some(s),
    })
}
