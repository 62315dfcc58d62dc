use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::LossConfig;
use crate::error::{Error, Result};
use crate::harness::{epoch_order, evaluate, train_step, Dataset, Inference, Split};
use crate::optim::Adam;
use crate::supernet::{super_net, BnMode, Edge, Network, SuperNetConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSchedule {
    /// Epochs on MixGE alone with every `θ` frozen at 0.
    pub pretrain_epochs: usize,
    /// Epochs on the synthesized loss with everything trainable.
    pub joint_epochs: usize,
    pub learning_rate: f64,
    /// Batch-norm mode for validation passes.
    pub eval_bn: BnMode,
}

impl SearchSchedule {
    pub fn new(pretrain_epochs: usize, joint_epochs: usize, learning_rate: f64) -> Self {
        Self {
            pretrain_epochs,
            joint_epochs,
            learning_rate,
            eval_bn: BnMode::Batch,
        }
    }

    /// 100 + 200 epochs at 0.008.
    pub fn full() -> Self {
        Self::new(100, 200, 0.008)
    }

    /// 30 + 60 epochs at 0.008.
    pub fn toy() -> Self {
        Self::new(30, 60, 0.008)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchEpoch {
    /// 1-based, counted across both phases.
    pub epoch: usize,
    /// 1 for pretraining, 2 for the joint phase.
    pub phase: u8,
    /// Mean training MixGE.
    pub mixge: f64,
    /// Mean training synthesized loss (equals `mixge` in phase 1).
    pub total: f64,
    /// Binarization loss of the weights at the end of the epoch.
    pub binary: f64,
    /// Sparsity loss of the weights at the end of the epoch.
    pub sparsity: f64,
    pub val_psnr: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Super-net with the best validation PSNR.
    pub best: Network,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub history: Vec<SearchEpoch>,
    /// Connection weights after each epoch.
    pub weight_history: Vec<Vec<(Edge, f64)>>,
}

fn entropy(w: f64, eps: f64) -> f64 {
    let w = w.clamp(eps, 1.0 - eps);
    -w * w.ln() - (1.0 - w) * (1.0 - w).ln()
}

/// Two-phase search on the training split with batch size 1.
///
/// Phase 1 trains features on MixGE with `θ` frozen, so every weight sits at
/// 0.5. Phase 2 releases `θ` and adds the binarization and sparsity terms.
/// The best checkpoint is chosen by validation PSNR among phase-2 epochs, or
/// among phase-1 epochs when there is no phase 2, since only phase 2 moves
/// the weights that pruning reads.
pub fn search(
    cfg: &SuperNetConfig,
    data: &Dataset,
    sched: &SearchSchedule,
    loss: &LossConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    loss.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::EmptyDataset("search needs non-empty train and validation splits".into()));
    }
    if !(sched.learning_rate > 0.0) {
        return Err(Error::Invalid(format!("learning rate {} must be positive", sched.learning_rate)));
    }
    let mut net = super_net(cfg.clone(), seed)?;
    let mut opt = Adam::new(net.params(), sched.learning_rate);
    let thetas = net.theta_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5e_a2c4);

    let mut history = Vec::new();
    let mut weight_history = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let total_epochs = sched.pretrain_epochs + sched.joint_epochs;
    for epoch in 1..=total_epochs {
        let joint = epoch > sched.pretrain_epochs;
        opt.set_frozen(&thetas, !joint);
        let (mut mix, mut tot) = (0.0, 0.0);
        for i in epoch_order(&data.train, &mut rng) {
            let s = &data.pairs[i];
            let step = train_step(&mut net, &mut opt, &s.input, &s.target, loss, joint)?;
            mix += step.mixge;
            tot += step.total;
        }
        let n = data.train.len() as f64;
        let val = evaluate(
            &Inference {
                net: &net,
                mode: sched.eval_bn,
            },
            data,
            Split::Val,
            loss.mixge_lambda,
        )?;
        let weights = net.connection_weights();
        let k = weights.len() as f64;
        history.push(SearchEpoch {
            epoch,
            phase: if joint { 2 } else { 1 },
            mixge: mix / n,
            total: tot / n,
            binary: weights.iter().map(|(_, w)| entropy(*w, loss.clamp_eps)).sum::<f64>() / k,
            sparsity: weights.iter().map(|(_, w)| w).sum::<f64>() / k,
            val_psnr: val.psnr_db,
        });
        weight_history.push(weights);
        let eligible = joint || sched.joint_epochs == 0;
        if eligible && best.as_ref().is_none_or(|(p, _, _)| val.psnr_db > *p) {
            best = Some((val.psnr_db, epoch, net.clone()));
        }
    }
    let (best_epoch, best) = match best {
        Some((_, e, n)) => (e, n),
        None => (0, net),
    };
    Ok(SearchOutcome {
        best,
        best_epoch,
        history,
        weight_history,
    })
}

/// `epoch,edge,w` lines with a header.
pub fn weight_history_csv(history: &[Vec<(Edge, f64)>]) -> String {
    let mut s = String::from("epoch,edge,w\n");
    for (i, ws) in history.iter().enumerate() {
        for (e, w) in ws {
            s += &format!("{},{},{}\n", i + 1, e.label(), w);
        }
    }
    s
}

/// `epoch,phase,mixge,total,binary,sparsity,val_psnr` lines with a header.
pub fn search_history_csv(history: &[SearchEpoch]) -> String {
    let mut s = String::from("epoch,phase,mixge,total,binary,sparsity,val_psnr\n");
    for r in history {
        s += &format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.phase, r.mixge, r.total, r.binary, r.sparsity, r.val_psnr
        );
    }
    s
}
