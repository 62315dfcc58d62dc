use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::{Dataset, Split};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nas::{mixge, synthesized_loss, LossConfig};
use crate::optim::Adam;
use crate::supernet::{BnMode, Network};
use crate::tensor::Tensor;

/// Reported PSNR for a perfect match.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10·log10(1 / MSE)` for images with peak 1; infinite when they match.
pub fn psnr(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape("psnr", format!("{:?} vs {:?}", pred.shape(), gt.shape())));
    }
    let mse = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.numel() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Anything that maps an interferogram to a normalized phase image.
pub trait Predictor: Sync {
    fn predict(&self, image: &Tensor) -> Result<Tensor>;
}

/// A network evaluated with a fixed batch-norm mode.
#[derive(Debug, Clone, Copy)]
pub struct Inference<'a> {
    pub net: &'a Network,
    pub mode: BnMode,
}

impl Predictor for Inference<'_> {
    fn predict(&self, image: &Tensor) -> Result<Tensor> {
        self.net.predict(image, self.mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean PSNR with each image capped at [`PSNR_CAP_DB`].
    pub psnr_db: f64,
    pub mixge: f64,
}

fn mixge_value(pred: &Tensor, gt: &Tensor, lambda: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.leaf(pred.clone());
    let g = tape.leaf(gt.clone());
    let m = mixge(&mut tape, p, g, lambda)?;
    tape.value(m).item()
}

/// Mean PSNR and MixGE over one split. Images are processed in parallel and
/// reduced in index order.
pub fn evaluate(model: &impl Predictor, data: &Dataset, split: Split, lambda: f64) -> Result<Metrics> {
    let idx = data.split(split);
    if idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{split:?} split is empty")));
    }
    let per: Vec<(f64, f64)> = idx
        .par_iter()
        .map(|&i| {
            let s = &data.pairs[i];
            let pred = model.predict(&s.input)?;
            Ok((psnr(&pred, &s.target)?.min(PSNR_CAP_DB), mixge_value(&pred, &s.target, lambda)?))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(Metrics {
        psnr_db: per.iter().map(|p| p.0).sum::<f64>() / n,
        mixge: per.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

/// Median wall-clock milliseconds of single-image forward passes after one
/// warm-up pass.
pub fn measure_latency(model: &impl Predictor, size: usize, repeats: usize) -> Result<f64> {
    if repeats < 3 {
        return Err(Error::Invalid(format!("need at least 3 repeats, got {repeats}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let image = Tensor::from_fn([1, 1, size, size], |_, _, _, _| rng.random_range(0.0..1.0));
    model.predict(&image)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(model.predict(&image)?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[repeats / 2])
}

/// Loss values of one optimization step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub mixge: f64,
    pub binary: f64,
    pub sparsity: f64,
}

/// One Adam step on a single pair. With `arch_terms` the binarization and
/// sparsity terms join the loss; otherwise only MixGE is used.
pub fn train_step(
    net: &mut Network,
    opt: &mut Adam,
    input: &Tensor,
    target: &Tensor,
    loss: &LossConfig,
    arch_terms: bool,
) -> Result<StepLoss> {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let f = net.forward(&mut tape, x, BnMode::Batch)?;
    let gt = tape.leaf(target.clone());
    let weights = if arch_terms { &f.weights[..] } else { &[] };
    let terms = synthesized_loss(&mut tape, f.output, gt, weights, loss)?;
    let value = |v| tape.value(v).item();
    let out = StepLoss {
        total: value(terms.total)?,
        mixge: value(terms.mixge)?,
        binary: terms.binary.map(value).transpose()?.unwrap_or(0.0),
        sparsity: terms.sparsity.map(value).transpose()?.unwrap_or(0.0),
    };
    if !out.total.is_finite() {
        return Err(Error::Invalid("training loss is not finite".into()));
    }
    let grads = tape.backward(terms.total)?;
    net.params_mut().accumulate(&grads);
    opt.step(net.params_mut());
    net.update_running_stats(&f.stats);
    Ok(out)
}

/// Random `size × size` window of both images, same position.
pub fn crop_pair(input: &Tensor, target: &Tensor, size: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tensor)> {
    let [_, _, h, w] = input.shape();
    if size > h || size > w || target.shape() != input.shape() {
        return Err(Error::shape("crop_pair", format!("cannot crop {size} from {h}x{w}")));
    }
    let top = rng.random_range(0..=h - size);
    let left = rng.random_range(0..=w - size);
    let cut = |t: &Tensor| Tensor::from_fn([1, 1, size, size], |_, _, r, c| t.at(0, 0, top + r, left + c));
    Ok((cut(input), cut(target)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub mixge_lambda: f64,
    pub seed: u64,
    /// Batch-norm mode for validation and test passes.
    pub eval_bn: BnMode,
    /// Train on random square crops of this size instead of full frames.
    pub crop: Option<usize>,
}

impl TrainConfig {
    pub fn desk(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            lr: 0.008,
            mixge_lambda: 1.0,
            seed,
            eval_bn: BnMode::Batch,
            crop: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training MixGE.
    pub train_loss: f64,
    pub val_psnr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation PSNR.
    pub best: Network,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Per-epoch training order: the training split shuffled by `rng`.
pub(crate) fn epoch_order(train: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order = train.to_vec();
    order.shuffle(rng);
    order
}

/// Trains on MixGE alone with batch size 1, keeping the parameters with the
/// best validation PSNR.
pub fn train(mut net: Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Invalid(format!("learning rate {} must be positive", cfg.lr)));
    }
    let loss = LossConfig {
        mixge_lambda: cfg.mixge_lambda,
        ..LossConfig::default()
    };
    let mut opt = Adam::new(net.params(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, usize, Network)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        for i in epoch_order(&data.train, &mut rng) {
            let s = &data.pairs[i];
            let step = match cfg.crop {
                Some(c) => {
                    let (x, y) = crop_pair(&s.input, &s.target, c, &mut rng)?;
                    train_step(&mut net, &mut opt, &x, &y, &loss, false)?
                }
                None => train_step(&mut net, &mut opt, &s.input, &s.target, &loss, false)?,
            };
            sum += step.mixge;
        }
        let val = evaluate(&Inference { net: &net, mode: cfg.eval_bn }, data, Split::Val, cfg.mixge_lambda)?;
        history.push(EpochRecord {
            epoch,
            train_loss: sum / data.train.len() as f64,
            val_psnr: val.psnr_db,
        });
        if best.as_ref().is_none_or(|(p, _, _)| val.psnr_db > *p) {
            best = Some((val.psnr_db, epoch, net.clone()));
        }
    }
    let (best_epoch, best) = match best {
        Some((_, e, n)) => (e, n),
        None => (0, net),
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// `epoch,train_loss,val_psnr` lines with a header.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_psnr\n");
    for r in history {
        s += &format!("{},{},{}\n", r.epoch, r.train_loss, r.val_psnr);
    }
    s
}

/// `key: value` lines.
pub fn summary_text(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
}
