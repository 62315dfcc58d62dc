use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::SuperNetConfig;
use super::graph::{Edge, Node};
use crate::autodiff::{sigmoid, BatchStats, Tape, Var};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// How a decoder stage combines its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Each branch ends in batch norm and is scaled by `sigmoid(θ)`.
    Weighted,
    /// Plain sum of branches without batch norm or weights.
    Plain,
}

impl Fusion {
    pub fn name(self) -> &'static str {
        match self {
            Fusion::Weighted => "weighted",
            Fusion::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Fusion::Weighted),
            "plain" => Ok(Fusion::Plain),
            _ => Err(Error::Format(format!("unknown fusion mode {s:?}"))),
        }
    }
}

/// Which statistics batch norm normalizes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current input; reported back for running averages.
    Batch,
    /// Stored running averages.
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    stat: usize,
}

#[derive(Debug, Clone)]
struct Branch {
    edge: Edge,
    conv: Conv,
    norm: Option<Norm>,
    theta: Option<ParamId>,
}

#[derive(Debug, Clone)]
struct DecoderStage {
    branches: Vec<Branch>,
    conv: Conv,
    norm: Norm,
}

/// Encoder–decoder phase-retrieval network over an explicit edge set.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: SuperNetConfig,
    fusion: Fusion,
    edges: Vec<Edge>,
    params: ParamStore,
    running: Vec<RunningStats>,
    encoder: Vec<(Conv, Norm)>,
    /// Index `l − 1`; `None` for pruned stages.
    decoder: Vec<Option<DecoderStage>>,
    head: Conv,
}

/// Encoder outputs plus decoder stages as they are filled in.
#[derive(Debug, Clone)]
pub struct StageFeatures {
    pub e: Vec<Var>,
    pub g: Var,
    pub d: Vec<Option<Var>>,
    pub input_h: usize,
    pub input_w: usize,
}

impl StageFeatures {
    pub fn get(&self, node: Node) -> Result<Var> {
        let missing = || Error::Architecture(format!("feature {node} is not available"));
        match node {
            Node::E(i) => self.e.get(i.wrapping_sub(1)).copied().ok_or_else(missing),
            Node::G => Ok(self.g),
            Node::D(j) => self.d.get(j.wrapping_sub(1)).copied().flatten().ok_or_else(missing),
        }
    }
}

/// Result of [`Network::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: Var,
    /// `sigmoid(θ)` per edge in [`Network::edges`] order; empty for plain fusion.
    pub weights: Vec<Var>,
    /// Batch statistics per norm layer, in [`BnMode::Batch`] only.
    pub stats: Vec<(usize, BatchStats)>,
}

impl Network {
    /// Builds the network over `edges` with fresh parameters drawn from `seed`.
    /// Kernels are Glorot-uniform, biases and `β` zero, `γ` one, `θ` zero.
    pub fn new(cfg: SuperNetConfig, fusion: Fusion, edges: &[Edge], seed: u64) -> Result<Self> {
        cfg.validate()?;
        let levels = cfg.levels;
        let mut seen = BTreeSet::new();
        for e in edges {
            e.validate(levels)?;
            if !seen.insert(*e) {
                return Err(Error::Architecture(format!("duplicate edge {e}")));
            }
        }
        let mut by_stage: Vec<Vec<Edge>> = vec![Vec::new(); levels];
        for e in edges {
            by_stage[e.dst - 1].push(*e);
        }
        if by_stage[0].is_empty() {
            return Err(Error::ArchitectureCollapsed);
        }
        for e in edges {
            if let Node::D(j) = e.src {
                if by_stage[j - 1].is_empty() {
                    return Err(Error::Architecture(format!("{e}: source stage D{j} has no inputs")));
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut running = Vec::new();
        let mut norm = |params: &mut ParamStore, name: &str, c: usize| {
            running.push(RunningStats {
                name: name.to_string(),
                mean: vec![0.0; c],
                var: vec![1.0; c],
            });
            Norm {
                gamma: params.add_vector(format!("{name}.gamma"), c, 1.0),
                beta: params.add_vector(format!("{name}.beta"), c, 0.0),
                stat: running.len() - 1,
            }
        };
        let mut conv = |params: &mut ParamStore, name: &str, c_out: usize, c_in: usize| Conv {
            w: params.add_kernel(format!("{name}.weight"), c_out, c_in, &mut rng),
            b: params.add_vector(format!("{name}.bias"), c_out, 0.0),
        };

        let mut encoder = Vec::with_capacity(levels);
        for l in 1..=levels {
            let c_in = if l == 1 { 1 } else { cfg.encoder_depth(l - 1) };
            let c = conv(&mut params, &format!("enc{l}.conv"), cfg.encoder_depth(l), c_in);
            let n = norm(&mut params, &format!("enc{l}.bn"), cfg.encoder_depth(l));
            encoder.push((c, n));
        }

        let mut decoder = vec![None; levels];
        for l in (1..=levels).rev() {
            if by_stage[l - 1].is_empty() {
                continue;
            }
            let d = cfg.decoder_depth(l);
            let mut branches = Vec::new();
            for e in &by_stage[l - 1] {
                let tag = format!("edge.{}", e.label());
                let c_in = match e.src {
                    Node::E(i) => cfg.encoder_depth(i),
                    Node::G => cfg.encoder_depth(levels),
                    Node::D(j) => cfg.decoder_depth(j),
                };
                let c = conv(&mut params, &format!("{tag}.conv"), d, c_in);
                let (n, theta) = match fusion {
                    Fusion::Weighted => (
                        Some(norm(&mut params, &format!("{tag}.bn"), d)),
                        Some(params.add(format!("{tag}.theta"), Tensor::scalar(0.0))),
                    ),
                    Fusion::Plain => (None, None),
                };
                branches.push(Branch {
                    edge: *e,
                    conv: c,
                    norm: n,
                    theta,
                });
            }
            let c = conv(&mut params, &format!("dec{l}.conv"), d, d);
            let n = norm(&mut params, &format!("dec{l}.bn"), d);
            decoder[l - 1] = Some(DecoderStage {
                branches,
                conv: c,
                norm: n,
            });
        }
        let head = conv(&mut params, "head.conv", 1, cfg.decoder_depth(1));

        let edges = decoder
            .iter()
            .rev()
            .flatten()
            .flat_map(|s| s.branches.iter().map(|b| b.edge))
            .collect();
        Ok(Self {
            cfg,
            fusion,
            edges,
            params,
            running,
            encoder,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &SuperNetConfig {
        &self.cfg
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    /// Edges in parameter order: target stages from deepest to 1.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Decoder stages that exist, ascending.
    pub fn stages(&self) -> Vec<usize> {
        (1..=self.cfg.levels).filter(|l| self.decoder[l - 1].is_some()).collect()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats] {
        &mut self.running
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn branches(&self) -> impl Iterator<Item = &Branch> {
        self.decoder.iter().rev().flatten().flat_map(|s| s.branches.iter())
    }

    /// Latent `θ` per edge in [`Network::edges`] order; empty for plain fusion.
    pub fn theta_ids(&self) -> Vec<ParamId> {
        self.branches().filter_map(|b| b.theta).collect()
    }

    /// Current `(edge, sigmoid(θ))` pairs; empty for plain fusion.
    pub fn connection_weights(&self) -> Vec<(Edge, f64)> {
        self.branches()
            .filter_map(|b| b.theta.map(|t| (b.edge, sigmoid(self.params.value(t).data()[0]))))
            .collect()
    }

    /// Sets `θ` for one edge.
    pub fn set_theta(&mut self, edge: Edge, theta: f64) -> Result<()> {
        let id = self
            .branches()
            .find(|b| b.edge == edge)
            .and_then(|b| b.theta)
            .ok_or_else(|| Error::Architecture(format!("no weighted edge {edge}")))?;
        self.params.set_value(id, Tensor::scalar(theta))
    }

    /// Folds batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[(usize, BatchStats)]) {
        let m = self.cfg.bn_momentum;
        for (idx, s) in stats {
            let r = &mut self.running[*idx];
            for (acc, &v) in r.mean.iter_mut().zip(&s.mean) {
                *acc = (1.0 - m) * *acc + m * v;
            }
            for (acc, &v) in r.var.iter_mut().zip(&s.var) {
                *acc = (1.0 - m) * *acc + m * v;
            }
        }
    }

    /// Records the full forward pass of a `[1, 1, H, W]` image.
    pub fn forward(&self, tape: &mut Tape, image: Var, mode: BnMode) -> Result<Forward> {
        let mut pass = ForwardPass::new(self, tape, mode);
        let mut feats = pass.encode(image)?;
        for l in (1..=self.cfg.levels).rev() {
            if self.decoder[l - 1].is_none() {
                continue;
            }
            let t = pass.fuse(l, &feats)?;
            feats.d[l - 1] = Some(pass.decode_stage(l, t)?);
        }
        let d1 = feats.get(Node::D(1))?;
        let output = pass.regression_head(d1, feats.input_h, feats.input_w)?;
        let weights = pass.weights();
        Ok(Forward {
            output,
            weights,
            stats: pass.stats,
        })
    }

    /// Inference on a plain `[1, 1, H, W]` tensor.
    pub fn predict(&self, image: &Tensor, mode: BnMode) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.leaf(image.clone());
        let f = self.forward(&mut tape, x, mode)?;
        Ok(tape.value(f.output).clone())
    }
}

/// A forward pass in progress. Exposes the individual building blocks.
pub struct ForwardPass<'a> {
    net: &'a Network,
    tape: &'a mut Tape,
    mode: BnMode,
    weights: HashMap<Edge, Var>,
    pub stats: Vec<(usize, BatchStats)>,
}

impl<'a> ForwardPass<'a> {
    pub fn new(net: &'a Network, tape: &'a mut Tape, mode: BnMode) -> Self {
        Self {
            net,
            tape,
            mode,
            weights: HashMap::new(),
            stats: Vec::new(),
        }
    }

    pub fn tape(&mut self) -> &mut Tape {
        self.tape
    }

    fn conv(&mut self, x: Var, c: Conv, stride: usize) -> Result<Var> {
        let w = self.tape.param(&self.net.params, c.w);
        let b = self.tape.param(&self.net.params, c.b);
        self.tape.conv2d(x, w, b, stride)
    }

    fn norm(&mut self, x: Var, n: Norm) -> Result<Var> {
        let g = self.tape.param(&self.net.params, n.gamma);
        let b = self.tape.param(&self.net.params, n.beta);
        let eps = self.net.cfg.bn_eps;
        match self.mode {
            BnMode::Batch => {
                let (v, s) = self.tape.batch_norm(x, g, b, eps)?;
                self.stats.push((n.stat, s));
                Ok(v)
            }
            BnMode::Running => {
                let r = &self.net.running[n.stat];
                self.tape.batch_norm_fixed(x, g, b, &r.mean, &r.var, eps)
            }
        }
    }

    fn weight(&mut self, b: &Branch) -> Option<Var> {
        let theta = b.theta?;
        if let Some(&w) = self.weights.get(&b.edge) {
            return Some(w);
        }
        let t = self.tape.param(&self.net.params, theta);
        let w = self.tape.sigmoid(t);
        self.weights.insert(b.edge, w);
        Some(w)
    }

    /// Connection weights of every edge, recorded on the tape.
    pub fn weights(&mut self) -> Vec<Var> {
        let net = self.net;
        net.branches().filter_map(|b| self.weight(b)).collect()
    }

    /// Stride-2 conv, batch norm and relu6 per stage, then `G` pooled from
    /// the deepest stage.
    pub fn encode(&mut self, image: Var) -> Result<StageFeatures> {
        let [n, c, h, w] = self.tape.shape(image);
        if n != 1 || c != 1 {
            return Err(Error::shape("encode", format!("expected a [1, 1, H, W] image, got [{n}, {c}, {h}, {w}]")));
        }
        self.net.cfg.check_input(h, w)?;
        let mut e = Vec::with_capacity(self.net.cfg.levels);
        let mut x = image;
        let net = self.net;
        for &(conv, norm) in &net.encoder {
            let y = self.conv(x, conv, 2)?;
            let y = self.norm(y, norm)?;
            x = self.tape.relu6(y);
            e.push(x);
        }
        let (gh, gw) = self.net.cfg.ground;
        let g = self.tape.avg_pool_to(x, gh, gw)?;
        Ok(StageFeatures {
            e,
            g,
            d: vec![None; self.net.cfg.levels],
            input_h: h,
            input_w: w,
        })
    }

    /// Fused input `T_l`. Larger features are resized before their conv,
    /// smaller or equal ones after it.
    pub fn fuse(&mut self, l: usize, feats: &StageFeatures) -> Result<Var> {
        let net = self.net;
        let stage = net.decoder[l - 1]
            .as_ref()
            .ok_or_else(|| Error::Architecture(format!("decoder stage D{l} was pruned")))?;
        let (h, w) = SuperNetConfig::stage_size(l, feats.input_h, feats.input_w);
        let mut outs = Vec::with_capacity(stage.branches.len());
        let mut ws = Vec::with_capacity(stage.branches.len());
        for b in &stage.branches {
            let m = feats.get(b.edge.src)?;
            let [_, _, mh, _] = self.tape.shape(m);
            let y = if mh > h {
                let r = self.tape.bilinear_resize(m, h, w)?;
                self.conv(r, b.conv, 1)?
            } else {
                let c = self.conv(m, b.conv, 1)?;
                self.tape.bilinear_resize(c, h, w)?
            };
            let y = match b.norm {
                Some(n) => self.norm(y, n)?,
                None => y,
            };
            outs.push(y);
            if let Some(wv) = self.weight(b) {
                ws.push(wv);
            }
        }
        match net.fusion {
            Fusion::Weighted => self.tape.weighted_sum(&outs, &ws),
            Fusion::Plain => self.tape.add(&outs),
        }
    }

    /// `relu6(bn(conv(relu6(T_l))))`.
    pub fn decode_stage(&mut self, l: usize, t: Var) -> Result<Var> {
        let stage = self.net.decoder[l - 1]
            .as_ref()
            .ok_or_else(|| Error::Architecture(format!("decoder stage D{l} was pruned")))?;
        let (conv, norm) = (stage.conv, stage.norm);
        let x = self.tape.relu6(t);
        let x = self.conv(x, conv, 1)?;
        let x = self.norm(x, norm)?;
        Ok(self.tape.relu6(x))
    }

    /// Conv to one channel, bilinear resize to the input size, relu6, ÷ 6.
    pub fn regression_head(&mut self, d1: Var, h: usize, w: usize) -> Result<Var> {
        let x = self.conv(d1, self.net.head, 1)?;
        let x = self.tape.bilinear_resize(x, h, w)?;
        let x = self.tape.relu6(x);
        Ok(self.tape.scale(x, 1.0 / 6.0))
    }
}
