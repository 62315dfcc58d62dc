//! Checkpoint files: a text manifest followed by `QPT1` tensors.
//!
//! ```text
//! fringeforge-checkpoint 1
//! meta epoch 12
//! levels 4
//! input 64 64
//! encoder 8 16 24 32
//! depth 64 8
//! ground 3 3
//! bn 1e-5 0.1
//! fusion weighted
//! edge E1 D1
//! tensor enc1.conv.weight 8 1 3 3 0
//! end
//! ```
//!
//! Each `tensor` line gives the name, shape and byte offset of a `QPT1`
//! record inside the payload that starts right after `end\n`. Parameters
//! come first, then running batch-norm statistics as `<layer>.running_mean`
//! and `<layer>.running_var`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::config::SuperNetConfig;
use super::graph::{Edge, Node};
use super::network::{Fusion, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "fringeforge-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Network plus free-form metadata such as the epoch it was taken at.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: BTreeMap<String, String>,
}

fn stat_tensor(v: &[f64]) -> Tensor {
    Tensor::new([v.len(), 1, 1, 1], v.to_vec()).expect("non-empty statistics")
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    fn tensors(&self) -> Vec<(String, Tensor)> {
        let net = &self.network;
        let mut out: Vec<(String, Tensor)> =
            net.params().iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect();
        for r in net.running_stats() {
            out.push((format!("{}.running_mean", r.name), stat_tensor(&r.mean)));
            out.push((format!("{}.running_var", r.name), stat_tensor(&r.var)));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = &self.network;
        let cfg = net.config();
        let mut head = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Format(format!("metadata entry {k:?} cannot be stored")));
            }
            head += &format!("meta {k} {v}\n");
        }
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        head += &format!("levels {}\n", cfg.levels);
        head += &format!("input {} {}\n", cfg.input_h, cfg.input_w);
        head += &format!("encoder {}\n", join(&cfg.encoder_depths));
        head += &format!("depth {} {}\n", cfg.depth_cap, cfg.depth_slope);
        head += &format!("ground {} {}\n", cfg.ground.0, cfg.ground.1);
        head += &format!("bn {:?} {:?}\n", cfg.bn_eps, cfg.bn_momentum);
        head += &format!("fusion {}\n", net.fusion().name());
        for e in net.edges() {
            head += &format!("edge {e}\n");
        }
        let mut payload = Vec::new();
        for (name, t) in self.tensors() {
            head += &format!("tensor {name} {} {}\n", join(&t.shape()), payload.len());
            t.write_qpt(&mut payload)?;
        }
        head += "end\n";
        let mut out = head.into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read(bytes)
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = String::new();
        let mut lineno = 0usize;
        let mut next = |input: &mut R, line: &mut String| -> Result<Option<usize>> {
            line.clear();
            lineno += 1;
            let n = input.read_line(line)?;
            Ok((n > 0).then_some(lineno))
        };
        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

        next(&mut input, &mut line)?.ok_or_else(|| Error::Format("empty checkpoint".into()))?;
        let mut first = line.split_whitespace();
        if first.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Format("not a fringeforge checkpoint".into()));
        }
        let found = first.next().unwrap_or("?");
        if found != CHECKPOINT_VERSION.to_string() {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION.to_string(),
                found: found.to_string(),
            });
        }

        let mut meta = BTreeMap::new();
        let mut fields: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut entries: Vec<(String, [usize; 4], usize)> = Vec::new();
        loop {
            let no = next(&mut input, &mut line)?
                .ok_or_else(|| Error::Format("manifest ends without an `end` line".into()))?;
            let text = line.trim_end_matches('\n');
            if text == "end" {
                break;
            }
            let mut parts = text.split(' ');
            let key = parts.next().unwrap_or("");
            let rest: Vec<&str> = parts.collect();
            match key {
                "meta" => {
                    let (k, v) = text
                        .strip_prefix("meta ")
                        .and_then(|t| t.split_once(' '))
                        .ok_or_else(|| parse_err(no, "meta needs a key and a value".into()))?;
                    meta.insert(k.to_string(), v.to_string());
                }
                "edge" => {
                    if rest.len() != 2 {
                        return Err(parse_err(no, "edge needs SRC DST".into()));
                    }
                    let src: Node = rest[0].parse().map_err(|e: Error| parse_err(no, e.to_string()))?;
                    let dst = match rest[1].parse::<Node>() {
                        Ok(Node::D(l)) => l,
                        _ => return Err(parse_err(no, format!("bad edge target {:?}", rest[1]))),
                    };
                    edges.push(Edge::new(src, dst));
                }
                "tensor" => {
                    if rest.len() != 6 {
                        return Err(parse_err(no, "tensor needs NAME N C H W OFFSET".into()));
                    }
                    let nums: Vec<usize> = rest[1..]
                        .iter()
                        .map(|s| s.parse().map_err(|_| parse_err(no, format!("bad number {s:?}"))))
                        .collect::<Result<_>>()?;
                    entries.push((rest[0].to_string(), [nums[0], nums[1], nums[2], nums[3]], nums[4]));
                }
                "levels" | "input" | "encoder" | "depth" | "ground" | "bn" | "fusion" => {
                    fields.insert(key.to_string(), rest.iter().map(|s| s.to_string()).collect());
                }
                _ => return Err(parse_err(no, format!("unknown manifest key {key:?}"))),
            }
        }

        let field = |k: &str| -> Result<&Vec<String>> {
            fields.get(k).ok_or_else(|| Error::Format(format!("manifest is missing `{k}`")))
        };
        let nums = |k: &str, n: Option<usize>| -> Result<Vec<usize>> {
            let v = field(k)?;
            if n.is_some_and(|n| v.len() != n) {
                return Err(Error::Format(format!("`{k}` has {} values", v.len())));
            }
            v.iter()
                .map(|s| s.parse().map_err(|_| Error::Format(format!("bad `{k}` value {s:?}"))))
                .collect()
        };
        let floats = |k: &str| -> Result<Vec<f64>> {
            field(k)?
                .iter()
                .map(|s| s.parse().map_err(|_| Error::Format(format!("bad `{k}` value {s:?}"))))
                .collect()
        };
        let levels = nums("levels", Some(1))?[0];
        let input_hw = nums("input", Some(2))?;
        let depth = nums("depth", Some(2))?;
        let ground = nums("ground", Some(2))?;
        let bn = floats("bn")?;
        if bn.len() != 2 {
            return Err(Error::Format("`bn` needs eps and momentum".into()));
        }
        let fusion_name = field("fusion")?.first().cloned().unwrap_or_default();
        let cfg = SuperNetConfig {
            levels,
            input_h: input_hw[0],
            input_w: input_hw[1],
            encoder_depths: nums("encoder", None)?,
            depth_cap: depth[0],
            depth_slope: depth[1],
            ground: (ground[0], ground[1]),
            bn_eps: bn[0],
            bn_momentum: bn[1],
        };
        let mut network = Network::new(cfg, Fusion::parse(&fusion_name)?, &edges, 0)?;

        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, shape, offset) in entries {
            let bytes = payload
                .get(offset..)
                .ok_or_else(|| Error::Format(format!("tensor {name}: offset {offset} past end of payload")))?;
            let t = Tensor::read_qpt(bytes)?;
            if t.shape() != shape {
                return Err(Error::Format(format!(
                    "tensor {name}: manifest shape {shape:?} but payload {:?}",
                    t.shape()
                )));
            }
            tensors.insert(name, t);
        }
        let mut take = |name: &str| -> Result<Tensor> {
            tensors
                .remove(name)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {name}")))
        };
        let ids: Vec<_> = network.params().iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in ids {
            let t = take(&name)?;
            network
                .params_mut()
                .set_value(id, t)
                .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        }
        for r in network.running_stats_mut() {
            let mean = take(&format!("{}.running_mean", r.name))?;
            let var = take(&format!("{}.running_var", r.name))?;
            if mean.numel() != r.mean.len() || var.numel() != r.var.len() {
                return Err(Error::Format(format!("running statistics of {} have the wrong length", r.name)));
            }
            r.mean = mean.into_data();
            r.var = var.into_data();
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Format(format!("unexpected tensor {extra}")));
        }
        Ok(Self { network, meta })
    }
}
