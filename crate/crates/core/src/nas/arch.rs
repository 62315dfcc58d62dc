//! Pruned architectures and their text form.
//!
//! ```text
//! # comment
//! levels 4
//! sigma 0.5
//! source best-epoch-57
//! edge E1 D1
//! edge D3 D1
//! ```
//!
//! Only `edge` lines are required; `levels` defaults to the deepest index
//! mentioned.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::supernet::{candidate_edges, Edge, Node};

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    levels: usize,
    edges: Vec<Edge>,
    stages: Vec<usize>,
    /// Threshold the architecture was pruned at.
    pub sigma: Option<f64>,
    /// Identifier of the checkpoint it came from.
    pub source: Option<String>,
}

impl Architecture {
    /// Validates and canonicalizes (sorted, deduplicated) an edge set.
    pub fn new(levels: usize, edges: &[Edge]) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Invalid("architecture needs at least one stage".into()));
        }
        for e in edges {
            e.validate(levels)?;
        }
        let edges: Vec<Edge> = edges.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let targets: BTreeSet<usize> = edges.iter().map(|e| e.dst).collect();
        if !targets.contains(&1) {
            return Err(Error::ArchitectureCollapsed);
        }
        for e in &edges {
            if let Node::D(j) = e.src {
                if !targets.contains(&j) {
                    return Err(Error::Architecture(format!("{e}: source stage D{j} has no inputs")));
                }
            }
        }
        for &l in targets.iter().filter(|&&l| l != 1) {
            if !edges.iter().any(|e| e.src == Node::D(l)) {
                return Err(Error::Architecture(format!("stage D{l} has no consumer")));
            }
        }
        Ok(Self {
            levels,
            edges,
            stages: targets.into_iter().collect(),
            sigma: None,
            source: None,
        })
    }

    /// Every candidate edge.
    pub fn full(levels: usize) -> Self {
        Self::new(levels, &candidate_edges(levels)).expect("the candidate set is a valid architecture")
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Kept edges in canonical order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Kept decoder stages, ascending; always starts with 1.
    pub fn stages(&self) -> &[usize] {
        &self.stages
    }

    pub fn export(&self) -> String {
        let mut s = String::from("# fringeforge architecture\n");
        s += &format!("levels {}\n", self.levels);
        if let Some(sigma) = self.sigma {
            s += &format!("sigma {sigma:?}\n");
        }
        if let Some(src) = &self.source {
            s += &format!("source {src}\n");
        }
        for e in &self.edges {
            s += &format!("edge {e}\n");
        }
        s
    }

    pub fn import(text: &str) -> Result<Self> {
        let mut levels = None;
        let mut sigma = None;
        let mut source = None;
        let mut edges = Vec::new();
        let mut deepest = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |msg: String| Error::Parse { line, msg };
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            match parts[0] {
                "levels" if parts.len() == 2 => {
                    levels = Some(parts[1].parse::<usize>().map_err(|_| bad(format!("bad level count {:?}", parts[1])))?);
                }
                "sigma" if parts.len() == 2 => {
                    sigma = Some(parts[1].parse::<f64>().map_err(|_| bad(format!("bad sigma {:?}", parts[1])))?);
                }
                "source" if parts.len() >= 2 => {
                    source = Some(t["source".len()..].trim().to_string());
                }
                "edge" if parts.len() == 3 => {
                    let src: Node = parts[1].parse().map_err(|e: Error| bad(e.to_string()))?;
                    let dst = match parts[2].parse::<Node>() {
                        Ok(Node::D(l)) => l,
                        _ => return Err(bad(format!("edge target must be a decoder stage, got {:?}", parts[2]))),
                    };
                    let src_idx = match src {
                        Node::E(i) | Node::D(i) => i,
                        Node::G => 0,
                    };
                    deepest = deepest.max(src_idx).max(dst);
                    edges.push(Edge::new(src, dst));
                }
                _ => return Err(bad(format!("unrecognized line {t:?}"))),
            }
        }
        let levels = levels.unwrap_or(deepest.max(1));
        let mut arch = Self::new(levels, &edges)?;
        arch.sigma = sigma;
        arch.source = source;
        Ok(arch)
    }
}

/// Drops edges with `w < sigma`, then repeatedly removes stages with no
/// inputs and stages other than `D1` whose output feeds nothing.
pub fn prune(weights: &[(Edge, f64)], levels: usize, sigma: f64) -> Result<Architecture> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Invalid(format!("sigma {sigma} must lie in (0, 1)")));
    }
    for (e, _) in weights {
        e.validate(levels)?;
    }
    let mut kept: Vec<Edge> = weights.iter().filter(|(_, w)| *w >= sigma).map(|(e, _)| *e).collect();
    loop {
        let has_input: BTreeSet<usize> = kept.iter().map(|e| e.dst).collect();
        let consumed: BTreeSet<usize> = kept
            .iter()
            .filter_map(|e| match e.src {
                Node::D(j) => Some(j),
                _ => None,
            })
            .collect();
        let alive = |l: usize| has_input.contains(&l) && (l == 1 || consumed.contains(&l));
        let before = kept.len();
        kept.retain(|e| {
            let src_ok = match e.src {
                Node::D(j) => alive(j),
                _ => true,
            };
            src_ok && alive(e.dst)
        });
        if kept.len() == before {
            break;
        }
    }
    let mut arch = Architecture::new(levels, &kept)?;
    arch.sigma = Some(sigma);
    Ok(arch)
}

/// Largest threshold at which [`prune`] still leaves `D1` an input: the
/// bottleneck weight of the widest path from an encoder or ground node to
/// `D1`. Zero when no such path exists.
pub fn viable_sigma(weights: &[(Edge, f64)], levels: usize) -> Result<f64> {
    for (e, _) in weights {
        e.validate(levels)?;
    }
    let mut best = vec![0.0f64; levels + 2];
    for l in (1..=levels).rev() {
        best[l] = weights
            .iter()
            .filter(|(e, _)| e.dst == l)
            .map(|(e, w)| match e.src {
                Node::D(j) => w.min(best[j]),
                _ => *w,
            })
            .fold(0.0, f64::max);
    }
    Ok(best[1])
}
