//! Names for feature nodes and the candidate connection set.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A feature that can feed a decoder stage. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    E(usize),
    G,
    D(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::E(i) => write!(f, "E{i}"),
            Node::G => write!(f, "G"),
            Node::D(j) => write!(f, "D{j}"),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("unknown feature name {s:?}"));
        if s == "G" {
            return Ok(Node::G);
        }
        let (kind, idx) = s.split_at_checked(1).ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        match kind {
            "E" => Ok(Node::E(idx)),
            "D" => Ok(Node::D(idx)),
            _ => Err(bad()),
        }
    }
}

/// Connection from a feature into decoder stage `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: Node,
    pub dst: usize,
}

impl Edge {
    pub fn new(src: Node, dst: usize) -> Self {
        Self { src, dst }
    }

    /// Checks the edge against the candidate set of an `levels`-stage net.
    /// Decoder-to-decoder edges must run from a deeper stage to a shallower one.
    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.dst == 0 || self.dst > levels {
            return Err(Error::Architecture(format!("{self}: target stage outside 1..={levels}")));
        }
        match self.src {
            Node::E(i) if i == 0 || i > levels => {
                Err(Error::Architecture(format!("{self}: encoder stage outside 1..={levels}")))
            }
            Node::D(j) if j <= self.dst => Err(Error::Acyclicity(format!(
                "{self}: decoder edges must run from a deeper stage to a shallower one"
            ))),
            Node::D(j) if j > levels => {
                Err(Error::Architecture(format!("{self}: decoder stage outside 1..={levels}")))
            }
            _ => Ok(()),
        }
    }

    /// Display name used in CSV files, e.g. `E1-D3`.
    pub fn label(&self) -> String {
        format!("{}-D{}", self.src, self.dst)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} D{}", self.src, self.dst)
    }
}

/// Every candidate edge, grouped by target stage `1..=L`; within a stage the
/// order is `E1..EL`, `G`, `D(l+1)..DL`.
pub fn candidate_edges(levels: usize) -> Vec<Edge> {
    let mut out = Vec::with_capacity(count_candidate_connections(levels));
    for l in 1..=levels {
        out.extend((1..=levels).map(|i| Edge::new(Node::E(i), l)));
        out.push(Edge::new(Node::G, l));
        out.extend((l + 1..=levels).map(|j| Edge::new(Node::D(j), l)));
    }
    out
}

/// `L(L+1) + L(L−1)/2`: `L` encoder features plus `G` into each of `L`
/// stages, and one edge per ordered pair of decoder stages.
pub fn count_candidate_connections(levels: usize) -> usize {
    levels * (levels + 1) + levels * levels.saturating_sub(1) / 2
}
