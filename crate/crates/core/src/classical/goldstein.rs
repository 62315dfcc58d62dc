//! Residue detection, Goldstein branch cuts and cut-respecting flood-fill
//! unwrapping.
//!
//! Residues live on plaquettes, the 2×2 pixel cells between pixel centers;
//! plaquette `(r, c)` has corners `(r, c)`, `(r, c+1)`, `(r+1, c+1)`,
//! `(r+1, c)`. A branch cut is a chain of steps between neighbouring
//! plaquettes (or from a border plaquette to the outside). Each step crosses
//! exactly one pixel-to-pixel link, and the [`CutMask`] records those links
//! as blocked.

use std::collections::VecDeque;
use std::f64::consts::PI;

use super::{wrap_value, Grid, PhaseMap};
use crate::error::{Error, Result};

/// Residue charges on the `(H-1) × (W-1)` plaquette grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueMap {
    pub h: usize,
    pub w: usize,
    pub charges: Vec<i8>,
}

impl ResidueMap {
    pub fn at(&self, r: usize, c: usize) -> i8 {
        self.charges[r * self.w + c]
    }

    pub fn total_charge(&self) -> i64 {
        self.charges.iter().map(|&q| q as i64).sum()
    }

    /// Plaquettes with non-zero charge, in raster order.
    pub fn residues(&self) -> Vec<(usize, usize, i8)> {
        self.charges
            .iter()
            .enumerate()
            .filter(|(_, &q)| q != 0)
            .map(|(i, &q)| (i / self.w, i % self.w, q))
            .collect()
    }
}

/// Blocked links between 4-neighbour pixels of an `H × W` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutMask {
    pub h: usize,
    pub w: usize,
    /// `horizontal[r * (w-1) + c]` blocks the link `(r, c) – (r, c+1)`.
    pub horizontal: Vec<bool>,
    /// `vertical[r * w + c]` blocks the link `(r, c) – (r+1, c)`.
    pub vertical: Vec<bool>,
}

impl CutMask {
    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            horizontal: vec![false; h * w.saturating_sub(1)],
            vertical: vec![false; h.saturating_sub(1) * w],
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.horizontal.iter().chain(&self.vertical).any(|&b| b)
    }

    pub fn cut_count(&self) -> usize {
        self.horizontal.iter().chain(&self.vertical).filter(|&&b| b).count()
    }

    pub fn h_blocked(&self, r: usize, c: usize) -> bool {
        self.horizontal[r * (self.w - 1) + c]
    }

    pub fn v_blocked(&self, r: usize, c: usize) -> bool {
        self.vertical[r * self.w + c]
    }

    /// Whether moving between 4-neighbours `a` and `b` crosses a cut.
    pub fn blocks(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let (r0, c0) = a.min(b);
        let (r1, c1) = a.max(b);
        if r0 == r1 && c1 == c0 + 1 {
            self.h_blocked(r0, c0)
        } else if c0 == c1 && r1 == r0 + 1 {
            self.v_blocked(r0, c0)
        } else {
            panic!("{a:?} and {b:?} are not 4-neighbours")
        }
    }

    fn block_h(&mut self, r: usize, c: usize) {
        self.horizontal[r * (self.w - 1) + c] = true;
    }

    fn block_v(&mut self, r: usize, c: usize) {
        self.vertical[r * self.w + c] = true;
    }

    /// Blocks the link crossed by a step between neighbouring plaquettes.
    fn cut_step(&mut self, from: (usize, usize), to: (usize, usize)) {
        let (a, b) = (from.min(to), from.max(to));
        if a.0 == b.0 {
            // Plaquettes (r, c) and (r, c+1) share pixels (r, c+1) and (r+1, c+1).
            self.block_v(a.0, b.1);
        } else {
            // Plaquettes (r, c) and (r+1, c) share pixels (r+1, c) and (r+1, c+1).
            self.block_h(b.0, a.1);
        }
    }

    /// Chain of plaquette steps approximating the straight segment `p → q`.
    fn cut_path(&mut self, p: (usize, usize), q: (usize, usize)) {
        let (dr, dc) = (q.0 as i64 - p.0 as i64, q.1 as i64 - p.1 as i64);
        let mut cur = (p.0 as i64, p.1 as i64);
        let (sr, sc) = (dr.signum(), dc.signum());
        while cur != (q.0 as i64, q.1 as i64) {
            let row_move = (cur.0 + sr, cur.1);
            let col_move = (cur.0, cur.1 + sc);
            // Distance from the ideal line, as |cross product|.
            let off = |pt: (i64, i64)| ((pt.0 - p.0 as i64) * dc - (pt.1 - p.1 as i64) * dr).abs();
            let next = if sr == 0 {
                col_move
            } else if sc == 0 || off(row_move) <= off(col_move) {
                row_move
            } else {
                col_move
            };
            self.cut_step((cur.0 as usize, cur.1 as usize), (next.0 as usize, next.1 as usize));
            cur = next;
        }
    }

    /// Straight cut from plaquette `p` to the nearest image border; ties
    /// prefer top, bottom, left, right in that order.
    fn cut_to_border(&mut self, p: (usize, usize)) {
        let (ph, pw) = (self.h - 1, self.w - 1);
        let (r, c) = p;
        let dists = [r + 1, ph - r, c + 1, pw - c];
        let dir = (0..4).min_by_key(|&i| (dists[i], i)).unwrap();
        match dir {
            0 => (0..=r).for_each(|y| self.block_h(y, c)),
            1 => (r + 1..self.h).for_each(|y| self.block_h(y, c)),
            2 => (0..=c).for_each(|x| self.block_v(r, x)),
            _ => (c + 1..self.w).for_each(|x| self.block_v(r, x)),
        }
    }
}

/// Loop sum of wrapped differences around every plaquette, in units of 2π.
pub fn detect_residues(wp: &PhaseMap) -> Result<ResidueMap> {
    if !wp.wrapped {
        return Err(Error::Invalid("detect_residues expects a wrapped phase".into()));
    }
    let g = &wp.grid;
    if g.h < 2 || g.w < 2 {
        return Err(Error::shape("detect_residues", "phase map must be at least 2x2"));
    }
    let (ph, pw) = (g.h - 1, g.w - 1);
    let mut charges = vec![0i8; ph * pw];
    for r in 0..ph {
        for c in 0..pw {
            let p00 = g.at(r, c);
            let p01 = g.at(r, c + 1);
            let p11 = g.at(r + 1, c + 1);
            let p10 = g.at(r + 1, c);
            let s = wrap_value(p01 - p00) + wrap_value(p11 - p01) + wrap_value(p10 - p11) + wrap_value(p00 - p10);
            charges[r * pw + c] = (s / (2.0 * PI)).round() as i8;
        }
    }
    Ok(ResidueMap {
        h: ph,
        w: pw,
        charges,
    })
}

/// Goldstein's branch-cut placement.
///
/// Residues are visited in raster order. Each unbalanced residue seeds a
/// tree; boxes of growing half-width are scanned around every tree member,
/// and each residue found is joined to the tree by a cut, adding its charge
/// if it has not been balanced before. The tree is closed once its net
/// charge is zero or a box reaches the image border, in which case the
/// member whose box touched the border is cut to the nearest edge.
pub fn goldstein_branch_cuts(res: &ResidueMap) -> CutMask {
    let (ph, pw) = (res.h, res.w);
    let mut cuts = CutMask::empty(ph + 1, pw + 1);
    let mut balanced = vec![false; ph * pw];
    let max_box = ph.max(pw);

    for (r0, c0, q0) in res.residues() {
        let idx0 = r0 * pw + c0;
        if balanced[idx0] {
            continue;
        }
        balanced[idx0] = true;
        let mut charge = q0 as i64;
        let mut tree = vec![(r0, c0)];
        let mut in_tree = vec![false; ph * pw];
        in_tree[idx0] = true;

        'grow: for n in 1..=max_box {
            let mut k = 0;
            while k < tree.len() {
                let (ar, ac) = tree[k];
                k += 1;
                let rlo = ar.saturating_sub(n);
                let rhi = (ar + n).min(ph - 1);
                let clo = ac.saturating_sub(n);
                let chi = (ac + n).min(pw - 1);
                for r in rlo..=rhi {
                    for c in clo..=chi {
                        let i = r * pw + c;
                        if res.charges[i] == 0 || in_tree[i] {
                            continue;
                        }
                        cuts.cut_path((ar, ac), (r, c));
                        in_tree[i] = true;
                        tree.push((r, c));
                        if !balanced[i] {
                            balanced[i] = true;
                            charge += res.charges[i] as i64;
                        }
                        if charge == 0 {
                            break 'grow;
                        }
                    }
                }
                let touches_border = ar < n || ac < n || ar + n >= ph || ac + n >= pw;
                if touches_border {
                    cuts.cut_to_border((ar, ac));
                    break 'grow;
                }
            }
        }
    }
    cuts
}

#[derive(Debug, Clone)]
pub struct UnwrapReport {
    pub phase: PhaseMap,
    /// Pixels reached from the seed without crossing any cut.
    pub directly_reached: Vec<bool>,
}

/// Flood-fill integration of wrapped differences that never crosses a cut.
///
/// The largest cut-free region is integrated first from its first pixel.
/// Regions enclosed by cuts are then entered through a single cut link from
/// an already unwrapped neighbour and flood-filled in turn.
pub fn unwrap(wp: &PhaseMap, cuts: &CutMask) -> Result<UnwrapReport> {
    if !wp.wrapped {
        return Err(Error::Invalid("unwrap expects a wrapped phase".into()));
    }
    let g = &wp.grid;
    let (h, w) = (g.h, g.w);
    if cuts.h != h || cuts.w != w {
        return Err(Error::shape("unwrap", format!("cut mask {}x{} vs phase {h}x{w}", cuts.h, cuts.w)));
    }
    let neighbours = |p: usize| {
        let (r, c) = (p / w, p % w);
        let mut out = [None; 4];
        if r > 0 {
            out[0] = Some((r - 1) * w + c);
        }
        if r + 1 < h {
            out[1] = Some((r + 1) * w + c);
        }
        if c > 0 {
            out[2] = Some(r * w + c - 1);
        }
        if c + 1 < w {
            out[3] = Some(r * w + c + 1);
        }
        out
    };
    let blocked = |a: usize, b: usize| cuts.blocks((a / w, a % w), (b / w, b % w));

    // Label cut-free regions.
    let mut label = vec![usize::MAX; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        label[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbours(p).into_iter().flatten() {
                if label[q] == usize::MAX && !blocked(p, q) {
                    label[q] = id;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }
    let main = (0..sizes.len()).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))).unwrap_or(0);

    let mut out = vec![f64::NAN; h * w];
    let mut done = vec![false; h * w];
    let fill = |seed: usize, out: &mut Vec<f64>, done: &mut Vec<bool>| {
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(p).into_iter().flatten() {
                if !done[q] && label[q] == label[p] {
                    out[q] = out[p] + wrap_value(g.data[q] - g.data[p]);
                    done[q] = true;
                    queue.push_back(q);
                }
            }
        }
    };

    let seed = label.iter().position(|&l| l == main).unwrap_or(0);
    out[seed] = g.data[seed];
    done[seed] = true;
    fill(seed, &mut out, &mut done);
    let directly_reached = done.clone();

    loop {
        let mut entry = None;
        'scan: for p in 0..h * w {
            if done[p] {
                continue;
            }
            for q in neighbours(p).into_iter().flatten() {
                if done[q] {
                    entry = Some((p, q));
                    break 'scan;
                }
            }
        }
        let Some((p, q)) = entry else { break };
        out[p] = out[q] + wrap_value(g.data[p] - g.data[q]);
        done[p] = true;
        fill(p, &mut out, &mut done);
    }

    Ok(UnwrapReport {
        phase: PhaseMap::unwrapped(Grid { h, w, data: out }),
        directly_reached,
    })
}
