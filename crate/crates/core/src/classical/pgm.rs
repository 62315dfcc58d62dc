//! 16-bit binary PGM (P5, maxval 65535) with the value range in a comment.

use super::Grid;
use crate::error::{Error, Result};

const MAXVAL: f64 = 65535.0;

/// A decoded image with the value range recovered from its comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    /// Raw 16-bit samples, row-major.
    pub samples: Vec<u16>,
    /// Values that map to 0 and 65535, when the comment declares them.
    pub range: Option<(f64, f64)>,
    pub comment: String,
}

impl Pgm {
    /// Samples mapped back onto the declared range (quantized).
    pub fn to_grid(&self) -> Result<Grid> {
        let (lo, hi) = self.range.ok_or_else(|| Error::Format("PGM has no declared value range".into()))?;
        let data = self.samples.iter().map(|&s| lo + (hi - lo) * s as f64 / MAXVAL).collect();
        Grid::new(self.height, self.width, data)
    }
}

/// Maps `[lo, hi]` linearly onto `[0, 65535]`, clamping outside values.
/// The comment line reads `# range <lo> <hi> <label>`.
pub fn encode_pgm(grid: &Grid, lo: f64, hi: f64, label: &str) -> Result<Vec<u8>> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Invalid(format!("PGM range [{lo}, {hi}] is empty or not finite")));
    }
    if label.contains('\n') {
        return Err(Error::Invalid("PGM label must be one line".into()));
    }
    let mut out = format!("P5\n# range {lo:?} {hi:?} {label}\n{} {}\n65535\n", grid.w, grid.h).into_bytes();
    out.reserve(grid.data.len() * 2);
    for &v in &grid.data {
        let t = if v.is_nan() { 0.0 } else { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) };
        out.extend_from_slice(&((t * MAXVAL).round() as u16).to_be_bytes());
    }
    Ok(out)
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize, comments: &mut Vec<String>) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| *pos + i);
            comments.push(String::from_utf8_lossy(&bytes[*pos + 1..end]).trim().to_string());
            *pos = end;
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Format("PGM header is not ASCII".into()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0;
    let mut comments = Vec::new();
    if token(bytes, &mut pos, &mut comments)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        token(bytes, &mut pos, &mut comments)?
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    if num("maxval")? != 65535 {
        return Err(Error::Format("only maxval 65535 is supported".into()));
    }
    pos += 1;
    let payload = &bytes[pos.min(bytes.len())..];
    if payload.len() != width * height * 2 {
        return Err(Error::Format(format!(
            "PGM payload has {} bytes, expected {}",
            payload.len(),
            width * height * 2
        )));
    }
    let samples = payload.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    let comment = comments.join("\n");
    let range = comments.iter().find_map(|c| {
        let mut it = c.strip_prefix("range ")?.split_whitespace();
        Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?))
    });
    Ok(Pgm {
        width,
        height,
        samples,
        range,
        comment,
    })
}
