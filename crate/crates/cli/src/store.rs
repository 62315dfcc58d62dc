//! Files on disk: dataset directories, tensors, PGM images and text.

use std::fs;
use std::path::{Path, PathBuf};

use fringeforge::classical::{encode_pgm, FringeSpec, Grid};
use fringeforge::harness::{Dataset, Sample};
use fringeforge::Tensor;

use crate::fail::{AtPath, Fail};

pub const MANIFEST: &str = "manifest.txt";
const DATASET_HEADER: &str = "fringeforge-dataset 1";

pub fn create_dir(dir: &Path) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::io(dir, e))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Fail> {
    fs::write(path, bytes).map_err(|e| Fail::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor, Fail> {
    Tensor::load(path).at(path)
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<(), Fail> {
    write(path, t.to_qpt_bytes())
}

/// Writes `<stem>.qpt` and `<stem>.pgm` for one map; the PGM spans `[lo, hi]`.
pub fn save_map(dir: &Path, stem: &str, grid: &Grid, range: (f64, f64), unit: &str) -> Result<(), Fail> {
    save_tensor(&dir.join(format!("{stem}.qpt")), &grid.to_tensor())?;
    write(&dir.join(format!("{stem}.pgm")), encode_pgm(grid, range.0, range.1, unit)?)
}

/// Finite data range, widened when flat so the PGM range is never empty.
pub fn data_range(grid: &Grid) -> (f64, f64) {
    let lo = grid.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Header tokens describing how a dataset was made.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInfo {
    pub seed: u64,
    pub labels: String,
    pub phase_max: f64,
    pub fringe: FringeSpec,
}

fn pair_name(i: usize, kind: &str) -> String {
    format!("pair_{i:04}_{kind}.qpt")
}

/// `manifest.txt` has one header line and one `index split input target`
/// line per pair.
pub fn save_dataset(dir: &Path, data: &Dataset, info: &DatasetInfo) -> Result<(), Fail> {
    create_dir(dir)?;
    let f = &info.fringe;
    let mut manifest = format!(
        "{DATASET_HEADER} n={} size={} seed={} labels={} phase_max={:?} carrier={:?},{:?} contrast={:?} background={:?} noise={:?} split={},{},{}\n",
        data.pairs.len(),
        data.size,
        info.seed,
        info.labels,
        info.phase_max,
        f.carrier_fx,
        f.carrier_fy,
        f.contrast,
        f.background,
        f.noise_sigma,
        data.train.len(),
        data.val.len(),
        data.test.len(),
    );
    for (i, s) in data.pairs.iter().enumerate() {
        let split = if data.train.contains(&i) {
            "train"
        } else if data.val.contains(&i) {
            "val"
        } else {
            "test"
        };
        let (a, b) = (pair_name(i, "input"), pair_name(i, "target"));
        save_tensor(&dir.join(&a), &s.input)?;
        save_tensor(&dir.join(&b), &s.target)?;
        manifest += &format!("{i} {split} {a} {b}\n");
    }
    write(&dir.join(MANIFEST), manifest)
}

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header.split_whitespace().find_map(|t| t.strip_prefix(key)?.strip_prefix('='))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, Fail> {
    let path: PathBuf = dir.join(MANIFEST);
    let text = read_text(&path)?;
    let bad = |line: usize, msg: &str| Fail::Usage(format!("{}:{line}: {msg}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty manifest"))?;
    if !header.starts_with(DATASET_HEADER) {
        return Err(bad(1, "not a fringeforge dataset manifest"));
    }
    let num = |key: &str| -> Result<f64, Fail> {
        header_value(header, key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, &format!("missing or bad `{key}`")))
    };
    let carrier: Vec<f64> = header_value(header, "carrier")
        .map(|v| v.split(',').filter_map(|x| x.parse().ok()).collect())
        .unwrap_or_default();
    if carrier.len() != 2 {
        return Err(bad(1, "missing or bad `carrier`"));
    }
    let fringe = FringeSpec {
        carrier_fx: carrier[0],
        carrier_fy: carrier[1],
        contrast: num("contrast")?,
        background: num("background")?,
        noise_sigma: num("noise")?,
    };
    let mut data = Dataset {
        pairs: Vec::new(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        phase_max: num("phase_max")?,
        size: num("size")? as usize,
        fringe,
    };
    for (k, line) in lines.enumerate() {
        let ln = k + 2;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad(ln, "expected `index split input target`"));
        }
        let i: usize = parts[0].parse().map_err(|_| bad(ln, "bad index"))?;
        if i != data.pairs.len() {
            return Err(bad(ln, "pairs must be listed in index order"));
        }
        match parts[1] {
            "train" => data.train.push(i),
            "val" => data.val.push(i),
            "test" => data.test.push(i),
            _ => return Err(bad(ln, "split must be train, val or test")),
        }
        data.pairs.push(Sample {
            input: load_tensor(&dir.join(parts[2]))?,
            target: load_tensor(&dir.join(parts[3]))?,
        });
    }
    if data.pairs.len() != num("n")? as usize {
        return Err(bad(1, "pair count does not match the header"));
    }
    data.validate().at(&path)?;
    Ok(data)
}
