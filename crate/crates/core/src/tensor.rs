//! Dense 4-axis `[N, C, H, W]` tensors of `f64` and their `QPT1` binary form.
//!
//! The on-disk layout is the magic `QPT1`, a `u8` rank (always 4), four
//! little-endian `u64` dimensions and the row-major `f64` payload, also
//! little-endian.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Magic bytes opening every serialized tensor.
pub const QPT_MAGIC: &[u8; 4] = b"QPT1";

/// Tensor shape `[N, C, H, W]`.
pub type Shape = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", format!("zero-sized axis in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized axis in {shape:?}");
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Single-element tensor of shape `[1, 1, 1, 1]`.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self::new(shape, data).expect("from_fn produced a consistent tensor")
    }

    /// Wraps a row-major `h × w` grid as a `[1, 1, h, w]` tensor.
    pub fn from_grid(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::new([1, 1, h, w], data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    /// The value of a `[1, 1, 1, 1]` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape != [1, 1, 1, 1] {
            return Err(Error::shape("item", format!("expected scalar, got {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn write_qpt<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(QPT_MAGIC)?;
        out.write_all(&[4u8])?;
        for d in self.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_qpt<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != QPT_MAGIC {
            return Err(Error::Version {
                expected: "QPT1".into(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let mut rank = [0u8; 1];
        input.read_exact(&mut rank)?;
        if rank[0] != 4 {
            return Err(Error::Format(format!("expected rank 4, found {}", rank[0])));
        }
        let mut shape = [0usize; 4];
        for d in shape.iter_mut() {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            *d = usize::try_from(u64::from_le_bytes(b))
                .map_err(|_| Error::Format("dimension overflows usize".into()))?;
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("element count overflows".into()))?;
        let mut bytes = vec![0u8; numel * 8];
        input.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(shape, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_qpt_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(37 + self.data.len() * 8);
        self.write_qpt(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_qpt_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let t = Self::read_qpt(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_qpt_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_qpt_bytes(&std::fs::read(path)?)
    }
}
