//! Dense row-major float tensors and their on-disk format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"BDRYTEN1";

/// Dense multidimensional array of `f32` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that the element count matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} elements for shape {shape:?}"),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterprets the same data under a new shape.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Dot product accumulated in f64.
    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    /// Euclidean norm accumulated in f64.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Euclidean distance to `other`, accumulated in f64.
    pub fn l2_distance(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn linf_distance(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max)
    }

    /// `self + alpha * other`, elementwise.
    pub fn add_scaled(&self, other: &Tensor, alpha: f32) -> Tensor {
        debug_assert_eq!(self.len(), other.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + alpha * b)
            .collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.add_scaled(other, -1.0)
    }

    pub fn hadamard(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!(self.len(), other.len());
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn scaled(&self, alpha: f32) -> Tensor {
        let data = self.data.iter().map(|&a| a * alpha).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    /// Clamps every entry into [lo, hi].
    pub fn clamp_box(&mut self, lo: f32, hi: f32) {
        for v in &mut self.data {
            *v = v.clamp(lo, hi);
        }
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Writes the `BDRYTEN1` binary format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(10 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(0u8); // dtype f32
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    /// Reads the `BDRYTEN1` binary format, rejecting non-finite payloads.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(8)?;
        if magic != TENSOR_MAGIC {
            return Err(Error::Format { offset: 0, reason: "bad magic, expected BDRYTEN1".into() });
        }
        let dtype = r.u8()?;
        if dtype != 0 {
            return Err(Error::Format {
                offset: r.pos() - 1,
                reason: format!("unsupported dtype {dtype}"),
            });
        }
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.pos();
            let v = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format { offset: at, reason: format!("non-finite value {v}") });
            }
            data.push(v);
        }
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.pos(),
                reason: format!("{} trailing bytes", r.remaining()),
            });
        }
        Ok(Tensor { shape, data })
    }
}

/// Cursor over a byte slice that reports the offset of the first shortfall.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub fn pos(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                reason: format!("truncated: needed {n} bytes, {} left", self.remaining()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
