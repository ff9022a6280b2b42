//! Dense row-major tensors and the `PRLT` binary format.
//!
//! A `Tensor` is plain data: shape plus contiguous `f64` values. Gradient
//! bookkeeping (`requires_grad`, accumulated gradients) lives on the
//! [`Graph`](crate::autograd::Graph) that records operations over tensors.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const PRLT_MAGIC: &[u8; 4] = b"PRLT";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Size of the trailing axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Serialize as one `PRLT` record: magic, `u32` rank, `u32` extents, then
    /// little-endian `f32` values in row-major order.
    pub fn write_prlt<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PRLT_MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn prlt_len(&self) -> usize {
        4 + 4 + 4 * self.shape.len() + 4 * self.data.len()
    }

    pub fn read_prlt<R: Read>(mut r: R) -> Result<Self> {
        let bad = |detail: &str| Error::Format { format: "PRLT", detail: detail.to_string() };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PRLT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let rank = u32::from_le_bytes(word) as usize;
        if rank == 0 || rank > 16 {
            return Err(bad("unsupported rank"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut word)?;
            shape.push(u32::from_le_bytes(word) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_vec(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn prlt_header_layout() {
        let t = Tensor::from_vec(&[2, 1], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        t.write_prlt(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PRLT");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(buf[16..20].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(buf[20..24].try_into().unwrap()), -2.5);
        assert_eq!(buf.len(), t.prlt_len());
    }

    #[test]
    fn prlt_rejects_bad_magic() {
        let buf = b"PRLX\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(Tensor::read_prlt(&buf[..]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn prlt_round_trip_at_f32(vals in proptest::collection::vec(-1e6f32..1e6, 1..64)) {
            let data: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
            let t = Tensor::from_vec(&[data.len()], data).unwrap();
            let mut buf = Vec::new();
            t.write_prlt(&mut buf).unwrap();
            let back = Tensor::read_prlt(&buf[..]).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}
