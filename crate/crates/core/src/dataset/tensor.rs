//! `AADT` tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size     field
//! 0       4        magic "AADT"
//! 4       1        version (1)
//! 5       1        dtype   (0 = f32, 1 = i16)
//! 6       1        ndim
//! 7       4*ndim   dims, u32 each
//! ...     ...      payload, row-major
//! ```

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AADT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    I16 = 1,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I16 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::I16),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::I16 => "i16",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I16(Vec<i16>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.len() > u8::MAX as usize {
        return Err(Error::shape(format!("tensor rank must be 1..=255, got {}", dims.len())));
    }
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::shape("tensor dimension exceeds u32"));
    }
    let expected: usize = dims.iter().product();
    if expected != len {
        return Err(Error::shape(format!("dims {dims:?} hold {expected} values, got {len}")));
    }
    Ok(())
}

impl Tensor {
    pub fn from_f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        check_dims(&dims, values.len())?;
        Ok(Self { dims, data: TensorData::F32(values) })
    }

    pub fn from_i16(dims: Vec<usize>, values: Vec<i16>) -> Result<Self> {
        check_dims(&dims, values.len())?;
        Ok(Self { dims, data: TensorData::I16(values) })
    }

    pub fn from_array2(a: &Array2<f32>) -> Self {
        let (r, c) = a.dim();
        Self { dims: vec![r, c], data: TensorData::F32(a.iter().copied().collect()) }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::I16(_) => DType::I16,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::I16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::I16(_) => None,
        }
    }

    pub fn as_i16(&self) -> Option<&[i16]> {
        match &self.data {
            TensorData::I16(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    /// Interprets a rank-2 float tensor as a matrix.
    pub fn to_array2(&self) -> Result<Array2<f32>> {
        let values = self
            .as_f32()
            .ok_or_else(|| Error::Data(format!("expected an f32 matrix, found {}", self.dtype().name())))?;
        match self.dims[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), values.to_vec()).expect("dims checked")),
            _ => Err(Error::shape(format!("expected a rank-2 tensor, got dims {:?}", self.dims))),
        }
    }

    pub fn encoded_len(&self) -> usize {
        7 + 4 * self.dims.len() + self.len() * self.dtype().size()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype().code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Data(format!("non-finite value at flat index {i}")));
                }
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::I16(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |field: &'static str, detail: String| Error::Format { field, detail };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
            return Err(fail("magic", format!("expected \"AADT\", found {found:?}")));
        }
        let version = *bytes.get(4).ok_or_else(|| fail("version", "missing".into()))?;
        if version != VERSION {
            return Err(fail("version", format!("unsupported version {version}")));
        }
        let code = *bytes.get(5).ok_or_else(|| fail("dtype", "missing".into()))?;
        let dtype = DType::from_code(code).ok_or_else(|| fail("dtype", format!("unknown code {code}")))?;
        let ndim = *bytes.get(6).ok_or_else(|| fail("ndim", "missing".into()))? as usize;
        if ndim == 0 {
            return Err(fail("ndim", "rank 0 is not supported".into()));
        }
        let header = 7 + 4 * ndim;
        if bytes.len() < header {
            return Err(fail("dims", format!("header declares {ndim} dims but the file ends early")));
        }
        let dims: Vec<usize> = bytes[7..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("dims", format!("{dims:?} overflows")))?;
        let payload = &bytes[header..];
        if Some(payload.len()) != count.checked_mul(dtype.size()) {
            return Err(fail(
                "payload",
                format!("dims {dims:?} need {} bytes, found {}", count * dtype.size(), payload.len()),
            ));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::I16 => TensorData::I16(
                payload.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tensor.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout_of_10x256() {
        let t = Tensor::from_array2(&Array2::<f32>::zeros((10, 256)));
        let bytes = t.to_bytes().unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 1 + 1 + 2 * 4 + 10 * 256 * 4);
        assert_eq!(bytes.len(), 10_255);
        assert_eq!(&bytes[..7], b"AADT\x01\x00\x02");
        assert_eq!(&bytes[7..15], &[10, 0, 0, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn corrupted_headers_name_the_field() {
        let good = Tensor::from_f32(vec![2, 3], vec![1.0; 6]).unwrap().to_bytes().unwrap();
        let field = |b: &[u8]| match Tensor::from_bytes(b) {
            Err(Error::Format { field, .. }) => field,
            other => panic!("expected format error, got {other:?}"),
        };

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"BADT");
        assert_eq!(field(&bad), "magic");
        let err = Tensor::from_bytes(&bad).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");

        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(field(&bad), "version");
        let mut bad = good.clone();
        bad[5] = 7;
        assert_eq!(field(&bad), "dtype");
        let mut bad = good.clone();
        bad[6] = 0;
        assert_eq!(field(&bad), "ndim");
        let mut bad = good.clone();
        bad[7] = 5;
        assert_eq!(field(&bad), "payload");
        assert_eq!(field(&good[..9]), "dims");
        assert_eq!(field(&good[..good.len() - 1]), "payload");
        assert_eq!(field(b"AA"), "magic");
    }

    #[test]
    fn non_finite_values_are_rejected_on_write() {
        let t = Tensor::from_f32(vec![2], vec![1.0, f32::NAN]).unwrap();
        assert!(matches!(t.to_bytes(), Err(Error::Data(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.aadt");
        let t = Tensor::from_i16(vec![3, 1, 2], vec![-3, 0, 7, i16::MAX, i16::MIN, 1]).unwrap();
        write_tensor(&p, &t).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..6, 1..4).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            let d2 = dims.clone();
            prop_oneof![
                prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL, n)
                    .prop_map(move |v| Tensor::from_f32(dims.clone(), v).unwrap()),
                prop::collection::vec(any::<i16>(), n).prop_map(move |v| Tensor::from_i16(d2.clone(), v).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(t in arb_tensor()) {
            let bytes = t.to_bytes().unwrap();
            prop_assert_eq!(bytes.len(), t.encoded_len());
            let back = Tensor::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            if let (Some(a), Some(b)) = (t.as_f32(), back.as_f32()) {
                prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}
