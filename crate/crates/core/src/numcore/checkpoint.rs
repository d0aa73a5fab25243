//! Self-describing binary checkpoints: a format version, a JSON
//! architecture descriptor, and named f64 tensors. Round trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"LXCP";
pub const FORMAT_VERSION: u32 = 1;

/// One named tensor with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    fn validate(&self) -> Result<()> {
        let want: usize = self.dims.iter().product();
        if want != self.data.len() {
            return Err(Error::Shape(format!(
                "tensor {} dims {:?} need {want} values, got {}",
                self.name,
                self.dims,
                self.data.len()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "tensor {} has a non-finite value at index {i}",
                self.name
            )));
        }
        Ok(())
    }
}

/// A complete checkpoint: architecture descriptor plus tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(arch: serde_json::Value, tensors: Vec<NamedTensor>) -> Self {
        Self { arch, tensors }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for t in &self.tensors {
            t.validate()?;
        }
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let arch = serde_json::to_vec(&self.arch)?;
        w.write_all(&(arch.len() as u64).to_le_bytes())?;
        w.write_all(&arch)?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(t.dims.len() as u64).to_le_bytes())?;
            for d in &t.dims {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let arch_len = read_u64(r)? as usize;
        let mut arch_bytes = vec![0u8; arch_len];
        r.read_exact(&mut arch_bytes)?;
        let arch: serde_json::Value = serde_json::from_slice(&arch_bytes)?;
        let count = read_u64(r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u64(r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let ndims = read_u64(r)? as usize;
            let mut dims = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                dims.push(read_u64(r)? as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            let t = NamedTensor { name, dims, data };
            t.validate()?;
            tensors.push(t);
        }
        Ok(Self { arch, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Serialized bytes, for bitwise comparisons.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Checkpoint {
        Checkpoint::new(
            json!({"d": 4, "z": 3, "head": "concat_mlp"}),
            vec![
                NamedTensor {
                    name: "a.w".into(),
                    dims: vec![2, 2],
                    data: vec![1.0, -0.5, 1e-300, 3.25],
                },
                NamedTensor {
                    name: "a.b".into(),
                    dims: vec![2],
                    data: vec![0.1, -0.000123456789012345],
                },
            ],
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.arch, ck.arch);
        assert_eq!(back.tensors.len(), ck.tensors.len());
        for (a, b) in ck.tensors.iter().zip(&back.tensors) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.dims, b.dims);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());
    }

    #[test]
    fn rejects_wrong_magic_and_bad_tensor() {
        let err = Checkpoint::read_from(&mut &b"XXXX????"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));

        let bad = Checkpoint::new(
            json!({}),
            vec![NamedTensor {
                name: "t".into(),
                dims: vec![3],
                data: vec![1.0, 2.0],
            }],
        );
        assert!(matches!(bad.to_bytes(), Err(Error::Shape(_))));

        let nan = Checkpoint::new(
            json!({}),
            vec![NamedTensor {
                name: "t".into(),
                dims: vec![1],
                data: vec![f64::NAN],
            }],
        );
        assert!(matches!(nan.to_bytes(), Err(Error::Numeric(_))));
    }
}
