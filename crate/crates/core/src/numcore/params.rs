//! Named tensor views used to flatten parameters for optimization,
//! gradient checking, and checkpointing. View order is the contract:
//! every consumer walks the same sequence.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numcore::checkpoint::NamedTensor;

/// Read-only view of one named parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

/// Mutable view of one named parameter tensor.
pub struct TensorMut<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a mut [f64],
}

pub fn total_len(refs: &[TensorRef<'_>]) -> usize {
    refs.iter().map(|r| r.data.len()).sum()
}

/// Concatenates tensor values in view order.
pub fn flatten(refs: &[TensorRef<'_>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(total_len(refs));
    for r in refs {
        out.extend_from_slice(r.data);
    }
    out
}

/// Writes a flat vector back through mutable views, in view order.
pub fn write_flat(muts: &mut [TensorMut<'_>], flat: &[f64]) -> Result<()> {
    let total: usize = muts.iter().map(|m| m.data.len()).sum();
    if flat.len() != total {
        return Err(Error::Shape(format!(
            "flat parameter vector length {} expected {total}",
            flat.len()
        )));
    }
    let mut off = 0;
    for m in muts {
        m.data.copy_from_slice(&flat[off..off + m.data.len()]);
        off += m.data.len();
    }
    Ok(())
}

/// Copies views into owned named tensors for checkpointing.
pub fn to_named_tensors(refs: &[TensorRef<'_>]) -> Vec<NamedTensor> {
    refs.iter()
        .map(|r| NamedTensor {
            name: r.name.clone(),
            dims: r.dims.clone(),
            data: r.data.to_vec(),
        })
        .collect()
}

/// Restores views from named tensors, matching by name and shape.
pub fn load_named_tensors(muts: &mut [TensorMut<'_>], tensors: &[NamedTensor]) -> Result<()> {
    let by_name: HashMap<&str, &NamedTensor> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    for m in muts {
        let t = by_name
            .get(m.name.as_str())
            .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {}", m.name)))?;
        if t.dims != m.dims {
            return Err(Error::Shape(format!(
                "tensor {} has dims {:?}, expected {:?}",
                m.name, t.dims, m.dims
            )));
        }
        m.data.copy_from_slice(&t.data);
    }
    Ok(())
}
