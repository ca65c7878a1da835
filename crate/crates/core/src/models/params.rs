use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Ordered named parameter tensors. The order is the layer order, weights
/// before biases, and is also the initialization draw order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
                .collect(),
        }
    }

    pub fn bitwise_eq(&self, other: &Params) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, a), (nb, b))| na == nb && a.bitwise_eq(b))
    }

    /// Concatenated little-endian binary32 payload of every tensor in order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.count() * 4);
        for (_, t) in &self.entries {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    /// SHA-256 of [`Params::to_le_bytes`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_le_bytes()))
    }

    /// Rebuilds parameters from a payload and `(name, shape)` layout.
    pub fn from_le_bytes(layout: &[(String, Vec<usize>)], bytes: &[u8]) -> Result<Self> {
        let total: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if bytes.len() != total * 4 {
            return Err(Error::Store(format!(
                "params payload is {} bytes, layout needs {}",
                bytes.len(),
                total * 4
            )));
        }
        let mut offset = 0;
        let mut entries = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let n: usize = shape.iter().product();
            let data = bytes[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            offset += 4 * n;
            entries.push((name.clone(), Tensor::new(shape.clone(), data)?));
        }
        Ok(Self { entries })
    }

    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect()
    }
}

/// Post-activation outputs of hidden layers on a fixed example set,
/// one `examples × features` matrix per layer, in layer order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivationCapture {
    pub layers: Vec<(String, Tensor)>,
}

impl ActivationCapture {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|(n, _)| n.as_str())
    }
}
