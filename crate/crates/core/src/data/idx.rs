//! IDX container format: big-endian magic, big-endian `u32` dimension sizes,
//! then an unsigned-byte payload.

use thiserror::Error;

use crate::numerics::Tensor;

pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("IDX header truncated: need {needed} bytes, have {actual}")]
    TruncatedHeader { needed: usize, actual: usize },
    #[error("IDX payload truncated: header declares {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("IDX payload has {extra} bytes beyond the declared dimensions")]
    DimensionMismatch { extra: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    Labels(Vec<u8>),
    /// `N×1×rows×cols`, pixel bytes scaled to `[0, 1]`.
    Images(Tensor),
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::TruncatedHeader {
            needed: at + 4,
            actual: bytes.len(),
        })
}

pub fn load_idx(bytes: &[u8]) -> Result<IdxData, IdxError> {
    let magic = read_u32(bytes, 0)?;
    let ndims = match magic {
        LABELS_MAGIC => 1,
        IMAGES_MAGIC => 3,
        other => return Err(IdxError::BadMagic(other)),
    };
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let header = 4 + 4 * ndims;
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IdxError::DimensionMismatch {
            extra: payload.len() - expected,
        });
    }
    Ok(match magic {
        LABELS_MAGIC => IdxData::Labels(payload.to_vec()),
        _ => {
            let data = payload.iter().map(|&b| b as f32 / 255.0).collect();
            let shape = vec![dims[0], 1, dims[1], dims[2]];
            IdxData::Images(Tensor::new(shape, data).expect("payload length checked"))
        }
    })
}

/// Serializes raw bytes into an IDX blob with the given magic and dimensions.
pub fn encode_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
