use std::fs;
use std::path::Path;

use super::model::{Architecture, ModelParams};
use super::{ModelVariant, PipelineError};
use crate::heads::HeadConfig;
use crate::kernel::Parameters;
use crate::segmentation::MsTcnConfig;

pub const MAGIC: &[u8; 4] = b"IRIS";
pub const FORMAT_VERSION: u32 = 1;

/// Layout: magic, `u32` version, `u8` variant tag, eight `u64` architecture
/// fields (input dim, stages, layers, segmenter channels, segmenter kernel,
/// head channels, head kernel, max segment windows), `u64` tensor count,
/// then per tensor `u64` rows, `u64` cols and row-major `f64` values. All
/// little-endian.
pub fn encode_model(model: &ModelParams) -> Vec<u8> {
    let a = model.architecture;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.variant.tag());
    for v in [
        model.input_dim(),
        a.mstcn.stages,
        a.mstcn.layers,
        a.mstcn.channels,
        a.mstcn.kernel,
        a.head.channels,
        a.head.kernel,
        a.max_segment_windows,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let tensors = model.tensors();
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PipelineError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| PipelineError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize, PipelineError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| PipelineError::Format(format!("count {v} too large")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelParams, PipelineError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(PipelineError::Format("missing IRIS magic bytes".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(PipelineError::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let tag = r.take(1)?[0];
    let variant = ModelVariant::from_tag(tag)
        .ok_or_else(|| PipelineError::Format(format!("unknown variant tag {tag}")))?;
    let input_dim = r.u64()?;
    let mstcn = MsTcnConfig {
        stages: r.u64()?,
        layers: r.u64()?,
        channels: r.u64()?,
        kernel: r.u64()?,
    };
    let head = HeadConfig {
        channels: r.u64()?,
        kernel: r.u64()?,
    };
    let architecture = Architecture {
        mstcn,
        head,
        max_segment_windows: r.u64()?,
    };
    let mut model = ModelParams::zeros(variant, input_dim, architecture)
        .map_err(|e| PipelineError::Format(format!("invalid architecture: {e}")))?;
    let count = r.u64()?;
    let mut tensors = model.tensors_mut();
    if count != tensors.len() {
        return Err(PipelineError::Format(format!(
            "expected {} tensors, found {count}",
            tensors.len()
        )));
    }
    for (i, t) in tensors.iter_mut().enumerate() {
        let shape = (r.u64()?, r.u64()?);
        if shape != t.shape() {
            return Err(PipelineError::Format(format!(
                "tensor {i}: expected shape {:?}, found {shape:?}",
                t.shape()
            )));
        }
        let raw = r.take(t.len() * 8)?;
        for (v, chunk) in t.as_mut_slice().iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(PipelineError::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}

pub fn write_model(path: &Path, model: &ModelParams) -> Result<(), PipelineError> {
    fs::write(path, encode_model(model)).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_model(path: &Path) -> Result<ModelParams, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_model(&bytes)
}
