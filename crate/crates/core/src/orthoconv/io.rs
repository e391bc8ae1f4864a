//! OKRN kernel container: `b"OKRN"`, version `u32`, shape as four `u32`,
//! then the values as row-major little-endian `f64`. An optional JSON sidecar
//! (`<file>.json`) carries the layer config.

use std::fs;
use std::path::{Path, PathBuf};

use super::ConvLayerConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"OKRN";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 16;

pub fn encode(k: &Tensor4) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER + 8 * k.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in k.shape() {
        let d =
            u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in k.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor4> {
    if bytes.len() < HEADER {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected OKRN".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let shape = [
        word(8) as usize,
        word(12) as usize,
        word(16) as usize,
        word(20) as usize,
    ];
    let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let n = n.ok_or_else(|| Error::Format("shape overflows".into()))?;
    let body = &bytes[HEADER..];
    if body.len() != n.saturating_mul(8) {
        return Err(Error::Format(format!(
            "shape {shape:?} needs {} payload bytes, found {}",
            n * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor4::from_vec(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write the kernel and, when given, its config sidecar.
pub fn write_kernel(path: &Path, k: &Tensor4, cfg: Option<&ConvLayerConfig>) -> Result<()> {
    fs::write(path, encode(k)?)?;
    if let Some(cfg) = cfg {
        let json = serde_json::to_string_pretty(cfg).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(sidecar_path(path), json)?;
    }
    Ok(())
}

/// Read a kernel and its sidecar config if one exists.
pub fn read_kernel(path: &Path) -> Result<(Tensor4, Option<ConvLayerConfig>)> {
    let k = decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let cfg = if side.exists() {
        let text = fs::read_to_string(side)?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Format(format!("sidecar: {e}")))?)
    } else {
        None
    };
    Ok((k, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bytes() {
        let k = Tensor4::from_vec([2, 1, 1, 2], vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        let back = decode(&encode(&k).unwrap()).unwrap();
        assert_eq!(back.shape(), k.shape());
        for (a, b) in back.data().iter().zip(k.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let k = Tensor4::identity(1, 1);
        let mut bytes = encode(&k).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }
}
