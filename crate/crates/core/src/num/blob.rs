//! Parameter blob serialization: a TSV manifest (name, shape, offset) next
//! to a little-endian f32 payload.

use crate::error::{Error, Result};
use crate::num::tensor::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const PAYLOAD_FILE: &str = "params.bin";

/// Write named tensors in order. Offsets in the manifest are element
/// offsets into the payload.
pub fn save_tensors(dir: &Path, tensors: &[(String, &Tensor<f32>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (name, t) in tensors {
        let shape = t
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        manifest.push_str(&format!("{name}\t{shape}\t{offset}\n"));
        for &v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len();
    }
    let mpath = dir.join(MANIFEST_FILE);
    let mut mf = fs::File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
    mf.write_all(manifest.as_bytes()).map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PAYLOAD_FILE);
    let mut pf = fs::File::create(&ppath).map_err(|e| Error::io(&ppath, e))?;
    pf.write_all(&payload).map_err(|e| Error::io(&ppath, e))?;
    Ok(())
}

pub fn load_tensors(dir: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PAYLOAD_FILE);
    let payload = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    if payload.len() % 4 != 0 {
        return Err(Error::Checkpoint(format!("payload size {} not a multiple of 4", payload.len())));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut out = Vec::new();
    for (lineno, line) in manifest.lines().enumerate() {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(&mpath, lineno + 1, "expected name\\tshape\\toffset"));
        }
        let name = parts[0].to_string();
        let shape: Vec<usize> = parts[1]
            .split(',')
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(&mpath, lineno + 1, format!("bad shape: {e}")))?;
        let offset: usize = parts[2]
            .parse()
            .map_err(|e| Error::parse(&mpath, lineno + 1, format!("bad offset: {e}")))?;
        let n: usize = shape.iter().product();
        if offset + n > floats.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} spans {}..{} but payload has {} floats",
                offset,
                offset + n,
                floats.len()
            )));
        }
        out.push((name, Tensor::from_vec(&shape, floats[offset..offset + n].to_vec())?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = Tensor::from_vec(&[2, 3], vec![1.5f32, -0.25, 3.0e-8, 7.0, 0.0, -1.0]).unwrap();
        let b = Tensor::vector(vec![0.1f32, 0.2]);
        save_tensors(dir.path(), &[("w".into(), &a), ("b".into(), &b)]).unwrap();
        let loaded = load_tensors(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "w");
        assert_eq!(&loaded[0].1, &a);
        assert_eq!(&loaded[1].1, &b);
    }
}
