//! Binary model checkpoints: a key-value manifest plus named tensors with
//! shapes and raw little-endian f64 values.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{ParameterStore, Tensor};

const MAGIC: &[u8; 4] = b"OMCK";
const VERSION: u32 = 1;

/// A checkpoint read back from disk.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn manifest_u64(&self, key: &str) -> Result<u64> {
        self.manifest
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::data(format!("checkpoint manifest missing u64 `{key}`")))
    }

    pub fn manifest_f64(&self, key: &str) -> Result<f64> {
        self.manifest
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::data(format!("checkpoint manifest missing f64 `{key}`")))
    }

    pub fn manifest_str(&self, key: &str) -> Result<&str> {
        self.manifest
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::data(format!("checkpoint manifest missing `{key}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::data(format!("checkpoint missing tensor `{name}`")))
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::data("checkpoint string is not utf-8"))
}

/// Write every parameter of `store` plus the manifest entries.
pub fn write_checkpoint(
    path: &Path,
    manifest: &[(String, String)],
    store: &ParameterStore,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    for (k, v) in manifest {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for id in store.ids() {
        write_str(&mut w, store.name(id))?;
        let t = store.value(id);
        w.write_all(&(t.shape.len() as u64).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open checkpoint {}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != VERSION {
        return Err(Error::data("unsupported checkpoint version"));
    }
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let mut manifest = BTreeMap::new();
    for _ in 0..u64::from_le_bytes(count) {
        let k = read_str(&mut r)?;
        let v = read_str(&mut r)?;
        manifest.insert(k, v);
    }
    r.read_exact(&mut count)?;
    let mut tensors = Vec::new();
    for _ in 0..u64::from_le_bytes(count) {
        let name = read_str(&mut r)?;
        let mut ndim = [0u8; 8];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::new();
        for _ in 0..u64::from_le_bytes(ndim) {
            let mut d = [0u8; 8];
            r.read_exact(&mut d)?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push((name, Tensor::from_vec(&shape, data)));
    }
    Ok(Checkpoint { manifest, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut store = ParameterStore::new();
        store.register(
            "a.w",
            Tensor::from_vec(
                &[2, 3],
                vec![1.5, -2.25, 0.0, f64::MIN_POSITIVE, 1e300, -0.5],
            ),
        );
        store.register("a.b", Tensor::from_vec(&[2], vec![0.125, 42.0]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let manifest = vec![
            ("vocab".to_string(), "7".to_string()),
            ("seed".to_string(), "99".to_string()),
        ];
        write_checkpoint(&path, &manifest, &store).unwrap();
        let ck = read_checkpoint(&path).unwrap();
        assert_eq!(ck.manifest_u64("vocab").unwrap(), 7);
        assert_eq!(ck.tensor("a.w").unwrap(), store.value(0));
        assert_eq!(ck.tensor("a.b").unwrap(), store.value(1));
    }

    #[test]
    fn rejects_non_checkpoint_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
