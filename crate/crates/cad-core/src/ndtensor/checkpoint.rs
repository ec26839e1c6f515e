//! Versioned little-endian checkpoint format.
//!
//! Layout (all integers little-endian):
//!   magic          8 bytes  "CADCKPT1"
//!   count          u32      number of named arrays
//!   per array:
//!     name_len     u32
//!     name         name_len bytes (UTF-8)
//!     rank         u32
//!     dims         rank × u64
//!     values       product(dims) × f64
//!
//! Byte-exact documentation lives in docs/FORMATS.md.

use super::params::Params;
use super::tensor::Tensor;
use crate::error::{CadError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"CADCKPT1";

pub fn save(path: &Path, params: &Params) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| CadError::io(path, e))?;
    file.write_all(&buf).map_err(|e| CadError::io(path, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Params> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CadError::io(path, e))?;
    let fail = |reason: &str| CadError::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    struct Reader<'a> {
        bytes: &'a [u8],
        cursor: usize,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Option<&'a [u8]> {
            if self.cursor + n > self.bytes.len() {
                return None;
            }
            let s = &self.bytes[self.cursor..self.cursor + n];
            self.cursor += n;
            Some(s)
        }
        fn u32(&mut self) -> Option<u32> {
            self.take(4).map(|s| u32::from_le_bytes(s.try_into().unwrap()))
        }
        fn u64(&mut self) -> Option<u64> {
            self.take(8).map(|s| u64::from_le_bytes(s.try_into().unwrap()))
        }
    }
    let mut r = Reader {
        bytes: &bytes,
        cursor: 0,
    };

    if r.take(8).ok_or_else(|| fail("truncated file"))? != MAGIC {
        return Err(fail("bad magic (expected CADCKPT1)"));
    }
    let count = r.u32().ok_or_else(|| fail("truncated file"))?;
    let mut params = Params::new();
    for _ in 0..count {
        let name_len = r.u32().ok_or_else(|| fail("truncated file"))? as usize;
        let name = std::str::from_utf8(r.take(name_len).ok_or_else(|| fail("truncated file"))?)
            .map_err(|_| fail("non-UTF-8 array name"))?
            .to_string();
        let rank = r.u32().ok_or_else(|| fail("truncated file"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64().ok_or_else(|| fail("truncated file"))? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8).ok_or_else(|| fail("truncated file"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(name, Tensor::new(shape, data));
    }
    if r.cursor != bytes.len() {
        return Err(fail("trailing bytes after last array"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = std::env::temp_dir().join("cad_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.ckpt");

        let mut params = Params::new();
        params.push("w1", Tensor::matrix(2, 3, vec![0.1, -2.5, 1e-300, 3.7, 0.0, -0.0]));
        params.push("scalar", Tensor::scalar(0.9999));
        save(&path, &params).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("w1").unwrap().shape(), &[2, 3]);
        for (a, b) in params
            .get("w1")
            .unwrap()
            .data()
            .iter()
            .zip(back.get("w1").unwrap().data())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join("cad_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, b"NOTCKPT0\x00\x00\x00\x00").unwrap();
        assert!(load(&path).is_err());
    }
}
