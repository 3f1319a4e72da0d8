//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "MNLICKPT"
//! version      u32      currently 1
//! count        u32      number of entries
//! entries, sorted by name:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   rank       u32
//!   dims       rank x u64
//!   values     prod(dims) x f64 (IEEE-754 bit patterns, row-major)
//! ```

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{write_file, Error, Result};

pub const MAGIC: &[u8; 8] = b"MNLICKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::invalid(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::invalid("not a parameter checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::invalid("parameter name is not UTF-8"))?
            .to_string();
        if store.contains(&name) {
            return Err(Error::invalid(format!("duplicate checkpoint entry `{name}`")));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.u64().map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        store.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes after checkpoint entries"));
    }
    Ok(store)
}

pub fn save(path: &Path, params: &ParamStore) -> Result<()> {
    write_file(path, encode(params))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(entries in proptest::collection::btree_map(
            "[a-z.]{1,12}",
            (proptest::collection::vec(1usize..4, 0..3), any::<u64>()),
            0..5,
        )) {
            let mut store = ParamStore::new();
            for (name, (shape, seed)) in &entries {
                let n: usize = shape.iter().product();
                let data = (0..n as u64).map(|i| f64::from_bits(seed.wrapping_mul(i + 1) & !(0x7ffu64 << 52))).collect();
                store.insert(name.clone(), Tensor::new(shape.clone(), data).unwrap());
            }
            let back = decode(&encode(&store)).unwrap();
            prop_assert_eq!(back.len(), store.len());
            for ((n1, t1), (n2, t2)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::filled(&[2], 1.5));
        let bytes = encode(&store);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn rejects_duplicate_names() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::filled(&[1], 2.0));
        let mut bytes = encode(&store);
        let entry = bytes[16..].to_vec();
        bytes.extend_from_slice(&entry);
        bytes[12..16].copy_from_slice(&2u32.to_le_bytes());
        assert!(decode(&bytes).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&ParamStore::new());
        assert_eq!(&bytes[..8], b"MNLICKPT");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes.len(), 16);
    }
}
