//! `HDFC` feature cache files.
//!
//! ```text
//! "HDFC" | version u32 (=1) | dim u32 | record count u32
//! per record: label u32 | path len u32 | path (UTF-8) | dim × f32
//! ```
//!
//! Little-endian, no padding.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"HDFC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad magic: expected HDFC, found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("feature dimension mismatch: expected {expected}, cache holds {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("truncated cache: {0}")]
    Truncated(String),
    #[error("malformed cache: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub label: u32,
    pub path: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureCache {
    pub fn new(dim: usize) -> Self {
        Self { dim, records: Vec::new() }
    }

    pub fn push(&mut self, record: FeatureRecord) -> Result<(), CacheError> {
        if record.values.len() != self.dim {
            return Err(CacheError::DimMismatch { expected: self.dim, found: record.values.len() });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&FeatureRecord> {
        self.records.iter().find(|r| r.path == path)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.records.len() * (self.dim * 4 + 64));
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.dim as u32, self.records.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.records {
            out.extend_from_slice(&r.label.to_le_bytes());
            out.extend_from_slice(&(r.path.len() as u32).to_le_bytes());
            out.extend_from_slice(r.path.as_bytes());
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CacheError> {
        let mut pos = 0;
        let mut take = |n: usize, what: &str| -> Result<&[u8], CacheError> {
            if buf.len() - pos < n {
                return Err(CacheError::Truncated(format!("{what} at offset {pos}")));
            }
            pos += n;
            Ok(&buf[pos - n..pos])
        };
        let magic = take(4, "magic")?;
        if magic != MAGIC {
            return Err(CacheError::BadMagic(magic.try_into().unwrap()));
        }
        let word = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = word(take(4, "version")?);
        if version != VERSION {
            return Err(CacheError::UnsupportedVersion(version));
        }
        let dim = word(take(4, "dim")?) as usize;
        let count = word(take(4, "record count")?) as usize;
        let mut cache = Self { dim, records: Vec::with_capacity(count.min(1 << 16)) };
        for i in 0..count {
            let label = word(take(4, "label")?);
            let len = word(take(4, "path length")?) as usize;
            let path = std::str::from_utf8(take(len, "path")?)
                .map_err(|_| CacheError::Malformed(format!("record {i}: path is not UTF-8")))?
                .to_owned();
            let values = take(dim * 4, "feature values")?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            cache.records.push(FeatureRecord { label, path, values });
        }
        if pos != buf.len() {
            return Err(CacheError::Malformed(format!("{} trailing bytes", buf.len() - pos)));
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CacheError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks that the stored dimension equals `dim`.
    pub fn load_expecting(path: impl AsRef<Path>, dim: usize) -> Result<Self, CacheError> {
        let cache = Self::load(path)?;
        if cache.dim != dim {
            return Err(CacheError::DimMismatch { expected: dim, found: cache.dim });
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureCache {
        let mut c = FeatureCache::new(3);
        c.push(FeatureRecord { label: 0, path: "a/1.ppm".into(), values: vec![1.0, -0.0, f32::MIN_POSITIVE] })
            .unwrap();
        c.push(FeatureRecord { label: 2, path: "b/ü.ppm".into(), values: vec![0.1, 0.2, 0.3] }).unwrap();
        c
    }

    #[test]
    fn round_trip_and_lookup() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = FeatureCache::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.get("b/ü.ppm").unwrap().label, 2);
        assert!(back.get("zzz").is_none());
    }

    #[test]
    fn corruption_cases() {
        let mut bytes = sample().to_bytes();
        assert!(matches!(FeatureCache::from_bytes(&bytes[..bytes.len() - 1]), Err(CacheError::Truncated(_))));
        bytes[1] = b'X';
        assert!(matches!(FeatureCache::from_bytes(&bytes), Err(CacheError::BadMagic(_))));
        let mut bytes = sample().to_bytes();
        bytes[4] = 2;
        assert!(matches!(FeatureCache::from_bytes(&bytes), Err(CacheError::UnsupportedVersion(2))));
    }

    #[test]
    fn dim_checks() {
        let mut c = FeatureCache::new(4);
        assert!(matches!(
            c.push(FeatureRecord { label: 0, path: "x".into(), values: vec![0.0; 3] }),
            Err(CacheError::DimMismatch { expected: 4, found: 3 })
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.hdfc");
        sample().save(&p).unwrap();
        assert!(matches!(
            FeatureCache::load_expecting(&p, 2048),
            Err(CacheError::DimMismatch { expected: 2048, found: 3 })
        ));
        assert_eq!(FeatureCache::load_expecting(&p, 3).unwrap(), sample());
    }

    proptest! {
        #[test]
        fn arbitrary_caches_round_trip(
            dim in 1usize..6,
            rows in proptest::collection::vec((any::<u32>(), "[a-z/]{0,12}", proptest::collection::vec(any::<u32>(), 6)), 0..5)
        ) {
            let mut c = FeatureCache::new(dim);
            for (label, path, bits) in rows {
                let values = bits[..dim].iter().map(|&b| f32::from_bits(b)).collect();
                c.push(FeatureRecord { label, path, values }).unwrap();
            }
            let bytes = c.to_bytes();
            prop_assert_eq!(FeatureCache::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        }
    }
}
