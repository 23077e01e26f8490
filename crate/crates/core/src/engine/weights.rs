//! Parameter bundles and the `HDFW` binary weight format.
//!
//! Layout, little-endian, no padding:
//!
//! ```text
//! "HDFW" | version u32 (=1) | mean_r f32 | mean_g f32 | mean_b f32 | entry count u32
//! per entry: name len u32 | name (UTF-8) | 4 × u32 kernel dims | kernel f32s
//!            | u32 bias dim | bias f32s
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EngineError, LayerSpec, NetworkSpec, WeightFormatError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HDFW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    /// `(out, in, 3, 3)`
    pub kernel: Tensor,
    /// `(out,)`
    pub bias: Tensor,
}

/// Conv parameters for one network plus the per-channel input means
/// (pixel units, 0..=255) subtracted during preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    means: [f32; 3],
    entries: Vec<WeightEntry>,
}

impl WeightBundle {
    pub fn new(means: [f32; 3], entries: Vec<WeightEntry>) -> Result<Self, EngineError> {
        if means.iter().any(|m| !m.is_finite() || !(0.0..=255.0).contains(m)) {
            return Err(EngineError::Mismatch(format!("channel means must lie in [0, 255], got {means:?}")));
        }
        Ok(Self { means, entries })
    }

    pub fn means(&self) -> [f32; 3] {
        self.means
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn zeros(spec: &NetworkSpec, means: [f32; 3]) -> Self {
        Self::build(spec, means, |_, _| 0.0)
    }

    /// Uniform He-style initialization from a seeded stream; biases are
    /// drawn small so a random bundle still produces varied activations.
    pub fn random(spec: &NetworkSpec, means: [f32; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(spec, means, |fan_in, is_bias| {
            let bound = (6.0 / fan_in as f32).sqrt();
            if is_bias {
                rng.gen_range(-0.1..0.1)
            } else {
                rng.gen_range(-bound..bound)
            }
        })
    }

    fn build(spec: &NetworkSpec, means: [f32; 3], mut init: impl FnMut(usize, bool) -> f32) -> Self {
        let names = layer_names(spec);
        let entries = spec
            .conv_layers()
            .into_iter()
            .zip(names)
            .map(|((cin, cout), name)| {
                let fan_in = cin * 9;
                let kernel = Tensor::from_fn(&[cout, cin, 3, 3], |_| init(fan_in, false)).unwrap();
                let bias = Tensor::from_fn(&[cout], |_| init(fan_in, true)).unwrap();
                WeightEntry { name, kernel, bias }
            })
            .collect();
        Self { means, entries }
    }

    /// Checks entry count and every kernel/bias shape against `spec`.
    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<(), EngineError> {
        let convs = spec.conv_layers();
        if convs.len() != self.entries.len() {
            return Err(EngineError::Mismatch(format!(
                "network has {} conv layers but bundle has {} entries",
                convs.len(),
                self.entries.len()
            )));
        }
        for (i, ((cin, cout), e)) in convs.iter().zip(&self.entries).enumerate() {
            if e.kernel.shape() != [*cout, *cin, 3, 3] || e.bias.shape() != [*cout] {
                return Err(EngineError::Mismatch(format!(
                    "entry {i} ({}): kernel {:?} / bias {:?} do not fit conv {cin}->{cout}",
                    e.name,
                    e.kernel.shape(),
                    e.bias.shape()
                )));
            }
        }
        Ok(())
    }
}

/// `conv<block>_<index>` names, blocks delimited by pools.
fn layer_names(spec: &NetworkSpec) -> Vec<String> {
    let mut names = Vec::new();
    let (mut block, mut idx) = (1, 0);
    for layer in spec.layers() {
        match layer {
            LayerSpec::Conv3x3 { .. } => {
                idx += 1;
                names.push(format!("conv{block}_{idx}"));
            }
            LayerSpec::MaxPool2 if idx > 0 => {
                block += 1;
                idx = 0;
            }
            _ => {}
        }
    }
    names
}

pub fn write_weights(bundle: &WeightBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for m in bundle.means {
        out.extend_from_slice(&m.to_le_bytes());
    }
    out.extend_from_slice(&(bundle.entries.len() as u32).to_le_bytes());
    for e in &bundle.entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        for &d in e.kernel.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in e.kernel.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(e.bias.len() as u32).to_le_bytes());
        for v in e.bias.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_weights(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<(), WeightFormatError> {
    fs::write(path, write_weights(bundle))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightBundle, WeightFormatError> {
    read_weights(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightFormatError> {
        if self.buf.len() - self.pos < n {
            return Err(WeightFormatError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightFormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, WeightFormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| malformed(what))?, what)?;
        Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }
}

fn malformed(what: &str) -> WeightFormatError {
    WeightFormatError::Malformed(format!("{what}: declared size overflows"))
}

pub fn read_weights(buf: &[u8]) -> Result<WeightBundle, WeightFormatError> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(WeightFormatError::BadMagic(magic.try_into().unwrap()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(WeightFormatError::UnsupportedVersion(version));
    }
    let means: [f32; 3] = r.f32s(3, "channel means")?.try_into().unwrap();
    let count = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        if r.pos == buf.len() {
            return Err(WeightFormatError::Truncated(format!(
                "header declares {count} entries but the file ends after {i}"
            )));
        }
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "entry name")?)
            .map_err(|_| WeightFormatError::Malformed(format!("entry {i}: name is not UTF-8")))?
            .to_owned();
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32("kernel dims")? as usize;
        }
        if dims[2] != 3 || dims[3] != 3 || dims[0] == 0 || dims[1] == 0 {
            return Err(WeightFormatError::Malformed(format!(
                "entry {i} ({name}): kernel dims {dims:?} are not (out, in, 3, 3)"
            )));
        }
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| malformed("kernel"))?;
        let kernel = Tensor::new(&dims, r.f32s(n, "kernel data")?).unwrap();
        let bias_len = r.u32("bias dim")? as usize;
        if bias_len != dims[0] {
            return Err(WeightFormatError::Malformed(format!(
                "entry {i} ({name}): bias has {bias_len} values for {} output channels",
                dims[0]
            )));
        }
        let bias = Tensor::new(&[bias_len], r.f32s(bias_len, "bias data")?).unwrap();
        entries.push(WeightEntry { name, kernel, bias });
    }
    if r.pos != buf.len() {
        return Err(WeightFormatError::Malformed(format!(
            "{} trailing bytes after {count} entries",
            buf.len() - r.pos
        )));
    }
    WeightBundle::new(means, entries).map_err(|e| WeightFormatError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> WeightBundle {
        WeightBundle::random(&NetworkSpec::compact(4).unwrap(), [123.68, 116.78, 103.94], 5)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let b = bundle();
        let bytes = write_weights(&b);
        let back = read_weights(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(write_weights(&back), bytes);
        assert_eq!(b.entries()[0].name, "conv1_1");
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = write_weights(&bundle());
        bytes[0] = b'X';
        assert!(matches!(read_weights(&bytes), Err(WeightFormatError::BadMagic(_))));
    }

    #[test]
    fn missing_entry_is_truncation() {
        let b = bundle();
        let mut one = b.clone();
        one.entries.truncate(1);
        let mut bytes = write_weights(&one);
        // keep the header claiming two entries
        bytes[20..24].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_weights(&bytes), Err(WeightFormatError::Truncated(_))));
        let full = write_weights(&b);
        assert!(matches!(read_weights(&full[..full.len() - 3]), Err(WeightFormatError::Truncated(_))));
    }

    #[test]
    fn version_and_trailing_bytes() {
        let mut bytes = write_weights(&bundle());
        bytes[4] = 9;
        assert!(matches!(read_weights(&bytes), Err(WeightFormatError::UnsupportedVersion(9))));
        let mut bytes = write_weights(&bundle());
        bytes.push(0);
        assert!(matches!(read_weights(&bytes), Err(WeightFormatError::Malformed(_))));
    }

    #[test]
    fn means_are_range_checked() {
        assert!(WeightBundle::new([0.0, 256.0, 1.0], vec![]).is_err());
        assert!(WeightBundle::new([0.0, f32::NAN, 1.0], vec![]).is_err());
    }

    #[test]
    fn validate_detects_shape_mismatch() {
        let spec = NetworkSpec::compact(4).unwrap();
        let other = WeightBundle::zeros(&NetworkSpec::compact(5).unwrap(), [0.0; 3]);
        assert!(other.validate_against(&spec).is_err());
        assert!(bundle().validate_against(&spec).is_ok());
    }
}
