//! Binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       7     magic "EIPROBE"
//! 7       4     format version (u32, currently 1)
//! 11      4     layer count L (u32)
//! then L times:
//!         4     fan_out (u32)
//!         4     fan_in (u32)
//!         1     activation tag (0 sigmoid, 1 tanh, 2 relu)
//!         8·fan_out·fan_in   weights, row-major f64
//! ```
//!
//! Trailing bytes after the last layer are rejected.

use std::fs;
use std::path::Path;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{DenseLayer, Network};

pub const MAGIC: &[u8; 7] = b"EIPROBE";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
        out.push(layer.activation.tag());
        for w in layer.weights.as_slice() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                self.name,
                self.pos as u64,
                format!(
                    "truncated file while reading {what} ({n} bytes needed, {} left)",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8], name: &str) -> Result<Network> {
    let mut r = Reader { name, bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::parse(name, 0, "bad magic, expected \"EIPROBE\""));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "weight file",
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    if count == 0 {
        return Err(Error::parse(name, 11, "layer count is zero"));
    }
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let fan_out = r.u32("fan_out")? as usize;
        let fan_in = r.u32("fan_in")? as usize;
        let tag_at = r.pos as u64;
        let tag = r.take(1, "activation tag")?[0];
        let activation = ActivationKind::from_tag(tag)
            .ok_or_else(|| Error::parse(name, tag_at, format!("unknown activation tag {tag}")))?;
        let n = fan_out
            .checked_mul(fan_in)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::parse(name, tag_at, "layer size overflows"))?;
        let start = r.pos as u64;
        let raw = r.take(n, "weights")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let weights = Matrix::from_vec(fan_out, fan_in, data)?;
        let layer = DenseLayer::new(weights, activation).map_err(|e| Error::parse(name, start, e.to_string()))?;
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(name, r.pos as u64, "trailing bytes after last layer"));
    }
    Network::new(layers).map_err(|e| Error::parse(name, r.pos as u64, e.to_string()))
}

pub fn save_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_net() -> Network {
        Network::from_widths(&[4, 5, 3], ActivationKind::Tanh, 1.0, 3).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&net, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), net);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = encode(&sample_net());
        for cut in [3, 9, 14, 20, bytes.len() - 1] {
            match decode(&bytes[..cut], "t") {
                Err(Error::Parse { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut bytes = encode(&sample_net());
        bytes[7..11].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode(&bytes, "t"),
            Err(Error::UnsupportedVersion {
                found: 2,
                expected: 1,
                ..
            })
        ));
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut bytes = encode(&sample_net());
        bytes.push(0);
        assert!(matches!(decode(&bytes, "t"), Err(Error::Parse { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes, "t"), Err(Error::Parse { offset: 0, .. })));
    }

    proptest! {
        #[test]
        fn arbitrary_weights_round_trip(
            widths in proptest::collection::vec(1usize..5, 2..5),
            seed in any::<u64>(),
            kind in 0u8..3,
        ) {
            let net = Network::from_widths(&widths, ActivationKind::from_tag(kind).unwrap(), 3.0, seed).unwrap();
            let back = decode(&encode(&net), "p").unwrap();
            for (a, b) in net.layers().iter().zip(back.layers()) {
                let same = a.weights.as_slice().iter().zip(b.weights.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
                prop_assert!(same);
                prop_assert_eq!(a.activation, b.activation);
            }
        }
    }
}
