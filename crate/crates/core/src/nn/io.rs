//! Binary model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    "WSNM"
//! version  u32 (currently 1)
//! preset   u8 length + ascii name
//! seed     u64 (the init seed recorded in the params)
//! stats    u8 flag; if 1, four (min, max) f64 pairs in feature order
//! tensors  u8 count, then per tensor: u8 name length + ascii name,
//!          u64 element count, elements as raw f64 bits
//! ```
//!
//! Floats are stored as raw bits, so save followed by load reproduces every
//! parameter exactly and a reloaded model scores identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encode::{FeatureRange, NormStats};
use crate::error::{Error, Result};

use super::{ModelParams, Preset};

const MAGIC: &[u8; 4] = b"WSNM";
const VERSION: u32 = 1;

/// A model file's contents: parameters plus the normalization ranges the
/// model was trained with (present in every file our trainer writes; the
/// flag exists so bare parameter dumps stay loadable).
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub stats: Option<NormStats>,
}

fn tensor_fields(params: &ModelParams) -> [(&'static str, &Vec<f64>); 8] {
    [
        ("c1_kernels", &params.c1_kernels),
        ("c1_biases", &params.c1_biases),
        ("c2_kernels", &params.c2_kernels),
        ("c2_biases", &params.c2_biases),
        ("f1_weights", &params.f1_weights),
        ("f1_biases", &params.f1_biases),
        ("out_weights", &params.out_weights),
        ("out_biases", &params.out_biases),
    ]
}

/// Write `params` (and stats, when given) to `path`.
pub fn save_model(params: &ModelParams, stats: Option<&NormStats>, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);

    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let name = params.config.preset.name();
    out.write_all(&[name.len() as u8])?;
    out.write_all(name.as_bytes())?;
    out.write_all(&params.init_seed.to_le_bytes())?;

    match stats {
        Some(stats) => {
            out.write_all(&[1u8])?;
            for range in stats.ranges {
                out.write_all(&range.min.to_le_bytes())?;
                out.write_all(&range.max.to_le_bytes())?;
            }
        }
        None => out.write_all(&[0u8])?,
    }

    let fields = tensor_fields(params);
    out.write_all(&[fields.len() as u8])?;
    for (name, values) in fields {
        out.write_all(&[name.len() as u8])?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::ModelFormat("file truncated".into()))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u8()? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::ModelFormat("file truncated".into()))?;
        String::from_utf8(buf).map_err(|_| Error::ModelFormat("non-ascii name".into()))
    }

    fn f64_vec(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::ModelFormat(format!(
                "{what}: expected {expected} values, file has {n}"
            )));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(self.f64()?);
        }
        Ok(values)
    }
}

/// Read a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<SavedModel> {
    let file = File::open(path)?;
    let mut r = Reader { inner: BufReader::new(file) };

    let magic = r.bytes::<4>()?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic, not a model file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let preset_name = r.name()?;
    let preset = Preset::from_name(&preset_name)
        .ok_or_else(|| Error::ModelFormat(format!("unknown preset {preset_name:?}")))?;
    let config = preset.config();
    let init_seed = r.u64()?;

    let stats = match r.u8()? {
        0 => None,
        1 => {
            let mut ranges = [FeatureRange { min: 0.0, max: 0.0 }; 4];
            for range in &mut ranges {
                range.min = r.f64()?;
                range.max = r.f64()?;
            }
            Some(NormStats { ranges })
        }
        flag => return Err(Error::ModelFormat(format!("bad stats flag {flag}"))),
    };

    let count = r.u8()? as usize;
    if count != 8 {
        return Err(Error::ModelFormat(format!("expected 8 tensors, file has {count}")));
    }

    let expected_sizes: [(&str, usize); 8] = [
        ("c1_kernels", config.c1_kernel_len()),
        ("c1_biases", super::C1_CHANNELS),
        ("c2_kernels", config.c2_kernel_len()),
        ("c2_biases", super::C2_CHANNELS),
        ("f1_weights", config.f1_weight_len()),
        ("f1_biases", config.f1_dim),
        ("out_weights", config.out_weight_len()),
        ("out_biases", super::OUTPUT_DIM),
    ];
    let mut tensors: Vec<Vec<f64>> = Vec::with_capacity(8);
    for (expected_name, expected_len) in expected_sizes {
        let name = r.name()?;
        if name != expected_name {
            return Err(Error::ModelFormat(format!(
                "tensor order mismatch: expected {expected_name}, file has {name}"
            )));
        }
        tensors.push(r.f64_vec(expected_len, expected_name)?);
    }

    let mut it = tensors.into_iter();
    let params = ModelParams {
        config,
        init_seed,
        c1_kernels: it.next().unwrap(),
        c1_biases: it.next().unwrap(),
        c2_kernels: it.next().unwrap(),
        c2_biases: it.next().unwrap(),
        f1_weights: it.next().unwrap(),
        f1_biases: it.next().unwrap(),
        out_weights: it.next().unwrap(),
        out_biases: it.next().unwrap(),
    };
    Ok(SavedModel { params, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Preset;

    fn stats() -> NormStats {
        NormStats {
            ranges: [
                FeatureRange { min: 10.0, max: 35.0 },
                FeatureRange { min: 25.0, max: 45.0 },
                FeatureRange { min: 0.0, max: 600.0 },
                FeatureRange { min: 2.3, max: 2.8 },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for preset in Preset::ALL {
            let params = ModelParams::init(preset, 42);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.bin");
            save_model(&params, Some(&stats()), &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded.params, params);
            assert_eq!(loaded.stats, Some(stats()));
        }
    }

    #[test]
    fn round_trip_without_stats() {
        let params = ModelParams::init(Preset::M2, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&params, None, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.stats, None);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, b"PNG!not a model").unwrap();
        assert!(matches!(load_model(&bad), Err(Error::ModelFormat(_))));

        let params = ModelParams::init(Preset::M1, 1);
        let good = dir.path().join("good.bin");
        save_model(&params, None, &good).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let trunc = dir.path().join("trunc.bin");
        std::fs::write(&trunc, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&trunc), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn rejects_wrong_version() {
        let params = ModelParams::init(Preset::M1, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        save_model(&params, None, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn preset_identity_survives() {
        let params = ModelParams::init(Preset::M3, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m3.bin");
        save_model(&params, None, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.params.config.preset, Preset::M3);
        assert_eq!(loaded.params.config.f1_dim, 128);
        assert_eq!(loaded.params.init_seed, 5);
    }
}
