//! Binary model files. Little-endian; layout:
//!
//! ```text
//! magic "A2DM" | version u32 | num_layers u32 | input_dim u32 | num_classes u32
//! per layer: kind u8 (0 = dense, 1 = relu)
//!            dense only: in_dim u32, out_dim u32,
//!                        in*out weights f64 row-major, out bias f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{LayerSpec, Model};

const MAGIC: [u8; 4] = *b"A2DM";
const VERSION: u32 = 1;
const KIND_DENSE: u8 = 0;
const KIND_RELU: u8 = 1;

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    w.write_all(&(model.input_dim() as u32).to_le_bytes())?;
    w.write_all(&(model.num_classes() as u32).to_le_bytes())?;
    for layer in model.layers() {
        match layer {
            LayerSpec::Dense { in_dim, out_dim, weights, bias } => {
                w.write_all(&[KIND_DENSE])?;
                w.write_all(&(*in_dim as u32).to_le_bytes())?;
                w.write_all(&(*out_dim as u32).to_le_bytes())?;
                for v in weights {
                    w.write_all(&v.to_le_bytes())?;
                }
                for v in bias {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            LayerSpec::Relu => w.write_all(&[KIND_RELU])?,
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::format_at(at, format!("truncated model file while reading {what}")))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.take(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        let mut buf = [0u8; 1];
        self.take(&mut buf, what)?;
        Ok(buf[0])
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.take(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?), offset: 0 };
    let mut magic = [0u8; 4];
    r.take(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::format_at(0, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format_at(4, format!("unsupported version {version}")));
    }
    let num_layers = r.u32("layer count")? as usize;
    let input_dim = r.u32("input_dim")? as usize;
    let num_classes = r.u32("num_classes")? as usize;

    let mut layers = Vec::with_capacity(num_layers);
    let mut expect_dim = input_dim;
    for idx in 0..num_layers {
        let kind_at = r.offset;
        match r.u8(&format!("layer {idx} kind"))? {
            KIND_DENSE => {
                let in_dim = r.u32(&format!("layer {idx} in_dim"))? as usize;
                let out_dim = r.u32(&format!("layer {idx} out_dim"))? as usize;
                if in_dim == 0 || out_dim == 0 || in_dim > 1 << 24 || out_dim > 1 << 24 {
                    return Err(Error::format_at(
                        kind_at,
                        format!("layer {idx}: implausible dims {in_dim}x{out_dim}"),
                    ));
                }
                if in_dim != expect_dim {
                    return Err(Error::format_at(
                        kind_at,
                        format!("layer {idx}: declared in_dim {in_dim} does not match incoming {expect_dim}"),
                    ));
                }
                let weights = r.f64s(in_dim * out_dim, &format!("layer {idx} weights"))?;
                let bias = r.f64s(out_dim, &format!("layer {idx} bias"))?;
                if let Some(bad) = weights.iter().chain(&bias).position(|v| !v.is_finite()) {
                    return Err(Error::format_at(
                        kind_at,
                        format!("layer {idx}: non-finite parameter at {bad}"),
                    ));
                }
                layers.push(LayerSpec::dense(in_dim, out_dim, weights, bias)?);
                expect_dim = out_dim;
            }
            KIND_RELU => layers.push(LayerSpec::Relu),
            other => {
                return Err(Error::format_at(kind_at, format!("layer {idx}: unknown kind tag {other}")))
            }
        }
    }
    // trailing garbage means the declared layout disagrees with the content
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra)? != 0 {
        return Err(Error::format_at(r.offset, "trailing bytes after final layer".to_string()));
    }
    Model::new(layers, input_dim, num_classes).map_err(|e| match e {
        Error::Dimension(msg) => Error::format(format!("inconsistent model file: {msg}")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn round_trip_preserves_outputs() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.a2dm");
        let model = Model::new_mlp(12, &[9, 6], 4, 3, 1.0).unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = Tensor::new(vec![12], (0..12).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            assert_eq!(forward(&model, &x).unwrap(), forward(&loaded, &x).unwrap());
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.a2dm");
        let model = Model::new_mlp(4, &[3], 2, 0, 1.0).unwrap();
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn mismatched_layer_dims_name_the_layer() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.a2dm");
        let model = Model::new_mlp(4, &[3], 2, 0, 1.0).unwrap();
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // first layer's in_dim field lives right after header + kind byte
        let off = 4 + 4 + 4 + 4 + 4 + 1;
        bytes[off..off + 4].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn truncation_is_rejected_with_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.a2dm");
        let model = Model::new_mlp(4, &[3], 2, 0, 1.0).unwrap();
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
    }
}
