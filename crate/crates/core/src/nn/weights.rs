//! Trained-weights file.
//!
//! ```text
//! "FTLW" | version u16 | input_len u32 | layer_count u16
//! per layer: kind u8, then
//!     conv1d:     filters u32, kernel u32, stride u32, activation u8
//!     max_pool1d: pool u32, stride u32
//!     global_avg_pool1d: nothing
//!     dense:      units u32, activation u8
//! per parameterised layer: weights f32 x len, bias f32 x len
//! best_epoch u32 | best_val_accuracy f32
//! ```
//!
//! All values little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Architecture, LayerParams, LayerSpec, Model, NnError};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FTLW";
pub const WEIGHTS_VERSION: u16 = 1;

/// Weights of the best epoch and the validation accuracy it reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub best_epoch: u32,
    pub best_val_accuracy: f32,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>, NnError> {
        let arch = &self.model.arch;
        if arch.input_channels != 1 {
            return Err(NnError::Weights("only single-channel inputs can be saved".into()));
        }
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(arch.input_len as u32).to_le_bytes());
        out.extend_from_slice(&(arch.layers.len() as u16).to_le_bytes());
        for layer in &arch.layers {
            out.push(layer.kind_code());
            let (hyper, activation): (Vec<usize>, Option<Activation>) = match *layer {
                LayerSpec::Conv1d { filters, kernel, stride, activation } => (vec![filters, kernel, stride], Some(activation)),
                LayerSpec::MaxPool1d { pool, stride } => (vec![pool, stride], None),
                LayerSpec::GlobalAvgPool1d => (vec![], None),
                LayerSpec::Dense { units, activation } => (vec![units], Some(activation)),
            };
            for h in hyper {
                out.extend_from_slice(&(h as u32).to_le_bytes());
            }
            if let Some(a) = activation {
                out.push(a.code());
            }
        }
        for p in &self.model.params {
            for v in p.weights.iter().chain(&p.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.best_epoch.to_le_bytes());
        out.extend_from_slice(&self.best_val_accuracy.to_le_bytes());
        Ok(out)
    }

    pub fn decode(mut r: impl Read) -> Result<Checkpoint, NnError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != WEIGHTS_MAGIC {
            return Err(NnError::Weights(format!("bad magic {magic:02X?}")));
        }
        let version = u16::from_le_bytes(read_array(&mut r, "version")?);
        if version != WEIGHTS_VERSION {
            return Err(NnError::Weights(format!("unsupported version {version}")));
        }
        let input_len = u32::from_le_bytes(read_array(&mut r, "input length")?) as usize;
        let layer_count = u16::from_le_bytes(read_array(&mut r, "layer count")?) as usize;
        let mut layers = Vec::with_capacity(layer_count);
        for i in 0..layer_count {
            let what = format!("layer {i} header");
            let [kind] = read_array(&mut r, &what)?;
            let u32_field = |r: &mut dyn Read| -> Result<usize, NnError> {
                Ok(u32::from_le_bytes(read_array(r, &what)?) as usize)
            };
            let activation = |code: u8| {
                Activation::from_code(code).ok_or_else(|| NnError::Weights(format!("layer {i}: bad activation code {code}")))
            };
            layers.push(match kind {
                0 => {
                    let (filters, kernel, stride) = (u32_field(&mut r)?, u32_field(&mut r)?, u32_field(&mut r)?);
                    let [a] = read_array(&mut r, "activation")?;
                    LayerSpec::Conv1d { filters, kernel, stride, activation: activation(a)? }
                }
                1 => LayerSpec::MaxPool1d { pool: u32_field(&mut r)?, stride: u32_field(&mut r)? },
                2 => LayerSpec::GlobalAvgPool1d,
                3 => {
                    let units = u32_field(&mut r)?;
                    let [a] = read_array(&mut r, "activation")?;
                    LayerSpec::Dense { units, activation: activation(a)? }
                }
                other => return Err(NnError::Weights(format!("layer {i}: unknown kind {other}"))),
            });
        }
        let arch = Architecture { input_len, input_channels: 1, layers };
        let sizes = arch.param_sizes().map_err(|e| NnError::Weights(format!("architecture mismatch: {e}")))?;
        let mut params = Vec::with_capacity(sizes.len());
        for (i, (w, b)) in sizes.into_iter().enumerate() {
            let name = arch.layers[i].kind_name();
            let weights = read_f32s(&mut r, w, &format!("layer {i} ({name}) weights"))?;
            let bias = read_f32s(&mut r, b, &format!("layer {i} ({name}) bias"))?;
            params.push(LayerParams { weights, bias });
        }
        let best_epoch = u32::from_le_bytes(read_array(&mut r, "best epoch")?);
        let best_val_accuracy = f32::from_le_bytes(read_array(&mut r, "best validation accuracy")?);
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(NnError::Weights("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint { model: Model::from_params(arch, params)?, best_epoch, best_val_accuracy })
    }
}

fn read_exact(r: &mut dyn Read, buf: &mut [u8], what: &str) -> Result<(), NnError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NnError::Weights(format!("truncated while reading {what}")),
        _ => NnError::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut dyn Read, what: &str) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

fn read_f32s(r: &mut dyn Read, n: usize, what: &str) -> Result<Vec<f32>, NnError> {
    let mut raw = vec![0u8; n * 4];
    read_exact(r, &mut raw, what)?;
    Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn save_weights(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&checkpoint.encode()?)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Checkpoint, NnError> {
    Checkpoint::decode(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> Checkpoint {
        Checkpoint { model: Model::init(Architecture::default_for(2), 5).unwrap(), best_epoch: 7, best_val_accuracy: 0.875 }
    }

    #[test]
    fn default_binary_file_size_from_layout() {
        let bytes = checkpoint().encode().unwrap();
        let header = 4 + 2 + 4 + 2;
        // conv: kind + 3 u32 + act; pool: kind + 2 u32; gap: kind; dense: kind + u32 + act
        let layer_headers = (1 + 12 + 1) + (1 + 8) + (1 + 12 + 1) + 1 + (1 + 4 + 1);
        let params = (64 * 64 + 64) + (64 * 3 * 64 + 64) + (2 * 64 + 2);
        assert_eq!(bytes.len(), header + layer_headers + params * 4 + 8);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = checkpoint();
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn truncation_names_the_layer() {
        let bytes = checkpoint().encode().unwrap();
        // cut inside the second conv's weights
        let cut = 12 + 44 + (4096 + 64) * 4 + 100;
        let err = Checkpoint::decode(&bytes[..cut]).unwrap_err().to_string();
        assert!(err.contains("layer 2 (conv1d) weights"), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = checkpoint().encode().unwrap();
        bytes[4] = 9;
        assert!(Checkpoint::decode(&bytes[..]).unwrap_err().to_string().contains("version"));
        bytes[0] = b'Z';
        assert!(Checkpoint::decode(&bytes[..]).unwrap_err().to_string().contains("magic"));
    }
}
