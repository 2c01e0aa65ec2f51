use std::fmt::Debug;
use std::fs;
use std::iter::Sum;
use std::path::Path;

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{FamaeError, ModelConfig};
use crate::data::rsid::{check_magic, read_f32s, read_u32, CHECKPOINT_VERSION, MAGIC};
use crate::data::DataError;
use crate::rng::stream_rng;

/// Scalar type the encoder runs in. Training uses `f32`; `f64` serves as a reference.
pub trait Real: Float + FromPrimitive + Sum + Send + Sync + Debug + 'static {}

impl<T: Float + FromPrimitive + Sum + Send + Sync + Debug + 'static> Real for T {}

pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

const INIT_STREAM: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offsets of one transformer layer's tensors. Matrices are stored `in x out`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Placement of every named tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub embeddings: Vec<usize>,
    pub mask: usize,
    pub positions: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig, vocab_sizes: &[usize], max_len: usize) -> Self {
        let d = config.dim;
        let f = config.ffn_dim;
        let mut tensors: Vec<TensorSpec> = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec { name, shape, offset });
            offset
        };
        let embeddings = vocab_sizes
            .iter()
            .enumerate()
            .map(|(k, &v)| add(format!("field{k}.embedding"), vec![v, d]))
            .collect();
        let mask = add("mask_tokens".into(), vec![vocab_sizes.len(), d]);
        let positions = add("positions".into(), vec![max_len, d]);
        let layers = (0..config.layers)
            .map(|l| {
                let mut t = |n: &str, shape: Vec<usize>| add(format!("layer{l}.{n}"), shape);
                LayerOffsets {
                    ln1_g: t("ln1.gain", vec![d]),
                    ln1_b: t("ln1.bias", vec![d]),
                    wq: t("attn.wq", vec![d, d]),
                    bq: t("attn.bq", vec![d]),
                    wk: t("attn.wk", vec![d, d]),
                    bk: t("attn.bk", vec![d]),
                    wv: t("attn.wv", vec![d, d]),
                    bv: t("attn.bv", vec![d]),
                    wo: t("attn.wo", vec![d, d]),
                    bo: t("attn.bo", vec![d]),
                    ln2_g: t("ln2.gain", vec![d]),
                    ln2_b: t("ln2.bias", vec![d]),
                    w1: t("ffn.w1", vec![d, f]),
                    b1: t("ffn.b1", vec![f]),
                    w2: t("ffn.w2", vec![f, d]),
                    b2: t("ffn.b2", vec![d]),
                }
            })
            .collect();
        let lnf_g = add("final_ln.gain".into(), vec![d]);
        let lnf_b = add("final_ln.bias".into(), vec![d]);
        Self {
            tensors,
            embeddings,
            mask,
            positions,
            layers,
            lnf_g,
            lnf_b,
            total,
        }
    }
}

/// All encoder weights in one flat vector, addressed through [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParameters<T: Real = f32> {
    pub config: ModelConfig,
    pub vocab_sizes: Vec<usize>,
    /// Number of positions (history plus target) the encoder reads.
    pub max_len: usize,
    pub layout: Layout,
    pub values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    vocab_sizes: Vec<usize>,
    max_len: usize,
    dtype: String,
    tensors: Vec<TensorSpec>,
}

impl<T: Real> EncoderParameters<T> {
    /// Random initialization from `config.seed`: embeddings, mask tokens and positions are
    /// `N(0, 1/D)`, projections Xavier-uniform, layer-norm gains 1, biases 0.
    pub fn init(config: &ModelConfig, vocab_sizes: &[usize], max_len: usize) -> Result<Self, FamaeError> {
        config.validate(vocab_sizes.len())?;
        if vocab_sizes.is_empty() || vocab_sizes.contains(&0) {
            return Err(FamaeError::Config("every field needs a non-empty vocabulary".into()));
        }
        if max_len < 2 {
            return Err(FamaeError::Config("max_len must be at least 2".into()));
        }
        let layout = Layout::new(config, vocab_sizes, max_len);
        let mut values = vec![T::zero(); layout.total];
        let mut rng = stream_rng(config.seed, &[INIT_STREAM]);
        let d = config.dim;
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        for spec in &layout.tensors {
            let slot = &mut values[spec.offset..spec.offset + spec.len()];
            let name = spec.name.as_str();
            if name.ends_with(".gain") {
                slot.fill(T::one());
            } else if name.ends_with("embedding") || name == "mask_tokens" || name == "positions" {
                slot.iter_mut().for_each(|v| *v = lit(normal.sample(&mut rng)));
            } else if spec.shape.len() == 2 {
                let bound = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                slot.iter_mut().for_each(|v| *v = lit(rng.sample(u)));
            }
        }
        Ok(Self {
            config: config.clone(),
            vocab_sizes: vocab_sizes.to_vec(),
            max_len,
            layout,
            values,
        })
    }

    pub fn num_fields(&self) -> usize {
        self.vocab_sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn embedding(&self, field: usize, value: usize) -> &[T] {
        let d = self.dim();
        let at = self.layout.embeddings[field] + value * d;
        &self.values[at..at + d]
    }

    pub fn embedding_mut(&mut self, field: usize, value: usize) -> &mut [T] {
        let d = self.dim();
        let at = self.layout.embeddings[field] + value * d;
        &mut self.values[at..at + d]
    }

    pub fn mask_token(&self, field: usize) -> &[T] {
        let d = self.dim();
        let at = self.layout.mask + field * d;
        &self.values[at..at + d]
    }

    pub fn position(&self, p: usize) -> &[T] {
        let d = self.dim();
        let at = self.layout.positions + p * d;
        &self.values[at..at + d]
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.values[t.offset..t.offset + t.len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let spec = self.layout.tensors.iter().find(|t| t.name == name)?.clone();
        Some(&mut self.values[spec.offset..spec.offset + spec.len()])
    }

    /// Same parameters in another scalar type.
    pub fn cast<U: Real>(&self) -> EncoderParameters<U> {
        EncoderParameters {
            config: self.config.clone(),
            vocab_sizes: self.vocab_sizes.clone(),
            max_len: self.max_len,
            layout: self.layout.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::from_f64(v.to_f64().expect("finite")).expect("representable"))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl EncoderParameters<f32> {
    /// Version-2 RSID container: JSON manifest followed by the flat `f32` payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            config: self.config.clone(),
            vocab_sizes: self.vocab_sizes.clone(),
            max_len: self.max_len,
            dtype: "f32".into(),
            tensors: self.layout.tensors.clone(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let version = check_magic(bytes)?;
        if version != CHECKPOINT_VERSION {
            return Err(DataError::format(
                4,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        if bytes.len() < 12 {
            return Err(DataError::format(bytes.len(), "truncated header"));
        }
        let json_len = read_u32(bytes, 8) as usize;
        let json_end = 12usize
            .checked_add(json_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| DataError::format(8, "truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[12..json_end])
            .map_err(|e| DataError::format(12, format!("bad manifest: {e}")))?;
        if manifest.dtype != "f32" {
            return Err(DataError::format(12, format!("unsupported dtype {}", manifest.dtype)));
        }
        let layout = Layout::new(&manifest.config, &manifest.vocab_sizes, manifest.max_len);
        if layout.tensors != manifest.tensors {
            return Err(DataError::format(12, "tensor table does not match the model config"));
        }
        let payload = layout
            .total
            .checked_mul(4)
            .ok_or_else(|| DataError::format(12, "payload size overflows"))?;
        if bytes.len() - json_end != payload {
            return Err(DataError::format(
                json_end,
                format!(
                    "payload holds {} bytes, manifest needs {payload}",
                    bytes.len() - json_end
                ),
            ));
        }
        let values = read_f32s(&bytes[json_end..]);
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::format(json_end + 4 * i, "non-finite parameter"));
        }
        Ok(Self {
            config: manifest.config,
            vocab_sizes: manifest.vocab_sizes,
            max_len: manifest.max_len,
            layout,
            values,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| DataError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.with_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            dim: 8,
            layers: 2,
            heads: 2,
            ffn_dim: 16,
            seed: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn layout_counts_every_tensor() {
        let cfg = small();
        let l = Layout::new(&cfg, &[5, 3], 4);
        let per_layer = 2 * 8 + 4 * (64 + 8) + 2 * 8 + (8 * 16 + 16) + (16 * 8 + 8);
        assert_eq!(l.total, 5 * 8 + 3 * 8 + 2 * 8 + 4 * 8 + 2 * per_layer + 2 * 8);
        let last = l.tensors.last().unwrap();
        assert_eq!(last.offset + last.len(), l.total);
    }

    #[test]
    fn init_is_seeded() {
        let a = EncoderParameters::<f32>::init(&small(), &[5, 3], 4).unwrap();
        let b = EncoderParameters::<f32>::init(&small(), &[5, 3], 4).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        assert_eq!(a.tensor("layer1.ln2.gain").unwrap(), &[1.0; 8]);
        assert!(EncoderParameters::<f32>::init(&ModelConfig { heads: 3, ..small() }, &[5], 4).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = EncoderParameters::<f32>::init(&small(), &[5, 3], 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rsid");
        p.write(&path).unwrap();
        let back = EncoderParameters::read(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    }

    #[test]
    fn checkpoint_rejects_truncation() {
        let p = EncoderParameters::<f32>::init(&small(), &[5, 3], 4).unwrap();
        let bytes = p.to_bytes();
        let err = EncoderParameters::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
        let emb = crate::data::EmbeddingMatrix::new(1, 1, vec![1.0], vec!["a".into()]).unwrap();
        let err = EncoderParameters::from_bytes(&emb.to_bytes().unwrap()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
