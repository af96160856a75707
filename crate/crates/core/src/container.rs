//! On-disk model directory: `manifest.json` describing every tensor and the
//! configs, and `weights.bin` holding the tensors as little-endian f32.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tlc_autograd::{ParamStore, Tensor};

use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::mtt::{Mtt, MttConfig};
use crate::text::fnv1a64;
use crate::vqvae::{Codebook, Codec, VqvaeConfig};

pub const FORMAT: &str = "tlcontrol-model";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the weights file.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub vqvae: VqvaeConfig,
    pub mtt: Option<MttConfig>,
    pub tensors: Vec<TensorEntry>,
    /// FNV-1a 64 of the weights file, hex.
    pub weights_digest: String,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| Error::Load(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Load(format!("manifest: {e}")))?;
        if m.format != FORMAT || m.version != FORMAT_VERSION {
            return Err(Error::Load(format!(
                "model format {} v{} is not {FORMAT} v{FORMAT_VERSION}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

fn collect(codec: &Codec, store: &ParamStore) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = store.ids().map(|id| (store.name(id).to_string(), store.get(id).clone())).collect();
    for (k, cb) in codec.codebooks.iter().enumerate() {
        out.push((format!("codebook.{k}.codes"), Tensor::new([cb.size, cb.dim], cb.codes.clone())));
        out.push((format!("codebook.{k}.usage"), Tensor::new([cb.size], cb.usage.clone())));
    }
    out.push(("stats.mean".into(), Tensor::new([codec.stats.dim()], codec.stats.mean.clone())));
    out.push(("stats.std".into(), Tensor::new([codec.stats.dim()], codec.stats.std.clone())));
    out
}

fn write(dir: &Path, vqvae: &VqvaeConfig, mtt: Option<&MttConfig>, tensors: Vec<(String, Tensor)>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        entries.push(TensorEntry { name, shape: t.shape().to_vec(), offset: bytes.len() });
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        vqvae: vqvae.clone(),
        mtt: mtt.cloned(),
        tensors: entries,
        weights_digest: format!("{:016x}", fnv1a64(&bytes)),
    };
    fs::write(dir.join(WEIGHTS_FILE), &bytes)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn save_codec(dir: &Path, codec: &Codec) -> Result<()> {
    write(dir, &codec.config, None, collect(codec, &codec.store))
}

/// Saves the transformer together with its codec.
pub fn save_model(dir: &Path, model: &Mtt) -> Result<()> {
    write(dir, &model.codec.config, Some(&model.config), collect(&model.codec, &model.store))
}

struct Weights {
    manifest: Manifest,
    bytes: Vec<u8>,
}

impl Weights {
    fn read(dir: &Path) -> Result<Weights> {
        let manifest = Manifest::read(dir)?;
        let bytes = fs::read(dir.join(WEIGHTS_FILE))
            .map_err(|e| Error::Load(format!("{}: {e}", dir.join(WEIGHTS_FILE).display())))?;
        if format!("{:016x}", fnv1a64(&bytes)) != manifest.weights_digest {
            return Err(Error::Load("weights digest does not match the manifest".into()));
        }
        Ok(Weights { manifest, bytes })
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        let e = self
            .manifest
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Load(format!("missing tensor {name}")))?;
        let n: usize = e.shape.iter().product();
        let raw = self
            .bytes
            .get(e.offset..e.offset + 4 * n)
            .ok_or_else(|| Error::Load(format!("tensor {name} runs past the weights file")))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Ok(Tensor::new(e.shape.clone(), data))
    }

    fn fill(&self, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let t = self.tensor(store.name(id))?;
            if t.shape() != store.get(id).shape() {
                return Err(Error::Load(format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    store.name(id),
                    t.shape(),
                    store.get(id).shape()
                )));
            }
            store.set(id, t);
        }
        Ok(())
    }

    fn codec(&self) -> Result<Codec> {
        let stats = NormStats {
            mean: self.tensor("stats.mean")?.data().to_vec(),
            std: self.tensor("stats.std")?.data().to_vec(),
        };
        // the architecture comes from the config; every value is then overwritten
        let mut codec = Codec::new(self.manifest.vqvae.clone(), stats, &mut ChaCha8Rng::seed_from_u64(0))?;
        self.fill(&mut codec.store)?;
        for k in 0..codec.codebooks.len() {
            let codes = self.tensor(&format!("codebook.{k}.codes"))?;
            let usage = self.tensor(&format!("codebook.{k}.usage"))?;
            let (size, dim) = (codes.dim(0), codes.dim(1));
            let mut cb = Codebook::new(codes.data().to_vec(), size, dim)?;
            cb.usage = usage.data().to_vec();
            cb.sums = cb.codes.iter().enumerate().map(|(i, c)| c * cb.usage[i / dim]).collect();
            codec.codebooks[k] = cb;
        }
        Ok(codec)
    }
}

pub fn load_codec(dir: &Path) -> Result<Codec> {
    Weights::read(dir)?.codec()
}

pub fn load_model(dir: &Path) -> Result<Mtt> {
    let w = Weights::read(dir)?;
    let config = w.manifest.mtt.clone().ok_or_else(|| Error::Load("model directory holds only a codec".into()))?;
    let codec = w.codec()?;
    let mut model = Mtt::new(config, codec, &mut ChaCha8Rng::seed_from_u64(0))?;
    w.fill(&mut model.store)?;
    Ok(model)
}
