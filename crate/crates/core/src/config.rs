//! One document holding every module's settings, with toy and paper presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::GeneratorConfig;
use crate::error::{Error, Result};
use crate::mtt::MttConfig;
use crate::optim::OptimizeConfig;
use crate::refine::IkConfig;
use crate::vqvae::VqvaeConfig;

pub const MODEL_DIR_ENV: &str = "TLC_MODEL_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small model for CI and laptops: 64 frames, 32 codes of width 32.
    Toy,
    /// Full-size settings: 196 frames, 126 codes of width 126.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub generator: GeneratorConfig,
    pub corpus_size: usize,
    /// JSON-lines corpus written by `gen-data`; regenerated from the seed
    /// when absent.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Refinements allowed to run at once.
    pub workers: usize,
    pub max_samples: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into(), workers: 1, max_samples: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub profile: Profile,
    pub seed: u64,
    pub model_dir: PathBuf,
    pub data: DataConfig,
    pub vqvae: VqvaeConfig,
    pub mtt: MttConfig,
    pub optimize: OptimizeConfig,
    pub ik: IkConfig,
    pub eval: crate::eval::EvalSuiteConfig,
    pub service: ServiceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config::toy()
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Config::toy().data
    }
}

impl Config {
    pub fn toy() -> Config {
        Config {
            profile: Profile::Toy,
            seed: 0,
            model_dir: PathBuf::from("models/toy"),
            data: DataConfig {
                generator: GeneratorConfig { max_len: 64, ..GeneratorConfig::default() },
                corpus_size: 200,
                path: PathBuf::from("data/toy.jsonl"),
            },
            vqvae: VqvaeConfig {
                codebook_size: 32,
                code_dim: 32,
                enc_width: 64,
                dec_width: 96,
                lr: 2e-3,
                lr_final: 1e-4,
                batch_size: 16,
                reset_warmup_steps: 20,
                epochs: 200,
                window: 64,
                ..VqvaeConfig::default()
            },
            mtt: MttConfig {
                stage1_width: 64,
                stage2_width: 32,
                heads: 4,
                ff_mult: 2,
                max_len: 64,
                lr: 1e-3,
                lr_final: 5e-5,
                batch_size: 16,
                epochs: 200,
                ..MttConfig::default()
            },
            optimize: OptimizeConfig::default(),
            ik: IkConfig::default(),
            eval: crate::eval::EvalSuiteConfig::default(),
            service: ServiceConfig::default(),
        }
    }

    pub fn paper() -> Config {
        Config {
            profile: Profile::Paper,
            seed: 0,
            model_dir: PathBuf::from("models/paper"),
            data: DataConfig { generator: GeneratorConfig::default(), corpus_size: 4000, path: PathBuf::from("data/paper.jsonl") },
            vqvae: VqvaeConfig::default(),
            mtt: MttConfig::default(),
            optimize: OptimizeConfig::default(),
            ik: IkConfig::default(),
            eval: crate::eval::EvalSuiteConfig::default(),
            service: ServiceConfig::default(),
        }
    }

    pub fn for_profile(p: Profile) -> Config {
        match p {
            Profile::Toy => Config::toy(),
            Profile::Paper => Config::paper(),
        }
    }

    /// Reads a TOML document; keys it leaves out take the values of `base`.
    pub fn load(path: &Path, base: Profile) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let mut doc: toml::Value = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let profile = doc
            .get("profile")
            .and_then(|v| v.as_str())
            .map(|s| match s {
                "toy" => Ok(Profile::Toy),
                "paper" => Ok(Profile::Paper),
                other => Err(Error::Config(format!("unknown profile {other:?}"))),
            })
            .transpose()?
            .unwrap_or(base);
        let defaults = toml::Value::try_from(Config::for_profile(profile)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut doc, defaults);
        let config: Config = doc.try_into().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.generator.validate()?;
        self.vqvae.validate()?;
        self.mtt.validate(self.vqvae.downsample)?;
        self.optimize.validate()?;
        if self.mtt.max_len != self.data.generator.max_len {
            return Err(Error::Config("mtt.max_len must equal data.generator.max_len".into()));
        }
        Ok(())
    }

    /// Reads the corpus file when present, else generates it from the seed.
    pub fn corpus(&self) -> Result<crate::dataset::Corpus> {
        if self.data.path.exists() {
            let samples = crate::dataset::read_corpus(&self.data.path)?;
            crate::dataset::Corpus::from_samples(samples, self.data.generator.clone(), self.seed)
        } else {
            crate::dataset::generate_corpus(&self.data.generator, self.data.corpus_size, self.seed)
        }
    }

    /// `TLC_MODEL_DIR` when set, else `model_dir`.
    pub fn resolved_model_dir(&self) -> PathBuf {
        std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.model_dir.clone())
    }
}

/// Fills keys missing from `doc` with those of `defaults`, recursively.
fn merge(doc: &mut toml::Value, defaults: toml::Value) {
    if let (toml::Value::Table(d), toml::Value::Table(def)) = (doc, defaults) {
        for (k, v) in def {
            match d.get_mut(&k) {
                Some(existing) => merge(existing, v),
                None => {
                    d.insert(k, v);
                }
            }
        }
    }
}
