use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::body::positions_of;
use super::families::Family;
use crate::error::{Error, Result};
use crate::motion::{
    features_from_positions, pad_positions, recover_global_positions, MotionClip, MotionJson, PartialTrajectory,
    PoseFeatureLayout, SkeletonSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Every clip is padded to this many frames.
    pub max_len: usize,
    pub fps: f64,
    /// Shortest unpadded clip as a fraction of `max_len`.
    pub min_len_frac: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { max_len: 196, fps: 20.0, min_len_frac: 0.75 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < 8 {
            return Err(Error::Config(format!("max_len must be at least 8, got {}", self.max_len)));
        }
        if !(self.min_len_frac > 0.0 && self.min_len_frac <= 1.0) {
            return Err(Error::Config("min_len_frac must lie in (0, 1]".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        Ok(())
    }

    fn min_len(&self) -> usize {
        ((self.max_len as f64 * self.min_len_frac).ceil() as usize).clamp(2, self.max_len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSample {
    /// Padded to the corpus length.
    pub motion: MotionClip,
    pub text: String,
    /// All six key-joint tracks, specified on the unpadded frames.
    pub full_trajectories: PartialTrajectory,
    pub true_length: usize,
    pub family: Option<Family>,
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const MIN_STD: f64 = 1e-6;

impl NormStats {
    /// Population statistics over every frame of `clips`.
    pub fn compute<'a>(clips: impl IntoIterator<Item = &'a MotionClip>) -> Result<NormStats> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for c in clips {
            if sum.is_empty() {
                sum = vec![0.0; c.dim()];
                sq = vec![0.0; c.dim()];
            } else if c.dim() != sum.len() {
                return Err(Error::Layout("clips disagree on channel count".into()));
            }
            for t in 0..c.frames() {
                for (i, &v) in c.frame(t).iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
            }
            n += c.frames();
        }
        if n == 0 {
            return Err(Error::Input("no frames to compute statistics from".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        // second pass would be more stable; channels here are O(1) so this is fine
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(MIN_STD))
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, clip: &MotionClip) -> Result<()> {
        if clip.dim() != self.dim() {
            return Err(Error::Layout(format!("clip has {} channels, stats {}", clip.dim(), self.dim())));
        }
        Ok(())
    }

    pub fn normalize(&self, clip: &MotionClip) -> Result<MotionClip> {
        self.check(clip)?;
        let mut out = clip.clone();
        for t in 0..out.frames() {
            for (i, v) in out.frame_mut(t).iter_mut().enumerate() {
                *v = (*v - self.mean[i]) / self.std[i];
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, clip: &MotionClip) -> Result<MotionClip> {
        self.check(clip)?;
        let mut out = clip.clone();
        for t in 0..out.frames() {
            for (i, v) in out.frame_mut(t).iter_mut().enumerate() {
                *v = *v * self.std[i] + self.mean[i];
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NormStats> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// 80/10/10 by index after a seeded shuffle.
    pub fn seeded(count: usize, seed: u64) -> Split {
        let mut idx: Vec<usize> = (0..count).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        idx.shuffle(&mut rng);
        let n_train = ((count as f64 * 0.8).round() as usize).max(1).min(count);
        let n_val = ((count as f64 * 0.1).round() as usize).min(count - n_train);
        let mut train = idx[..n_train].to_vec();
        let mut val = idx[n_train..n_train + n_val].to_vec();
        let mut test = idx[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Split { train, val, test }
    }
}

pub struct Corpus {
    pub samples: Vec<CorpusSample>,
    pub stats: NormStats,
    pub split: Split,
    pub config: GeneratorConfig,
}

impl Corpus {
    /// Seeded split and training-split statistics over existing samples.
    pub fn from_samples(samples: Vec<CorpusSample>, config: GeneratorConfig, seed: u64) -> Result<Corpus> {
        if samples.is_empty() {
            return Err(Error::Input("corpus has no samples".into()));
        }
        let split = Split::seeded(samples.len(), seed);
        let stats = NormStats::compute(split.train.iter().map(|&i| &samples[i].motion))?;
        Ok(Corpus { samples, stats, split, config })
    }

    pub fn train(&self) -> impl Iterator<Item = &CorpusSample> {
        self.split.train.iter().map(move |&i| &self.samples[i])
    }

    pub fn val(&self) -> impl Iterator<Item = &CorpusSample> {
        self.split.val.iter().map(move |&i| &self.samples[i])
    }

    pub fn test(&self) -> impl Iterator<Item = &CorpusSample> {
        self.split.test.iter().map(move |&i| &self.samples[i])
    }
}

pub fn extract_key_trajectories(clip: &MotionClip, skeleton: &SkeletonSpec) -> Result<PartialTrajectory> {
    let pos = recover_global_positions(clip, &PoseFeatureLayout::new(skeleton.num_joints()))?;
    Ok(PartialTrajectory::from_positions(&pos, skeleton, clip.frames()))
}

/// Renders one family instance with `true_length` real frames.
pub fn generate_sample(family: Family, true_length: usize, config: &GeneratorConfig) -> Result<CorpusSample> {
    config.validate()?;
    if true_length < 2 || true_length > config.max_len {
        return Err(Error::Config(format!("true_length {true_length} outside [2, {}]", config.max_len)));
    }
    let skeleton = SkeletonSpec::smpl22();
    let poses = family.poses(true_length);
    let positions = pad_positions(&positions_of(&poses), config.max_len);
    let motion = features_from_positions(&positions, config.fps, &skeleton)?;
    let mut full = extract_key_trajectories(&motion, &skeleton)?;
    for g in crate::motion::JointGroup::ALL {
        for t in true_length..config.max_len {
            full.clear(g, t);
        }
    }
    Ok(CorpusSample { motion, text: family.describe(), full_trajectories: full, true_length, family: Some(family) })
}

/// Sample `index` of the corpus for `seed`; independent of every other index.
pub fn generate_indexed(config: &GeneratorConfig, seed: u64, index: usize) -> Result<CorpusSample> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let family = Family::random(&mut rng);
    let len = rng.gen_range(config.min_len()..=config.max_len);
    generate_sample(family, len, config)
}

pub fn generate_corpus(config: &GeneratorConfig, count: usize, seed: u64) -> Result<Corpus> {
    config.validate()?;
    if count < 1 {
        return Err(Error::Config("corpus count must be at least 1".into()));
    }
    let samples = (0..count).map(|i| generate_indexed(config, seed, i)).collect::<Result<Vec<_>>>()?;
    Corpus::from_samples(samples, config.clone(), seed)
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    text: String,
    true_length: usize,
    motion: MotionJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
}

pub fn write_corpus(path: &Path, samples: &[CorpusSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        let line = SampleLine {
            text: s.text.clone(),
            true_length: s.true_length,
            motion: MotionJson::from_clip(&s.motion, 22, None),
            family: s.family,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusSample>> {
    let skeleton = SkeletonSpec::smpl22();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SampleLine =
            serde_json::from_str(&line).map_err(|e| Error::Input(format!("corpus line {}: {e}", n + 1)))?;
        let motion = s.motion.to_clip()?;
        let mut full = extract_key_trajectories(&motion, &skeleton)?;
        for g in crate::motion::JointGroup::ALL {
            for t in s.true_length.min(motion.frames())..motion.frames() {
                full.clear(g, t);
            }
        }
        out.push(CorpusSample { motion, text: s.text, full_trajectories: full, true_length: s.true_length, family: s.family });
    }
    Ok(out)
}
