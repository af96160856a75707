//! Control accuracy against waypoints, sample spread, and a Fréchet distance
//! between feature distributions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{JointGroup, JointPositions, MotionClip, PartialTrajectory, SkeletonSpec};
use crate::vqvae::Codec;

pub const DEFAULT_THRESHOLD_M: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlErrorReport {
    /// Fraction of tracks with at least one keyframe beyond the threshold.
    pub traj_err_fraction: f64,
    /// Fraction of keyframes beyond the threshold.
    pub loc_err_fraction: f64,
    /// Mean keyframe distance in centimeters.
    pub avg_err_cm: f64,
    pub threshold_m: f64,
    pub keyframes: usize,
    pub tracks: usize,
}

/// Per-keyframe distances (meters) between the key joints of `positions` and
/// the specified waypoints, grouped by track.
pub fn keyframe_deviations(
    positions: &JointPositions,
    traj: &PartialTrajectory,
    skeleton: &SkeletonSpec,
) -> Result<Vec<(JointGroup, Vec<f64>)>> {
    if positions.frames() != traj.len() {
        return Err(Error::Shape(format!("{} frames of motion for a {}-frame trajectory", positions.frames(), traj.len())));
    }
    Ok(JointGroup::ALL
        .iter()
        .filter(|&&g| traj.num_specified_in(g) > 0)
        .map(|&g| {
            let k = skeleton.key_joint(g);
            let d = (0..traj.len())
                .filter_map(|t| {
                    traj.get(g, t).map(|w| {
                        let p = positions.get(t, k);
                        ((p[0] - w[0]).powi(2) + (p[1] - w[1]).powi(2) + (p[2] - w[2]).powi(2)).sqrt()
                    })
                })
                .collect();
            (g, d)
        })
        .collect())
}

/// Control errors pooled over a set of (motion, trajectory) pairs.
pub fn control_accuracy(
    samples: &[(&JointPositions, &PartialTrajectory)],
    skeleton: &SkeletonSpec,
    threshold_m: f64,
) -> Result<ControlErrorReport> {
    let (mut tracks, mut bad_tracks, mut keys, mut bad_keys, mut sum) = (0, 0, 0, 0, 0.0);
    for (pos, traj) in samples {
        for (_, d) in keyframe_deviations(pos, traj, skeleton)? {
            tracks += 1;
            let over = d.iter().filter(|&&v| v > threshold_m).count();
            bad_tracks += usize::from(over > 0);
            bad_keys += over;
            keys += d.len();
            sum += d.iter().sum::<f64>();
        }
    }
    if keys == 0 {
        return Err(Error::UndefinedMetrics("no keyframes to score".into()));
    }
    Ok(ControlErrorReport {
        traj_err_fraction: bad_tracks as f64 / tracks as f64,
        loc_err_fraction: bad_keys as f64 / keys as f64,
        avg_err_cm: 100.0 * sum / keys as f64,
        threshold_m,
        keyframes: keys,
        tracks,
    })
}

/// Mean keyframe distance in meters for one motion.
pub fn avg_keyframe_error(positions: &JointPositions, traj: &PartialTrajectory, skeleton: &SkeletonSpec) -> Result<f64> {
    Ok(control_accuracy(&[(positions, traj)], skeleton, DEFAULT_THRESHOLD_M)?.avg_err_cm / 100.0)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Flattened normalized features truncated to `frames`.
pub fn flat_features(clip: &MotionClip, frames: usize) -> Vec<f64> {
    clip.features()[..frames.min(clip.frames()) * clip.dim()].to_vec()
}

/// Disjoint random pairs of `0..n`, at most `num_pairs` of them.
pub fn diversity_pairs(n: usize, num_pairs: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks_exact(2).take(num_pairs).map(|p| (p[0], p[1])).collect()
}

/// Mean distance over the given pairs; vectors are cut to a common length.
pub fn diversity_with_pairs(features: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<f64> {
    if features.len() < 2 || pairs.is_empty() {
        return Err(Error::Input("diversity needs at least two motions".into()));
    }
    let len = features.iter().map(Vec::len).min().unwrap_or(0);
    Ok(pairs.iter().map(|&(a, b)| distance(&features[a][..len], &features[b][..len])).sum::<f64>() / pairs.len() as f64)
}

pub fn diversity(features: &[Vec<f64>], num_pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::Input("diversity needs at least two motions".into()));
    }
    let pairs = diversity_pairs(features.len(), num_pairs.max(1), rng);
    diversity_with_pairs(features, &pairs)
}

/// Mean over inputs of the mean pairwise distance among that input's samples.
pub fn multimodality(groups: &[Vec<Vec<f64>>]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::Input("multimodality needs at least one group".into()));
    }
    let mut total = 0.0;
    for grp in groups {
        if grp.len() < 2 {
            return Err(Error::Input(format!("a group has {} samples; at least 2 are needed", grp.len())));
        }
        let len = grp.iter().map(Vec::len).min().unwrap_or(0);
        let (mut s, mut n) = (0.0, 0);
        for i in 0..grp.len() {
            for j in i + 1..grp.len() {
                s += distance(&grp[i][..len], &grp[j][..len]);
                n += 1;
            }
        }
        total += s / n as f64;
    }
    Ok(total / groups.len() as f64)
}

fn gaussian_fit(set: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if set.len() < 2 {
        return Err(Error::Input("a Gaussian fit needs at least two samples".into()));
    }
    let d = set[0].len();
    if set.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("feature vectors differ in length".into()));
    }
    let n = set.len() as f64;
    let mut mean = DVector::zeros(d);
    for v in set {
        mean += DVector::from_column_slice(v);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let c = DVector::from_column_slice(v) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    Ok((mean, cov))
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let vals = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets, with
/// `1e-6 * I` added to both covariances.
pub fn fid_proxy(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64> {
    let (m1, mut c1) = gaussian_fit(real)?;
    let (m2, mut c2) = gaussian_fit(generated)?;
    if m1.len() != m2.len() {
        return Err(Error::Shape("feature sets differ in width".into()));
    }
    let eye = DMatrix::identity(m1.len(), m1.len()) * 1e-6;
    c1 += &eye;
    c2 += &eye;
    // tr sqrt(C1 C2) = tr sqrt(C1^1/2 C2 C1^1/2), which keeps everything symmetric
    let s1 = sqrt_psd(&c1);
    let cross = sqrt_psd(&(&s1 * &c2 * &s1)).trace();
    let diff = (&m1 - &m2).norm_squared();
    Ok((diff + c1.trace() + c2.trace() - 2.0 * cross).max(0.0))
}

/// Fixed extractor for the Fréchet distance: the codec's continuous latent
/// averaged over time, one `6 * code_dim` vector per normalized clip.
pub fn codec_features(codec: &Codec, clip: &MotionClip) -> Result<Vec<f64>> {
    let lat = codec.encode_groups(clip)?;
    let w = lat.width();
    let mut out = vec![0.0; w];
    for t in 0..lat.steps {
        for (o, v) in out.iter_mut().zip(&lat.data[t * w..(t + 1) * w]) {
            *o += v / lat.steps as f64;
        }
    }
    Ok(out)
}

/// Mean per-joint Euclidean distance (meters) between two position tracks.
pub fn mpjpe(a: &JointPositions, b: &JointPositions) -> Result<f64> {
    if a.frames() != b.frames() || a.joints() != b.joints() || a.frames() == 0 {
        return Err(Error::Shape(format!(
            "position tracks {}x{} and {}x{}",
            a.frames(),
            a.joints(),
            b.frames(),
            b.joints()
        )));
    }
    Ok(a.data().iter().zip(b.data()).map(|(p, q)| distance(p, q)).sum::<f64>() / a.data().len() as f64)
}

/// Codec reconstruction error in meters, averaged over clips given in meters.
/// Positions are recovered from both the input and the quantized
/// reconstruction.
pub fn reconstruction_mpjpe<'a>(codec: &Codec, clips: impl IntoIterator<Item = &'a MotionClip>) -> Result<f64> {
    let layout = crate::motion::PoseFeatureLayout::new(codec.config.num_joints);
    let (mut sum, mut n) = (0.0, 0);
    for clip in clips {
        let rec = codec.stats.denormalize(&codec.reconstruct(&codec.stats.normalize(clip)?)?)?;
        let a = crate::motion::recover_global_positions(clip, &layout)?;
        let b = crate::motion::recover_global_positions(&rec, &layout)?;
        sum += mpjpe(&a, &b)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Input("no clips to reconstruct".into()));
    }
    Ok(sum / n as f64)
}
