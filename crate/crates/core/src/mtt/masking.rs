use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::motion::{JointGroup, PartialTrajectory};

/// Number of frames a proportion `p` of `len` masks, `floor(p * len)`.
pub fn masked_count(p: f64, len: usize) -> usize {
    // the small slack keeps p = i/10 grids from landing one below an integer
    ((p.clamp(0.0, 1.0) * len as f64 + 1e-9).floor() as usize).min(len)
}

/// Masks contiguous runs of random length in every group until each group has
/// `floor(p * len)` unspecified frames. Groups that already have at least that
/// many are left alone.
pub fn continuous_trajectory_mask(traj: &PartialTrajectory, p: f64, rng: &mut impl Rng) -> PartialTrajectory {
    let len = traj.len();
    let target = masked_count(p, len);
    let mut out = traj.clone();
    if len == 0 {
        return out;
    }
    let max_run = (len / 4).max(1);
    for g in JointGroup::ALL {
        let mut masked = len - out.num_specified_in(g);
        while masked < target {
            let run = rng.gen_range(1..=max_run);
            let start = rng.gen_range(0..len);
            for t in start..(start + run).min(len) {
                if masked == target {
                    break;
                }
                if out.is_specified(g, t) {
                    out.clear(g, t);
                    masked += 1;
                }
            }
        }
    }
    out
}

/// Draws `k` uniformly from `0..=6` and masks `k` distinct groups entirely.
/// Returns the masked trajectory and the chosen groups.
pub fn joint_level_mask(traj: &PartialTrajectory, rng: &mut impl Rng) -> (PartialTrajectory, Vec<JointGroup>) {
    let k = rng.gen_range(0..=JointGroup::ALL.len());
    let mut groups: Vec<JointGroup> =
        sample(rng, JointGroup::ALL.len(), k).into_iter().map(|i| JointGroup::ALL[i]).collect();
    groups.sort_by_key(|g| g.index());
    let mut out = traj.clone();
    for &g in &groups {
        out.clear_group(g);
    }
    (out, groups)
}

/// Counter-based generator for per-sample masking, reproducible from
/// `(seed, epoch, batch, sample)`.
pub fn mask_rng(seed: u64, epoch: usize, batch: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 40) ^ ((batch as u64) << 20) ^ sample as u64);
    rng
}
