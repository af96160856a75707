use serde::{Deserialize, Serialize};

use super::layout::JointPositions;
use super::skeleton::{JointGroup, SkeletonSpec, NUM_GROUPS};

/// Per-group global waypoints with a presence mask.
///
/// Unspecified entries are stored as zero so that no code path can pick up
/// stale coordinates from a masked slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialTrajectory {
    len: usize,
    waypoints: [Vec<[f64; 3]>; NUM_GROUPS],
    mask: [Vec<bool>; NUM_GROUPS],
}

impl PartialTrajectory {
    pub fn empty(len: usize) -> PartialTrajectory {
        PartialTrajectory {
            len,
            waypoints: std::array::from_fn(|_| vec![[0.0; 3]; len]),
            mask: std::array::from_fn(|_| vec![false; len]),
        }
    }

    /// Key-joint tracks of `positions`, specified on the first `valid` frames.
    pub fn from_positions(positions: &JointPositions, skeleton: &SkeletonSpec, valid: usize) -> PartialTrajectory {
        let mut traj = PartialTrajectory::empty(positions.frames());
        for g in JointGroup::ALL {
            let k = skeleton.key_joint(g);
            for t in 0..valid.min(positions.frames()) {
                traj.set(g, t, positions.get(t, k));
            }
        }
        traj
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.num_specified() == 0
    }

    pub fn set(&mut self, g: JointGroup, t: usize, p: [f64; 3]) {
        self.waypoints[g.index()][t] = p;
        self.mask[g.index()][t] = true;
    }

    pub fn clear(&mut self, g: JointGroup, t: usize) {
        self.waypoints[g.index()][t] = [0.0; 3];
        self.mask[g.index()][t] = false;
    }

    pub fn clear_group(&mut self, g: JointGroup) {
        for t in 0..self.len {
            self.clear(g, t);
        }
    }

    pub fn get(&self, g: JointGroup, t: usize) -> Option<[f64; 3]> {
        self.mask[g.index()][t].then(|| self.waypoints[g.index()][t])
    }

    pub fn is_specified(&self, g: JointGroup, t: usize) -> bool {
        self.mask[g.index()][t]
    }

    pub fn mask(&self, g: JointGroup) -> &[bool] {
        &self.mask[g.index()]
    }

    pub fn num_specified_in(&self, g: JointGroup) -> usize {
        self.mask[g.index()].iter().filter(|&&m| m).count()
    }

    pub fn num_specified(&self) -> usize {
        JointGroup::ALL.iter().map(|&g| self.num_specified_in(g)).sum()
    }

    /// Specified `(group, frame, position)` entries in group-major order.
    pub fn specified(&self) -> impl Iterator<Item = (JointGroup, usize, [f64; 3])> + '_ {
        JointGroup::ALL
            .into_iter()
            .flat_map(move |g| (0..self.len).filter_map(move |t| self.get(g, t).map(|p| (g, t, p))))
    }

    /// True when every entry specified here is also specified in `other`.
    pub fn is_subset_of(&self, other: &PartialTrajectory) -> bool {
        self.len == other.len
            && JointGroup::ALL
                .iter()
                .all(|&g| (0..self.len).all(|t| !self.is_specified(g, t) || other.is_specified(g, t)))
    }
}
