use super::layout::{MotionClip, PoseFeatureLayout};
use super::skeleton::{JointGroup, SkeletonSpec, NUM_GROUPS};
use crate::error::{Error, Result};

/// Assignment of every feature channel to one joint group.
///
/// Root yaw/velocity/height, the root joint's velocity, and the foot
/// contacts belong to the root group; every other joint's position and
/// velocity channels belong to that joint's group. Blocks keep channels in
/// ascending original order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPartition {
    channels: [Vec<usize>; NUM_GROUPS],
    dim: usize,
}

impl GroupPartition {
    pub fn new(skeleton: &SkeletonSpec) -> Result<GroupPartition> {
        let layout = PoseFeatureLayout::new(skeleton.num_joints());
        let mut owners = vec![None; layout.feature_dim()];
        for o in owners.iter_mut().take(PoseFeatureLayout::LOCAL_POS) {
            *o = Some(JointGroup::Root);
        }
        for j in 1..skeleton.num_joints() {
            let k = layout.local_pos(j);
            owners[k..k + 3].fill(Some(skeleton.group_of[j]));
        }
        for j in 0..skeleton.num_joints() {
            let k = layout.joint_vel(j);
            owners[k..k + 3].fill(Some(skeleton.group_of[j]));
        }
        let c = layout.contacts();
        owners[c..c + 4].fill(Some(JointGroup::Root));
        Self::from_owners(&owners)
    }

    /// Builds a partition from an explicit per-channel owner table.
    pub fn from_owners(owners: &[Option<JointGroup>]) -> Result<GroupPartition> {
        let mut channels: [Vec<usize>; NUM_GROUPS] = Default::default();
        for (c, o) in owners.iter().enumerate() {
            let g = o.ok_or_else(|| Error::Partition(format!("channel {c} has no owning group")))?;
            channels[g.index()].push(c);
        }
        if let Some(g) = JointGroup::ALL.iter().find(|g| channels[g.index()].is_empty()) {
            return Err(Error::Partition(format!("group {} owns no channels", g.name())));
        }
        Ok(GroupPartition { channels, dim: owners.len() })
    }

    pub fn channels(&self, g: JointGroup) -> &[usize] {
        &self.channels[g.index()]
    }

    pub fn width(&self, g: JointGroup) -> usize {
        self.channels[g.index()].len()
    }

    pub fn widths(&self) -> [usize; NUM_GROUPS] {
        JointGroup::ALL.map(|g| self.width(g))
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    /// Splits into six row-major `T x width` blocks in group order.
    pub fn split(&self, clip: &MotionClip) -> Result<[Vec<f64>; NUM_GROUPS]> {
        if clip.dim() != self.dim {
            return Err(Error::Layout(format!("clip has {} channels, partition {}", clip.dim(), self.dim)));
        }
        Ok(JointGroup::ALL.map(|g| {
            let ch = self.channels(g);
            let mut out = Vec::with_capacity(clip.frames() * ch.len());
            for t in 0..clip.frames() {
                let f = clip.frame(t);
                out.extend(ch.iter().map(|&c| f[c]));
            }
            out
        }))
    }

    pub fn merge(&self, blocks: &[Vec<f64>; NUM_GROUPS], fps: f64) -> Result<MotionClip> {
        let w0 = self.width(JointGroup::Head);
        let frames = blocks[0].len() / w0;
        for g in JointGroup::ALL {
            if blocks[g.index()].len() != frames * self.width(g) {
                return Err(Error::Shape(format!("block {} has inconsistent length", g.name())));
            }
        }
        let mut out = vec![0.0; frames * self.dim];
        for g in JointGroup::ALL {
            let ch = self.channels(g);
            for t in 0..frames {
                let row = &blocks[g.index()][t * ch.len()..(t + 1) * ch.len()];
                for (&c, &v) in ch.iter().zip(row) {
                    out[t * self.dim + c] = v;
                }
            }
        }
        MotionClip::new(out, frames, self.dim, fps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unowned_channel_is_a_partition_error() {
        let mut owners = vec![Some(JointGroup::Head); 12];
        for (g, o) in JointGroup::ALL.iter().zip(owners.iter_mut()) {
            *o = Some(*g);
        }
        owners[9] = None;
        assert!(matches!(GroupPartition::from_owners(&owners), Err(Error::Partition(_))));
    }
}
