use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six body partitions. Declaration order is the block order used by
/// [`GroupPartition::split`](super::GroupPartition::split) and by every
/// latent tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointGroup {
    Head,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
    Root,
}

pub const NUM_GROUPS: usize = 6;

impl JointGroup {
    pub const ALL: [JointGroup; NUM_GROUPS] = [
        JointGroup::Head,
        JointGroup::LeftArm,
        JointGroup::RightArm,
        JointGroup::LeftLeg,
        JointGroup::RightLeg,
        JointGroup::Root,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<JointGroup> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointGroup::Head => "head",
            JointGroup::LeftArm => "left_arm",
            JointGroup::RightArm => "right_arm",
            JointGroup::LeftLeg => "left_leg",
            JointGroup::RightLeg => "right_leg",
            JointGroup::Root => "root",
        }
    }

    /// Name used by the HTTP trajectory schema, which labels groups by their
    /// key joint rather than by limb.
    pub fn wire_name(self) -> &'static str {
        match self {
            JointGroup::Head => "head",
            JointGroup::LeftArm => "left_hand",
            JointGroup::RightArm => "right_hand",
            JointGroup::LeftLeg => "left_foot",
            JointGroup::RightLeg => "right_foot",
            JointGroup::Root => "root",
        }
    }

    pub fn from_wire_name(s: &str) -> Option<JointGroup> {
        Self::ALL.into_iter().find(|g| g.wire_name() == s)
    }
}

/// Kinematic tree plus group assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    /// `None` only for the root.
    pub parent: Vec<Option<usize>>,
    pub group_of: Vec<JointGroup>,
    pub key_joint_of_group: [usize; NUM_GROUPS],
    /// (left, right) hip joints; their horizontal offset defines facing.
    pub hips: (usize, usize),
    /// Joints whose speed drives the four contact channels, in channel order.
    pub contact_joints: [usize; 4],
}

impl SkeletonSpec {
    /// 22-joint body in SMPL joint order.
    pub fn smpl22() -> SkeletonSpec {
        use JointGroup::*;
        let joints: [(&str, i32, JointGroup); 22] = [
            ("pelvis", -1, Root),
            ("left_hip", 0, LeftLeg),
            ("right_hip", 0, RightLeg),
            ("spine1", 0, Head),
            ("left_knee", 1, LeftLeg),
            ("right_knee", 2, RightLeg),
            ("spine2", 3, Head),
            ("left_ankle", 4, LeftLeg),
            ("right_ankle", 5, RightLeg),
            ("spine3", 6, Head),
            ("left_foot", 7, LeftLeg),
            ("right_foot", 8, RightLeg),
            ("neck", 9, Head),
            ("left_collar", 9, LeftArm),
            ("right_collar", 9, RightArm),
            ("head", 12, Head),
            ("left_shoulder", 13, LeftArm),
            ("right_shoulder", 14, RightArm),
            ("left_elbow", 16, LeftArm),
            ("right_elbow", 17, RightArm),
            ("left_wrist", 18, LeftArm),
            ("right_wrist", 19, RightArm),
        ];
        SkeletonSpec {
            joint_names: joints.iter().map(|j| j.0.to_string()).collect(),
            parent: joints.iter().map(|j| usize::try_from(j.1).ok()).collect(),
            group_of: joints.iter().map(|j| j.2).collect(),
            key_joint_of_group: [15, 20, 21, 7, 8, 0],
            hips: (1, 2),
            contact_joints: [7, 10, 8, 11],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn key_joint(&self, g: JointGroup) -> usize {
        self.key_joint_of_group[g.index()]
    }

    pub fn joints_in(&self, g: JointGroup) -> Vec<usize> {
        (0..self.num_joints()).filter(|&j| self.group_of[j] == g).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.num_joints();
        if j < 2 {
            return Err(Error::Layout(format!("skeleton needs at least 2 joints, got {j}")));
        }
        if self.parent.len() != j || self.group_of.len() != j {
            return Err(Error::Layout("parent/group tables disagree with joint count".into()));
        }
        if self.parent[0].is_some() {
            return Err(Error::Layout("joint 0 must be the root".into()));
        }
        for (i, p) in self.parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < i => {}
                _ => return Err(Error::Layout(format!("joint {i} must have a parent with a smaller index"))),
            }
        }
        if self.joints_in(JointGroup::Root) != [0] {
            return Err(Error::Layout("the root group must contain the root joint only".into()));
        }
        for g in JointGroup::ALL {
            let k = self.key_joint(g);
            if k >= j || self.group_of[k] != g {
                return Err(Error::Layout(format!("key joint of {} is not in that group", g.name())));
            }
        }
        let all = [self.hips.0, self.hips.1].into_iter().chain(self.contact_joints);
        if let Some(bad) = all.into_iter().find(|&i| i >= j) {
            return Err(Error::Layout(format!("joint index {bad} out of range")));
        }
        Ok(())
    }
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self::smpl22()
    }
}
