use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel map of one pose frame.
///
/// ```text
/// [0]                     root yaw velocity (rad/frame)
/// [1..3]                  root linear velocity, root-local xz (m/frame)
/// [3]                     root height (m)
/// [4 .. 4+3(J-1)]         joint positions 1..J in the yaw-aligned root frame
/// [.. +3J]                joint velocities 0..J, global frame (m/frame)
/// [.. +4]                 foot contacts
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseFeatureLayout {
    pub num_joints: usize,
}

impl PoseFeatureLayout {
    pub const YAW_VEL: usize = 0;
    pub const ROOT_VEL: usize = 1;
    pub const ROOT_HEIGHT: usize = 3;
    pub const LOCAL_POS: usize = 4;

    pub fn new(num_joints: usize) -> PoseFeatureLayout {
        PoseFeatureLayout { num_joints }
    }

    pub fn feature_dim(&self) -> usize {
        4 + 3 * (self.num_joints - 1) + 3 * self.num_joints + 4
    }

    /// Offset of the xyz triple for joint `j >= 1`.
    pub fn local_pos(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j < self.num_joints);
        Self::LOCAL_POS + 3 * (j - 1)
    }

    pub fn joint_vel(&self, j: usize) -> usize {
        Self::LOCAL_POS + 3 * (self.num_joints - 1) + 3 * j
    }

    pub fn contacts(&self) -> usize {
        self.joint_vel(self.num_joints)
    }

    /// Named `(offset, width)` spans in channel order.
    pub fn spans(&self) -> [(&'static str, usize, usize); 6] {
        let j = self.num_joints;
        [
            ("root_yaw_velocity", Self::YAW_VEL, 1),
            ("root_linear_velocity_xz", Self::ROOT_VEL, 2),
            ("root_height", Self::ROOT_HEIGHT, 1),
            ("local_positions", Self::LOCAL_POS, 3 * (j - 1)),
            ("joint_velocities", self.joint_vel(0), 3 * j),
            ("foot_contacts", self.contacts(), 4),
        ]
    }
}

/// A `T x M` feature matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    features: Vec<f64>,
    frames: usize,
    dim: usize,
    pub fps: f64,
}

impl MotionClip {
    pub fn new(features: Vec<f64>, frames: usize, dim: usize, fps: f64) -> Result<MotionClip> {
        if frames == 0 {
            return Err(Error::InsufficientFrames { needed: 1, got: 0 });
        }
        if features.len() != frames * dim {
            return Err(Error::Layout(format!(
                "{} values cannot form {frames} frames of {dim} channels",
                features.len()
            )));
        }
        Ok(MotionClip { features, frames, dim, fps })
    }

    pub fn zeros(frames: usize, dim: usize, fps: f64) -> MotionClip {
        MotionClip { features: vec![0.0; frames * dim], frames, dim, fps }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn into_features(self) -> Vec<f64> {
        self.features
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.features[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.features[t * self.dim..(t + 1) * self.dim]
    }

    /// First `n` frames.
    pub fn truncated(&self, n: usize) -> MotionClip {
        let n = n.clamp(1, self.frames);
        MotionClip { features: self.features[..n * self.dim].to_vec(), frames: n, dim: self.dim, fps: self.fps }
    }

    pub fn check_layout(&self, layout: &PoseFeatureLayout) -> Result<()> {
        if self.dim != layout.feature_dim() {
            return Err(Error::Layout(format!(
                "clip has {} channels, layout for {} joints expects {}",
                self.dim,
                layout.num_joints,
                layout.feature_dim()
            )));
        }
        Ok(())
    }
}

/// Global joint positions, `T x J` points.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPositions {
    data: Vec<[f64; 3]>,
    frames: usize,
    joints: usize,
}

impl JointPositions {
    pub fn new(data: Vec<[f64; 3]>, frames: usize, joints: usize) -> Result<JointPositions> {
        if data.len() != frames * joints {
            return Err(Error::Shape(format!("{} points for {frames}x{joints}", data.len())));
        }
        Ok(JointPositions { data, frames, joints })
    }

    pub fn zeros(frames: usize, joints: usize) -> JointPositions {
        JointPositions { data: vec![[0.0; 3]; frames * joints], frames, joints }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn get(&self, t: usize, j: usize) -> [f64; 3] {
        self.data[t * self.joints + j]
    }

    pub fn set(&mut self, t: usize, j: usize, p: [f64; 3]) {
        self.data[t * self.joints + j] = p;
    }

    pub fn frame(&self, t: usize) -> &[[f64; 3]] {
        &self.data[t * self.joints..(t + 1) * self.joints]
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &JointPositions) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| (0..3).map(move |i| (a[i] - b[i]).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_feature_dim() {
        assert_eq!(PoseFeatureLayout::new(22).feature_dim(), 137);
    }

    #[test]
    fn spans_are_contiguous() {
        for j in [2, 5, 22, 30] {
            let l = PoseFeatureLayout::new(j);
            let mut next = 0;
            for (_, off, w) in l.spans() {
                assert_eq!(off, next);
                next += w;
            }
            assert_eq!(next, l.feature_dim());
        }
    }

    #[test]
    fn clip_rejects_ragged_data() {
        assert!(MotionClip::new(vec![0.0; 10], 3, 4, 20.0).is_err());
        assert!(MotionClip::new(vec![], 0, 4, 20.0).is_err());
    }
}
