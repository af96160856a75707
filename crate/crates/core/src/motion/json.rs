use serde::{Deserialize, Serialize};

use super::layout::{JointPositions, MotionClip};
use crate::error::{Error, Result};

/// Serialized clip, shared by corpus files and the HTTP API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionJson {
    pub fps: f64,
    pub num_joints: usize,
    pub frames: usize,
    pub feature_dim: usize,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_positions: Option<Vec<Vec<[f64; 3]>>>,
}

impl MotionJson {
    pub fn from_clip(clip: &MotionClip, num_joints: usize, positions: Option<&JointPositions>) -> MotionJson {
        MotionJson {
            fps: clip.fps,
            num_joints,
            frames: clip.frames(),
            feature_dim: clip.dim(),
            features: (0..clip.frames()).map(|t| clip.frame(t).to_vec()).collect(),
            global_positions: positions.map(|p| (0..p.frames()).map(|t| p.frame(t).to_vec()).collect()),
        }
    }

    pub fn to_clip(&self) -> Result<MotionClip> {
        if self.features.len() != self.frames {
            return Err(Error::Layout(format!("declared {} frames, found {}", self.frames, self.features.len())));
        }
        let mut flat = Vec::with_capacity(self.frames * self.feature_dim);
        for (t, row) in self.features.iter().enumerate() {
            if row.len() != self.feature_dim {
                return Err(Error::Layout(format!("frame {t} has {} channels, expected {}", row.len(), self.feature_dim)));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("frame {t} contains a non-finite value")));
            }
            flat.extend_from_slice(row);
        }
        MotionClip::new(flat, self.frames, self.feature_dim, self.fps)
    }

    pub fn to_positions(&self) -> Option<Result<JointPositions>> {
        self.global_positions.as_ref().map(|rows| {
            let data = rows.iter().flatten().copied().collect();
            JointPositions::new(data, rows.len(), self.num_joints)
        })
    }
}
