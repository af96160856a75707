use nalgebra::{Rotation3, Vector3};

use crate::motion::JointPositions;

/// Parent-relative joint offsets at rest, in the parent's frame. Indices
/// follow `SkeletonSpec::smpl22`.
const REST: [[f64; 3]; 22] = [
    [0.0, 0.0, 0.0],
    [0.0, -0.06, -0.09],
    [0.0, -0.06, 0.09],
    [-0.01, 0.11, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, 0.13, 0.0],
    [0.0, -0.41, 0.0],
    [0.0, -0.41, 0.0],
    [0.0, 0.05, 0.0],
    [0.13, -0.05, 0.0],
    [0.13, -0.05, 0.0],
    [0.0, 0.21, 0.0],
    [0.0, 0.14, -0.07],
    [0.0, 0.14, 0.07],
    [0.02, 0.12, 0.0],
    [0.0, 0.03, -0.12],
    [0.0, 0.03, 0.12],
    [0.0, -0.26, 0.0],
    [0.0, -0.26, 0.0],
    [0.0, -0.25, 0.0],
    [0.0, -0.25, 0.0],
];

const PARENT: [usize; 22] = [0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19];

pub(crate) const THIGH: f64 = 0.40;
pub(crate) const SHIN: f64 = 0.41;
/// Pelvis height with straight legs and the toes on the ground.
pub(crate) const STAND_HEIGHT: f64 = 0.06 + THIGH + SHIN + 0.05;

/// Joint angles for one frame. Paired fields are `[left, right]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct BodyPose {
    pub root: [f64; 3],
    pub yaw: f64,
    /// Forward bend, spread across the three spine joints.
    pub lean: f64,
    pub neck: f64,
    /// Forward swing of the thigh.
    pub hip: [f64; 2],
    /// Knee flexion (positive bends the shin back).
    pub knee: [f64; 2],
    /// Forward raise of the upper arm.
    pub shoulder: [f64; 2],
    /// Sideways raise of the upper arm.
    pub abduct: [f64; 2],
    /// Elbow flexion (positive brings the forearm forward).
    pub elbow: [f64; 2],
}

impl BodyPose {
    pub fn standing(root_x: f64, root_z: f64, yaw: f64) -> BodyPose {
        BodyPose { root: [root_x, STAND_HEIGHT, root_z], yaw, ..Default::default() }
    }
}

fn rz(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

fn rx(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

fn local_rotation(pose: &BodyPose, j: usize) -> Rotation3<f64> {
    match j {
        0 => Rotation3::from_axis_angle(&Vector3::y_axis(), pose.yaw),
        1 | 2 => rz(pose.hip[j - 1]),
        4 | 5 => rz(-pose.knee[j - 4]),
        // keep the sole parallel to the thigh's parent frame
        7 | 8 => rz(pose.knee[j - 7] - pose.hip[j - 7]),
        3 | 6 | 9 => rz(-pose.lean / 3.0),
        12 => rz(-pose.neck),
        16 => rx(pose.abduct[0]) * rz(pose.shoulder[0]),
        17 => rx(-pose.abduct[1]) * rz(pose.shoulder[1]),
        18 | 19 => rz(pose.elbow[j - 18]),
        _ => Rotation3::identity(),
    }
}

pub(crate) fn forward_kinematics(pose: &BodyPose) -> [[f64; 3]; 22] {
    let mut rot = [Rotation3::identity(); 22];
    let mut pos = [Vector3::zeros(); 22];
    pos[0] = Vector3::from(pose.root);
    rot[0] = local_rotation(pose, 0);
    for j in 1..22 {
        let p = PARENT[j];
        pos[j] = pos[p] + rot[p] * Vector3::from(REST[j]);
        rot[j] = rot[p] * local_rotation(pose, j);
    }
    pos.map(|v| [v.x, v.y, v.z])
}

pub(crate) fn positions_of(poses: &[BodyPose]) -> JointPositions {
    let data = poses.iter().flat_map(forward_kinematics).collect();
    JointPositions::new(data, poses.len(), 22).expect("22 joints per pose")
}
