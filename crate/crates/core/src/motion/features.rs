use std::f64::consts::PI;

use super::layout::{JointPositions, MotionClip, PoseFeatureLayout};
use super::recover::rotate_y;
use super::skeleton::SkeletonSpec;
use crate::error::{Error, Result};

/// Foot speed (m/frame) below which a contact channel reads 1.
pub const CONTACT_SPEED: f64 = 0.005;

const MIN_HIP_SPAN: f64 = 1e-9;

/// Facing angle from the ground projection of the hip line.
pub fn facing_from_hips(left_hip: [f64; 3], right_hip: [f64; 3]) -> Result<f64> {
    let ax = left_hip[0] - right_hip[0];
    let az = left_hip[2] - right_hip[2];
    if ax.hypot(az) < MIN_HIP_SPAN {
        return Err(Error::Degenerate("hip line has no horizontal extent".into()));
    }
    // at yaw 0 the left hip sits on -z
    Ok((-ax).atan2(-az))
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Re-expresses positions so frame 0 has its root above the origin and faces
/// yaw 0. Recovery always starts from that state, so this is the frame in
/// which the round trip is exact.
pub fn canonicalize(positions: &JointPositions, skeleton: &SkeletonSpec) -> Result<JointPositions> {
    let f0 = positions.frame(0);
    let yaw0 = facing_from_hips(f0[skeleton.hips.0], f0[skeleton.hips.1])?;
    let (ox, oz) = (f0[0][0], f0[0][2]);
    let data = positions
        .data()
        .iter()
        .map(|p| {
            let r = rotate_y(-yaw0, p[0] - ox, p[2] - oz);
            [r[0], p[1], r[1]]
        })
        .collect();
    JointPositions::new(data, positions.frames(), positions.joints())
}

/// Inverse of recovery: builds the feature matrix for a position sequence.
///
/// Input is canonicalized first. Velocities are forward differences; the last
/// frame repeats the previous frame's delta.
pub fn features_from_positions(positions: &JointPositions, fps: f64, skeleton: &SkeletonSpec) -> Result<MotionClip> {
    let t_len = positions.frames();
    if t_len < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: t_len });
    }
    let nj = skeleton.num_joints();
    if positions.joints() != nj {
        return Err(Error::Layout(format!("positions have {} joints, skeleton {}", positions.joints(), nj)));
    }
    let layout = PoseFeatureLayout::new(nj);
    let m = layout.feature_dim();
    let p = canonicalize(positions, skeleton)?;

    let mut heading = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let f = p.frame(t);
        heading.push(facing_from_hips(f[skeleton.hips.0], f[skeleton.hips.1])?);
    }
    // unwrapped so that yaw_{t+1} = yaw_t + omega_t holds exactly
    let mut yaw = vec![0.0; t_len];
    let mut omega = vec![0.0; t_len];
    for t in 0..t_len - 1 {
        omega[t] = wrap_angle(heading[t + 1] - heading[t]);
        yaw[t + 1] = yaw[t] + omega[t];
    }
    omega[t_len - 1] = omega[t_len - 2];

    let mut out = vec![0.0; t_len * m];
    for t in 0..t_len {
        let f = p.frame(t);
        let (tn, tp) = if t + 1 < t_len { (t + 1, t) } else { (t, t - 1) };
        let o = &mut out[t * m..(t + 1) * m];
        o[PoseFeatureLayout::YAW_VEL] = omega[t];
        let (root_now, root_next) = (p.get(tp, 0), p.get(tn, 0));
        let v = rotate_y(-yaw[tp], root_next[0] - root_now[0], root_next[2] - root_now[2]);
        o[PoseFeatureLayout::ROOT_VEL] = v[0];
        o[PoseFeatureLayout::ROOT_VEL + 1] = v[1];
        o[PoseFeatureLayout::ROOT_HEIGHT] = f[0][1];
        for j in 1..nj {
            let k = layout.local_pos(j);
            let l = rotate_y(-yaw[t], f[j][0] - f[0][0], f[j][2] - f[0][2]);
            o[k] = l[0];
            o[k + 1] = f[j][1];
            o[k + 2] = l[1];
        }
        for j in 0..nj {
            let k = layout.joint_vel(j);
            let (a, b) = (p.get(tp, j), p.get(tn, j));
            o[k] = b[0] - a[0];
            o[k + 1] = b[1] - a[1];
            o[k + 2] = b[2] - a[2];
        }
        for (c, &j) in skeleton.contact_joints.iter().enumerate() {
            let k = layout.joint_vel(j);
            let speed = (o[k] * o[k] + o[k + 1] * o[k + 1] + o[k + 2] * o[k + 2]).sqrt();
            o[layout.contacts() + c] = if speed < CONTACT_SPEED { 1.0 } else { 0.0 };
        }
    }
    MotionClip::new(out, t_len, m, fps)
}

/// Extends a sequence to `len` frames by repeating its last frame.
pub fn pad_positions(positions: &JointPositions, len: usize) -> JointPositions {
    let (t_len, nj) = (positions.frames(), positions.joints());
    let mut data = positions.data().to_vec();
    let last = positions.frame(t_len - 1).to_vec();
    for _ in t_len..len {
        data.extend_from_slice(&last);
    }
    JointPositions::new(data, len.max(t_len), nj).expect("padded size is consistent")
}
