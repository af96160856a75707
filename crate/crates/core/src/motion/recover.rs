use super::layout::{JointPositions, MotionClip, PoseFeatureLayout};
use crate::error::Result;

/// Rotation about +y applied to a ground-plane vector.
#[inline]
pub fn rotate_y(yaw: f64, x: f64, z: f64) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * x + s * z, -s * x + c * z]
}

#[inline]
fn rotate_y_t(yaw: f64, x: f64, z: f64) -> [f64; 2] {
    rotate_y(-yaw, x, z)
}

#[inline]
fn rotate_y_deriv(yaw: f64, x: f64, z: f64) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [-s * x + c * z, -c * x - s * z]
}

/// Integrated facing and ground-plane root position per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RootTrack {
    pub yaw: Vec<f64>,
    pub xz: Vec<[f64; 2]>,
}

pub fn root_track(clip: &MotionClip) -> RootTrack {
    let t_len = clip.frames();
    let mut yaw = Vec::with_capacity(t_len);
    let mut xz = Vec::with_capacity(t_len);
    let (mut a, mut p) = (0.0, [0.0, 0.0]);
    for t in 0..t_len {
        yaw.push(a);
        xz.push(p);
        let f = clip.frame(t);
        let v = rotate_y(a, f[PoseFeatureLayout::ROOT_VEL], f[PoseFeatureLayout::ROOT_VEL + 1]);
        p = [p[0] + v[0], p[1] + v[1]];
        a += f[PoseFeatureLayout::YAW_VEL];
    }
    RootTrack { yaw, xz }
}

/// Positions of every joint in one frame given that frame's root state.
pub fn frame_positions(frame: &[f64], yaw: f64, root_xz: [f64; 2], layout: &PoseFeatureLayout, out: &mut [[f64; 3]]) {
    out[0] = [root_xz[0], frame[PoseFeatureLayout::ROOT_HEIGHT], root_xz[1]];
    for (j, o) in out.iter_mut().enumerate().take(layout.num_joints).skip(1) {
        let k = layout.local_pos(j);
        let r = rotate_y(yaw, frame[k], frame[k + 2]);
        *o = [r[0] + root_xz[0], frame[k + 1], r[1] + root_xz[1]];
    }
}

pub fn recover_global_positions(clip: &MotionClip, layout: &PoseFeatureLayout) -> Result<JointPositions> {
    clip.check_layout(layout)?;
    let track = root_track(clip);
    let j = layout.num_joints;
    let mut pos = JointPositions::zeros(clip.frames(), j);
    let mut buf = vec![[0.0; 3]; j];
    for t in 0..clip.frames() {
        frame_positions(clip.frame(t), track.yaw[t], track.xz[t], layout, &mut buf);
        for (jj, p) in buf.iter().enumerate() {
            pos.set(t, jj, *p);
        }
    }
    Ok(pos)
}

/// Pulls a gradient on global positions back to the feature channels.
///
/// Returns a `T x M` row-major buffer. Channels the recovery does not read
/// (joint velocities, contacts) receive zero.
pub fn recover_vjp(clip: &MotionClip, layout: &PoseFeatureLayout, grad: &JointPositions) -> Result<Vec<f64>> {
    clip.check_layout(layout)?;
    let (t_len, m, nj) = (clip.frames(), clip.dim(), layout.num_joints);
    let track = root_track(clip);
    let mut out = vec![0.0; t_len * m];

    // Per-frame sum of xz gradient over all joints, then suffix sums S_t = sum_{u>t}.
    let mut g_root = vec![[0.0; 2]; t_len];
    for (t, g) in g_root.iter_mut().enumerate() {
        for jj in 0..nj {
            let gp = grad.get(t, jj);
            g[0] += gp[0];
            g[1] += gp[2];
        }
    }
    let mut suffix = vec![[0.0; 2]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        suffix[t] = [suffix[t + 1][0] + g_root[t + 1][0], suffix[t + 1][1] + g_root[t + 1][1]];
    }

    let mut a = vec![0.0; t_len];
    for t in 0..t_len {
        let f = clip.frame(t);
        let yaw = track.yaw[t];
        let o = &mut out[t * m..(t + 1) * m];
        o[PoseFeatureLayout::ROOT_HEIGHT] = grad.get(t, 0)[1];
        for jj in 1..nj {
            let k = layout.local_pos(jj);
            let gp = grad.get(t, jj);
            let back = rotate_y_t(yaw, gp[0], gp[2]);
            o[k] = back[0];
            o[k + 1] = gp[1];
            o[k + 2] = back[1];
            let d = rotate_y_deriv(yaw, f[k], f[k + 2]);
            a[t] += gp[0] * d[0] + gp[2] * d[1];
        }
        let s = suffix[t];
        let vb = rotate_y_t(yaw, s[0], s[1]);
        o[PoseFeatureLayout::ROOT_VEL] = vb[0];
        o[PoseFeatureLayout::ROOT_VEL + 1] = vb[1];
        let d = rotate_y_deriv(yaw, f[PoseFeatureLayout::ROOT_VEL], f[PoseFeatureLayout::ROOT_VEL + 1]);
        a[t] += s[0] * d[0] + s[1] * d[1];
    }
    // d/d omega_i = sum_{t>i} a_t
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        out[t * m + PoseFeatureLayout::YAW_VEL] = acc;
        acc += a[t];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn layout() -> PoseFeatureLayout {
        PoseFeatureLayout::new(3)
    }

    #[test]
    fn rotation_matches_matrix() {
        let [x, z] = rotate_y(0.3, 1.0, 2.0);
        let (s, c) = 0.3f64.sin_cos();
        assert!((x - (c + 2.0 * s)).abs() < 1e-15);
        assert!((z - (-s + 2.0 * c)).abs() < 1e-15);
        let back = rotate_y_t(0.3, x, z);
        assert!((back[0] - 1.0).abs() < 1e-15 && (back[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quarter_turns_trace_a_square() {
        let l = layout();
        let mut clip = MotionClip::zeros(5, l.feature_dim(), 20.0);
        for t in 0..4 {
            let f = clip.frame_mut(t);
            f[PoseFeatureLayout::YAW_VEL] = FRAC_PI_2;
            f[PoseFeatureLayout::ROOT_VEL] = 1.0;
        }
        let track = root_track(&clip);
        // forward at yaw a is (cos a, -sin a)
        let expect = [[0.0, 0.0], [1.0, 0.0], [1.0, -1.0], [0.0, -1.0], [0.0, 0.0]];
        for (got, want) in track.xz.iter().zip(expect) {
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}
