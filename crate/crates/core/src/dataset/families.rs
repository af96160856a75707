use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::body::{BodyPose, SHIN, THIGH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn word(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }

    /// Sign of the yaw rate when turning toward this side.
    fn turn_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    fn random(rng: &mut impl Rng) -> Side {
        if rng.gen_bool(0.5) {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachTarget {
    Forward,
    Up,
    Down,
}

/// Parametric motion families. Speeds are in meters per frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    WalkStraight { speed: f64 },
    WalkArc { speed: f64, radius: f64, side: Side },
    WalkCircle { speed: f64, radius: f64, side: Side },
    TurnInPlace { angle: f64, side: Side },
    Reach { hand: Side, target: ReachTarget },
    Squat { depth: f64 },
    Wave { hand: Side },
    CircleThenRaise { speed: f64, radius: f64, side: Side, hand: Side },
    WalkThenSquat { speed: f64, depth: f64 },
}

fn speed_word(speed: f64) -> &'static str {
    if speed < 0.035 {
        " slowly"
    } else if speed > 0.055 {
        " quickly"
    } else {
        ""
    }
}

impl Family {
    pub fn random(rng: &mut impl Rng) -> Family {
        let speed = rng.gen_range(0.025..0.065);
        match rng.gen_range(0..9) {
            0 => Family::WalkStraight { speed },
            1 => Family::WalkArc { speed, radius: rng.gen_range(2.5..5.0), side: Side::random(rng) },
            2 => Family::WalkCircle { speed, radius: rng.gen_range(0.8..2.0), side: Side::random(rng) },
            3 => Family::TurnInPlace { angle: rng.gen_range(FRAC_PI_2..PI), side: Side::random(rng) },
            4 => {
                let target = [ReachTarget::Forward, ReachTarget::Up, ReachTarget::Down][rng.gen_range(0..3)];
                Family::Reach { hand: Side::random(rng), target }
            }
            5 => Family::Squat { depth: rng.gen_range(0.15..0.4) },
            6 => Family::Wave { hand: Side::random(rng) },
            7 => Family::CircleThenRaise {
                speed,
                radius: rng.gen_range(0.8..2.0),
                side: Side::random(rng),
                hand: Side::random(rng),
            },
            _ => Family::WalkThenSquat { speed, depth: rng.gen_range(0.15..0.4) },
        }
    }

    pub fn describe(&self) -> String {
        let body = match *self {
            Family::WalkStraight { speed } => format!("walks forward{}", speed_word(speed)),
            Family::WalkArc { speed, side, .. } => format!("walks along a curve to the {}{}", side.word(), speed_word(speed)),
            Family::WalkCircle { speed, side, .. } => format!("walks in a circle to the {}{}", side.word(), speed_word(speed)),
            Family::TurnInPlace { side, .. } => format!("turns around to the {}", side.word()),
            Family::Reach { hand, target } => match target {
                ReachTarget::Forward => format!("reaches forward with the {} hand", hand.word()),
                ReachTarget::Up => format!("raises the {} hand up", hand.word()),
                ReachTarget::Down => format!("reaches down with the {} hand", hand.word()),
            },
            Family::Squat { depth } => {
                if depth > 0.3 {
                    "squats down deeply".to_string()
                } else {
                    "squats down".to_string()
                }
            }
            Family::Wave { hand } => format!("waves the {} hand", hand.word()),
            Family::CircleThenRaise { side, hand, .. } => {
                format!("walks in a circle to the {} then raises the {} hand up", side.word(), hand.word())
            }
            Family::WalkThenSquat { .. } => "walks forward then squats down".to_string(),
        };
        format!("a person {body}")
    }

    /// Upper bound on any joint's displacement per frame.
    pub fn max_joint_speed(&self) -> f64 {
        match *self {
            Family::WalkStraight { speed }
            | Family::WalkArc { speed, .. }
            | Family::WalkCircle { speed, .. }
            | Family::CircleThenRaise { speed, .. }
            | Family::WalkThenSquat { speed, .. } => 3.0 * speed + 0.2,
            _ => 0.2,
        }
    }

    pub(crate) fn poses(&self, len: usize) -> Vec<BodyPose> {
        let mut plan = Plan::new(len);
        match *self {
            Family::WalkStraight { speed } => plan.walk(0, len, speed, 0.0),
            Family::WalkArc { speed, radius, side } | Family::WalkCircle { speed, radius, side } => {
                plan.walk(0, len, speed, side.turn_sign() * speed / radius)
            }
            Family::TurnInPlace { angle, side } => plan.turn(side.turn_sign() * angle),
            Family::Reach { hand, target } => {
                let (shoulder, abduct, lean, elbow) = match target {
                    ReachTarget::Forward => (1.45, 0.0, 0.15, 0.05),
                    ReachTarget::Up => (2.9, 0.1, 0.0, 0.0),
                    ReachTarget::Down => (0.9, 0.0, 0.7, 0.0),
                };
                plan.arm(0, len, hand, |s| (shoulder * s, abduct * s, elbow * s));
                plan.overlay(0, len, |p, s| p.lean += lean * s);
            }
            Family::Squat { depth } => plan.squat(0, len, depth),
            Family::Wave { hand } => {
                let arm = plan.arm(0, len, hand, |s| (0.3 * s, 2.6 * s, 0.0));
                plan.wave(arm, hand);
            }
            Family::CircleThenRaise { speed, radius, side, hand } => {
                let half = len / 2;
                plan.walk(0, half, speed, side.turn_sign() * speed / radius);
                plan.arm(half, len, hand, |s| (2.9 * s, 0.1 * s, 0.0));
            }
            Family::WalkThenSquat { speed, depth } => {
                let half = len / 2;
                plan.walk(0, half, speed, 0.0);
                plan.squat(half, len, depth);
            }
        }
        plan.finish()
    }
}

/// Ease-in/ease-out ramp on [0, 1].
fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Rise, hold, and return profile over a segment.
fn envelope(u: f64) -> f64 {
    if u < 0.35 {
        smoothstep(u / 0.35)
    } else if u < 0.75 {
        1.0
    } else {
        1.0 - smoothstep((u - 0.75) / 0.25) * 0.6
    }
}

struct Plan {
    len: usize,
    speed: Vec<f64>,
    turn: Vec<f64>,
    gait: Vec<f64>,
    extra: Vec<BodyPose>,
}

impl Plan {
    fn new(len: usize) -> Plan {
        Plan { len, speed: vec![0.0; len], turn: vec![0.0; len], gait: vec![0.0; len], extra: vec![BodyPose::default(); len] }
    }

    fn walk(&mut self, start: usize, end: usize, speed: f64, turn: f64) {
        let settle = 6.min(end - start);
        for t in start..end {
            self.speed[t] = speed;
            self.turn[t] = turn;
            self.gait[t] = 1.0;
        }
        // gait amplitude fades out after the walk stops
        for k in 0..settle {
            let t = end + k;
            if t < self.len {
                self.gait[t] = 1.0 - (k + 1) as f64 / (settle + 1) as f64;
            }
        }
    }

    fn turn(&mut self, angle: f64) {
        let n = self.len as f64;
        for t in 0..self.len {
            let a = smoothstep((t + 1) as f64 / n) - smoothstep(t as f64 / n);
            self.turn[t] = angle * a;
            self.gait[t] = 0.35 * (PI * t as f64 / n).sin();
        }
    }

    fn overlay(&mut self, start: usize, end: usize, f: impl Fn(&mut BodyPose, f64)) {
        let n = (end - start).max(1) as f64;
        for t in start..end {
            f(&mut self.extra[t], envelope((t - start) as f64 / n));
        }
    }

    fn arm(&mut self, start: usize, end: usize, hand: Side, f: impl Fn(f64) -> (f64, f64, f64)) -> (usize, usize) {
        let i = hand.idx();
        self.overlay(start, end, |p, s| {
            let (sh, ab, el) = f(s);
            p.shoulder[i] += sh;
            p.abduct[i] += ab;
            p.elbow[i] += el;
        });
        (start, end)
    }

    fn wave(&mut self, (start, end): (usize, usize), hand: Side) {
        let i = hand.idx();
        for t in start..end {
            let u = (t - start) as f64;
            self.extra[t].elbow[i] += 0.9 + 0.6 * (u * 0.7).sin();
        }
    }

    fn squat(&mut self, start: usize, end: usize, depth: f64) {
        self.overlay(start, end, |p, s| p.root[1] -= depth * s);
    }

    fn finish(self) -> Vec<BodyPose> {
        let mut out = Vec::with_capacity(self.len);
        let (mut x, mut z, mut yaw, mut phase) = (0.0, 0.0, 0.0f64, 0.0f64);
        for t in 0..self.len {
            let mut p = BodyPose::standing(x, z, yaw);
            let extra = &self.extra[t];
            let g = self.gait[t];
            let amp = 0.25 + 3.0 * self.speed[t].max(0.02);
            let sw = phase.sin();
            p.hip = [g * amp * sw, -g * amp * sw];
            p.knee = [
                g * 1.6 * amp * (phase - 0.6).sin().max(0.0),
                g * 1.6 * amp * (phase + PI - 0.6).sin().max(0.0),
            ];
            p.shoulder = [-0.6 * g * amp * sw, 0.6 * g * amp * sw];
            p.elbow = [0.15 * g, 0.15 * g];
            p.root[1] -= 0.012 * g * (1.0 - (2.0 * phase).cos());

            let drop = -extra.root[1];
            if drop > 0.0 {
                let (hip, knee) = crouch(p.root[1] - drop);
                p.root[1] -= drop;
                p.hip = [p.hip[0] + hip, p.hip[1] + hip];
                p.knee = [p.knee[0] + knee, p.knee[1] + knee];
                p.lean += 0.6 * hip;
                p.shoulder = [p.shoulder[0] + 0.8 * hip, p.shoulder[1] + 0.8 * hip];
            }
            p.lean += extra.lean;
            for i in 0..2 {
                p.shoulder[i] += extra.shoulder[i];
                p.abduct[i] += extra.abduct[i];
                p.elbow[i] += extra.elbow[i];
            }
            p.neck = 0.3 * p.lean;
            out.push(p);

            // exact arc step so that constant-turn walks stay on a circle
            let (v, w) = (self.speed[t], self.turn[t]);
            if w.abs() > 1e-12 {
                let r = v / w;
                x += r * ((yaw + w).sin() - yaw.sin());
                z += r * ((yaw + w).cos() - yaw.cos());
            } else {
                x += v * yaw.cos();
                z -= v * yaw.sin();
            }
            yaw += w;
            phase += 2.0 * PI * (v / 1.2 + w.abs() * 0.25);
        }
        out
    }
}

/// Hip swing and knee flexion that lower the pelvis to `height` with the
/// ankle kept under the hip.
fn crouch(height: f64) -> (f64, f64) {
    let d = (height - 0.11).clamp(0.3, THIGH + SHIN);
    let cos_k = ((THIGH * THIGH + SHIN * SHIN - d * d) / (2.0 * THIGH * SHIN)).clamp(-1.0, 1.0);
    let knee = PI - cos_k.acos();
    let hip = (SHIN * knee.sin()).atan2(THIGH + SHIN * knee.cos());
    (hip, knee)
}
