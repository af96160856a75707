//! JSON wire forms shared by the HTTP service and the CLI: the sparse
//! trajectory spec and the generation request.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::metrics::{control_accuracy, ControlErrorReport, DEFAULT_THRESHOLD_M};
use crate::motion::{JointGroup, MotionJson, PartialTrajectory, SkeletonSpec};
use crate::optim::{OptimizeConfig, OptimizerTrace, StopReason};
use crate::refine::GeneratedSample;

/// A validation failure and the JSON path of the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    /// Meters, y up.
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// One of root, head, left_hand, right_hand, left_foot, right_foot.
    pub joint_group: String,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub length: usize,
    #[serde(default)]
    pub controls: Vec<Control>,
}

impl TrajectorySpec {
    pub fn empty(length: usize) -> TrajectorySpec {
        TrajectorySpec { length, controls: Vec::new() }
    }

    /// Validates the controls and builds the trajectory; `prefix` is prepended to
    /// field paths in errors.
    pub fn to_partial_at(&self, prefix: &str) -> Result<PartialTrajectory, FieldError> {
        if self.length == 0 {
            return Err(field_err(format!("{prefix}length"), "must be positive"));
        }
        let mut traj = PartialTrajectory::empty(self.length);
        let mut seen_groups = BTreeSet::new();
        for (ci, c) in self.controls.iter().enumerate() {
            let path = format!("{prefix}controls[{ci}]");
            let g = JointGroup::from_wire_name(&c.joint_group).ok_or_else(|| {
                field_err(format!("{path}.joint_group"), format!("unknown joint group {:?}", c.joint_group))
            })?;
            if !seen_groups.insert(g) {
                return Err(field_err(format!("{path}.joint_group"), format!("{} listed twice", c.joint_group)));
            }
            for (wi, w) in c.waypoints.iter().enumerate() {
                let wpath = format!("{path}.waypoints[{wi}]");
                if w.frame >= self.length {
                    return Err(field_err(format!("{wpath}.frame"), format!("{} is outside 0..{}", w.frame, self.length)));
                }
                if w.position.iter().any(|v| !v.is_finite()) {
                    return Err(field_err(format!("{wpath}.position"), "must be finite"));
                }
                if traj.is_specified(g, w.frame) {
                    return Err(field_err(format!("{wpath}.frame"), format!("frame {} repeated", w.frame)));
                }
                traj.set(g, w.frame, w.position);
            }
        }
        Ok(traj)
    }

    pub fn to_partial(&self) -> Result<PartialTrajectory, FieldError> {
        self.to_partial_at("")
    }

    pub fn from_partial(traj: &PartialTrajectory) -> TrajectorySpec {
        let controls = JointGroup::ALL
            .iter()
            .filter(|&&g| traj.num_specified_in(g) > 0)
            .map(|&g| Control {
                joint_group: g.wire_name().into(),
                waypoints: (0..traj.len())
                    .filter_map(|t| traj.get(g, t).map(|p| Waypoint { frame: t, position: p }))
                    .collect(),
            })
            .collect();
        TrajectorySpec { length: traj.len(), controls }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeRequest {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizeRequest {
    fn default() -> Self {
        let d = OptimizeConfig::default();
        OptimizeRequest { tolerance: d.tolerance, max_iterations: d.max_iterations }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default)]
    pub text: String,
    pub trajectory: Option<TrajectorySpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub num_samples: usize,
    #[serde(default)]
    pub optimize: OptimizeRequest,
}

fn one() -> usize {
    1
}

/// A request that passed validation, ready for the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidRequest {
    pub text: String,
    pub trajectory: PartialTrajectory,
    pub seed: u64,
    pub num_samples: usize,
    pub optimize: OptimizeConfig,
}

impl GenerateRequest {
    /// Validates against a model producing `frames`-frame motions, with at
    /// most `max_samples` samples per request.
    pub fn validate(&self, frames: usize, max_samples: usize) -> Result<ValidRequest, FieldError> {
        let trajectory = match &self.trajectory {
            Some(spec) => {
                if spec.length != frames {
                    return Err(field_err("trajectory.length", format!("model generates {frames} frames, got {}", spec.length)));
                }
                spec.to_partial_at("trajectory.")?
            }
            None => PartialTrajectory::empty(frames),
        };
        if self.text.trim().is_empty() && trajectory.num_specified() == 0 {
            return Err(field_err("text", "text and trajectory are both empty"));
        }
        if self.num_samples == 0 || self.num_samples > max_samples {
            return Err(field_err("num_samples", format!("must lie in 1..={max_samples}")));
        }
        if !(self.optimize.tolerance > 0.0 && self.optimize.tolerance.is_finite()) {
            return Err(field_err("optimize.tolerance", "must be positive"));
        }
        if self.optimize.max_iterations == 0 {
            return Err(field_err("optimize.max_iterations", "must be positive"));
        }
        Ok(ValidRequest {
            text: self.text.clone(),
            trajectory,
            seed: self.seed,
            num_samples: self.num_samples,
            optimize: OptimizeConfig {
                tolerance: self.optimize.tolerance,
                max_iterations: self.optimize.max_iterations,
                ..OptimizeConfig::default()
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub indices: Vec<usize>,
    pub avg_err_cm: Option<f64>,
    pub unrefined_avg_err_cm: Option<f64>,
    pub trace: OptimizerTrace,
    pub stop: Option<StopReason>,
}

/// Generated motions with their control errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub motions: Vec<MotionJson>,
    pub samples: Vec<SampleSummary>,
    /// Pooled over all samples; absent without waypoints.
    pub control: Option<ControlErrorReport>,
}

impl GenerationResult {
    pub fn new(samples: &[GeneratedSample], traj: &PartialTrajectory) -> crate::Result<GenerationResult> {
        let skeleton = SkeletonSpec::smpl22();
        let control = if traj.num_specified() > 0 {
            let pairs: Vec<_> = samples.iter().map(|s| (&s.positions, traj)).collect();
            Some(control_accuracy(&pairs, &skeleton, DEFAULT_THRESHOLD_M)?)
        } else {
            None
        };
        Ok(GenerationResult {
            motions: samples
                .iter()
                .map(|s| MotionJson::from_clip(&s.motion, s.positions.joints(), Some(&s.positions)))
                .collect(),
            samples: samples
                .iter()
                .map(|s| SampleSummary {
                    indices: s.indices.clone(),
                    avg_err_cm: s.avg_err_m.map(|v| 100.0 * v),
                    unrefined_avg_err_cm: s.unrefined_avg_err_m.map(|v| 100.0 * v),
                    trace: s.trace.clone(),
                    stop: s.stop,
                })
                .collect(),
            control,
        })
    }
}
