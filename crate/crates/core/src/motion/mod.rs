//! Skeleton, pose features, and the feature-to-position recovery.
//!
//! Axes: +y is up, yaw 0 faces +x, and the body's left side is -z. Positive
//! yaw turns left. Velocities are per frame, so recovery does not depend on
//! fps.

mod features;
mod json;
mod layout;
mod partition;
mod recover;
mod skeleton;
mod trajectory;

pub use features::{canonicalize, facing_from_hips, features_from_positions, pad_positions, CONTACT_SPEED};
pub use json::MotionJson;
pub use layout::{JointPositions, MotionClip, PoseFeatureLayout};
pub use partition::GroupPartition;
pub use recover::{frame_positions, recover_global_positions, recover_vjp, root_track, rotate_y, RootTrack};
pub use skeleton::{JointGroup, SkeletonSpec, NUM_GROUPS};
pub use trajectory::PartialTrajectory;
