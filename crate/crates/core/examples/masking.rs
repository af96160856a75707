//! Shows the two training-time masks on a fully specified trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlcontrol::motion::{JointGroup, PartialTrajectory};
use tlcontrol::mtt::{continuous_trajectory_mask, joint_level_mask};

fn row(t: &PartialTrajectory, g: JointGroup) -> String {
    (0..t.len()).map(|f| if t.is_specified(g, f) { '#' } else { '.' }).collect()
}

fn main() {
    let len = 48;
    let mut full = PartialTrajectory::empty(len);
    for g in JointGroup::ALL {
        for f in 0..len {
            full.set(g, f, [f as f64 * 0.02, 1.0, 0.0]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [0.25, 0.5, 0.75] {
        let masked = continuous_trajectory_mask(&full, p, &mut rng);
        println!("continuous p = {p}");
        for g in JointGroup::ALL {
            println!("  {:10} {}", g.wire_name(), row(&masked, g));
        }
    }
    for seed in 0..3 {
        let (masked, groups) = joint_level_mask(&full, &mut ChaCha8Rng::seed_from_u64(seed));
        let kept: Vec<_> = JointGroup::ALL.iter().filter(|g| masked.num_specified_in(**g) > 0).map(|g| g.wire_name()).collect();
        println!("joint-level seed {seed}: dropped {groups:?}, kept {kept:?}");
    }
}
