//! Builds one procedural clip, recovers global joint positions from its
//! feature vectors, and prints the key-joint tracks a user would control.

use tlcontrol::dataset::{generate_sample, Family, GeneratorConfig, Side};
use tlcontrol::motion::{recover_global_positions, JointGroup, PoseFeatureLayout, SkeletonSpec};

fn main() -> tlcontrol::Result<()> {
    let config = GeneratorConfig { max_len: 64, ..Default::default() };
    let family = Family::WalkArc { speed: 1.2, radius: 3.0, side: Side::Left };
    let sample = generate_sample(family, 60, &config)?;
    println!("{:?}: {} frames, {} valid", sample.text, sample.motion.frames(), sample.true_length);

    let layout = PoseFeatureLayout::new(22);
    let skeleton = SkeletonSpec::smpl22();
    let pos = recover_global_positions(&sample.motion, &layout)?;
    let mut worst: f64 = 0.0;
    for (g, t, p) in sample.full_trajectories.specified() {
        let q = pos.get(t, skeleton.key_joint(g));
        worst = worst.max((0..3).map(|k| (p[k] - q[k]).abs()).fold(0.0, f64::max));
    }
    println!("feature round trip, worst key-joint deviation: {worst:.2e} m");

    for t in [0, 20, 40, 59] {
        let root = sample.full_trajectories.get(JointGroup::Root, t).unwrap();
        let hand = sample.full_trajectories.get(JointGroup::LeftArm, t).unwrap();
        println!("frame {t:2}: root {root:.3?} left hand {hand:.3?}");
    }
    Ok(())
}
