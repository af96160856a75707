//! Generates motions for a text prompt plus a root trajectory with the model
//! in `TLC_MODEL_DIR` (else `models/toy`), and compares waypoint errors before
//! and after latent refinement.

use tlcontrol::config::Config;
use tlcontrol::container::load_model;
use tlcontrol::motion::{JointGroup, PartialTrajectory};
use tlcontrol::refine::{generate_motion, GenerateOptions};

fn main() -> tlcontrol::Result<()> {
    let config = Config::toy();
    let model = load_model(&config.resolved_model_dir())?;
    let frames = model.config.max_len;

    // a straight walk along +x with a waypoint every 8 frames
    let mut traj = PartialTrajectory::empty(frames);
    for t in (0..frames).step_by(8) {
        traj.set(JointGroup::Root, t, [1.2 * t as f64 / 20.0, 0.92, 0.0]);
    }
    let options = GenerateOptions { num_samples: 3, optimize: config.optimize.clone(), skip_refinement: false };
    let samples = generate_motion(&model, "a person walks forward", &traj, 7, &options, &mut |_| true)?;
    for (i, s) in samples.iter().enumerate() {
        println!(
            "sample {i}: {:.2} cm -> {:.2} cm after {} iterations ({:?})",
            100.0 * s.unrefined_avg_err_m.unwrap(),
            100.0 * s.avg_err_m.unwrap(),
            s.trace.iterations,
            s.stop.unwrap()
        );
    }
    let text_only = generate_motion(&model, "a person waves", &PartialTrajectory::empty(frames), 7, &options, &mut |_| true)?;
    println!("text only: {} coarse samples, codes of the first {:?}", text_only.len(), &text_only[0].indices[..6]);
    Ok(())
}
