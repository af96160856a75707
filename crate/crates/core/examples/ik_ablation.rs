//! Compares no refinement, per-frame IK and latent refinement on held-out
//! samples with half of each left-hand track hidden.

use tlcontrol::config::Config;
use tlcontrol::container::load_model;
use tlcontrol::eval::{ik_ablation, ControlSet};
use tlcontrol::motion::JointGroup;

fn main() -> tlcontrol::Result<()> {
    let config = Config::toy();
    let model = load_model(&config.resolved_model_dir())?;
    let corpus = config.corpus()?;
    let test: Vec<_> = corpus.test().take(10).cloned().collect();
    let rows = ik_ablation(&model, &test, &ControlSet::single(JointGroup::LeftArm), 0.5, &config.optimize, &config.ik, 0)?;
    println!("{:10} {:>9} {:>10} {:>10} {:>9}", "strategy", "err cm", "full cm", "drift cm", "identical");
    for r in rows {
        println!(
            "{:10} {:9.2} {:10.2} {:10.3} {:>9}",
            format!("{:?}", r.strategy),
            r.avg_err_cm,
            r.full_avg_err_cm,
            r.complement_drift_cm,
            r.complement_identical
        );
    }
    Ok(())
}
