//! Runs a small evaluation grid (root and all-group control, two mask rates)
//! against the saved model and writes results.json / results.csv.

use tlcontrol::config::Config;
use tlcontrol::container::load_model;
use tlcontrol::eval::{run_eval_suite, write_report, ControlSet, EvalSuiteConfig};
use tlcontrol::motion::JointGroup;

fn main() -> tlcontrol::Result<()> {
    let config = Config::toy();
    let model = load_model(&config.resolved_model_dir())?;
    let corpus = config.corpus()?;
    let test: Vec<_> = corpus.test().cloned().collect();
    let suite = EvalSuiteConfig {
        control_sets: vec![ControlSet::single(JointGroup::Root), ControlSet::all()],
        mask_rates: vec![0.0, 0.5],
        num_inputs: 8,
        ..Default::default()
    };
    let rows = run_eval_suite(&suite, &[&model], &test, 0, &mut |r| {
        println!(
            "{:5} mask {:.2}: err {:.2} cm (coarse {:.2}, full track {:.2}), div {:.2}, mmod {:.2}, fid {:.3}",
            r.control, r.mask_rate, r.avg_err_cm, r.unrefined_avg_err_cm, r.full_avg_err_cm, r.diversity, r.multimodality, r.fid
        );
    })?;
    let out = std::env::temp_dir().join("tlc-eval");
    write_report(&out, "results", &rows)?;
    println!("wrote {}", out.display());
    Ok(())
}
