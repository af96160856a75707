//! Latent refinement against a linear decoder, where the optimum has a closed
//! form: L-BFGS should land on the least-squares residual.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlcontrol::optim::{ConvergenceTest, OptimizeConfig};
use tlcontrol::refine::{refine_with, LinearDecoderObjective};
use tlcontrol::vqvae::LatentSequence;

fn main() -> tlcontrol::Result<()> {
    let config = OptimizeConfig { tolerance: 1e-12, convergence: ConvergenceTest::GradientMaxNorm, ..Default::default() };
    for (seed, reachable) in [(0, true), (1, false)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(40, 16, |_, _| rng.gen_range(-1.0..1.0));
        let targets = if reachable {
            &w * DVector::from_fn(16, |_, _| rng.gen_range(-1.0..1.0))
        } else {
            DVector::from_fn(40, |_, _| rng.gen_range(-1.0..1.0))
        };
        let rows = (0..40).filter(|_| rng.gen_bool(0.7)).collect();
        let mut objective = LinearDecoderObjective { w, targets, rows };
        let (_, trace, stop, _) = refine_with(&LatentSequence::zeros(1, 1, 16), &mut objective, &config, &mut |_| true)?;
        println!(
            "reachable={reachable}: {} iterations, objective {:.3e} (optimum {:.3e}), stop {stop:?}",
            trace.iterations,
            trace.objective.last().unwrap(),
            objective.optimum()
        );
    }
    Ok(())
}
