//! Scores perturbed ground-truth motions with the control, diversity,
//! multimodality and Fréchet metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlcontrol::dataset::{generate_corpus, GeneratorConfig};
use tlcontrol::metrics::{control_accuracy, diversity, fid_proxy, multimodality, DEFAULT_THRESHOLD_M};
use tlcontrol::motion::{recover_global_positions, JointPositions, PoseFeatureLayout, SkeletonSpec};

fn jitter(pos: &JointPositions, sigma: f64, rng: &mut impl Rng) -> JointPositions {
    let mut out = pos.clone();
    for t in 0..pos.frames() {
        for j in 0..pos.joints() {
            let p = pos.get(t, j);
            out.set(t, j, [p[0] + rng.gen_range(-sigma..sigma), p[1], p[2] + rng.gen_range(-sigma..sigma)]);
        }
    }
    out
}

fn main() -> tlcontrol::Result<()> {
    let corpus = generate_corpus(&GeneratorConfig { max_len: 64, ..Default::default() }, 30, 1)?;
    let layout = PoseFeatureLayout::new(22);
    let skeleton = SkeletonSpec::smpl22();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for sigma in [0.02, 0.2, 0.8] {
        let pos: Vec<_> = corpus
            .samples
            .iter()
            .map(|s| recover_global_positions(&s.motion, &layout).map(|p| jitter(&p, sigma, &mut rng)))
            .collect::<tlcontrol::Result<_>>()?;
        let pairs: Vec<_> = pos.iter().zip(&corpus.samples).map(|(p, s)| (p, &s.full_trajectories)).collect();
        let r = control_accuracy(&pairs, &skeleton, DEFAULT_THRESHOLD_M)?;
        println!(
            "jitter {sigma:.2} m: traj err {:.3}, loc err {:.3}, avg err {:.2} cm",
            r.traj_err_fraction, r.loc_err_fraction, r.avg_err_cm
        );
    }

    let feats: Vec<Vec<f64>> = corpus.samples.iter().map(|s| s.motion.features().to_vec()).collect();
    println!("diversity over 10 pairs: {:.3}", diversity(&feats, 10, &mut rng)?);
    let groups: Vec<Vec<Vec<f64>>> = feats.chunks(3).map(|c| c.to_vec()).collect();
    println!("multimodality over groups of 3: {:.3}", multimodality(&groups)?);
    let summary = |v: &[f64]| vec![v.iter().sum::<f64>() / v.len() as f64, v.iter().map(|x| x * x).sum::<f64>().sqrt()];
    let (a, b): (Vec<_>, Vec<_>) = feats.iter().map(|f| summary(f)).enumerate().partition(|(i, _)| i % 2 == 0);
    let a: Vec<_> = a.into_iter().map(|(_, f)| f).collect();
    let b: Vec<_> = b.into_iter().map(|(_, f)| f).collect();
    println!("Fréchet distance between halves of the corpus: {:.4}", fid_proxy(&a, &b)?);
    Ok(())
}
