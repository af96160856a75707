//! Trains the part-based motion codec on the toy corpus and saves it to the
//! model directory (`TLC_MODEL_DIR`, else `models/toy`).
//!
//! cargo run --release -p tlcontrol --example train_vqvae -- [epochs]

use tlcontrol::config::Config;
use tlcontrol::container::save_codec;
use tlcontrol::metrics::reconstruction_mpjpe;
use tlcontrol::vqvae::train_vqvae;

fn main() -> tlcontrol::Result<()> {
    let mut config = Config::toy();
    if let Some(epochs) = std::env::args().nth(1) {
        config.vqvae.epochs = epochs.parse().expect("epochs");
    }
    let corpus = config.corpus()?;
    let (codec, history) = train_vqvae(&corpus, &config.vqvae, config.seed, &mut |l| {
        if l.step % 100 == 0 {
            println!("step {:5} recon {:.4} commit {:.4}", l.step, l.recon, l.commit);
        }
    })?;
    println!("{} steps", history.len());
    let train = reconstruction_mpjpe(&codec, corpus.train().map(|s| &s.motion))?;
    let test = reconstruction_mpjpe(&codec, corpus.test().map(|s| &s.motion))?;
    println!("reconstruction MPJPE: train {:.2} cm, test {:.2} cm", 100.0 * train, 100.0 * test);
    let dir = config.resolved_model_dir();
    save_codec(&dir, &codec)?;
    println!("saved to {}", dir.display());
    Ok(())
}
