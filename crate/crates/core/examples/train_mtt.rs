//! Trains the masked trajectory transformer on top of the codec saved by the
//! `train_vqvae` example and writes the complete model.
//!
//! cargo run --release -p tlcontrol --example train_mtt -- [epochs]

use tlcontrol::config::Config;
use tlcontrol::container::{load_codec, save_model};
use tlcontrol::mtt::train_mtt;

fn main() -> tlcontrol::Result<()> {
    let mut config = Config::toy();
    if let Some(epochs) = std::env::args().nth(1) {
        config.mtt.epochs = epochs.parse().expect("epochs");
    }
    let dir = config.resolved_model_dir();
    let corpus = config.corpus()?;
    let codec = load_codec(&dir)?;
    let (model, _) = train_mtt(&corpus, codec, &config.mtt, config.seed, &mut |l| {
        if l.step % 100 == 0 {
            println!("step {:5} ce {:.3} recon {:.3} tau {:.2} {:?}", l.step, l.cross_entropy, l.recon, l.tau, l.strategy);
        }
    })?;
    save_model(&dir, &model)?;
    println!("saved to {}", dir.display());
    Ok(())
}
