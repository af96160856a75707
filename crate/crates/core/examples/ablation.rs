//! Trains part-based and unsplit codecs with the same short schedule and
//! prints one row per variant.
//!
//! cargo run --release -p tlcontrol --example ablation -- [epochs]

use tlcontrol::config::Config;
use tlcontrol::eval::run_ablation;
use tlcontrol::vqvae::CodecVariant;

fn main() -> tlcontrol::Result<()> {
    let epochs = std::env::args().nth(1).map_or(10, |e| e.parse().expect("epochs"));
    let mut config = Config::toy();
    config.vqvae.epochs = epochs;
    config.mtt.epochs = epochs;
    config.eval.num_inputs = 6;
    let corpus = config.corpus()?;
    let rows = run_ablation(&corpus, &config, &[CodecVariant::PartBased, CodecVariant::Unsplit], &mut |m| println!("{m}"))?;
    for r in rows {
        println!(
            "{:10} width {} independent {:5} mpjpe {:.2}/{:.2} cm err {:.2} cm fid {:.3}",
            r.variant, r.latent_width, r.group_independent, r.train_mpjpe_cm, r.test_mpjpe_cm, r.avg_err_cm, r.fid
        );
    }
    Ok(())
}
