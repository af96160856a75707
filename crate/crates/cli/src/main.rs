use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tlcontrol::config::{Config, Profile};
use tlcontrol::container::{load_codec, load_model, save_codec, save_model};
use tlcontrol::eval::{ik_ablation, run_ablation, run_eval_suite, write_report, ControlSet};
use tlcontrol::motion::JointGroup;
use tlcontrol::refine::{generate_motion, GenerateOptions};
use tlcontrol::vqvae::CodecVariant;
use tlcontrol::wire::{GenerationResult, TrajectorySpec};

#[derive(Parser)]
#[command(name = "tlc", version, about = "Text and trajectory controlled motion synthesis")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML config; keys it omits come from the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Toy,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Render the procedural corpus to the configured JSON-lines file.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the motion codec and save it to the model directory.
    TrainVqvae,
    /// Train the transformer on top of the saved codec.
    TrainMtt,
    /// Generate motions from text and/or a trajectory file.
    Generate {
        #[arg(long, default_value = "")]
        text: String,
        /// Trajectory spec JSON.
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Result JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the evaluation suite and the IK comparison on the test split.
    Eval {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Train and score part-based and unsplit codecs from one config.
    Ablate {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print the effective config as TOML.
    Config,
}

fn load_config(shared: &Shared) -> tlcontrol::Result<Config> {
    let profile = match shared.profile {
        Some(ProfileArg::Paper) => Profile::Paper,
        _ => Profile::Toy,
    };
    let mut config = match &shared.config {
        Some(path) => Config::load(path, profile)?,
        None => Config::for_profile(profile),
    };
    if let Some(seed) = shared.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> tlcontrol::Result<()> {
    let config = load_config(&cli.shared)?;
    let model_dir = config.resolved_model_dir();
    match cli.command {
        Command::GenData { out } => {
            let path = out.unwrap_or_else(|| config.data.path.clone());
            let corpus = tlcontrol::dataset::generate_corpus(&config.data.generator, config.data.corpus_size, config.seed)?;
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            tlcontrol::dataset::write_corpus(&path, &corpus.samples)?;
            eprintln!("wrote {} clips to {}", corpus.samples.len(), path.display());
        }
        Command::TrainVqvae => {
            let corpus = config.corpus()?;
            let every = log_every(corpus.split.train.len(), config.vqvae.batch_size);
            let (codec, _) = tlcontrol::vqvae::train_vqvae(&corpus, &config.vqvae, config.seed, &mut |l| {
                if l.step % every == 0 {
                    eprintln!("step {:6} loss {:.5} recon {:.5} commit {:.5} resets {}", l.step, l.total, l.recon, l.commit, l.resets);
                }
            })?;
            let mpjpe = tlcontrol::metrics::reconstruction_mpjpe(&codec, corpus.train().map(|s| &s.motion))?;
            eprintln!("train reconstruction MPJPE {:.2} cm", 100.0 * mpjpe);
            save_codec(&model_dir, &codec)?;
            eprintln!("saved codec to {}", model_dir.display());
        }
        Command::TrainMtt => {
            let corpus = config.corpus()?;
            let codec = load_codec(&model_dir)?;
            let every = log_every(corpus.split.train.len(), config.mtt.batch_size);
            let (model, _) = tlcontrol::mtt::train_mtt(&corpus, codec, &config.mtt, config.seed, &mut |l| {
                if l.step % every == 0 {
                    eprintln!(
                        "step {:6} ce {:.4} recon {:.4} mask {:.2} tau {:.2} {:?}",
                        l.step, l.cross_entropy, l.recon, l.mask_proportion, l.tau, l.strategy
                    );
                }
            })?;
            save_model(&model_dir, &model)?;
            eprintln!("saved model to {}", model_dir.display());
        }
        Command::Generate { text, traj, tol, samples, out } => {
            let model = load_model(&model_dir)?;
            let frames = model.config.max_len;
            let spec = match traj {
                Some(path) => serde_json::from_slice::<TrajectorySpec>(&std::fs::read(&path)?)?,
                None => TrajectorySpec::empty(frames),
            };
            if spec.length != frames {
                return Err(tlcontrol::Error::Input(format!("trajectory has {} frames; the model generates {frames}", spec.length)));
            }
            let traj = spec.to_partial().map_err(|e| tlcontrol::Error::Input(e.to_string()))?;
            let mut optimize = config.optimize.clone();
            if let Some(t) = tol {
                optimize.tolerance = t;
            }
            let options = GenerateOptions { num_samples: samples, optimize, skip_refinement: false };
            let out_samples = generate_motion(&model, &text, &traj, config.seed, &options, &mut |_| true)?;
            for (i, s) in out_samples.iter().enumerate() {
                match (s.unrefined_avg_err_m, s.avg_err_m) {
                    (Some(u), Some(r)) => eprintln!("sample {i}: avg err {:.2} cm (coarse {:.2} cm), {} iterations", 100.0 * r, 100.0 * u, s.trace.iterations),
                    _ => eprintln!("sample {i}: no waypoints, coarse prediction"),
                }
            }
            let result = serde_json::to_string(&GenerationResult::new(&out_samples, &traj)?)?;
            match out {
                Some(path) => std::fs::write(path, result)?,
                None => println!("{result}"),
            }
        }
        Command::Eval { out } => {
            let corpus = config.corpus()?;
            let model = load_model(&model_dir)?;
            let test: Vec<_> = corpus.test().cloned().collect();
            let mut eval = config.eval.clone();
            eval.variants = vec![model.codec.config.variant];
            eval.optimize = config.optimize.clone();
            let rows = run_eval_suite(&eval, &[&model], &test, config.seed, &mut |r| {
                eprintln!(
                    "{:>10} mask {:.2} tol {:.0e}: avg err {:.2} cm (full track {:.2}), mmod {:.3}, {:.3} s/batch",
                    r.control, r.mask_rate, r.tolerance, r.avg_err_cm, r.full_avg_err_cm, r.multimodality, r.seconds_per_batch
                );
            })?;
            write_report(&out, "results", &rows)?;
            let mut ik = Vec::new();
            for control in [ControlSet::single(JointGroup::Root), ControlSet::single(JointGroup::LeftArm)] {
                ik.extend(ik_ablation(&model, &test, &control, 0.5, &config.optimize, &config.ik, config.seed)?);
            }
            write_report(&out, "ik", &ik)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Serve { bind } => {
            let mut service = config.service.clone();
            if let Some(b) = bind {
                service.bind = b;
            }
            let model = match tlc_service::LoadedModel::load(&model_dir) {
                Ok(m) => Some(m),
                Err(e) => {
                    eprintln!("starting without a model: {e}");
                    None
                }
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(tlc_service::serve(service, model))?;
        }
        Command::Ablate { out } => {
            let corpus = config.corpus()?;
            let rows = run_ablation(&corpus, &config, &[CodecVariant::PartBased, CodecVariant::Unsplit], &mut |m| eprintln!("{m}"))?;
            write_report(&out, "ablation", &rows)?;
            eprintln!("wrote {}", Path::new(&out).join("ablation.csv").display());
        }
        Command::Config => print!("{}", config.to_toml()?),
    }
    Ok(())
}

/// Steps per epoch, for one log line per epoch.
fn log_every(train: usize, batch: usize) -> usize {
    tlcontrol::schedule::batches_per_epoch(train, batch).max(1)
}
