use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lpnet::data::SplitSpec;
use lpnet::experiments::{
    default_p_list, CompareArgs, ConvertCheckArgs, DataSpec, ImportIdxArgs, Invocation, PreprocessArgs, RankArgs,
    RunManifest, SplitArgs, SweepArgs, TrainArgs,
};
use lpnet::training::TrainConfig;
use lpnet::{Error, ModelConfig, PoolExponent};

/// Lp-pooling convolutional networks: training and experiment runner.
#[derive(Parser)]
#[command(name = "lpnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model, writing per-epoch metrics and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Pooling exponent (`inf` for max pooling).
        #[arg(long, default_value = "2", value_parser = parse_p)]
        p: PoolExponent,
    },
    /// Train one model per pooling exponent and seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents; defaults to 1,2,4,8,12,16,32,inf.
        #[arg(long, value_delimiter = ',', value_parser = parse_p)]
        p: Vec<PoolExponent>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Train single- and multi-stage variants under identical seeds.
    CompareMsSs {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "2", value_parser = parse_p)]
        p: PoolExponent,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// List the highest-energy samples of a dataset under a checkpoint.
    RankEnergy {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value = "runs/rank")]
        out_dir: PathBuf,
    },
    /// Write the preprocessed form of a raw 8-bit dataset.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the per-class validation set from train and extra datasets.
    Split {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        extra: PathBuf,
        #[arg(long, default_value_t = 400)]
        per_class_train: usize,
        #[arg(long, default_value_t = 200)]
        per_class_extra: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs/split")]
        out_dir: PathBuf,
    },
    /// Validate a dataset container and print a summary.
    ConvertCheck {
        #[arg(long)]
        data: PathBuf,
    },
    /// Convert an IDX image/label pair into a dataset container.
    ImportIdx {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 32)]
        pad_to: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the invocation recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write outputs here instead of the recorded location.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Training dataset container.
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset container; without it a fraction of --data is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    holdout_fraction: f64,
    #[arg(long)]
    max_train: Option<usize>,
    #[arg(long)]
    max_val: Option<usize>,
    /// Multi-stage features (default).
    #[arg(long, conflicts_with = "ss")]
    ms: bool,
    /// Single-stage features.
    #[arg(long)]
    ss: bool,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_decay: f64,
    #[arg(long, default_value_t = 1e-5)]
    l2: f64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    input_channels: usize,
    #[arg(long, default_value_t = 32)]
    input_size: usize,
    #[arg(long, default_value_t = 16)]
    stage1_features: usize,
    #[arg(long, default_value_t = 512)]
    stage2_features: usize,
    #[arg(long, default_value_t = 20)]
    hidden: usize,
    #[arg(long, default_value = "runs/latest")]
    out_dir: PathBuf,
}

impl Common {
    fn data(&self) -> DataSpec {
        DataSpec {
            val: self.val.clone(),
            holdout_fraction: self.holdout_fraction,
            max_train: self.max_train,
            max_val: self.max_val,
            ..DataSpec::new(&self.data)
        }
    }

    fn model(&self, p: PoolExponent) -> ModelConfig {
        ModelConfig {
            pooling_p: p,
            multi_stage: !self.ss,
            input_channels: self.input_channels,
            input_size: self.input_size,
            stage1_features: self.stage1_features,
            stage2_features: self.stage2_features,
            hidden_units: self.hidden,
            seed: self.seed,
            ..ModelConfig::default()
        }
    }

    fn train(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr,
            lr_decay: self.lr_decay,
            l2: self.l2,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

fn parse_p(s: &str) -> Result<PoolExponent, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn invocation(command: Command) -> Result<Invocation, Error> {
    Ok(match command {
        Command::Train { common, p } => Invocation::Train(TrainArgs {
            data: common.data(),
            model: common.model(p),
            train: common.train(),
            out_dir: common.out_dir.clone(),
        }),
        Command::Sweep { common, p, seeds } => Invocation::Sweep(SweepArgs {
            data: common.data(),
            model: common.model(PoolExponent::Finite(2.0)),
            train: common.train(),
            p_values: if p.is_empty() { default_p_list() } else { p },
            seeds,
            out_dir: common.out_dir.clone(),
        }),
        Command::CompareMsSs { common, p, seeds } => Invocation::CompareMsSs(CompareArgs {
            data: common.data(),
            model: common.model(p),
            train: common.train(),
            seeds,
            out_dir: common.out_dir.clone(),
        }),
        Command::RankEnergy { checkpoint, data, k, out_dir } => {
            Invocation::RankEnergy(RankArgs { checkpoint, data, k, out_dir })
        }
        Command::Preprocess { data, out } => Invocation::Preprocess(PreprocessArgs { input: data, output: out }),
        Command::Split { train, extra, per_class_train, per_class_extra, seed, out_dir } => {
            Invocation::Split(SplitArgs {
                train,
                extra,
                spec: SplitSpec {
                    per_class_from_train: per_class_train,
                    per_class_from_extra: per_class_extra,
                    seed,
                },
                out_dir,
            })
        }
        Command::ConvertCheck { data } => Invocation::ConvertCheck(ConvertCheckArgs { data }),
        Command::ImportIdx { images, labels, pad_to, out } => {
            Invocation::ImportIdx(ImportIdxArgs { images, labels, pad_to, output: out })
        }
        Command::Replay { manifest, out_dir } => {
            let mut inv = RunManifest::load(&manifest)?.invocation;
            if let Some(dir) = out_dir {
                inv.redirect(&dir);
            }
            inv
        }
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidConfiguration { .. } => 2,
        Error::Format { .. } => 3,
        Error::InvalidState(_) | Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match invocation(cli.command).and_then(|inv| inv.run()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
