//! Command-line flags and their mapping onto [`PipelineConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use prpca_core::corruption::CorruptionKind;
use prpca_core::io::ColorMode;
use prpca_core::tv::TvMode;

use crate::config::{parse_named, parse_threshold, PipelineConfig, RegistrationSource, Variant};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "prpca", version, about = "Panoramic robust PCA for moving-camera video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate homographies and write a panorama preview and coverage masks.
    Register {
        #[command(flatten)]
        shared: Shared,
        /// auto, static or file=PATH.
        #[arg(long, value_parser = parse_registration)]
        registration: Option<RegistrationSource>,
    },
    /// Add seeded noise, outliers or missing pixels to a frame sequence.
    Corrupt {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        corruption: CorruptionArgs,
    },
    /// Register and split a sequence into background, foreground and outliers.
    Decompose {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        corruption: CorruptionArgs,
        #[command(flatten)]
        truth: TruthArgs,
    },
    /// Score a decomposition against clean frames and foreground labels.
    Evaluate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        truth: TruthArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    /// Frame directory or glob pattern (decomposition directory for evaluate).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// luminance or per_channel.
    #[arg(long, value_parser = parse_named::<ColorMode>)]
    pub color: Option<ColorMode>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// prpca-optshrink, prpca-svt, rpca or tvrpca.
    #[arg(long, value_parser = parse_named::<Variant>)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long = "lambda-s")]
    pub lambda_s: Option<f64>,
    #[arg(long = "lambda-e")]
    pub lambda_e: Option<f64>,
    #[arg(long = "lambda-l")]
    pub lambda_l: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "inner-iters")]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// 2d or 3d.
    #[arg(long, value_parser = parse_named::<TvMode>)]
    pub tv: Option<TvMode>,
    /// auto, static or file=PATH.
    #[arg(long, value_parser = parse_registration)]
    pub registration: Option<RegistrationSource>,
}

#[derive(Debug, Clone, Args)]
pub struct CorruptionArgs {
    /// salt_pepper, gaussian, poisson or missing.
    #[arg(long, value_parser = parse_named::<CorruptionKind>)]
    pub kind: Option<CorruptionKind>,
    /// Outlier or missing probability, or SNR in dB.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TruthArgs {
    /// Clean frames.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Foreground label images.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// sweep:N, fixed:T or a bare threshold.
    #[arg(long, value_parser = parse_threshold_arg)]
    pub threshold: Option<String>,
}

fn parse_registration(s: &str) -> Result<RegistrationSource, String> {
    s.parse()
}

fn parse_threshold_arg(s: &str) -> Result<String, String> {
    parse_threshold(s).map(|_| s.to_string())
}

impl Shared {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.input = self.input.clone();
        cfg.output = self.output.clone();
        cfg.seed = self.seed;
        cfg.color = self.color;
    }
}

impl CorruptionArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.corruption = self.kind;
        cfg.level = self.level;
    }
}

impl TruthArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.truth = self.truth.clone();
        cfg.labels = self.labels.clone();
        cfg.threshold = self.threshold.clone();
    }
}

impl SolverArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.variant = self.variant;
        cfg.rank = self.rank;
        cfg.lambda_s = self.lambda_s;
        cfg.lambda_e = self.lambda_e;
        cfg.lambda_l = self.lambda_l;
        cfg.tau = self.tau;
        cfg.rho = self.rho;
        cfg.inner_iters = self.inner_iters;
        cfg.iters = self.iters;
        cfg.tv = self.tv;
        cfg.registration = self.registration.clone();
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Register { .. } => "register",
            Command::Corrupt { .. } => "corrupt",
            Command::Decompose { .. } => "decompose",
            Command::Evaluate { .. } => "evaluate",
        }
    }

    /// Flags first, then the `--config` file on top.
    pub fn config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let shared = match self {
            Command::Register { shared, registration } => {
                cfg.registration = registration.clone();
                shared
            }
            Command::Corrupt { shared, corruption } => {
                corruption.apply(&mut cfg);
                shared
            }
            Command::Decompose {
                shared,
                solver,
                corruption,
                truth,
            } => {
                solver.apply(&mut cfg);
                corruption.apply(&mut cfg);
                truth.apply(&mut cfg);
                shared
            }
            Command::Evaluate { shared, truth } => {
                truth.apply(&mut cfg);
                shared
            }
        };
        shared.apply(&mut cfg);
        if let Some(path) = &shared.config {
            cfg.overlay(&PipelineConfig::from_file(path)?);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn decompose_flags_reach_the_config() {
        let cli = Cli::try_parse_from([
            "prpca", "decompose", "--input", "in", "--output", "out", "--variant", "prpca-svt", "--rank", "2",
            "--lambda-s", "0.5", "--tv", "3d", "--registration", "file=h.txt", "--kind", "salt_pepper", "--level",
            "0.1", "--threshold", "sweep:16",
        ])
        .unwrap();
        let cfg = cli.command.config().unwrap();
        assert_eq!(cfg.variant, Some(Variant::PrpcaSvt));
        assert_eq!(cfg.rank, Some(2));
        assert_eq!(cfg.lambda_s, Some(0.5));
        assert_eq!(cfg.tv, Some(TvMode::ThreeD));
        assert_eq!(cfg.registration, Some(RegistrationSource::File("h.txt".into())));
        assert_eq!(cfg.corruption, Some(CorruptionKind::SaltPepper));
        assert_eq!(cfg.threshold.as_deref(), Some("sweep:16"));
    }

    #[test]
    fn bad_values_are_rejected() {
        for args in [
            ["prpca", "decompose", "--variant", "pca"],
            ["prpca", "decompose", "--tv", "4d"],
            ["prpca", "decompose", "--registration", "maybe"],
            ["prpca", "evaluate", "--threshold", "sweep:"],
        ] {
            assert!(Cli::try_parse_from(args).is_err(), "{args:?}");
        }
    }

    #[test]
    fn config_file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "iters = 20\nseed = 9\n").unwrap();
        let cli = Cli::try_parse_from([
            "prpca",
            "decompose",
            "--iters",
            "5",
            "--seed",
            "1",
            "--rank",
            "3",
            "--config",
            path.to_str().unwrap(),
        ])
        .unwrap();
        let cfg = cli.command.config().unwrap();
        assert_eq!((cfg.iters, cfg.seed, cfg.rank), (Some(20), Some(9), Some(3)));
    }
}
