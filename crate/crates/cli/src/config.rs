//! Pipeline configuration shared by every subcommand.
//!
//! Flags and an optional TOML file both fill a [`PipelineConfig`]; values in
//! the file take precedence.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use prpca_core::corruption::{CorruptionKind, CorruptionSpec};
use prpca_core::io::ColorMode;
use prpca_core::metrics::ThresholdPolicy;
use prpca_core::solvers::{LowRankUpdate, SolverConfig, TvRpcaConfig};
use prpca_core::tv::TvMode;

use crate::error::{CliError, CliResult};

/// Decomposition algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PrpcaOptshrink,
    PrpcaSvt,
    Rpca,
    Tvrpca,
}

/// Where the frame-to-anchor homographies come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegistrationSource {
    /// Feature matching and RANSAC.
    Auto,
    /// Homography file, one line per frame.
    File(PathBuf),
    /// Identity for every frame.
    Static,
}

impl FromStr for RegistrationSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" | "internal" => Ok(RegistrationSource::Auto),
            "static" => Ok(RegistrationSource::Static),
            _ => match s.strip_prefix("file=") {
                Some(path) if !path.is_empty() => Ok(RegistrationSource::File(path.into())),
                _ => Err(format!("expected auto, static or file=PATH, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for RegistrationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegistrationSource::Auto => write!(f, "auto"),
            RegistrationSource::Static => write!(f, "static"),
            RegistrationSource::File(p) => write!(f, "file={}", p.display()),
        }
    }
}

impl TryFrom<String> for RegistrationSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<RegistrationSource> for String {
    fn from(r: RegistrationSource) -> Self {
        r.to_string()
    }
}

/// Parse a unit enum through its serde name, e.g. `"3d"` or `"salt_pepper"`.
pub fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// `sweep:N`, `fixed:T`, or a bare threshold.
pub fn parse_threshold(s: &str) -> Result<ThresholdPolicy, String> {
    let bad = || format!("expected sweep:N, fixed:T or a number, got {s:?}");
    if let Some(n) = s.strip_prefix("sweep:") {
        return n.parse().map(ThresholdPolicy::Sweep).map_err(|_| bad());
    }
    let t = s.strip_prefix("fixed:").unwrap_or(s);
    t.parse().map(ThresholdPolicy::Fixed).map_err(|_| bad())
}

/// Every setting any subcommand reads. `None` means "use the default".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registration: Option<RegistrationSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv: Option<TvMode>,
    /// Corruption applied by `corrupt`, or before `decompose` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Clean frames for PSNR.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Foreground label images, matched to frames by file stem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<String>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field.clone(); })*
    };
}

impl PipelineConfig {
    /// Read a TOML config file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Replace every field that `other` sets.
    pub fn overlay(&mut self, other: &PipelineConfig) {
        overlay!(
            self, other, input, output, seed, color, registration, variant, rank, lambda_s, lambda_e,
            lambda_l, tau, rho, inner_iters, iters, tv, corruption, level, truth, labels, threshold
        );
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("--input is required".into()))
    }

    pub fn output(&self) -> CliResult<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| CliError::Config("--output is required".into()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn registration(&self) -> RegistrationSource {
        self.registration.clone().unwrap_or(RegistrationSource::Auto)
    }

    pub fn variant(&self) -> Variant {
        self.variant.unwrap_or(Variant::PrpcaOptshrink)
    }

    /// 3D TV for a static camera, 2D otherwise.
    pub fn tv_mode(&self) -> TvMode {
        self.tv.unwrap_or(match self.registration() {
            RegistrationSource::Static => TvMode::ThreeD,
            _ => TvMode::TwoD,
        })
    }

    pub fn threshold(&self) -> CliResult<ThresholdPolicy> {
        match &self.threshold {
            None => Ok(ThresholdPolicy::default()),
            Some(s) => parse_threshold(s).map_err(CliError::Config),
        }
    }

    pub fn corruption_spec(&self) -> CliResult<Option<CorruptionSpec>> {
        match (self.corruption, self.level) {
            (None, None) => Ok(None),
            (Some(kind), Some(level)) => Ok(Some(CorruptionSpec::new(kind, level, self.seed()))),
            _ => Err(CliError::Config("corruption needs both a kind and a level".into())),
        }
    }

    /// PRPCA settings for an `m x n` canvas.
    pub fn solver(&self, m: usize, n: usize) -> SolverConfig {
        let mut cfg = SolverConfig::defaults(m, n, self.tv_mode());
        cfg.rank = self.rank.unwrap_or(cfg.rank);
        cfg.lam_s = self.lambda_s.unwrap_or(cfg.lam_s);
        cfg.lam_e = self.lambda_e.unwrap_or(cfg.lam_e);
        cfg.lam_l = self.lambda_l.unwrap_or(cfg.lam_l);
        cfg.tau = self.tau.unwrap_or(cfg.tau);
        cfg.rho = self.rho.unwrap_or(cfg.rho);
        cfg.inner_iters = self.inner_iters.unwrap_or(cfg.inner_iters);
        cfg.iters = self.iters.unwrap_or(cfg.iters);
        if self.variant() == Variant::PrpcaSvt {
            cfg.update = LowRankUpdate::Svt;
        }
        cfg
    }

    /// Missing-data RPCA `(lam_l, lam_s, tau, iters)`.
    pub fn rpca(&self, rows: usize, p: usize) -> (f64, f64, f64, usize) {
        let lam_s = self.lambda_s.unwrap_or(1.0 / (rows.max(p) as f64).sqrt());
        (self.lambda_l.unwrap_or(1.0), lam_s, self.tau.unwrap_or(0.5), self.iters.unwrap_or(150))
    }

    /// TVRPCA settings; `lambda_l` sets the penalty parameter `mu`.
    pub fn tvrpca(&self, rows: usize, p: usize) -> TvRpcaConfig {
        let mut cfg = TvRpcaConfig::defaults(rows, p, self.lambda_l.unwrap_or(1.0));
        cfg.lam2 = self.lambda_e.unwrap_or(cfg.lam2);
        cfg.lam3 = self.lambda_s.unwrap_or(cfg.lam3);
        cfg.iters = self.iters.unwrap_or(cfg.iters);
        cfg.inner_iters = self.inner_iters.unwrap_or(cfg.inner_iters);
        cfg.rho = self.rho.unwrap_or(cfg.rho);
        cfg.tv_mode = self.tv.unwrap_or(cfg.tv_mode);
        cfg
    }

    /// Fill every solver field this run used, so the result can be replayed.
    pub fn resolved(&self, m: usize, n: usize, p: usize) -> PipelineConfig {
        let mut out = self.clone();
        out.output = None;
        out.seed = Some(self.seed());
        out.registration = Some(self.registration());
        out.variant = Some(self.variant());
        out.color = Some(self.color.unwrap_or_default());
        match self.variant() {
            Variant::PrpcaOptshrink | Variant::PrpcaSvt => {
                let s = self.solver(m, n);
                out.rank = Some(s.rank);
                out.lambda_s = Some(s.lam_s);
                out.lambda_e = Some(s.lam_e);
                out.lambda_l = Some(s.lam_l);
                out.tau = Some(s.tau);
                out.rho = Some(s.rho);
                out.inner_iters = Some(s.inner_iters);
                out.iters = Some(s.iters);
                out.tv = Some(s.tv_mode);
            }
            Variant::Rpca => {
                let (lam_l, lam_s, tau, iters) = self.rpca(m * n, p);
                out.lambda_l = Some(lam_l);
                out.lambda_s = Some(lam_s);
                out.tau = Some(tau);
                out.iters = Some(iters);
            }
            Variant::Tvrpca => {
                let t = self.tvrpca(m * n, p);
                out.lambda_l = Some(t.mu);
                out.lambda_e = Some(t.lam2);
                out.lambda_s = Some(t.lam3);
                out.iters = Some(t.iters);
                out.inner_iters = Some(t.inner_iters);
                out.rho = Some(t.rho);
                out.tv = Some(t.tv_mode);
            }
        }
        out
    }
}
