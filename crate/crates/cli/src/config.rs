//! Strict JSON run configuration. Every section is optional; unknown keys
//! anywhere are rejected. Relative paths are resolved against the directory
//! holding the config file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::Deserialize;
use trajkit::grpo::GrpoConfig;
use trajkit::rfs::RfsConfig;
use trajkit::schema::CotStage;
use trajkit::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Md,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the seeds of the `synth` and `train.grpo` sections and the gradcheck base seed.
    pub seed: Option<u64>,
    pub report: ReportFormat,
    /// Spread per-frame work over the rayon pool; results are identical either way.
    pub parallel: bool,
    pub scenarios: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub rfs: RfsConfig,
    pub synth: SynthSpec,
    pub validate: ValidateSection,
    pub train: TrainSection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            report: ReportFormat::Csv,
            parallel: true,
            scenarios: None,
            predictions: None,
            input: None,
            out: None,
            rfs: RfsConfig::default(),
            synth: SynthSpec::default(),
            validate: ValidateSection::default(),
            train: TrainSection::default(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub kind: Option<ValidateKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "String")]
pub enum ValidateKind {
    Annotation,
    CotStage(CotStage),
    Trajectory,
    Scenarios,
}

impl FromStr for ValidateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let stage = s
            .strip_prefix("cot-stage")
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(CotStage::from_index);
        match (s, stage) {
            ("annotation", _) => Ok(Self::Annotation),
            ("trajectory", _) => Ok(Self::Trajectory),
            ("scenarios", _) => Ok(Self::Scenarios),
            (_, Some(st)) => Ok(Self::CotStage(st)),
            _ => Err(format!(
                "unknown validate kind `{s}` (expected annotation, cot-stage1..cot-stage4, trajectory or scenarios)"
            )),
        }
    }
}

impl TryFrom<String> for ValidateKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl fmt::Display for ValidateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Annotation => f.write_str("annotation"),
            Self::CotStage(s) => write!(f, "cot-stage{}", *s as u8),
            Self::Trajectory => f.write_str("trajectory"),
            Self::Scenarios => f.write_str("scenarios"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Ridge regression of the logged futures on random tanh features.
    #[default]
    Prefit,
    Random,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub grpo: GrpoConfig,
    /// Frames held out for evaluation.
    pub holdout: usize,
    pub init: InitKind,
    /// Start from a saved checkpoint instead of `init`.
    pub init_checkpoint: Option<PathBuf>,
    pub hidden: usize,
    pub sigma: f64,
    pub prefit_ridge: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            grpo: GrpoConfig::default(),
            holdout: 63,
            init: InitKind::Prefit,
            init_checkpoint: None,
            hidden: 64,
            sigma: 0.5,
            prefit_ridge: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    /// Number of consecutive seeds checked, starting at the run seed.
    pub trials: usize,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self { trials: 1 }
    }
}

impl RunConfig {
    pub fn parse(raw: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(raw);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("{path}: {}", e.into_inner())
        })?;
        de.end().context("trailing characters after the config object")?;
        Ok(cfg)
    }

    /// Reads `path` and resolves every relative path in it against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&raw).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.scenarios,
            &mut cfg.predictions,
            &mut cfg.input,
            &mut cfg.out,
            &mut cfg.train.init_checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Pushes a run seed into every seeded section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = seed;
        self.train.grpo.seed = seed;
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.grpo.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.rfs.validate()?;
        if !(self.train.sigma > 0.0 && self.train.sigma.is_finite()) {
            bail!("train.sigma: must be positive");
        }
        if self.train.hidden == 0 {
            bail!("train.hidden: must be at least 1");
        }
        if !(self.train.prefit_ridge >= 0.0 && self.train.prefit_ridge.is_finite()) {
            bail!("train.prefit_ridge: must be non-negative");
        }
        if self.gradcheck.trials == 0 {
            bail!("gradcheck.trials: must be at least 1");
        }
        Ok(())
    }
}

/// Fails unless `path` names an existing file.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file {} does not exist", path.display());
    }
    Ok(())
}
