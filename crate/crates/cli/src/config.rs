//! Run configuration: a JSON document with a schema version, overridable
//! flag by flag from the command line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use npiv_core::basis::{BasisFamily, ConstraintKind};
use npiv_core::npiv::ParametricModel;
use npiv_core::sim::TestKind;
use npiv_core::stat::{GridMode, ImageVariant, NullHypothesis, SupportRule, TestConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Named null hypotheses accepted by `--null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NullName {
    Decreasing,
    Increasing,
    Convex,
    Concave,
    Linear,
    Quadratic,
}

impl NullName {
    pub fn hypothesis(self) -> NullHypothesis {
        match self {
            NullName::Decreasing => NullHypothesis::Shape(ConstraintKind::MonotoneDecreasing),
            NullName::Increasing => NullHypothesis::Shape(ConstraintKind::MonotoneIncreasing),
            NullName::Convex => NullHypothesis::Shape(ConstraintKind::Convex),
            NullName::Concave => NullHypothesis::Shape(ConstraintKind::Concave),
            NullName::Linear => NullHypothesis::Parametric(ParametricModel::Linear),
            NullName::Quadratic => NullHypothesis::Parametric(ParametricModel::Quadratic),
        }
    }
}

/// `bspline<order>`, `cosine` or `power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BasisName(pub BasisFamily);

impl FromStr for BasisName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "cosine" => Ok(BasisName(BasisFamily::Cosine)),
            "power" => Ok(BasisName(BasisFamily::Power)),
            other => other
                .strip_prefix("bspline")
                .and_then(|o| o.parse::<usize>().ok())
                .filter(|&o| (2..=8).contains(&o))
                .map(|order| BasisName(BasisFamily::BSpline { order }))
                .ok_or_else(|| format!("unknown basis '{s}' (expected bspline2, bspline3, cosine or power)")),
        }
    }
}

impl TryFrom<String> for BasisName {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<BasisName> for String {
    fn from(b: BasisName) -> String {
        b.to_string()
    }
}

impl fmt::Display for BasisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            BasisFamily::BSpline { order } => write!(f, "bspline{order}"),
            BasisFamily::Cosine => f.write_str("cosine"),
            BasisFamily::Power => f.write_str("power"),
        }
    }
}

/// `dyadic`, `knots`, or an explicit comma-separated list of dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridSpec(pub GridMode);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GridRepr {
    Name(String),
    List(Vec<usize>),
}

impl TryFrom<GridRepr> for GridSpec {
    type Error = String;
    fn try_from(r: GridRepr) -> Result<Self, String> {
        match r {
            GridRepr::Name(s) => s.parse(),
            GridRepr::List(v) => explicit(v),
        }
    }
}

impl From<GridSpec> for GridRepr {
    fn from(g: GridSpec) -> GridRepr {
        match g.0 {
            GridMode::Dyadic => GridRepr::Name("dyadic".into()),
            GridMode::Knots => GridRepr::Name("knots".into()),
            GridMode::Explicit(v) => GridRepr::List(v),
        }
    }
}

fn explicit(v: Vec<usize>) -> Result<GridSpec, String> {
    if v.is_empty() || v.contains(&0) {
        return Err("an explicit grid needs positive dimensions".into());
    }
    Ok(GridSpec(GridMode::Explicit(v)))
}

impl FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dyadic" => Ok(GridSpec(GridMode::Dyadic)),
            "knots" => Ok(GridSpec(GridMode::Knots)),
            list => {
                let v: Result<Vec<usize>, _> = list.split(',').map(|p| p.trim().parse::<usize>()).collect();
                let v = v.map_err(|_| format!("grid '{s}' is neither dyadic, knots nor a list like 3,4,5"))?;
                explicit(v)
            }
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_null() -> NullName {
    NullName::Decreasing
}
fn default_alpha() -> f64 {
    0.05
}
fn default_basis() -> BasisName {
    BasisName(BasisFamily::BSpline { order: 3 })
}
fn default_grid() -> GridSpec {
    GridSpec(GridMode::Dyadic)
}
fn default_kfactor() -> usize {
    4
}
fn default_support() -> SupportRule {
    SupportRule::Sample
}

/// Everything a `test` or `cs` run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_null")]
    pub null: NullName,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_basis")]
    pub basis: BasisName,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_kfactor")]
    pub kfactor: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub test: TestKind,
    #[serde(default)]
    pub image_variant: ImageVariant,
    #[serde(default = "default_support")]
    pub support: SupportRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            null: default_null(),
            alpha: default_alpha(),
            basis: default_basis(),
            grid: default_grid(),
            kfactor: default_kfactor(),
            seed: None,
            test: TestKind::Structural,
            image_variant: ImageVariant::Plain,
            support: default_support(),
        }
    }
}

/// Flags mirroring the configuration keys; set flags override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigFlags {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub null: Option<NullName>,
    /// bspline2, bspline3, cosine or power.
    #[arg(long)]
    pub basis: Option<BasisName>,
    /// dyadic, knots, or an explicit list such as 3,4,5.
    #[arg(long)]
    pub grid: Option<GridSpec>,
    /// c in K = c J.
    #[arg(long)]
    pub kfactor: Option<usize>,
    /// Seed (falls back to the NPIV_SEED environment variable).
    #[arg(long)]
    pub seed: Option<u64>,
    /// structural or image (image-space test, parametric nulls only).
    #[arg(long, value_parser = parse_test_kind)]
    pub test: Option<TestKind>,
    /// plain or dof_corrected (image-space test only).
    #[arg(long, value_parser = parse_image_variant)]
    pub image_variant: Option<ImageVariant>,
    /// sample or unit basis support.
    #[arg(long, value_parser = parse_support)]
    pub support: Option<SupportRule>,
}

fn parse_test_kind(s: &str) -> Result<TestKind, String> {
    match s {
        "structural" => Ok(TestKind::Structural),
        "image" => Ok(TestKind::Image),
        _ => Err(format!("unknown test '{s}' (structural or image)")),
    }
}

fn parse_image_variant(s: &str) -> Result<ImageVariant, String> {
    match s {
        "plain" => Ok(ImageVariant::Plain),
        "dof_corrected" | "dof-corrected" => Ok(ImageVariant::DofCorrected),
        _ => Err(format!("unknown image variant '{s}' (plain or dof_corrected)")),
    }
}

fn parse_support(s: &str) -> Result<SupportRule, String> {
    match s {
        "sample" => Ok(SupportRule::Sample),
        "unit" => Ok(SupportRule::Unit),
        _ => Err(format!("unknown support '{s}' (sample or unit)")),
    }
}

/// Seed from the environment, if set and valid.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("NPIV_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::input(format!("NPIV_SEED='{s}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::input(format!(
                "config {} has schema_version {}, this build reads {SCHEMA_VERSION}",
                path.display(),
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// File (if any), then flags, then the NPIV_SEED fallback.
    pub fn resolve(flags: &ConfigFlags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(v) = flags.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = flags.null {
            cfg.null = v;
        }
        if let Some(v) = flags.basis {
            cfg.basis = v;
        }
        if let Some(v) = &flags.grid {
            cfg.grid = v.clone();
        }
        if let Some(v) = flags.kfactor {
            cfg.kfactor = v;
        }
        if let Some(v) = flags.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = flags.test {
            cfg.test = v;
        }
        if let Some(v) = flags.image_variant {
            cfg.image_variant = v;
        }
        if let Some(v) = flags.support {
            cfg.support = v;
        }
        if cfg.seed.is_none() {
            cfg.seed = env_seed()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.kfactor == 0 {
            return Err(CliError::input("kfactor must be at least 1"));
        }
        if self.test == TestKind::Image && !self.null.hypothesis().is_equality() {
            return Err(CliError::input("the image-space test needs a linear or quadratic null"));
        }
        Ok(())
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            psi_family: self.basis.0,
            b_family: self.basis.0,
            k_factor: self.kfactor,
            grid: self.grid.0.clone(),
            support: self.support,
            quantile_knots: false,
            image_variant: self.image_variant,
        }
    }
}
