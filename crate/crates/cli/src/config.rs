//! JSON experiment and cloud configurations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use amv_core::estimator::RadiusSchedule;
use amv_core::field::{Expr, Field, WithPointValue};
use amv_core::space::{make_atom_cloud, Atom, AtomCloud, Backend, EffortBudget, RegionSpec};
use amv_core::spaces::{build_space, SpaceDescriptor};
use amv_core::AmvError;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_evals: usize,
    pub target_error: f64,
    #[serde(default)]
    pub backend: Backend,
}

impl BudgetConfig {
    pub fn to_budget(self, seed: Option<u64>) -> Result<EffortBudget, CliError> {
        if self.max_evals == 0 {
            return Err(CliError::Config("budget.max_evals must be positive".into()));
        }
        if !(self.target_error >= 0.0 && self.target_error.is_finite()) {
            return Err(CliError::Config(format!(
                "budget.target_error must be nonnegative, got {}",
                self.target_error
            )));
        }
        Ok(EffortBudget {
            backend: self.backend,
            seed: seed.unwrap_or(0),
            ..EffortBudget::new(self.max_evals, self.target_error)
        })
    }
}

/// A field given as an expression, an expression with an overridden value
/// at one point, or a built-in by name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Expr(String),
    Detailed {
        expr: String,
        #[serde(default)]
        point_value: Option<PointValue>,
    },
    Builtin {
        builtin: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointValue {
    pub at: Vec<f64>,
    pub value: f64,
}

/// Named fields used by the worked examples.
pub const BUILTINS: [(&str, &str); 4] =
    [("bose-example", "x^2 - 3*x*y + y^2"), ("sign", "sgn(x)"), ("step", "sgn(x) - sgn(x - 1)"), ("abs", "abs(x)")];

impl FieldSpec {
    pub fn build(&self, what: &str) -> Result<Field, CliError> {
        let parse = |src: &str| Expr::parse(src).map_err(|e| CliError::Config(format!("{what}: {e}")));
        Ok(match self {
            FieldSpec::Expr(src) => Arc::new(parse(src)?),
            FieldSpec::Detailed { expr, point_value: None } => Arc::new(parse(expr)?),
            FieldSpec::Detailed { expr, point_value: Some(pv) } => {
                Arc::new(WithPointValue { base: Arc::new(parse(expr)?), point: pv.at.clone(), value: pv.value })
            }
            FieldSpec::Builtin { builtin } => {
                let Some((_, src)) = BUILTINS.iter().find(|(n, _)| n == builtin) else {
                    let names: Vec<&str> = BUILTINS.iter().map(|b| b.0).collect();
                    return Err(CliError::Config(format!(
                        "{what}: unknown built-in field {builtin:?}; known: {}",
                        names.join(", ")
                    )));
                };
                Arc::new(parse(src)?)
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceDescriptor,
    pub field: FieldSpec,
    pub points: Vec<Vec<f64>>,
    pub schedule: RadiusSchedule,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

/// Whether ball integrals on this space fall back to sampling.
fn uses_monte_carlo(space: &SpaceDescriptor, budget: &Option<BudgetConfig>) -> bool {
    matches!(space, SpaceDescriptor::Heisenberg) || budget.is_some_and(|b| b.backend == Backend::MonteCarlo)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.schedule.validate().map_err(config_err)?;
        if self.points.is_empty() {
            return Err(CliError::Config("points must list at least one point".into()));
        }
        if self.seed.is_none() && uses_monte_carlo(&self.space, &self.budget) {
            return Err(CliError::Config("seed is required when a Monte Carlo backend is used".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> Result<EffortBudget, CliError> {
        match self.budget {
            Some(b) => b.to_budget(self.seed),
            None => Ok(EffortBudget { seed: self.seed.unwrap_or(0), ..EffortBudget::default() }),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// A cloud given as a region grid or as explicit atoms.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    pub space: SpaceDescriptor,
    pub region: RegionConfig,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub atoms: Option<Vec<AtomConfig>>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub r: f64,
}

impl CloudConfig {
    pub fn build(&self) -> Result<AtomCloud, CliError> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(CliError::Config(format!("r must be positive, got {}", self.r)));
        }
        if self.region.jitter > 0.0 && self.seed.is_none() {
            return Err(CliError::Config("seed is required when region.jitter is positive".into()));
        }
        let space = build_space(&self.space).map_err(config_err)?;
        let region =
            RegionSpec::boxed(self.region.min.clone(), self.region.max.clone()).with_jitter(self.region.jitter);
        match (&self.atoms, self.resolution) {
            (Some(atoms), None) => {
                let atoms = atoms.iter().map(|a| Atom { point: a.point.clone(), weight: a.weight }).collect();
                AtomCloud::from_atoms(space, atoms, region, self.seed).map_err(config_err)
            }
            (None, Some(res)) => make_atom_cloud(&space, &region, res, self.seed.unwrap_or(0)).map_err(config_err),
            _ => Err(CliError::Config("give exactly one of resolution and atoms".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenConfig {
    pub cloud: CloudConfig,
    pub u: FieldSpec,
    pub v: FieldSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    pub cloud: CloudConfig,
    pub f: FieldSpec,
    /// Values on the collar of atoms within `r` of the region boundary.
    pub boundary: FieldSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Tr,
    DeltaR,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    pub cloud: CloudConfig,
    #[serde(default = "default_kind")]
    pub kind: KindArg,
}

fn default_kind() -> KindArg {
    KindArg::DeltaR
}

/// Overrides accepted by `verify --config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
    #[serde(default)]
    pub schedule: Option<RadiusSchedule>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

pub fn config_err(e: AmvError) -> CliError {
    CliError::Config(e.to_string())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
