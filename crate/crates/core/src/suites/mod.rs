//! Named verification suites. Each case records the expected value, where it
//! comes from, the measurement and the tolerance it is judged against.

mod bose;
mod dirac;
mod euclid;
mod heisenberg;
mod operator;
mod stratified;
mod submanifold;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AmvError, Result};
use crate::estimator::{AmvResult, RadiusSchedule, Verdict};
use crate::space::EffortBudget;

/// Report schema version, bumped on incompatible layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance for deterministic quadrature at fixed radius.
pub const TOL_ANALYTIC: f64 = 1e-8;
/// Tolerance for limits extrapolated from quadrature traces.
pub const TOL_EXTRAPOLATED: f64 = 1e-4;
/// Half-width for fitted divergence exponents.
pub const TOL_RATE: f64 = 0.1;
/// Standard errors allowed for Monte Carlo comparisons.
pub const MC_SIGMAS: f64 = 3.0;

pub const SUITES: [&str; 7] = ["euclid", "heisenberg", "bose", "dirac", "stratified", "submanifold", "operator"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Stated in the source material.
    Paper,
    /// Follows from a definition or symmetry.
    Trivial,
    /// Computed by an independent oracle.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Value(f64),
    Label(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub expected: Outcome,
    pub expected_provenance: Provenance,
    pub measured: Outcome,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Case {
    /// Passes when `|measured − expected| ≤ tolerance`; NaN never passes.
    pub fn value(id: impl Into<String>, expected: f64, provenance: Provenance, measured: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance;
        Self {
            case_id: id.into(),
            expected: Outcome::Value(expected),
            expected_provenance: provenance,
            measured: Outcome::Value(measured),
            tolerance,
            pass,
            note: None,
        }
    }

    /// Passes when the labels agree.
    pub fn label(id: impl Into<String>, expected: &str, provenance: Provenance, measured: &str) -> Self {
        Self {
            case_id: id.into(),
            expected: Outcome::Label(expected.to_string()),
            expected_provenance: provenance,
            measured: Outcome::Label(measured.to_string()),
            tolerance: 0.0,
            pass: expected == measured,
            note: None,
        }
    }

    /// A case whose measurement failed.
    pub fn error(id: impl Into<String>, expected: Outcome, provenance: Provenance, err: &AmvError) -> Self {
        Self {
            case_id: id.into(),
            expected,
            expected_provenance: provenance,
            measured: Outcome::Label("error".into()),
            tolerance: 0.0,
            pass: false,
            note: Some(err.to_string()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Knobs shared by every suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Seed for random test data and Monte Carlo pools.
    pub seed: u64,
    /// Budget for ball integrals; Monte Carlo runs draw `max_evals` samples.
    pub budget: EffortBudget,
    /// Replaces the per-case radius schedules when set.
    pub schedule: Option<RadiusSchedule>,
    /// Record wall-clock duration in the report.
    pub timing: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 1, budget: EffortBudget::default(), schedule: None, timing: false }
    }
}

impl SuiteOptions {
    pub(crate) fn schedule_or(&self, r0: f64, ratio: f64, count: usize) -> RadiusSchedule {
        self.schedule.unwrap_or(RadiusSchedule { r0, ratio, count })
    }

    pub(crate) fn mc_budget(&self) -> EffortBudget {
        EffortBudget { seed: self.seed, ..self.budget }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub budget: EffortBudget,
    pub schedule: Option<RadiusSchedule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub suite_name: String,
    pub passed: bool,
    pub cases: Vec<Case>,
    pub environment: Environment,
    /// Seconds; only present when timing was requested, so reports stay
    /// byte-identical across runs by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &Case> {
        self.cases.iter().filter(|c| !c.pass)
    }

    pub fn case(&self, id: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.case_id == id)
    }
}

/// A group of cases computed together.
pub(crate) type Job<'a> = Box<dyn Fn() -> Vec<Case> + Send + Sync + 'a>;

/// Runs jobs concurrently and concatenates their cases in declaration order.
pub(crate) fn run_jobs(jobs: Vec<Job<'_>>) -> Vec<Case> {
    jobs.par_iter().map(|j| j()).collect::<Vec<_>>().into_iter().flatten().collect()
}

/// Value of a converged result, NaN otherwise.
pub(crate) fn limit_value(res: &AmvResult) -> f64 {
    match (res.verdict, res.value) {
        (Verdict::Converged, Some(v)) => v,
        _ => f64::NAN,
    }
}

/// A limit compared with its expected value; non-convergence fails the case.
pub(crate) fn limit_case(id: &str, expected: f64, provenance: Provenance, tol: f64, res: Result<AmvResult>) -> Case {
    match res {
        Ok(r) => {
            let c = Case::value(id, expected, provenance, limit_value(&r), tol);
            if r.verdict == Verdict::Converged {
                c.with_note(format!("value_error {:.3e}", r.value_error))
            } else {
                c.with_note(format!("verdict {}", r.verdict))
            }
        }
        Err(e) => Case::error(id, Outcome::Value(expected), provenance, &e),
    }
}

/// Verdict and exponent of a trace expected to diverge like `r^rate`.
pub(crate) fn divergence_cases(id: &str, rate: f64, provenance: Provenance, res: Result<AmvResult>) -> Vec<Case> {
    match res {
        Ok(r) => vec![
            Case::label(format!("{id}/verdict"), "divergent", provenance, &r.verdict.to_string()),
            Case::value(format!("{id}/rate"), rate, provenance, r.rate.unwrap_or(f64::NAN), TOL_RATE),
        ],
        Err(e) => vec![Case::error(id, Outcome::Label("divergent".into()), provenance, &e)],
    }
}

/// Runs a suite by name.
pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport> {
    opts.budget.validate()?;
    if let Some(s) = &opts.schedule {
        s.validate()?;
    }
    let start = Instant::now();
    let cases = match name {
        "euclid" => euclid::cases(opts),
        "heisenberg" => heisenberg::cases(opts)?,
        "bose" => bose::cases(opts)?,
        "dirac" => dirac::cases(opts)?,
        "stratified" => stratified::cases(opts)?,
        "submanifold" => submanifold::cases(opts)?,
        "operator" => operator::cases(opts)?,
        other => return Err(AmvError::Input(format!("unknown suite {other:?}; known suites: {}", SUITES.join(", ")))),
    };
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        suite_name: name.to_string(),
        passed: cases.iter().all(|c| c.pass),
        cases,
        environment: Environment { seed: opts.seed, budget: opts.budget, schedule: opts.schedule },
        duration: opts.timing.then(|| start.elapsed().as_secs_f64()),
    })
}
