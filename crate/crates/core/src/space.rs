//! Metric measure spaces: distance, ball mass and ball integration with
//! explicit error accounting, and discretization into atom clouds.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AmvError, Result};
use crate::field::ScalarField;
use crate::spaces::SpaceDescriptor;

/// A point in the single ambient chart of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
    #[serde(default)]
    pub chart_id: u32,
}

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Self { coords: coords.into(), chart_id: 0 }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    Quadrature,
    MonteCarlo,
}

impl Method {
    /// The less exact of two tags.
    pub fn weakest(self, other: Method) -> Method {
        Ord::max(self, other)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte-carlo",
        })
    }
}

/// Mass and integral of a ball from one node set.
///
/// Deterministic backends report error bounds; Monte Carlo backends report
/// `k` standard errors with `k = mc_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallEstimate {
    pub mass: f64,
    pub integral: f64,
    /// Error of `integral` (of `mass` for pure mass queries).
    pub abs_error: f64,
    pub mass_error: f64,
    /// Error of `integral / mass`.
    pub average_error: f64,
    pub method: Method,
    pub samples_used: usize,
    /// Standard-error multiplier behind Monte Carlo errors; 0 otherwise.
    pub mc_k: f64,
}

impl BallEstimate {
    pub fn average(&self) -> f64 {
        self.integral / self.mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Closed form or deterministic quadrature where available.
    #[default]
    Auto,
    /// Seeded rejection sampling on every component.
    MonteCarlo,
}

/// Work limits for one ball query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortBudget {
    pub max_evals: usize,
    /// Target absolute error of the ball integral.
    pub target_error: f64,
    #[serde(default = "default_k")]
    pub mc_k: f64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> f64 {
    3.0
}

impl Default for EffortBudget {
    fn default() -> Self {
        Self { max_evals: 2_000_000, target_error: 1e-13, mc_k: 3.0, backend: Backend::Auto, seed: 0 }
    }
}

impl EffortBudget {
    pub fn new(max_evals: usize, target_error: f64) -> Self {
        Self { max_evals, target_error, ..Self::default() }
    }

    pub fn monte_carlo(max_evals: usize, seed: u64) -> Self {
        Self { max_evals, target_error: 0.0, backend: Backend::MonteCarlo, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 {
            return Err(AmvError::Input("budget.max_evals must be positive".into()));
        }
        if !(self.target_error >= 0.0) {
            return Err(AmvError::Input("budget.target_error must be nonnegative".into()));
        }
        if !(self.mc_k > 0.0) {
            return Err(AmvError::Input("budget.mc_k must be positive".into()));
        }
        Ok(())
    }
}

/// Integrand passed to ball backends.
pub type Integrand<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Region to discretize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub bounds: Bounds,
    /// Fraction of a cell by which grid nodes are randomly displaced (0 = midpoint grid).
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bounds {
    /// The whole support; only valid for compactly supported spaces.
    Whole,
    Box {
        min: Vec<f64>,
        max: Vec<f64>,
    },
}

impl RegionSpec {
    pub fn whole() -> Self {
        Self { bounds: Bounds::Whole, jitter: 0.0 }
    }

    pub fn boxed(min: impl Into<Vec<f64>>, max: impl Into<Vec<f64>>) -> Self {
        Self { bounds: Bounds::Box { min: min.into(), max: max.into() }, jitter: 0.0 }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match &self.bounds {
            Bounds::Whole => true,
            Bounds::Box { min, max } => p.iter().zip(min.iter().zip(max)).all(|(x, (a, b))| a <= x && x <= b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Finite weighted point set approximating a space's measure on a region.
#[derive(Clone)]
pub struct AtomCloud {
    pub atoms: Vec<Atom>,
    pub region: RegionSpec,
    pub space: SpaceHandle,
    pub seed: Option<u64>,
}

impl fmt::Debug for AtomCloud {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AtomCloud")
            .field("atoms", &self.atoms.len())
            .field("region", &self.region)
            .field("space", &self.space.descriptor())
            .field("seed", &self.seed)
            .finish()
    }
}

impl AtomCloud {
    /// Wraps explicit atoms; weights must be positive and coordinates finite.
    pub fn from_atoms(space: SpaceHandle, atoms: Vec<Atom>, region: RegionSpec, seed: Option<u64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(AmvError::Domain("atom cloud is empty".into()));
        }
        let n = space.ambient_dim();
        for (i, a) in atoms.iter().enumerate() {
            check_point(n, &a.point)?;
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(AmvError::Input(format!("atom {i} has non-positive weight {}", a.weight)));
            }
        }
        Ok(Self { atoms, region, space, seed })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn source(&self) -> SpaceDescriptor {
        self.space.descriptor()
    }

    /// Samples a field at every atom.
    pub fn sample(&self, f: &dyn ScalarField) -> Vec<f64> {
        self.atoms.iter().map(|a| f.value(&a.point)).collect()
    }
}

/// A metric measure space `(X, d, μ)` realized on a single chart.
///
/// Implementations are immutable and shareable; the free functions of this
/// module validate arguments before dispatching here.
pub trait MetricMeasureSpace: Send + Sync {
    fn ambient_dim(&self) -> usize;

    fn descriptor(&self) -> SpaceDescriptor;

    fn distance_unchecked(&self, p: &[f64], q: &[f64]) -> Result<f64>;

    /// Whether `p` lies in the support of μ.
    fn in_support(&self, p: &[f64]) -> bool;

    fn mass_unchecked(&self, x: &[f64], r: f64, budget: &EffortBudget) -> Result<BallEstimate>;

    fn integrate_unchecked(&self, x: &[f64], r: f64, f: Integrand<'_>, budget: &EffortBudget) -> Result<BallEstimate>;

    fn cloud_unchecked(&self, region: &RegionSpec, resolution: usize, seed: u64) -> Result<Vec<Atom>>;

    /// Half-widths of a coordinate box containing every ball of radius `r`
    /// around its center, when the metric admits one independent of the center.
    fn coordinate_reach(&self, _r: f64) -> Option<Vec<f64>> {
        None
    }

    /// μ-mass of a region when it can be computed without sampling.
    fn region_mass(&self, _region: &RegionSpec) -> Option<f64> {
        None
    }

    /// Downcasting hook for space-specific helpers.
    fn as_any(&self) -> &dyn std::any::Any;
}

pub type SpaceHandle = Arc<dyn MetricMeasureSpace>;

impl fmt::Debug for dyn MetricMeasureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Space({:?})", self.descriptor())
    }
}

pub(crate) fn check_point(n: usize, p: &[f64]) -> Result<()> {
    if p.len() != n {
        return Err(AmvError::DimensionMismatch { expected: n, got: p.len() });
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite()) {
        return Err(AmvError::Input(format!("non-finite coordinate {v} in {p:?}")));
    }
    Ok(())
}

fn check_ball(space: &dyn MetricMeasureSpace, x: &[f64], r: f64) -> Result<()> {
    check_point(space.ambient_dim(), x)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(AmvError::Input(format!("radius must be positive and finite, got {r}")));
    }
    if !space.in_support(x) {
        return Err(AmvError::Domain(format!("{x:?} is outside the support of the measure")));
    }
    Ok(())
}

pub fn distance(space: &dyn MetricMeasureSpace, p: &[f64], q: &[f64]) -> Result<f64> {
    let n = space.ambient_dim();
    check_point(n, p)?;
    check_point(n, q)?;
    space.distance_unchecked(p, q)
}

pub fn ball_mass(space: &dyn MetricMeasureSpace, x: &[f64], r: f64, budget: &EffortBudget) -> Result<BallEstimate> {
    check_ball(space, x, r)?;
    budget.validate()?;
    space.mass_unchecked(x, r, budget)
}

pub fn ball_integrate(
    space: &dyn MetricMeasureSpace,
    x: &[f64],
    r: f64,
    f: &dyn ScalarField,
    budget: &EffortBudget,
) -> Result<BallEstimate> {
    let g = |p: &[f64]| f.value(p);
    ball_integrate_fn(space, x, r, &g, budget)
}

/// `ball_integrate` for a plain closure.
pub fn ball_integrate_fn(
    space: &dyn MetricMeasureSpace,
    x: &[f64],
    r: f64,
    f: Integrand<'_>,
    budget: &EffortBudget,
) -> Result<BallEstimate> {
    check_ball(space, x, r)?;
    budget.validate()?;
    space.integrate_unchecked(x, r, f, budget)
}

pub fn make_atom_cloud(space: &SpaceHandle, region: &RegionSpec, resolution: usize, seed: u64) -> Result<AtomCloud> {
    if resolution == 0 {
        return Err(AmvError::Input("resolution must be positive".into()));
    }
    if !(0.0..=1.0).contains(&region.jitter) {
        return Err(AmvError::Input(format!("jitter must lie in [0, 1], got {}", region.jitter)));
    }
    if let Bounds::Box { min, max } = &region.bounds {
        let n = space.ambient_dim();
        check_point(n, min)?;
        check_point(n, max)?;
        if min.iter().zip(max).any(|(a, b)| !(a < b)) {
            return Err(AmvError::Domain(format!("empty region box {min:?}..{max:?}")));
        }
    }
    let atoms = space.cloud_unchecked(region, resolution, seed)?;
    if atoms.is_empty() {
        return Err(AmvError::Domain("region contains no part of the support".into()));
    }
    let seed = (region.jitter > 0.0).then_some(seed);
    AtomCloud::from_atoms(space.clone(), atoms, region.clone(), seed)
}

/// Rejects a non-finite integrand value at `p`.
pub(crate) fn finite_at(v: f64, p: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AmvError::Evaluation { node: p.to_vec(), detail: format!("integrand value {v}") })
    }
}
