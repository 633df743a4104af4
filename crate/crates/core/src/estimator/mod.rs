//! `Δ_{μ,r}u(x)` at fixed radius, radius schedules, and the `r → 0` study.

mod fit;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{linear_regression, weighted_poly_fit, PolyFit};

use crate::error::{AmvError, Result};
use crate::field::ScalarField;
use crate::space::{ball_integrate_fn, check_point, EffortBudget, Method, MetricMeasureSpace};

/// One radius of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub r: f64,
    pub value: f64,
    pub abs_error: f64,
    pub mass: f64,
    pub method: Method,
    pub samples: usize,
}

/// `r_k = r0 · ratio^k`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSchedule {
    pub r0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl RadiusSchedule {
    pub fn new(r0: f64, ratio: f64, count: usize) -> Result<Self> {
        let s = Self { r0, ratio, count };
        s.validate()?;
        Ok(s)
    }

    /// `r0 = feature/2`, ratio 0.7, 12 radii.
    pub fn for_feature(feature_distance: f64) -> Result<Self> {
        Self::new(0.5 * feature_distance, 0.7, 12)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(AmvError::Input(format!("schedule.r0 must be positive, got {}", self.r0)));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(AmvError::Input(format!("schedule.ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.count < 4 {
            return Err(AmvError::Input(format!("schedule.count must be at least 4, got {}", self.count)));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.r0 * self.ratio.powi(k as i32)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Divergent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Thresholds of [`classify_convergence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// A divergent trace needs a log-log slope `α ≤ alpha_max`.
    pub alpha_max: f64,
    /// … with `R² ≥ r2_min`.
    pub r2_min: f64,
    /// … and every tail value above `significance` times its error.
    pub significance: f64,
    /// A fit is accepted when every residual is at most this many times
    /// the error of its point.
    pub residual_factor: f64,
    /// Highest polynomial degree tried in the extrapolation.
    pub max_degree: usize,
    /// Points kept for tail-window extrema (`amv_upper` / `amv_lower`).
    pub tail_window: usize,
    /// Optional cap on the extrapolation error of an accepted fit.
    pub max_value_error: Option<f64>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            alpha_max: -0.5,
            r2_min: 0.99,
            significance: 3.0,
            residual_factor: 5.0,
            max_degree: 4,
            tail_window: 4,
            max_value_error: None,
        }
    }
}

/// Outcome of [`classify_convergence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub value_error: f64,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_residual: f64,
    pub fit_degree: Option<usize>,
    pub points_used: usize,
}

/// The `r → 0` study of one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmvResult {
    pub trace: Vec<TracePoint>,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub value_error: f64,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_residual: f64,
    pub fit_degree: Option<usize>,
    pub points_used: usize,
}

impl AmvResult {
    pub(crate) fn new(trace: Vec<TracePoint>, c: Classification) -> Self {
        Self {
            trace,
            verdict: c.verdict,
            value: c.value,
            value_error: c.value_error,
            rate: c.rate,
            r_squared: c.r_squared,
            fit_residual: c.fit_residual,
            fit_degree: c.fit_degree,
            points_used: c.points_used,
        }
    }
}

fn ball_deviation(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    r: f64,
    budget: &EffortBudget,
) -> Result<(f64, f64, crate::space::BallEstimate)> {
    check_point(space.ambient_dim(), x)?;
    let ux = u.value(x);
    if !ux.is_finite() {
        return Err(AmvError::Evaluation { node: x.to_vec(), detail: format!("u(x) = {ux}") });
    }
    // Integrating u − u(x) keeps constants exact and avoids cancellation.
    let g = |p: &[f64]| u.value(p) - ux;
    let est = ball_integrate_fn(space, x, r, &g, budget)?;
    if !(est.mass > 0.0) {
        return Err(AmvError::Domain(format!("ball B_{r}({x:?}) has zero mass")));
    }
    let dev = est.integral / est.mass;
    // Node coordinates carry relative rounding, which moves u by about
    // |∇u| ε (|x| + r) even where u(x) vanishes.
    let coord = x.iter().fold(0.0f64, |a, v| a.max(v.abs())) + r;
    let slope = u.gradient(x).map_or(0.0, |g| g.iter().map(|v| v.abs()).sum::<f64>());
    let roundoff = 32.0 * f64::EPSILON * (u.magnitude(x) + dev.abs() + slope * coord);
    Ok((dev, est.average_error + roundoff, est))
}

/// `Δ_{μ,r}u(x) = r⁻²(⨍_{B_r(x)} u dμ − u(x))` with its propagated error.
pub fn amv_at_radius(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    r: f64,
    budget: &EffortBudget,
) -> Result<TracePoint> {
    scaled_deviation(space, u, x, r, 2.0, budget)
}

/// `r^(−power) ⨍_{B_r(x)} (u − u(x)) dμ`.
pub fn scaled_deviation(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    r: f64,
    power: f64,
    budget: &EffortBudget,
) -> Result<TracePoint> {
    let (dev, err, est) = ball_deviation(space, u, x, r, budget)?;
    let s = r.powf(-power);
    Ok(TracePoint {
        r,
        value: dev * s,
        abs_error: err * s,
        mass: est.mass,
        method: est.method,
        samples: est.samples_used,
    })
}

/// Evaluates `eval` on every radius (in parallel) and assembles the trace in
/// schedule order; the first failure is returned with the completed prefix.
pub fn run_schedule<F>(schedule: &RadiusSchedule, eval: F) -> Result<Vec<TracePoint>>
where
    F: Fn(f64) -> Result<TracePoint> + Sync,
{
    schedule.validate()?;
    let results: Vec<Result<TracePoint>> = schedule.radii().into_par_iter().map(&eval).collect();
    let mut trace = Vec::with_capacity(results.len());
    for (res, r) in results.into_iter().zip(schedule.radii()) {
        match res {
            Ok(p) => trace.push(p),
            Err(e) => return Err(AmvError::Trace { r, partial: trace, source: Box::new(e) }),
        }
    }
    Ok(trace)
}

pub fn amv_limit(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
) -> Result<AmvResult> {
    amv_limit_with(space, u, x, schedule, budget, &ClassifyConfig::default())
}

pub fn amv_limit_with(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
    config: &ClassifyConfig,
) -> Result<AmvResult> {
    let trace = run_schedule(schedule, |r| amv_at_radius(space, u, x, r, budget))?;
    let c = classify_with(&trace, config)?;
    Ok(AmvResult::new(trace, c))
}

/// Limit of `r^(−power) ⨍_{B_r(x)} (u − u(x)) dμ`, fitted like [`amv_limit`].
/// With `power = 1` on a line this is the one-sided slope average `b` used
/// by the Dirac trichotomy.
pub fn deviation_limit(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    power: f64,
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
) -> Result<AmvResult> {
    let trace = run_schedule(schedule, |r| scaled_deviation(space, u, x, r, power, budget))?;
    let c = classify_convergence(&trace)?;
    Ok(AmvResult::new(trace, c))
}

/// Estimate of an upper or lower AMV Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub value: f64,
    pub error: f64,
    /// True when the trace converged and `value` is its limit.
    pub from_limit: bool,
    pub trace: Vec<TracePoint>,
}

/// Upper AMV Laplacian estimate.
///
/// When the trace converges this is the extrapolated limit. Otherwise it is
/// the largest value over the last `tail_window` radii, which equals the
/// limsup only if `Δ_{μ,r}u(x)` is eventually monotone in `r`; oscillating
/// traces get no guarantee.
pub fn amv_upper(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
) -> Result<BoundEstimate> {
    bound(space, u, x, schedule, budget, true)
}

/// Lower AMV Laplacian estimate; the mirror of [`amv_upper`] with minima.
pub fn amv_lower(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
) -> Result<BoundEstimate> {
    bound(space, u, x, schedule, budget, false)
}

fn bound(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    x: &[f64],
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
    upper: bool,
) -> Result<BoundEstimate> {
    let res = amv_limit(space, u, x, schedule, budget)?;
    Ok(bound_from_result(&res, ClassifyConfig::default().tail_window, upper))
}

/// Tail-window extremum of a finished study (or its limit when converged).
pub fn bound_from_result(res: &AmvResult, window: usize, upper: bool) -> BoundEstimate {
    if let (Verdict::Converged, Some(v)) = (res.verdict, res.value) {
        return BoundEstimate { value: v, error: res.value_error, from_limit: true, trace: res.trace.clone() };
    }
    let tail = &res.trace[res.trace.len().saturating_sub(window.max(1))..];
    let pick =
        tail.iter().copied().reduce(|a, b| if (b.value > a.value) == upper { b } else { a }).expect("nonempty trace");
    BoundEstimate { value: pick.value, error: pick.abs_error, from_limit: false, trace: res.trace.clone() }
}

pub fn classify_convergence(trace: &[TracePoint]) -> Result<Classification> {
    classify_with(trace, &ClassifyConfig::default())
}

/// Divergence test first (power law on the small-radius half), then
/// weighted polynomial extrapolation in `r` of increasing degree over
/// windows that drop the largest radii.
pub fn classify_with(trace: &[TracePoint], cfg: &ClassifyConfig) -> Result<Classification> {
    if trace.len() < 4 {
        return Err(AmvError::Input(format!("trace has {} points; at least 4 are needed", trace.len())));
    }
    let mut pts: Vec<TracePoint> = trace.to_vec();
    pts.sort_by(|a, b| b.r.total_cmp(&a.r));
    if let Some(c) = divergence(&pts, cfg) {
        return Ok(c);
    }
    let vmax = pts.iter().fold(0.0f64, |a, p| a.max(p.value.abs()));
    let sigma: Vec<f64> = pts
        .iter()
        .map(|p| p.abs_error.max(16.0 * f64::EPSILON * p.value.abs()).max(1e-3 * f64::EPSILON * vmax).max(1e-300))
        .collect();
    let r: Vec<f64> = pts.iter().map(|p| p.r).collect();
    let v: Vec<f64> = pts.iter().map(|p| p.value).collect();
    let n = pts.len();
    let mut best_residual = f64::INFINITY;
    for d in 0..=cfg.max_degree {
        for start in 0..n {
            if n - start < d + 3 {
                break;
            }
            let (rw, vw, sw) = (&r[start..], &v[start..], &sigma[start..]);
            let Some(f) = weighted_poly_fit(rw, vw, sw, d) else { continue };
            best_residual = best_residual.min(f.max_residual);
            if f.max_scaled_residual > cfg.residual_factor {
                continue;
            }
            let a = f.coeffs[0];
            let propagated: f64 = f.intercept_gain.iter().zip(sw).map(|(g, s)| g.abs() * s).sum();
            // Model error: intercept shifts when the window loses one end and
            // when the degree goes up by one.
            let alt = if n - start > d + 2 {
                weighted_poly_fit(&r[start + 1..], &v[start + 1..], &sigma[start + 1..], d)
            } else {
                weighted_poly_fit(&r[start..n - 1], &v[start..n - 1], &sigma[start..n - 1], d)
            };
            let higher = weighted_poly_fit(rw, vw, sw, d + 1);
            let shift = [alt, higher].iter().flatten().map(|g| (g.coeffs[0] - a).abs()).fold(0.0, f64::max);
            let value_error = propagated + shift;
            if cfg.max_value_error.is_some_and(|m| value_error > m) {
                continue;
            }
            return Ok(Classification {
                verdict: Verdict::Converged,
                value: Some(a),
                value_error,
                rate: None,
                r_squared: None,
                fit_residual: f.max_residual,
                fit_degree: Some(d),
                points_used: n - start,
            });
        }
    }
    Ok(Classification {
        verdict: Verdict::Inconclusive,
        value: None,
        value_error: f64::INFINITY,
        rate: None,
        r_squared: None,
        fit_residual: best_residual,
        fit_degree: None,
        points_used: n,
    })
}

fn divergence(pts: &[TracePoint], cfg: &ClassifyConfig) -> Option<Classification> {
    let n = pts.len();
    let tail = &pts[n - (n / 2).max(4).min(n)..];
    let sign = tail[0].value.signum();
    let significant = tail
        .iter()
        .all(|p| p.value != 0.0 && p.value.signum() == sign && p.value.abs() > cfg.significance * p.abs_error);
    if !significant {
        return None;
    }
    let x: Vec<f64> = tail.iter().map(|p| p.r.ln()).collect();
    let y: Vec<f64> = tail.iter().map(|p| p.value.abs().ln()).collect();
    let (_, slope, r2) = linear_regression(&x, &y);
    (slope <= cfg.alpha_max && r2 >= cfg.r2_min).then_some(Classification {
        verdict: Verdict::Divergent,
        value: None,
        value_error: f64::INFINITY,
        rate: Some(slope),
        r_squared: Some(r2),
        fit_residual: 0.0,
        fit_degree: None,
        points_used: tail.len(),
    })
}
