//! Weak pairing `∫ φ Δ_r u dμ` as `r → 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AmvError, Result};
use crate::estimator::{amv_at_radius, classify_convergence, run_schedule, AmvResult, RadiusSchedule, TracePoint};
use crate::field::ScalarField;
use crate::quadrature::gauss_interval;
use crate::space::{EffortBudget, Method, MetricMeasureSpace};
use crate::spaces::SpaceDescriptor;

/// Box containing the support of the test function, plus coordinates where
/// `u` is not smooth (one-dimensional supports only). Outer panels are split
/// at each singular point `s` and at `s ± r`, where `Δ_r u` has kinks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub support_min: Vec<f64>,
    pub support_max: Vec<f64>,
    #[serde(default)]
    pub singular_points: Vec<f64>,
    /// Gauss-Legendre nodes per panel and axis.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    16
}

impl PairingSpec {
    pub fn interval(a: f64, b: f64, singular_points: Vec<f64>) -> Self {
        Self { support_min: vec![a], support_max: vec![b], singular_points, nodes: default_nodes() }
    }

    pub fn boxed(min: Vec<f64>, max: Vec<f64>) -> Self {
        Self { support_min: min, support_max: max, singular_points: Vec::new(), nodes: default_nodes() }
    }
}

/// Tensor Gauss-Legendre nodes `(point, weight)` on the support at radius `r`.
fn outer_nodes(spec: &PairingSpec, r: f64, nodes: usize) -> Vec<(Vec<f64>, f64)> {
    let dim = spec.support_min.len();
    let axes: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|k| {
            let (a, b) = (spec.support_min[k], spec.support_max[k]);
            let mut edges = vec![a, b];
            if dim == 1 {
                for &s in &spec.singular_points {
                    edges.extend([s - r, s, s + r]);
                }
            }
            edges.retain(|e| *e >= a && *e <= b);
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            let mut out = Vec::new();
            for w in edges.windows(2) {
                gauss_interval(w[0], w[1], nodes, |x, wt| out.push((x, wt)));
            }
            out
        })
        .collect();
    let mut pts: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for axis in &axes {
        pts = pts
            .iter()
            .flat_map(|(p, w)| {
                axis.iter().map(move |&(x, wx)| {
                    let mut q = p.clone();
                    q.push(x);
                    (q, w * wx)
                })
            })
            .collect();
    }
    pts
}

fn pairing_at(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    phi: &dyn ScalarField,
    spec: &PairingSpec,
    r: f64,
    budget: &EffortBudget,
) -> Result<TracePoint> {
    let eval = |nodes: usize| -> Result<(f64, f64, Method, usize)> {
        let pts = outer_nodes(spec, r, nodes);
        let parts: Vec<Result<(f64, f64, Method, usize)>> = pts
            .par_iter()
            .map(|(x, w)| {
                let f = phi.value(x);
                if f == 0.0 {
                    return Ok((0.0, 0.0, Method::Analytic, 0));
                }
                let p = amv_at_radius(space, u, x, r, budget)?;
                Ok((w * f * p.value, (w * f).abs() * p.abs_error, p.method, p.samples))
            })
            .collect();
        let mut acc = (0.0, 0.0, Method::Analytic, 0);
        for p in parts {
            let (v, e, m, s) = p?;
            acc.0 += v;
            acc.1 += e;
            acc.2 = acc.2.weakest(m);
            acc.3 += s;
        }
        Ok(acc)
    };
    let (fine, fine_err, method, samples) = eval(spec.nodes)?;
    let (coarse, _, _, _) = eval((spec.nodes / 2).max(2))?;
    let vol: f64 = spec.support_min.iter().zip(&spec.support_max).map(|(a, b)| b - a).product();
    Ok(TracePoint {
        r,
        value: fine,
        abs_error: fine_err + (fine - coarse).abs() + 64.0 * f64::EPSILON * fine.abs(),
        mass: vol,
        method,
        samples,
    })
}

/// `P(r) = ∫ φ Δ_r u dx` over the support box, fitted as `r → 0`. The outer
/// integral is taken against Lebesgue measure, so the space must be
/// Euclidean.
pub fn weak_pairing(
    space: &dyn MetricMeasureSpace,
    u: &dyn ScalarField,
    phi: &dyn ScalarField,
    spec: &PairingSpec,
    schedule: &RadiusSchedule,
    budget: &EffortBudget,
) -> Result<AmvResult> {
    if !matches!(space.descriptor(), SpaceDescriptor::Euclidean { .. }) {
        return Err(AmvError::Unsupported("weak pairing needs a Euclidean space".into()));
    }
    let dim = space.ambient_dim();
    if spec.support_min.len() != dim || spec.support_max.len() != dim {
        return Err(AmvError::DimensionMismatch { expected: dim, got: spec.support_min.len() });
    }
    if spec.support_min.iter().zip(&spec.support_max).any(|(a, b)| !(a < b)) {
        return Err(AmvError::Domain("empty support box".into()));
    }
    if !(2..=crate::quadrature::MAX_GL).contains(&spec.nodes) {
        return Err(AmvError::Input(format!(
            "nodes must lie in 2..={}, got {}",
            crate::quadrature::MAX_GL,
            spec.nodes
        )));
    }
    let trace = run_schedule(schedule, |r| pairing_at(space, u, phi, spec, r, budget))?;
    let c = classify_convergence(&trace)?;
    Ok(AmvResult::new(trace, c))
}
