//! Stratified measures: the segment-plus-half-square complex, rays meeting
//! at a vertex and curves crossing at a point.

use std::f64::consts::PI;

use super::{
    divergence_cases, limit_case, limit_value, run_jobs, Case, Job, Provenance, SuiteOptions, TOL_EXTRAPOLATED,
};
use crate::error::Result;
use crate::estimator::{amv_limit, AmvResult, RadiusSchedule};
use crate::field::{second_directional_derivative, Expr, ScalarField};
use crate::space::EffortBudget;
use crate::spaces::{
    equiangular, kirchhoff_sum, ray_strata, segment_square_strata, stratified_complex, vertex_directions, Stratum,
    Support,
};

/// Kirchhoff-converged limits are checked more tightly than generic extrapolations.
const TOL_KIRCHHOFF: f64 = 1e-6;

const O: [f64; 2] = [0.0, 0.0];

fn limit_on(
    strata: Vec<Stratum>,
    u: &dyn ScalarField,
    sch: &RadiusSchedule,
    budget: &EffortBudget,
) -> Result<AmvResult> {
    let s = stratified_complex(strata)?;
    amv_limit(&*s, u, &O, sch, budget)
}

fn complex(seg: Option<&str>, sq: Option<&str>) -> Vec<Stratum> {
    segment_square_strata(seg, sq).expect("built-in densities")
}

pub(super) fn cases(opts: &SuiteOptions) -> Result<Vec<Case>> {
    let sch = opts.schedule_or(0.2, 0.7, 14);
    let sch = &sch;
    let budget = &opts.budget;
    let mut jobs: Vec<Job> = Vec::new();

    // Segment with dx plus square: the one-dimensional piece decides.
    jobs.push(Box::new(move || {
        let u = Expr::parse("x^2 + y + x*y").expect("built-in expression");
        let full = limit_on(complex(None, None), &u, sch, budget);
        let seg = limit_on(complex(None, None)[..1].to_vec(), &u, sch, budget);
        let seg_v = seg.as_ref().map(limit_value).unwrap_or(f64::NAN);
        let full_v = full.as_ref().map(limit_value).unwrap_or(f64::NAN);
        vec![
            limit_case("mu1/segment-alone", 2.0 / 6.0, Provenance::Derived, TOL_EXTRAPOLATED, seg),
            Case::value("mu1/limit-vs-segment", seg_v, Provenance::Paper, full_v, TOL_EXTRAPOLATED),
            limit_case("mu1/limit", 2.0 / 6.0, Provenance::Derived, TOL_EXTRAPOLATED, full),
        ]
    }));
    jobs.push(Box::new(move || {
        let u = Expr::parse("x").expect("built-in expression");
        divergence_cases("mu1/linear", -1.0, Provenance::Paper, limit_on(complex(None, None), &u, sch, budget))
    }));
    // Density x on the segment: both pieces scale like r², weights 1/(1+π) and π/(1+π).
    jobs.push(Box::new(move || {
        let u = Expr::parse("3*x^2 + y^2 + x*y + y").expect("built-in expression");
        let all = complex(Some("x"), None);
        let full = limit_on(all.clone(), &u, sch, budget);
        let seg = limit_on(all[..1].to_vec(), &u, sch, budget);
        let sq = limit_on(all[1..].to_vec(), &u, sch, budget);
        let (fv, lv, sv) = (
            full.as_ref().map(limit_value).unwrap_or(f64::NAN),
            seg.as_ref().map(limit_value).unwrap_or(f64::NAN),
            sq.as_ref().map(limit_value).unwrap_or(f64::NAN),
        );
        let combo = (lv + PI * sv) / (1.0 + PI);
        vec![
            limit_case("mu2/segment-alone", 6.0 / 4.0, Provenance::Derived, TOL_EXTRAPOLATED, seg),
            limit_case("mu2/square-alone", 1.0, Provenance::Derived, TOL_EXTRAPOLATED, sq),
            Case::value("mu2/convex-combination", combo, Provenance::Paper, fv, TOL_EXTRAPOLATED),
            limit_case("mu2/limit", (1.5 + PI) / (1.0 + PI), Provenance::Derived, TOL_EXTRAPOLATED, full),
        ]
    }));
    jobs.push(Box::new(move || {
        let u = Expr::parse("x + y^2").expect("built-in expression");
        divergence_cases("mu2/linear", -1.0, Provenance::Paper, limit_on(complex(Some("x"), None), &u, sch, budget))
    }));
    // Density x² on the segment: the square decides.
    jobs.push(Box::new(move || {
        let u = Expr::parse("3*x^2 + y^2 + x*y + y").expect("built-in expression");
        let all = complex(Some("x^2"), None);
        let full = limit_on(all.clone(), &u, sch, budget);
        let sq = limit_on(all[1..].to_vec(), &u, sch, budget);
        let sv = sq.as_ref().map(limit_value).unwrap_or(f64::NAN);
        let fv = full.as_ref().map(limit_value).unwrap_or(f64::NAN);
        vec![
            Case::value("mu3/limit-vs-square", sv, Provenance::Paper, fv, TOL_EXTRAPOLATED),
            limit_case("mu3/limit", 1.0, Provenance::Derived, TOL_EXTRAPOLATED, full),
        ]
    }));
    jobs.push(Box::new(move || {
        let u = Expr::parse("x").expect("built-in expression");
        divergence_cases("mu3/linear", -1.0, Provenance::Paper, limit_on(complex(Some("x^2"), None), &u, sch, budget))
    }));

    // Rays from the origin: converged iff Σ ∂_τ u(o) = 0, with limit (1/l) Σ τᵀHτ / 6.
    let rays: [(&str, Vec<f64>, &str); 5] = [
        ("rays3/x", equiangular(3), "x"),
        ("rays3/x2", equiangular(3), "x^2"),
        ("rays4/mixed", equiangular(4), "x + x^2 + 3*y^2 - x*y"),
        ("rays3-skew/x+y", vec![0.0, PI / 2.0, 1.25 * PI], "x + y"),
        ("rays2-bent/y", vec![0.3, 2.0], "y + x^2"),
    ];
    for (id, angles, src) in rays {
        jobs.push(Box::new(move || {
            let u = Expr::parse(src).expect("built-in expression");
            let strata = ray_strata(&angles);
            let ksum = kirchhoff_sum(&strata, &u, &O).expect("expression gradient");
            let res = limit_on(strata.clone(), &u, sch, budget);
            if ksum.abs() <= 1e-12 {
                let dirs = vertex_directions(&strata, &O);
                let expected = dirs
                    .iter()
                    .map(|d| second_directional_derivative(&u, &O, d).expect("expression hessian"))
                    .sum::<f64>()
                    / (6.0 * dirs.len() as f64);
                let verdict = res.as_ref().map(|r| r.verdict.to_string()).unwrap_or_else(|e| e.to_string());
                vec![
                    Case::label(format!("{id}/verdict"), "converged", Provenance::Derived, &verdict)
                        .with_note(format!("Kirchhoff sum {ksum:.3e}")),
                    limit_case(&format!("{id}/limit"), expected, Provenance::Derived, TOL_KIRCHHOFF, res),
                ]
            } else {
                divergence_cases(id, -1.0, Provenance::Paper, res)
                    .into_iter()
                    .map(|c| c.with_note(format!("Kirchhoff sum {ksum:.6}")))
                    .collect()
            }
        }));
    }

    // A straight line and a unit circle crossing at o: equal masses, so the
    // limit is the mean of the per-curve limits (u∘γ)''(0)/6.
    jobs.push(Box::new(move || {
        let u = Expr::parse("x^2 + y + 2*y^2").expect("built-in expression");
        let line = Stratum::segment([0.0, -1.0], [0.0, 1.0]);
        let arc = Stratum::new(Support::Arc { center: [0.0, 1.0], radius: 1.0, start: -PI / 2.0 - 1.0, sweep: 2.0 });
        let both = limit_on(vec![line.clone(), arc.clone()], &u, sch, budget);
        let l1 = limit_on(vec![line], &u, sch, budget);
        let l2 = limit_on(vec![arc], &u, sch, budget);
        let (bv, v1, v2) = (
            both.as_ref().map(limit_value).unwrap_or(f64::NAN),
            l1.as_ref().map(limit_value).unwrap_or(f64::NAN),
            l2.as_ref().map(limit_value).unwrap_or(f64::NAN),
        );
        vec![
            limit_case("crossing/line", 4.0 / 6.0, Provenance::Derived, TOL_EXTRAPOLATED, l1),
            limit_case("crossing/arc", 3.0 / 6.0, Provenance::Derived, TOL_EXTRAPOLATED, l2),
            Case::value("crossing/convex-combination", 0.5 * (v1 + v2), Provenance::Paper, bv, TOL_EXTRAPOLATED),
            limit_case("crossing/limit", 7.0 / 12.0, Provenance::Derived, TOL_EXTRAPOLATED, both),
        ]
    }));
    Ok(run_jobs(jobs))
}
