//! Curves in the plane with the extrinsic distance and arclength measure.

use super::{limit_case, run_jobs, Case, Job, Provenance, SuiteOptions, TOL_EXTRAPOLATED};
use crate::error::Result;
use crate::estimator::{amv_limit, classify_convergence, run_schedule, AmvResult, TracePoint, Verdict};
use crate::field::Expr;
use crate::space::ball_mass;
use crate::spaces::{embedded_submanifold, SubmanifoldSpec};

/// Tolerance on the fitted mass coefficient, whose trace loses digits to
/// the division by `r³`.
const TOL_MASS_COEF: f64 = 1e-3;

pub(super) fn cases(opts: &SuiteOptions) -> Result<Vec<Case>> {
    let sch = opts.schedule_or(0.3, 0.7, 12);
    let sch = &sch;
    let budget = &opts.budget;
    let mut jobs: Vec<Job> = Vec::new();

    // Unit circle: the limit is (u∘γ)''/6 for the arclength parametrization γ.
    let circle: [(&str, &str, [f64; 2], f64); 6] = [
        ("circle/x@(1,0)", "x", [1.0, 0.0], -1.0 / 6.0),
        ("circle/y@(1,0)", "y", [1.0, 0.0], 0.0),
        ("circle/x@(0,1)", "x", [0.0, 1.0], 0.0),
        ("circle/y@(0,1)", "y", [0.0, 1.0], -1.0 / 6.0),
        ("circle/x2@(1,0)", "x^2", [1.0, 0.0], -2.0 / 6.0),
        ("circle/xy@(1,0)", "x*y", [1.0, 0.0], 0.0),
    ];
    for (id, src, p, expected) in circle {
        jobs.push(Box::new(move || {
            let s = embedded_submanifold(SubmanifoldSpec::circle(1.0)).expect("valid circle");
            let u = Expr::parse(src).expect("built-in expression");
            vec![limit_case(id, expected, Provenance::Derived, TOL_EXTRAPOLATED, amv_limit(&*s, &u, &p, sch, budget))]
        }));
    }
    // A straight segment reduces to the one-dimensional Euclidean case.
    jobs.push(Box::new(move || {
        let s = embedded_submanifold(SubmanifoldSpec::segment([-1.0, -1.0], [1.0, 1.0])).expect("valid segment");
        let u = Expr::parse("x^2 + y").expect("built-in expression");
        // Along (t, t)/√2 the function is t²/2 + t/√2, with second derivative 1.
        vec![limit_case(
            "segment/x2+y",
            1.0 / 6.0,
            Provenance::Derived,
            TOL_EXTRAPOLATED,
            amv_limit(&*s, &u, &[0.0, 0.0], sch, budget),
        )]
    }));
    // Extrinsic ball mass 4 arcsin(r/2) = 2r + r³/12 + O(r⁵).
    jobs.push(Box::new(move || {
        let spec = SubmanifoldSpec::circle(1.0);
        let s = embedded_submanifold(spec.clone()).expect("valid circle");
        let x = [1.0, 0.0];
        let trace: Result<Vec<TracePoint>> = run_schedule(sch, |r| {
            let est = ball_mass(&*s, &x, r, budget)?;
            Ok(TracePoint {
                r,
                value: (est.mass - 2.0 * r) / r.powi(3),
                // Arc endpoints are located to about ε times the coordinate scale.
                abs_error: (est.mass_error + 8.0 * f64::EPSILON * (1.0 + r)) / r.powi(3),
                mass: est.mass,
                method: est.method,
                samples: est.samples_used,
            })
        });
        let res: Result<AmvResult> = trace.and_then(|t| {
            let c = classify_convergence(&t)?;
            Ok(AmvResult::new(t, c))
        });
        let mut out = vec![limit_case("circle/mass-coefficient", 1.0 / 12.0, Provenance::Paper, TOL_MASS_COEF, res)];
        let r = 0.05;
        let measured = ball_mass(&*s, &x, r, budget).map(|e| e.mass).unwrap_or(f64::NAN);
        let series = spec.extrinsic_mass_expansion(r).unwrap_or(f64::NAN);
        out.push(
            Case::value("circle/mass-expansion@0.05", 4.0 * (r / 2.0).asin(), Provenance::Derived, series, r.powi(5))
                .with_note(format!("quadrature mass {measured:.17e}")),
        );
        out.push(Case::value("circle/mass@0.05", 4.0 * (r / 2.0).asin(), Provenance::Derived, measured, 1e-12));
        out.push(Case::value(
            "circle/intrinsic-mass@0.05",
            2.0 * r,
            Provenance::Trivial,
            spec.intrinsic_ball_mass(r),
            0.0,
        ));
        out
    }));
    // Linear functions on the circle are not harmonic for the curve measure.
    jobs.push(Box::new(move || {
        let s = embedded_submanifold(SubmanifoldSpec::circle(2.0)).expect("valid circle");
        let u = Expr::parse("x").expect("built-in expression");
        let res = amv_limit(&*s, &u, &[2.0, 0.0], sch, budget);
        let verdict = res.as_ref().map(|r| r.verdict).unwrap_or(Verdict::Inconclusive);
        vec![
            Case::label("circle-r2/x/verdict", "converged", Provenance::Trivial, &verdict.to_string()),
            limit_case("circle-r2/x@(2,0)", -1.0 / 12.0, Provenance::Derived, TOL_EXTRAPOLATED, res),
        ]
    }));
    Ok(run_jobs(jobs))
}
