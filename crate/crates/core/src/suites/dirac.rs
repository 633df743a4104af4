//! Lebesgue measure plus a unit Dirac mass at the origin.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{limit_case, run_jobs, Case, Job, Outcome, Provenance, SuiteOptions};
use crate::error::Result;
use crate::estimator::{amv_at_radius, amv_limit, deviation_limit, run_schedule};
use crate::field::{Expr, Field, WithPointValue};
use crate::spaces::{euclidean_lebesgue, lebesgue_plus_dirac};

const TOL_LIMIT: f64 = 1e-6;

fn field(src: &str) -> Field {
    Arc::new(Expr::parse(src).expect("built-in expression"))
}

/// `base` with the value at the origin replaced.
fn at_origin(src: &str, n: usize, value: f64) -> WithPointValue {
    WithPointValue { base: field(src), point: vec![0.0; n], value }
}

pub(super) fn cases(opts: &SuiteOptions) -> Result<Vec<Case>> {
    let mut jobs: Vec<Job> = Vec::new();
    jobs.push(Box::new(move || {
        let s = lebesgue_plus_dirac(3).expect("dimension in range");
        let u = field("1 + x - y^2 + z*x");
        let res = amv_limit(&*s, &*u, &[0.0; 3], &opts.schedule_or(0.2, 0.7, 12), &opts.budget);
        vec![limit_case("n3/smooth", 0.0, Provenance::Paper, TOL_LIMIT, res)]
    }));
    // n = 2: the limit is π(u*(o) − u(o)).
    let planar: [(&str, &str, f64, f64, Provenance); 3] = [
        ("n2/indicator", "1", 0.0, PI, Provenance::Paper),
        ("n2/jump", "2 + x + y^2", -1.0, 3.0 * PI, Provenance::Derived),
        ("n2/smooth", "cos(x) + y", 1.0, 0.0, Provenance::Paper),
    ];
    for (id, src, uo, expected, prov) in planar {
        jobs.push(Box::new(move || {
            let s = lebesgue_plus_dirac(2).expect("dimension in range");
            let u = at_origin(src, 2, uo);
            let res = amv_limit(&*s, &u, &[0.0, 0.0], &opts.schedule_or(0.02, 0.7, 14), &opts.budget);
            vec![limit_case(id, expected, prov, TOL_LIMIT, res)]
        }));
    }
    // n = 1: the limit is 2b with b = lim r⁻¹ ⨍ (u − u(o)) dx.
    jobs.push(Box::new(move || {
        let s = lebesgue_plus_dirac(1).expect("dimension in range");
        let flat = euclidean_lebesgue(1).expect("dimension in range");
        let u = field("abs(x)");
        let sch = opts.schedule_or(0.01, 0.7, 14);
        let lim = amv_limit(&*s, &*u, &[0.0], &sch, &opts.budget);
        let b = deviation_limit(&*flat, &*u, &[0.0], 1.0, &sch, &opts.budget);
        let bval = b.as_ref().map(super::limit_value).unwrap_or(f64::NAN);
        let lval = lim.as_ref().map(super::limit_value).unwrap_or(f64::NAN);
        vec![
            limit_case("n1/abs", 1.0, Provenance::Derived, TOL_LIMIT, lim),
            limit_case("n1/abs/b", 0.5, Provenance::Derived, TOL_LIMIT, b),
            Case::value("n1/abs/2b", 2.0 * bval, Provenance::Paper, lval, TOL_LIMIT),
        ]
    }));
    // Away from the atom the space is Euclidean at every radius of the schedule.
    jobs.push(Box::new(move || {
        let s = lebesgue_plus_dirac(2).expect("dimension in range");
        let flat = euclidean_lebesgue(2).expect("dimension in range");
        let u = field("x^3 - x*y + 2*y^2");
        let x = [0.7, 0.2];
        let sch = opts.schedule_or(0.3, 0.7, 8);
        let a = run_schedule(&sch, |r| amv_at_radius(&*s, &*u, &x, r, &opts.budget));
        let b = run_schedule(&sch, |r| amv_at_radius(&*flat, &*u, &x, r, &opts.budget));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let diff = a.iter().zip(&b).map(|(p, q)| (p.value - q.value).abs()).fold(0.0, f64::max);
                vec![Case::value("off-origin", 0.0, Provenance::Trivial, diff, 0.0)]
            }
            (Err(e), _) | (_, Err(e)) => vec![Case::error("off-origin", Outcome::Value(0.0), Provenance::Trivial, &e)],
        }
    }));
    Ok(run_jobs(jobs))
}
