//! Euclidean constant `Δu / (2(n+2))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{limit_case, run_jobs, Case, Job, Provenance, SuiteOptions, TOL_ANALYTIC};
use crate::estimator::{amv_at_radius, amv_limit};
use crate::field::{laplacian, Expr, Polynomial, ScalarField};
use crate::spaces::euclidean_lebesgue;

/// `(id, dimension, u, point, expected, provenance)`.
type Named = (&'static str, usize, &'static str, &'static [f64], f64, Provenance);

const POLYS: usize = 8;
const POINTS: usize = 3;

pub(super) fn cases(opts: &SuiteOptions) -> Vec<Case> {
    let mut jobs: Vec<Job> = Vec::new();
    for n in 1..=3usize {
        jobs.push(Box::new(move || {
            let space = euclidean_lebesgue(n).expect("dimension in range");
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64) << 32);
            let sch = opts.schedule_or(0.5, 0.7, 12);
            let mut out = Vec::new();
            for k in 0..POLYS {
                let u = Polynomial::random(n, 4, &mut rng);
                for j in 0..POINTS {
                    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let expected = laplacian(&u, &x).expect("polynomial hessian") / (2.0 * (n as f64 + 2.0));
                    let res = amv_limit(&*space, &u, &x, &sch, &opts.budget);
                    out.push(limit_case(
                        &format!("n{n}/poly{k}/pt{j}"),
                        expected,
                        Provenance::Derived,
                        TOL_ANALYTIC,
                        res,
                    ));
                }
            }
            out
        }));
    }
    let named: [Named; 4] = [
        ("n2/harmonic", 2, "x^2 - y^2", &[0.3, -0.8], 0.0, Provenance::Trivial),
        ("n1/square", 1, "x^2", &[0.4], 1.0 / 3.0, Provenance::Derived),
        ("n2/radial", 2, "x^2 + y^2", &[-0.2, 0.9], 0.5, Provenance::Derived),
        ("n3/radial", 3, "x^2 + y^2 + z^2", &[0.1, 0.2, 0.3], 0.6, Provenance::Derived),
    ];
    for (id, n, src, x, expected, prov) in named {
        jobs.push(Box::new(move || {
            let space = euclidean_lebesgue(n).expect("dimension in range");
            let u = Expr::parse(src).expect("built-in expression");
            let sch = opts.schedule_or(0.5, 0.7, 12);
            let res = amv_limit(&*space, &u as &dyn ScalarField, x, &sch, &opts.budget);
            vec![limit_case(id, expected, prov, TOL_ANALYTIC, res)]
        }));
    }
    // The average of y² over (x − r, x + r) is x² + r²/3 at every radius.
    jobs.push(Box::new(move || {
        let space = euclidean_lebesgue(1).expect("dimension in range");
        let u = Expr::parse("x^2").expect("built-in expression");
        [0.9, 0.3, 0.01]
            .iter()
            .map(|&r| match amv_at_radius(&*space, &u, &[0.0], r, &opts.budget) {
                Ok(p) => Case::value(format!("n1/square/r={r}"), 1.0 / 3.0, Provenance::Derived, p.value, TOL_ANALYTIC),
                Err(e) => {
                    Case::error(format!("n1/square/r={r}"), super::Outcome::Value(1.0 / 3.0), Provenance::Derived, &e)
                }
            })
            .collect()
    }));
    run_jobs(jobs)
}
