//! Heisenberg group: unit-ball symmetries, the ball constant `c` and
//! `Δ_{μ,r}u = c Δ_H u` for quadratic `u`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{run_jobs, Case, Job, Outcome, Provenance, SuiteOptions, MC_SIGMAS};
use crate::error::{AmvError, Result};
use crate::estimator::{amv_at_radius, amv_limit, amv_lower};
use crate::field::{FnField, Polynomial, ScalarField};
use crate::spaces::heisenberg::{compose, unit_ball_constant_quadrature, unit_ball_volume};
use crate::spaces::{kohn_laplacian, HeisenbergConstants, HeisenbergSpace};

type Moment = (&'static str, fn(&[f64; 3]) -> f64);

/// Radius for fixed-radius ratios; quadratic `u` make the ratio independent of it.
const R: f64 = 0.5;

fn test_functions() -> Vec<(&'static str, Polynomial)> {
    vec![
        ("x2", Polynomial::from_terms(3, &[(1.0, &[2, 0, 0])])),
        ("y2", Polynomial::from_terms(3, &[(1.0, &[0, 2, 0])])),
        ("x2+y2+t", Polynomial::from_terms(3, &[(1.0, &[2, 0, 0]), (1.0, &[0, 2, 0]), (1.0, &[0, 0, 1])])),
        (
            "3x2-xy+y2+2t",
            Polynomial::from_terms(3, &[(3.0, &[2, 0, 0]), (-1.0, &[1, 1, 0]), (1.0, &[0, 2, 0]), (2.0, &[0, 0, 1])]),
        ),
    ]
}

pub(super) fn cases(opts: &SuiteOptions) -> Result<Vec<Case>> {
    let frozen = HeisenbergConstants::frozen()?;
    if !(frozen.c_estimate > 0.0 && frozen.std_error > 0.0) {
        return Err(AmvError::Input("the Heisenberg constants file has not been generated".into()));
    }
    let space = HeisenbergSpace::new();
    let budget = opts.mc_budget();
    let pool = space.sample(budget.seed, budget.max_evals)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x4845_4953);
    let bases: Vec<[f64; 3]> =
        (0..3).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let (space, pool, bases) = (&space, &pool, &bases);
    let k = budget.mc_k;

    let mut jobs: Vec<Job> = Vec::new();
    jobs.push(Box::new(move || {
        let moments: [Moment; 5] = [
            ("moment/x", |q| q[0]),
            ("moment/y", |q| q[1]),
            ("moment/t", |q| q[2]),
            ("moment/xy", |q| q[0] * q[1]),
            ("moment/x2-y2", |q| q[0] * q[0] - q[1] * q[1]),
        ];
        let mut out: Vec<Case> = moments
            .iter()
            .map(|(id, g)| {
                let (m, se) = pool.raw_mean(g);
                Case::value(*id, 0.0, Provenance::Paper, m, MC_SIGMAS * se)
            })
            .collect();
        let (c, se) = pool.constant();
        out.push(Case::value(
            "constant/run-vs-frozen",
            frozen.c_estimate,
            Provenance::Derived,
            c,
            MC_SIGMAS * se.hypot(frozen.std_error),
        ));
        out.push(Case::value(
            "constant/frozen-vs-quadrature",
            unit_ball_constant_quadrature(),
            Provenance::Derived,
            frozen.c_estimate,
            MC_SIGMAS * frozen.std_error,
        ));
        let (v, vse) = pool.volume();
        out.push(Case::value("volume/run-vs-quadrature", unit_ball_volume(), Provenance::Derived, v, MC_SIGMAS * vse));
        out
    }));
    for (name, u) in test_functions() {
        jobs.push(Box::new(move || {
            bases
                .iter()
                .enumerate()
                .map(|(j, p0)| {
                    let id = format!("ratio/{name}/p{j}");
                    let dh = kohn_laplacian(&u, p0).expect("polynomial hessian");
                    match amv_at_radius(space, &u, p0, R, &budget) {
                        Ok(p) => {
                            let se = p.abs_error / k / dh.abs();
                            Case::value(
                                id,
                                frozen.c_estimate,
                                Provenance::Derived,
                                p.value / dh,
                                MC_SIGMAS * se.hypot(frozen.std_error),
                            )
                        }
                        Err(e) => Case::error(id, Outcome::Value(frozen.c_estimate), Provenance::Derived, &e),
                    }
                })
                .collect()
        }));
    }
    jobs.push(Box::new(move || {
        // Δ_H(xy) = 0.
        let u = Polynomial::from_terms(3, &[(1.0, &[1, 1, 0])]);
        bases
            .iter()
            .enumerate()
            .map(|(j, p0)| {
                let id = format!("harmonic/xy/p{j}");
                match amv_at_radius(space, &u, p0, R, &budget) {
                    Ok(p) => Case::value(id, 0.0, Provenance::Derived, p.value, MC_SIGMAS * p.abs_error / k),
                    Err(e) => Case::error(id, Outcome::Value(0.0), Provenance::Derived, &e),
                }
            })
            .collect()
    }));
    jobs.push(Box::new(move || {
        // Δ_{μ,r}u(p0) against Δ_{μ,r}(u ∘ L_{p0})(o).
        let p0 = bases[0];
        let u = Polynomial::from_terms(3, &[(1.0, &[2, 0, 0]), (-2.0, &[0, 1, 1]), (0.5, &[0, 0, 2])]);
        let shifted = {
            let u = u.clone();
            FnField::new("u∘L_p0", move |q| u.value(&compose(&p0, q)))
        };
        let a = amv_at_radius(space, &u, &p0, R, &budget);
        let b = amv_at_radius(space, &shifted, &[0.0; 3], R, &budget);
        match (a, b) {
            (Ok(a), Ok(b)) => vec![Case::value(
                "left-invariance",
                a.value,
                Provenance::Trivial,
                b.value,
                1e-10 * a.value.abs().max(1.0),
            )
            .with_note("same sample pool on both sides")],
            (Err(e), _) | (_, Err(e)) => {
                vec![Case::error("left-invariance", Outcome::Value(0.0), Provenance::Trivial, &e)]
            }
        }
    }));
    jobs.push(Box::new(move || {
        let u = Polynomial::from_terms(3, &[(1.0, &[2, 0, 0])]);
        let sch = opts.schedule_or(R, 0.7, 6);
        let expected = 2.0 * frozen.c_estimate;
        let mut out = vec![match amv_limit(space, &u, &[0.0; 3], &sch, &budget) {
            Ok(r) => {
                let se = r.value_error / k;
                Case::value(
                    "limit/x2/o",
                    expected,
                    Provenance::Derived,
                    super::limit_value(&r),
                    MC_SIGMAS * se.hypot(2.0 * frozen.std_error),
                )
            }
            Err(e) => Case::error("limit/x2/o", Outcome::Value(expected), Provenance::Derived, &e),
        }];
        // The lower AMV Laplacian of x² is positive everywhere.
        for (j, p0) in bases.iter().enumerate() {
            let id = format!("lower/x2/p{j}");
            out.push(match amv_lower(space, &u, p0, &sch, &budget) {
                Ok(b) => {
                    let positive = b.value - b.error > 0.0;
                    Case::label(id, "positive", Provenance::Derived, if positive { "positive" } else { "not positive" })
                        .with_note(format!("{:.6} ± {:.2e}", b.value, b.error))
                }
                Err(e) => Case::error(id, Outcome::Label("positive".into()), Provenance::Derived, &e),
            });
        }
        out
    }));
    Ok(run_jobs(jobs))
}
