//! Weighted Lebesgue measure `(x+y)² dx dy` and smooth positive weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{limit_case, run_jobs, Case, Job, Outcome, Provenance, SuiteOptions, TOL_ANALYTIC};
use crate::error::Result;
use crate::estimator::{amv_at_radius, amv_limit};
use crate::field::{laplacian, Expr, Polynomial, ScalarField};
use crate::spaces::{euclidean_lebesgue, weighted_lebesgue, WeightSpec};

/// Acceptance tolerance for limits in this suite.
const TOL_LIMIT: f64 = 1e-6;

/// `r²/(6(r² + 2(x+y)²))`.
pub fn bose_closed_form(x: f64, y: f64, r: f64) -> f64 {
    let s = x + y;
    r * r / (6.0 * (r * r + 2.0 * s * s))
}

pub(super) fn cases(opts: &SuiteOptions) -> Result<Vec<Case>> {
    let bose = weighted_lebesgue(2, WeightSpec::parse("(x+y)^2")?.with_zero_set("x = -y"))?;
    let u = Expr::parse("x^2 - 3*x*y + y^2")?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xb05e);
    let mut points: Vec<[f64; 2]> = vec![[1.0, 1.0]];
    while points.len() < 10 {
        let p: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if (p[0] + p[1]).abs() > 0.1 {
            points.push(p);
        }
    }
    let radii: Vec<f64> = (0..8).map(|k| 1.2 * 0.75f64.powi(k)).collect();
    let (bose, u, points, radii) = (&bose, &u, &points, &radii);

    let mut jobs: Vec<Job> = Vec::new();
    for (j, p) in points.iter().enumerate() {
        jobs.push(Box::new(move || {
            radii
                .iter()
                .map(|&r| {
                    let id = format!("closed-form/p{j}/r={r:.6}");
                    let expected = bose_closed_form(p[0], p[1], r);
                    match amv_at_radius(&**bose, u, p, r, &opts.budget) {
                        Ok(t) => Case::value(id, expected, Provenance::Paper, t.value, TOL_ANALYTIC * expected.abs()),
                        Err(e) => Case::error(id, Outcome::Value(expected), Provenance::Paper, &e),
                    }
                })
                .collect()
        }));
    }
    for a in [0.0, 0.3, -0.7] {
        jobs.push(Box::new(move || {
            let res = amv_limit(&**bose, u, &[a, -a], &opts.schedule_or(0.5, 0.7, 12), &opts.budget);
            vec![limit_case(&format!("diagonal/a={a}"), 1.0 / 6.0, Provenance::Paper, TOL_LIMIT, res)]
        }));
    }
    // Positive C¹ weight: the limit is (wΔu + 2∇w·∇u) / (8w).
    jobs.push(Box::new(move || {
        let w = Expr::parse("1 + x^2 + y^2/2 + x*y/4").expect("built-in expression");
        let space = weighted_lebesgue(2, WeightSpec::parse(w.source()).expect("built-in weight")).expect("weight");
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc1);
        (0..5)
            .map(|k| {
                let v = Polynomial::random(2, 3, &mut rng);
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let (wv, gw) = (w.value(&x), w.gradient(&x).expect("expression gradient"));
                let gv = v.gradient(&x).expect("polynomial gradient");
                let lw = wv * laplacian(&v, &x).expect("polynomial hessian") + 2.0 * (gw[0] * gv[0] + gw[1] * gv[1]);
                let expected = lw / (8.0 * wv);
                let res = amv_limit(&*space, &v, &x, &opts.schedule_or(0.5, 0.7, 12), &opts.budget);
                limit_case(&format!("weighted/c1/{k}"), expected, Provenance::Derived, TOL_LIMIT, res)
            })
            .collect()
    }));
    // On {x = −y} the limit is (Δu + ∂_xy u)/6.
    jobs.push(Box::new(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xde9);
        (0..5)
            .map(|k| {
                let v = Polynomial::random(2, 4, &mut rng);
                let a = rng.gen_range(-1.0..1.0);
                let x = [a, -a];
                let h = v.hessian(&x).expect("polynomial hessian");
                let expected = (h[0] + h[3] + h[1]) / 6.0;
                let res = amv_limit(&**bose, &v, &x, &opts.schedule_or(0.5, 0.7, 12), &opts.budget);
                limit_case(&format!("degenerate/{k}"), expected, Provenance::Derived, TOL_LIMIT, res)
            })
            .collect()
    }));
    jobs.push(Box::new(move || {
        let one = weighted_lebesgue(2, WeightSpec::parse("1").expect("constant weight")).expect("weight");
        let flat = euclidean_lebesgue(2).expect("dimension in range");
        let x = [0.35, -0.6];
        let r = 0.4;
        match (amv_at_radius(&*one, u, &x, r, &opts.budget), amv_at_radius(&*flat, u, &x, r, &opts.budget)) {
            (Ok(a), Ok(b)) => vec![Case::value("unit-weight", b.value, Provenance::Trivial, a.value, TOL_ANALYTIC)],
            (Err(e), _) | (_, Err(e)) => vec![Case::error("unit-weight", Outcome::Value(0.0), Provenance::Trivial, &e)],
        }
    }));
    Ok(run_jobs(jobs))
}
