//! Discrete operators on atom clouds: the Green identity, the weighted `L^p`
//! lemma, norm bounds, Dirichlet problems, maximum-principle audits and weak
//! pairings of a step function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{limit_case, run_jobs, Case, Job, Provenance, SuiteOptions, TOL_EXTRAPOLATED};
use crate::error::Result;
use crate::estimator::RadiusSchedule;
use crate::field::Expr;
use crate::operators::{
    build_Tr, build_amv_operator, collar_boundary, empirical_ahlfors, empirical_doubling, green_check, lemma_check,
    maxprin_audit, op_norm_probe, solve_poisson, untie_radius, weak_pairing, DiscreteOperator, MaxPrinClass, NormBound,
    NormType, PairingSpec,
};
use crate::space::{make_atom_cloud, Atom, AtomCloud, RegionSpec};
use crate::spaces::{euclidean_lebesgue, weighted_lebesgue, WeightSpec};

/// Green defect relative to the magnitude of the summed products.
const TOL_GREEN: f64 = 1e-10;
/// Solver accuracy for Dirichlet problems on small clouds.
const TOL_SOLVE: f64 = 1e-10;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> AtomCloud {
    let atoms = (0..n).map(|_| Atom { point: vec![rng.gen(), rng.gen()], weight: rng.gen_range(0.1..2.0) }).collect();
    AtomCloud::from_atoms(
        euclidean_lebesgue(2).expect("dimension in range"),
        atoms,
        RegionSpec::boxed([0.0, 0.0], [1.0, 1.0]),
        None,
    )
    .expect("valid atoms")
}

fn grid(n: usize, min: &[f64], max: &[f64], resolution: usize) -> AtomCloud {
    let s = euclidean_lebesgue(n).expect("dimension in range");
    make_atom_cloud(&s, &RegionSpec::boxed(min.to_vec(), max.to_vec()), resolution, 0).expect("valid grid")
}

fn op_case(id: &str, f: impl FnOnce() -> Result<Vec<Case>>) -> Vec<Case> {
    f().unwrap_or_else(|e| vec![Case::error(id, super::Outcome::Label("ok".into()), Provenance::Trivial, &e)])
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn green_cases(seed: u64) -> Vec<Case> {
    op_case("green", || {
        let mut out = Vec::new();
        let mut rng = rng(seed, 1);
        for k in 0..20 {
            let c = random_cloud(rng.gen_range(150..400), &mut rng);
            let r = rng.gen_range(0.08..0.25);
            let op = build_amv_operator(&c, untie_radius(&c, r)?)?;
            let (a, b) = (rng.gen_range(1.0..5.0), rng.gen_range(-1.0..1.0));
            let u: Vec<f64> = c.atoms.iter().map(|p| (a * p.point[0]).sin() + b * p.point[1]).collect();
            let v: Vec<f64> = c.atoms.iter().map(|p| p.point[0] * p.point[1] - b * p.point[0].powi(2)).collect();
            let g = green_check(&op, &u, &v)?;
            out.push(
                Case::value(format!("green/cloud{k}"), 0.0, Provenance::Trivial, g.defect / g.scale, TOL_GREEN)
                    .with_note(format!("lhs {:.6e} rhs {:.6e}", g.lhs, g.rhs)),
            );
        }
        // With u = v both sides vanish.
        let c = random_cloud(300, &mut rng);
        let op = build_amv_operator(&c, 0.15)?;
        let u: Vec<f64> = c.atoms.iter().map(|p| p.point[0].exp() - p.point[1]).collect();
        let g = green_check(&op, &u, &u)?;
        out.push(Case::value("green/u=v/lhs", 0.0, Provenance::Trivial, g.lhs, 0.0));
        out.push(Case::value("green/u=v/rhs", 0.0, Provenance::Trivial, g.rhs / g.scale, TOL_GREEN));
        Ok(out)
    })
}

/// Equal weights on a circle with equal spacing give equal ball masses.
fn uniform_circle(n: usize) -> AtomCloud {
    let atoms = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Atom { point: vec![a.cos(), a.sin()], weight: 1.0 / n as f64 }
        })
        .collect();
    AtomCloud::from_atoms(euclidean_lebesgue(2).expect("dimension in range"), atoms, RegionSpec::whole(), None)
        .expect("valid atoms")
}

fn selfadjoint_cases(seed: u64) -> Vec<Case> {
    op_case("selfadjoint", || {
        let c = uniform_circle(97);
        let op = build_amv_operator(&c, 0.3)?;
        let u: Vec<f64> = c.atoms.iter().map(|a| a.point[0].powi(3)).collect();
        let v: Vec<f64> = c.atoms.iter().map(|a| a.point[1]).collect();
        let g = green_check(&op, &u, &v)?;
        let l2 = op_norm_probe(&op, NormType::L2, NormBound::Uniform)?;
        let mut rng = rng(seed, 2);
        let rc = random_cloud(200, &mut rng);
        let rop = build_amv_operator(&rc, 0.2)?;
        let x: Vec<f64> = rc.atoms.iter().map(|a| a.point[0]).collect();
        let rg = green_check(&rop, &x, &vec![1.0; rc.len()])?;
        Ok(vec![
            Case::value("selfadjoint/uniform-circle", 0.0, Provenance::Trivial, g.selfadjoint_defect, 1e-12),
            Case::value("selfadjoint/uniform-circle/green-lhs", 0.0, Provenance::Trivial, g.lhs / g.scale, TOL_GREEN),
            Case::value("selfadjoint/uniform-circle/l2-norm", 1.0, Provenance::Trivial, l2.estimate, 1e-9),
            Case::label(
                "selfadjoint/random-cloud",
                "nonzero",
                Provenance::Trivial,
                if rg.selfadjoint_defect > 0.0 { "nonzero" } else { "zero" },
            )
            .with_note(format!("defect {:.3e}", rg.selfadjoint_defect)),
        ])
    })
}

fn lemma_cases(seed: u64) -> Vec<Case> {
    op_case("lemma", || {
        let mut rng = rng(seed, 3);
        let c = random_cloud(250, &mut rng);
        let op = build_Tr(&c, 0.18)?;
        let mut out = Vec::new();
        for (label, p) in [("1", 1.0), ("2", 2.0), ("inf", f64::INFINITY)] {
            let mut violations = 0usize;
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let u: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(-1.0..1.0) * rng.gen::<f64>().powi(3)).collect();
                let l = lemma_check(&op, &u, p)?;
                worst = worst.max(l.lhs / l.rhs);
                if !l.holds() {
                    violations += 1;
                }
            }
            out.push(
                Case::value(format!("lemma/p={label}/violations"), 0.0, Provenance::Paper, violations as f64, 0.0)
                    .with_note(format!("largest ratio {worst:.15}")),
            );
        }
        Ok(out)
    })
}

fn norm_cases() -> Vec<Case> {
    op_case("norm", || {
        let s = weighted_lebesgue(2, WeightSpec::parse("1 + x^2")?)?;
        let c = make_atom_cloud(&s, &RegionSpec::boxed([-1.0, -1.0], [1.0, 1.0]), 30, 0)?;
        let r = untie_radius(&c, 0.2)?;
        let op: DiscreteOperator = build_Tr(&c, r)?;
        let bounds = [("ahlfors", empirical_ahlfors(&op, 2.0)), ("doubling", empirical_doubling(&c, r)?)];
        let mut out = Vec::new();
        for (bname, b) in bounds {
            for (nname, norm) in [("l1", NormType::L1), ("l2", NormType::L2), ("linf", NormType::LInf)] {
                let p = op_norm_probe(&op, norm, b)?;
                let within = p.ratio <= 1.0 + 1e-9;
                out.push(
                    Case::label(
                        format!("norm/{nname}/{bname}"),
                        "within",
                        Provenance::Paper,
                        if within { "within" } else { "exceeds" },
                    )
                    .with_note(format!("estimate {:.6} bound {:.6} ratio {:.6}", p.estimate, p.bound, p.ratio)),
                );
            }
        }
        let linf = op_norm_probe(&op, NormType::LInf, NormBound::Uniform)?;
        out.push(Case::value("norm/linf", 1.0, Provenance::Trivial, linf.estimate, 0.0));
        Ok(out)
    })
}

fn poisson_cases(seed: u64) -> Vec<Case> {
    op_case("poisson", || {
        let mut out = Vec::new();
        // One dimension: x is reproduced where balls are symmetric.
        let c = grid(1, &[0.0], &[1.0], 120);
        let r = untie_radius(&c, 0.04)?;
        let op = build_amv_operator(&c, r)?;
        let bidx = collar_boundary(&c, r)?;
        let x: Vec<f64> = c.atoms.iter().map(|a| a.point[0]).collect();
        let bd: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, x[i])).collect();
        let sol = solve_poisson(&op, &vec![0.0; c.len()], &bd)?;
        out.push(Case::value("poisson/linear-1d", 0.0, Provenance::Trivial, max_abs_diff(&sol.u, &x), TOL_SOLVE));
        let ones: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, 1.0)).collect();
        let sol = solve_poisson(&op, &vec![0.0; c.len()], &ones)?;
        out.push(Case::value(
            "poisson/constant",
            0.0,
            Provenance::Trivial,
            max_abs_diff(&sol.u, &vec![1.0; c.len()]),
            TOL_SOLVE,
        ));

        // Two dimensions: a manufactured solution and the comparison principle.
        let c = grid(2, &[0.0, 0.0], &[1.0, 1.0], 24);
        let r = untie_radius(&c, 0.13)?;
        let op = build_amv_operator(&c, r)?;
        let bidx = collar_boundary(&c, r)?;
        let u: Vec<f64> = c.atoms.iter().map(|a| a.point[0].powi(2) - a.point[0] * a.point[1] + a.point[1]).collect();
        let f = op.apply(&u);
        let bd: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, u[i])).collect();
        let sol = solve_poisson(&op, &f, &bd)?;
        out.push(Case::value("poisson/manufactured-2d", 0.0, Provenance::Trivial, max_abs_diff(&sol.u, &u), TOL_SOLVE));

        let mut rng = rng(seed, 4);
        let f2: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f1: Vec<f64> = f2.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
        let g: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, rng.gen_range(-1.0..1.0))).collect();
        let u1 = solve_poisson(&op, &f1, &g)?;
        let u2 = solve_poisson(&op, &f2, &g)?;
        // Δu₁ ≥ Δu₂ with equal boundary data forces u₁ ≤ u₂.
        let excess = u1.u.iter().zip(&u2.u).map(|(a, b)| a - b).fold(0.0, f64::max);
        out.push(Case::value("poisson/monotone", 0.0, Provenance::Paper, excess, TOL_SOLVE));
        Ok(out)
    })
}

fn maxprin_cases(seed: u64) -> Vec<Case> {
    op_case("maxprin", || {
        let mut out = Vec::new();
        let c = grid(2, &[0.0, 0.0], &[1.0, 1.0], 24);
        let r = untie_radius(&c, 0.13)?;
        let op = build_amv_operator(&c, r)?;
        let bidx = collar_boundary(&c, r)?;
        let mut rng = rng(seed, 5);
        for k in 0..10 {
            let f: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let g: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, rng.gen_range(-1.0..1.0))).collect();
            let sol = solve_poisson(&op, &f, &g)?;
            let a = maxprin_audit(&op, &sol.u, &bidx)?;
            out.push(
                Case::label(format!("maxprin/subharmonic{k}"), "holds", Provenance::Paper, class_label(a.class))
                    .with_note(format!("margin {:.3e}", a.margin)),
            );
        }
        let a = maxprin_audit(&op, &vec![2.5; c.len()], &bidx)?;
        out.push(Case::label("maxprin/constant", "holds", Provenance::Trivial, class_label(a.class)));

        // sgn(x) − sgn(x − 1) is AMV harmonic at small radii away from its
        // jumps yet peaks in the interior.
        let c = grid(1, &[-1.0], &[2.0], 90);
        let r = untie_radius(&c, 0.1)?;
        let op = build_amv_operator(&c, r)?;
        let bidx = collar_boundary(&c, r)?;
        let u: Vec<f64> = c.atoms.iter().map(|a| sgn(a.point[0]) - sgn(a.point[0] - 1.0)).collect();
        let a = maxprin_audit(&op, &u, &bidx)?;
        out.push(
            Case::label("maxprin/sgn-step", "violated", Provenance::Paper, class_label(a.class)).with_note(format!(
                "interior maxima {} margin {}",
                a.interior_max_atoms.len(),
                a.margin
            )),
        );
        Ok(out)
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn class_label(c: MaxPrinClass) -> &'static str {
    match c {
        MaxPrinClass::Holds => "holds",
        MaxPrinClass::Violated => "violated",
    }
}

/// Bumps `(id, φ, support, −φ'(0)/3)`.
const BUMPS: [(&str, &str, f64, f64, f64); 4] = [
    ("weak/sgn/even", "(1 - x^2)^2", -1.0, 1.0, 0.0),
    ("weak/sgn/skew", "(1 - x^2)^2 * (1 + x)", -1.0, 1.0, -1.0 / 3.0),
    ("weak/sgn/shifted", "(1 - (x - 0.5)^2)^2", -0.5, 1.5, -0.5),
    ("weak/sgn/away", "(1 - 4*(x - 2)^2)^2", 1.5, 2.5, 0.0),
];

pub(super) fn cases(opts: &SuiteOptions) -> Result<Vec<Case>> {
    let seed = opts.seed;
    let sch = opts.schedule_or(0.2, 0.7, 10);
    let sch: &RadiusSchedule = &sch;
    let budget = &opts.budget;
    let mut jobs: Vec<Job> = vec![
        Box::new(move || green_cases(seed)),
        Box::new(move || selfadjoint_cases(seed)),
        Box::new(move || lemma_cases(seed)),
        Box::new(norm_cases),
        Box::new(move || poisson_cases(seed)),
        Box::new(move || maxprin_cases(seed)),
    ];
    for (id, phi, a, b, expected) in BUMPS {
        jobs.push(Box::new(move || {
            let s = euclidean_lebesgue(1).expect("dimension in range");
            let u = Expr::parse("sgn(x)").expect("built-in expression");
            let phi = Expr::parse(phi).expect("built-in expression");
            let spec = PairingSpec::interval(a, b, vec![0.0]);
            let prov = if id.ends_with("skew") { Provenance::Paper } else { Provenance::Derived };
            vec![limit_case(id, expected, prov, TOL_EXTRAPOLATED, weak_pairing(&*s, &u, &phi, &spec, sch, budget))]
        }));
    }
    Ok(run_jobs(jobs))
}
