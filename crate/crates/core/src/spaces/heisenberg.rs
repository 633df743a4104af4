//! The first Heisenberg group with the left-invariant horizontal frame
//! `X = ∂x + 2y∂t`, `Y = ∂y − 2x∂t`, its Carnot–Carathéodory distance and a
//! Monte Carlo ball backend built on a symmetrized sample of the unit ball.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::euclid::{chunk_rng, McSums, MC_CHUNK};
use super::SpaceDescriptor;
use crate::error::{AmvError, Result};
use crate::quadrature::gauss_interval;
use crate::space::{
    finite_at, Atom, Backend, BallEstimate, Bounds, EffortBudget, Integrand, Method, MetricMeasureSpace, RegionSpec,
};

/// Group law `(x,y,t)∘(x',y',t') = (x+x', y+y', t+t'+2(yx'−y'x))`.
pub fn compose(p: &[f64], q: &[f64]) -> [f64; 3] {
    [p[0] + q[0], p[1] + q[1], p[2] + q[2] + 2.0 * (p[1] * q[0] - q[1] * p[0])]
}

pub fn inverse(p: &[f64]) -> [f64; 3] {
    [-p[0], -p[1], -p[2]]
}

/// Anisotropic dilation `δ_λ(x,y,t) = (λx, λy, λ²t)`.
pub fn dilate(lambda: f64, p: &[f64]) -> [f64; 3] {
    [lambda * p[0], lambda * p[1], lambda * lambda * p[2]]
}

/// Kohn Laplacian `X²u + Y²u` from the Hessian oracle of `u`:
/// `u_xx + u_yy + 4y u_xt − 4x u_yt + 4(x² + y²) u_tt`.
pub fn kohn_laplacian(u: &dyn crate::field::ScalarField, p: &[f64]) -> Option<f64> {
    let h = u.hessian(p)?;
    let (x, y) = (p[0], p[1]);
    Some(h[0] + h[4] + 4.0 * y * h[2] - 4.0 * x * h[5] + 4.0 * (x * x + y * y) * h[8])
}

/// θ − sin θ without cancellation for small θ.
fn theta_minus_sin(th: f64) -> f64 {
    if th < 0.02 {
        let t2 = th * th;
        th * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)))
    } else {
        th - th.sin()
    }
}

/// |t|/ρ² of the endpoint of a unit-speed geodesic that turns by θ.
fn mu(th: f64) -> f64 {
    let s = (0.5 * th).sin();
    theta_minus_sin(th) / (2.0 * s * s)
}

const MAX_BISECTIONS: usize = 400;

/// `d(o, p)`.
pub fn cc_norm(p: &[f64]) -> Result<f64> {
    let rho = p[0].hypot(p[1]);
    let t = p[2].abs();
    if t == 0.0 {
        return Ok(rho);
    }
    if rho == 0.0 {
        return Ok((PI * t).sqrt());
    }
    let target = t / (rho * rho);
    if !target.is_finite() {
        return Ok((PI * t).sqrt());
    }
    if target < 1e-30 {
        // μ(θ) = θ/3 + O(θ³).
        let th = 3.0 * target;
        return Ok(rho * th / (2.0 * (0.5 * th).sin()));
    }
    let (mut lo, mut hi) = (0.0f64, TAU);
    let mut converged = false;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        if mu(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            converged = true;
            break;
        }
    }
    let th = 0.5 * (lo + hi);
    if !converged || !th.is_finite() {
        return Err(AmvError::Numeric(format!(
            "geodesic angle bisection did not converge for {p:?}: bracket [{lo}, {hi}], target {target}"
        )));
    }
    let d = if th <= PI { rho * th / (2.0 * (0.5 * th).sin()) } else { th * (t / (2.0 * theta_minus_sin(th))).sqrt() };
    Ok(d)
}

/// `d(p, q) = d(o, p⁻¹∘q)`.
pub fn cc_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    cc_norm(&compose(&inverse(p), q))
}

/// Profile of the unit sphere through the geodesic turning angle θ ∈ (0, 2π):
/// horizontal radius and height of the endpoint.
fn sphere_profile(th: f64) -> (f64, f64, f64) {
    let h = 0.5 * th;
    let rho = h.sin() / h;
    let t = 2.0 * theta_minus_sin(th) / (th * th);
    // dρ/dθ
    let drho = (h.cos() * h - h.sin()) / (2.0 * h * h);
    (rho, t, drho)
}

/// `∫_{B_1(o)} ρ^(2k) dL³` by Gauss–Legendre quadrature over the sphere profile.
fn unit_ball_radial_moment(k: i32) -> f64 {
    let mut s = 0.0;
    for (a, b) in [(0.0, PI), (PI, TAU)] {
        gauss_interval(a, b, 96, |th, w| {
            let (rho, t, drho) = sphere_profile(th);
            // Shell at radius ρ: circumference 2πρ, height 2t.
            s += w * 2.0 * t * 2.0 * PI * rho * rho.powi(2 * k) * drho.abs();
        });
    }
    s
}

/// Volume of the unit ball `L³(B_1(o))`.
pub fn unit_ball_volume() -> f64 {
    unit_ball_radial_moment(0)
}

/// `c = ½ ⨍_{B_1(o)} x² dL³`, by deterministic quadrature.
pub fn unit_ball_constant_quadrature() -> f64 {
    // ∫ x² = ½ ∫ ρ².
    0.25 * unit_ball_radial_moment(1) / unit_ball_volume()
}

/// Bounding box of `B_1(o)`: `|x|, |y| ≤ 1`, `|t| ≤ 2/π`.
pub const UNIT_BOX: [f64; 3] = [1.0, 1.0, 2.0 / PI];

/// Rejection sample of `B_1(o)` from its bounding box.
#[derive(Debug, Clone)]
pub struct UnitBallSample {
    pub points: Vec<[f64; 3]>,
    pub drawn: usize,
    pub seed: u64,
}

impl UnitBallSample {
    pub fn box_volume() -> f64 {
        8.0 * UNIT_BOX[0] * UNIT_BOX[1] * UNIT_BOX[2]
    }

    /// Draws `n` box points with the given seed, keeping those with `d(o,·) < 1`.
    pub fn draw(n: usize, seed: u64) -> Result<Self> {
        const FAMILY: u64 = 0x4845;
        let nchunks = n.div_ceil(MC_CHUNK);
        let chunks: Vec<Result<Vec<[f64; 3]>>> = (0..nchunks)
            .into_par_iter()
            .map(|ch| {
                let mut rng = chunk_rng(seed, FAMILY, ch as u64);
                let len = MC_CHUNK.min(n - ch * MC_CHUNK);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let q = [
                        rng.gen_range(-UNIT_BOX[0]..UNIT_BOX[0]),
                        rng.gen_range(-UNIT_BOX[1]..UNIT_BOX[1]),
                        rng.gen_range(-UNIT_BOX[2]..UNIT_BOX[2]),
                    ];
                    if cc_norm(&q)? < 1.0 {
                        out.push(q);
                    }
                }
                Ok(out)
            })
            .collect();
        let mut points = Vec::new();
        for c in chunks {
            points.extend(c?);
        }
        Ok(Self { points, drawn: n, seed })
    }

    /// Estimated `L³(B_1(o))` and its standard error.
    pub fn volume(&self) -> (f64, f64) {
        let p = self.points.len() as f64 / self.drawn as f64;
        let v = Self::box_volume();
        (v * p, v * (p * (1.0 - p) / self.drawn as f64).sqrt())
    }

    /// Mean of `g` over the accepted points and its standard error (raw, not
    /// symmetrized).
    pub fn raw_mean(&self, g: impl Fn(&[f64; 3]) -> f64 + Sync) -> (f64, f64) {
        let vals: Vec<f64> = self.points.par_iter().map(&g).collect();
        mean_se(&vals)
    }

    /// Symmetrized estimate of `c = ½⨍x²` with standard error.
    pub fn constant(&self) -> (f64, f64) {
        // The orbit mean of x² is (x² + y²)/2.
        let vals: Vec<f64> = self.points.par_iter().map(|q| 0.25 * (q[0] * q[0] + q[1] * q[1])).collect();
        mean_se(&vals)
    }
}

fn mean_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// The eight images of `q` under the rotations and reflections of the plane
/// that preserve `B_1(o)` (reflections reverse `t`).
pub fn d4_orbit(q: &[f64; 3]) -> [[f64; 3]; 8] {
    let [x, y, t] = *q;
    [[x, y, t], [-y, x, t], [-x, -y, t], [y, -x, t], [x, -y, -t], [y, x, -t], [-x, y, -t], [-y, -x, -t]]
}

/// Frozen Monte Carlo estimate of the unit-ball constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergConstants {
    pub c_estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub accepted: usize,
    pub volume_estimate: f64,
}

/// Default generator settings for the constants file.
pub const CONSTANTS_SEED: u64 = 2718;
pub const CONSTANTS_SAMPLES: usize = 2_000_000;

static FROZEN: &str = include_str!("../../data/heisenberg_constants.json");

impl HeisenbergConstants {
    pub fn generate(samples: usize, seed: u64) -> Result<Self> {
        let s = UnitBallSample::draw(samples, seed)?;
        let (c, se) = s.constant();
        Ok(Self {
            c_estimate: c,
            std_error: se,
            samples,
            seed,
            accepted: s.points.len(),
            volume_estimate: s.volume().0,
        })
    }

    /// The constants compiled into the library.
    pub fn frozen() -> Result<Self> {
        serde_json::from_str(FROZEN).map_err(|e| AmvError::Input(format!("constants file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize") + "\n"
    }
}

/// `(R³, d_CC, L³)`.
pub struct HeisenbergSpace {
    pools: Mutex<HashMap<(u64, usize), Arc<UnitBallSample>>>,
    volume: f64,
}

impl Default for HeisenbergSpace {
    fn default() -> Self {
        Self::new()
    }
}

impl HeisenbergSpace {
    pub fn new() -> Self {
        Self { pools: Mutex::new(HashMap::new()), volume: unit_ball_volume() }
    }

    /// The shared unit-ball sample for `(seed, n)`, drawn on first use.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Arc<UnitBallSample>> {
        if let Some(s) = self.pools.lock().expect("pool lock").get(&(seed, n)) {
            return Ok(s.clone());
        }
        let s = Arc::new(UnitBallSample::draw(n, seed)?);
        self.pools.lock().expect("pool lock").entry((seed, n)).or_insert_with(|| s.clone());
        Ok(s)
    }

    fn monte_carlo(&self, x: &[f64], r: f64, f: Option<Integrand<'_>>, budget: &EffortBudget) -> Result<BallEstimate> {
        let pool = self.sample(budget.seed, budget.max_evals)?;
        let bv = UnitBallSample::box_volume();
        let chunks: Vec<Result<McSums>> = pool
            .points
            .par_chunks(MC_CHUNK)
            .map(|chunk| {
                let mut s = McSums::default();
                for q in chunk {
                    let m = match f {
                        None => 1.0,
                        Some(f) => {
                            let mut acc = 0.0;
                            for g in d4_orbit(q) {
                                let p = compose(x, &dilate(r, &g));
                                acc += finite_at(f(&p), &p)?;
                            }
                            acc / 8.0
                        }
                    };
                    s.push(bv, bv * m);
                }
                Ok(s)
            })
            .collect();
        let mut acc = McSums::default();
        for c in chunks {
            acc.merge(&c?);
        }
        // Rejected draws contribute zeros.
        acc.n = pool.drawn;
        let (ma, mb, va, vb, cab) = acc.moments();
        let scale = r.powi(4);
        let k = budget.mc_k;
        let mass = scale * ma;
        let integral = scale * mb;
        let avg = mb / ma;
        let var_avg = ((vb - 2.0 * avg * cab + avg * avg * va) / (ma * ma)).max(0.0);
        Ok(BallEstimate {
            mass,
            integral: if f.is_some() { integral } else { 0.0 },
            abs_error: if f.is_some() { k * scale * vb.sqrt() } else { k * scale * va.sqrt() },
            mass_error: k * scale * va.sqrt(),
            average_error: if f.is_some() { k * var_avg.sqrt() } else { 0.0 },
            method: Method::MonteCarlo,
            samples_used: pool.drawn,
            mc_k: k,
        })
    }
}

impl MetricMeasureSpace for HeisenbergSpace {
    fn ambient_dim(&self) -> usize {
        3
    }

    fn descriptor(&self) -> SpaceDescriptor {
        SpaceDescriptor::Heisenberg
    }

    fn distance_unchecked(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        cc_distance(p, q)
    }

    fn in_support(&self, _p: &[f64]) -> bool {
        true
    }

    fn mass_unchecked(&self, x: &[f64], r: f64, budget: &EffortBudget) -> Result<BallEstimate> {
        match budget.backend {
            Backend::Auto => {
                let mass = r.powi(4) * self.volume;
                Ok(BallEstimate {
                    mass,
                    integral: 0.0,
                    abs_error: 1e-13 * mass,
                    mass_error: 1e-13 * mass,
                    average_error: 0.0,
                    method: Method::Quadrature,
                    samples_used: 192,
                    mc_k: 0.0,
                })
            }
            Backend::MonteCarlo => self.monte_carlo(x, r, None, budget),
        }
    }

    fn integrate_unchecked(&self, x: &[f64], r: f64, f: Integrand<'_>, budget: &EffortBudget) -> Result<BallEstimate> {
        self.monte_carlo(x, r, Some(f), budget)
    }

    fn cloud_unchecked(&self, region: &RegionSpec, resolution: usize, seed: u64) -> Result<Vec<Atom>> {
        let Bounds::Box { min, max } = &region.bounds else {
            return Err(AmvError::Domain("the Heisenberg group is unbounded; give a box region".into()));
        };
        let m = resolution;
        if m.checked_pow(3).is_none_or(|t| t > 50_000_000) {
            return Err(AmvError::Input(format!("resolution {m} is too large")));
        }
        let h: Vec<f64> = (0..3).map(|i| (max[i] - min[i]) / m as f64).collect();
        let w = h[0] * h[1] * h[2];
        let mut rng = chunk_rng(seed, 0x434c, 0);
        let mut atoms = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut jit = |_| if region.jitter > 0.0 { region.jitter * (rng.gen::<f64>() - 0.5) } else { 0.0 };
                    let p = vec![
                        min[0] + (i as f64 + 0.5 + jit(0)) * h[0],
                        min[1] + (j as f64 + 0.5 + jit(1)) * h[1],
                        min[2] + (k as f64 + 0.5 + jit(2)) * h[2],
                    ];
                    atoms.push(Atom { point: p, weight: w });
                }
            }
        }
        Ok(atoms)
    }

    fn region_mass(&self, region: &RegionSpec) -> Option<f64> {
        match &region.bounds {
            Bounds::Box { min, max } => Some(min.iter().zip(max).map(|(a, b)| b - a).product()),
            Bounds::Whole => None,
        }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Expr, ScalarField};

    #[test]
    fn kohn_laplacian_of_simple_monomials() {
        let p = [0.3, -0.7, 1.1];
        let t2 = Expr::parse("z^2").unwrap();
        assert!((kohn_laplacian(&t2, &p).unwrap() - 8.0 * (0.09 + 0.49)).abs() < 1e-14);
        let xt = Expr::parse("x*z").unwrap();
        assert!((kohn_laplacian(&xt, &p).unwrap() - 4.0 * p[1]).abs() < 1e-14);
    }

    #[test]
    fn kohn_laplacian_matches_vector_fields() {
        // X² + Y² by central differences along the flows of X = ∂x + 2y∂t and
        // Y = ∂y − 2x∂t, which are straight lines.
        let u = Expr::parse("x^3*z - 2*y^2*z^2 + x*y + sin(z)").unwrap();
        let p = [0.4, 0.2, -0.5];
        let h = 1e-4;
        let second = |dir: [f64; 3]| {
            let at = |s: f64| u.value(&[p[0] + s * dir[0], p[1] + s * dir[1], p[2] + s * dir[2]]);
            (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h)
        };
        let fd = second([1.0, 0.0, 2.0 * p[1]]) + second([0.0, 1.0, -2.0 * p[0]]);
        assert!((kohn_laplacian(&u, &p).unwrap() - fd).abs() < 1e-5, "{fd}");
    }

    #[test]
    fn horizontal_points_are_euclidean() {
        assert_eq!(cc_norm(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((cc_norm(&[0.3, -0.4, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vertical_axis_closed_form() {
        for t in [1e-6, 0.25, 1.0, 7.0] {
            assert!((cc_norm(&[0.0, 0.0, t]).unwrap() - (PI * t).sqrt()).abs() < 1e-14);
            // Nearly vertical points approach the same value continuously.
            let d = cc_norm(&[1e-9, 0.0, t]).unwrap();
            assert!((d - (PI * t).sqrt()).abs() < 1e-7, "t={t}: {d}");
        }
    }

    #[test]
    fn sphere_profile_points_have_unit_norm() {
        for k in 1..200 {
            let th = TAU * k as f64 / 200.0;
            let (rho, t, _) = sphere_profile(th);
            let d = cc_norm(&[rho, 0.0, t]).unwrap();
            assert!((d - 1.0).abs() < 1e-12, "θ={th}: {d}");
        }
    }

    #[test]
    fn homogeneity_and_left_invariance() {
        let p = [0.3, -0.2, 0.15];
        let q1 = [0.1, 0.4, -0.3];
        let q2 = [-0.5, 0.05, 0.2];
        let d = cc_distance(&q1, &q2).unwrap();
        let d2 = cc_distance(&compose(&p, &q1), &compose(&p, &q2)).unwrap();
        assert!((d - d2).abs() < 1e-12);
        for lam in [0.1, 2.5] {
            let n = cc_norm(&dilate(lam, &q1)).unwrap();
            assert!((n - lam * cc_norm(&q1).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_constants() {
        assert!((unit_ball_volume() - 3.303_503_048_836_701).abs() < 1e-12);
        assert!((unit_ball_constant_quadrature() - 0.116_196_005_910_392).abs() < 1e-12);
    }

    #[test]
    fn box_contains_unit_ball() {
        // The maximal height 2/π is reached at θ = π.
        let (_, t, _) = sphere_profile(PI);
        assert!((t - 2.0 / PI).abs() < 1e-15);
        for k in 1..1000 {
            let (rho, t, _) = sphere_profile(TAU * k as f64 / 1000.0);
            assert!(rho <= 1.0 && t <= UNIT_BOX[2] + 1e-15);
        }
    }

    #[test]
    fn orbit_preserves_norm() {
        let q = [0.3, 0.1, 0.2];
        let n = cc_norm(&q).unwrap();
        for g in d4_orbit(&q) {
            assert!((cc_norm(&g).unwrap() - n).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_file_parses() {
        let c = HeisenbergConstants::frozen().unwrap();
        assert_eq!(c.seed, CONSTANTS_SEED);
        assert_eq!(c.samples, CONSTANTS_SAMPLES);
    }
}
