//! Euclidean-metric spaces whose measure is a finite sum of components:
//! Lebesgue measure (optionally weighted) on R^n or on a box, arclength on a
//! curve, and point masses.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{norm_diff, unit_ball_volume, Curve, Rect};
use super::SpaceDescriptor;
use crate::error::{AmvError, Result};
use crate::field::{Expr, Field};
use crate::quadrature::{adaptive_pair, gauss_interval, polar_disk, spherical_ball, Pair};
use crate::space::{
    finite_at, Atom, Backend, BallEstimate, Bounds, EffortBudget, Integrand, Method, MetricMeasureSpace, RegionSpec,
};

/// Nonnegative density with a printable label (an expression source when it
/// came from one).
#[derive(Clone)]
pub struct Density {
    pub field: Field,
    pub label: String,
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Density({})", self.label)
    }
}

impl Density {
    pub fn parse(src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        Ok(Self { label: src.to_string(), field: Arc::new(e) })
    }

    pub fn from_field(field: Field) -> Self {
        Self { label: field.describe(), field }
    }

    fn at(&self, p: &[f64]) -> Result<f64> {
        let w = self.field.value(p);
        if w.is_finite() && w >= 0.0 {
            Ok(w)
        } else {
            Err(AmvError::Evaluation { node: p.to_vec(), detail: format!("density value {w}") })
        }
    }
}

fn density_at(d: &Option<Density>, p: &[f64]) -> Result<f64> {
    d.as_ref().map_or(Ok(1.0), |d| d.at(p))
}

/// Where a component's measure lives.
#[derive(Debug, Clone)]
pub enum Piece {
    /// All of R^n.
    Whole,
    /// Closed box (interval in 1-D, rectangle in 2-D).
    Boxed { min: Vec<f64>, max: Vec<f64> },
    /// Arclength on a curve.
    Curve(Curve),
    /// Point mass.
    Atom { point: Vec<f64>, weight: f64 },
}

#[derive(Debug, Clone)]
pub struct Component {
    pub piece: Piece,
    pub density: Option<Density>,
}

impl Component {
    pub fn whole(density: Option<Density>) -> Self {
        Self { piece: Piece::Whole, density }
    }

    pub fn boxed(min: Vec<f64>, max: Vec<f64>, density: Option<Density>) -> Self {
        Self { piece: Piece::Boxed { min, max }, density }
    }

    pub fn curve(curve: Curve, density: Option<Density>) -> Self {
        Self { piece: Piece::Curve(curve), density }
    }

    pub fn atom(point: Vec<f64>, weight: f64) -> Self {
        Self { piece: Piece::Atom { point, weight }, density: None }
    }

    fn contains(&self, p: &[f64]) -> bool {
        match &self.piece {
            Piece::Whole => true,
            Piece::Boxed { min, max } => p.iter().zip(min.iter().zip(max)).all(|(x, (a, b))| a <= x && x <= b),
            Piece::Curve(c) => c.contains(p, 1e-12),
            Piece::Atom { point, .. } => norm_diff(point, p) <= 1e-12,
        }
    }
}

/// Contribution of one component to a ball query.
#[derive(Debug, Clone, Copy)]
struct Part {
    mass: f64,
    integral: f64,
    mass_err: f64,
    int_err: f64,
    // Monte Carlo variances of the sample means.
    var_m: f64,
    var_i: f64,
    cov: f64,
    evals: usize,
    mass_method: Method,
    int_method: Method,
}

impl Part {
    fn exact(mass: f64, integral: f64) -> Self {
        Self {
            mass,
            integral,
            mass_err: 0.0,
            int_err: 0.0,
            var_m: 0.0,
            var_i: 0.0,
            cov: 0.0,
            evals: 0,
            mass_method: Method::Analytic,
            int_method: Method::Analytic,
        }
    }

    fn quadrature(value: Pair, error: Pair, evals: usize) -> Self {
        Self {
            mass: value[0],
            integral: value[1],
            mass_err: error[0],
            int_err: error[1],
            evals,
            mass_method: Method::Quadrature,
            int_method: Method::Quadrature,
            ..Self::exact(0.0, 0.0)
        }
    }
}

fn combine(parts: &[Part], k: f64, mass_only: bool) -> BallEstimate {
    let mut mass = 0.0;
    let mut integral = 0.0;
    let (mut em, mut ei, mut vm, mut vi, mut cv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut evals = 0;
    let mut method = Method::Analytic;
    for p in parts {
        mass += p.mass;
        integral += p.integral;
        em += p.mass_err;
        ei += p.int_err;
        vm += p.var_m;
        vi += p.var_i;
        cv += p.cov;
        evals += p.evals;
        method = method.weakest(p.mass_method);
        if !mass_only {
            method = method.weakest(p.int_method);
        }
    }
    let avg = if mass > 0.0 { integral / mass } else { 0.0 };
    let stochastic = vm > 0.0 || vi > 0.0;
    let var_avg = if mass > 0.0 { ((vi - 2.0 * avg * cv + avg * avg * vm) / (mass * mass)).max(0.0) } else { 0.0 };
    let average_error = if mass > 0.0 { (ei + avg.abs() * em) / mass + k * var_avg.sqrt() } else { 0.0 };
    let mass_error = em + k * vm.sqrt();
    let int_error = ei + k * vi.sqrt();
    BallEstimate {
        mass,
        integral: if mass_only { 0.0 } else { integral },
        abs_error: if mass_only { mass_error } else { int_error },
        mass_error,
        average_error: if mass_only { 0.0 } else { average_error },
        method,
        samples_used: evals,
        mc_k: if stochastic || method == Method::MonteCarlo { k } else { 0.0 },
    }
}

/// `(R^n, |·|, Σ components)`.
pub struct EuclideanSpace {
    dim: usize,
    components: Vec<Component>,
    descriptor: SpaceDescriptor,
}

impl EuclideanSpace {
    pub fn new(dim: usize, components: Vec<Component>, descriptor: SpaceDescriptor) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(AmvError::Unsupported(format!("ambient dimension {dim}")));
        }
        if components.is_empty() {
            return Err(AmvError::Input("a space needs at least one measure component".into()));
        }
        for c in &components {
            match &c.piece {
                Piece::Whole => {}
                Piece::Boxed { min, max } => {
                    if min.len() != dim || max.len() != dim {
                        return Err(AmvError::DimensionMismatch { expected: dim, got: min.len().min(max.len()) });
                    }
                    if dim > 2 {
                        return Err(AmvError::Unsupported("box components only in dimension 1 or 2".into()));
                    }
                    if min.iter().zip(max).any(|(a, b)| !(a < b)) {
                        return Err(AmvError::Domain(format!("empty box {min:?}..{max:?}")));
                    }
                }
                Piece::Curve(curve) => {
                    if curve.dim() != dim {
                        return Err(AmvError::DimensionMismatch { expected: dim, got: curve.dim() });
                    }
                    let (a, b) = curve.param_range();
                    if !(a < b) || !(curve.length() > 0.0) {
                        return Err(AmvError::Domain(format!("curve with empty support: {curve:?}")));
                    }
                }
                Piece::Atom { point, weight } => {
                    if point.len() != dim {
                        return Err(AmvError::DimensionMismatch { expected: dim, got: point.len() });
                    }
                    if !(*weight > 0.0 && weight.is_finite()) {
                        return Err(AmvError::Input(format!("atom weight must be positive, got {weight}")));
                    }
                }
            }
        }
        Ok(Self { dim, components, descriptor })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Per-component ball masses with the default budget (the summands of
    /// `ball_mass`).
    pub fn component_masses(&self, x: &[f64], r: f64, budget: &EffortBudget) -> Result<Vec<f64>> {
        let one = |_: &[f64]| 1.0;
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| self.part(i, c, x, r, None, &one, budget, self.components.len()).map(|p| p.mass))
            .collect()
    }

    fn closed_form_mass(&self, c: &Component, x: &[f64], r: f64) -> Option<f64> {
        if c.density.is_some() {
            return None;
        }
        match &c.piece {
            Piece::Whole => Some(unit_ball_volume(self.dim) * r.powi(self.dim as i32)),
            Piece::Boxed { min, max } => match self.dim {
                1 => Some(((x[0] + r).min(max[0]) - (x[0] - r).max(min[0])).max(0.0)),
                _ => Some(Rect { min: [min[0], min[1]], max: [max[0], max[1]] }.disk_area(x, r)),
            },
            Piece::Curve(curve @ (Curve::Segment { .. } | Curve::Arc { .. })) => {
                let speed = curve.speed(0.0);
                Some(curve.ball_intervals(x, r).iter().map(|(a, b)| speed * (b - a)).sum())
            }
            Piece::Curve(_) => None,
            Piece::Atom { point, weight } => Some(if norm_diff(point, x) < r { *weight } else { 0.0 }),
        }
    }

    /// One component's contribution. `f = None` means a mass query.
    #[allow(clippy::too_many_arguments)]
    fn part(
        &self,
        idx: usize,
        c: &Component,
        x: &[f64],
        r: f64,
        f: Option<Integrand<'_>>,
        one: Integrand<'_>,
        budget: &EffortBudget,
        share: usize,
    ) -> Result<Part> {
        let share = share.max(1);
        let sub = EffortBudget {
            max_evals: (budget.max_evals / share).max(64),
            target_error: budget.target_error / share as f64,
            ..*budget
        };
        if let Piece::Atom { point, weight } = &c.piece {
            if norm_diff(point, x) < r {
                let v = match f {
                    Some(f) => finite_at(f(point), point)?,
                    None => 0.0,
                };
                return Ok(Part::exact(*weight, weight * v));
            }
            return Ok(Part::exact(0.0, 0.0));
        }
        if f.is_none() && budget.backend == Backend::Auto {
            if let Some(m) = self.closed_form_mass(c, x, r) {
                return Ok(Part::exact(m, 0.0));
            }
        }
        let g = f.unwrap_or(one);
        match budget.backend {
            Backend::Auto => self.quadrature_part(c, x, r, g, &sub),
            Backend::MonteCarlo => self.monte_carlo_part(idx, c, x, r, g, &sub),
        }
    }

    fn quadrature_part(&self, c: &Component, x: &[f64], r: f64, f: Integrand<'_>, b: &EffortBudget) -> Result<Part> {
        let dens = &c.density;
        match (&c.piece, self.dim) {
            (Piece::Whole, 1) => adaptive_1d(&[(x[0] - r, x[0]), (x[0], x[0] + r)], |s| pair_at(dens, f, &[s]), b),
            (Piece::Boxed { min, max }, 1) => {
                let lo = (x[0] - r).max(min[0]);
                let hi = (x[0] + r).min(max[0]);
                if lo >= hi {
                    return Ok(Part::exact(0.0, 0.0));
                }
                let pieces: Vec<(f64, f64)> =
                    if lo < x[0] && x[0] < hi { vec![(lo, x[0]), (x[0], hi)] } else { vec![(lo, hi)] };
                adaptive_1d(&pieces, |s| pair_at(dens, f, &[s]), b)
            }
            (Piece::Whole, 2) => {
                const LEVELS: [(usize, usize); 6] = [(4, 8), (8, 16), (16, 32), (32, 64), (64, 128), (128, 256)];
                p_refine(
                    LEVELS.len(),
                    |k| LEVELS[k].0 * LEVELS[k].1,
                    b,
                    |k| rule_sum(|visit| polar_disk(x, r, LEVELS[k].0, LEVELS[k].1, |p, w| visit(p, w)), dens, f),
                )
            }
            (Piece::Whole, 3) => {
                const LEVELS: [(usize, usize, usize); 5] =
                    [(4, 4, 8), (8, 8, 16), (16, 16, 32), (32, 32, 64), (64, 64, 128)];
                p_refine(
                    LEVELS.len(),
                    |k| LEVELS[k].0 * LEVELS[k].1 * LEVELS[k].2,
                    b,
                    |k| {
                        let (a, bb, cc) = LEVELS[k];
                        rule_sum(|visit| spherical_ball(x, r, a, bb, cc, |p, w| visit(p, w)), dens, f)
                    },
                )
            }
            (Piece::Boxed { min, max }, 2) => {
                let rect = Rect { min: [min[0], min[1]], max: [max[0], max[1]] };
                const LEVELS: [usize; 6] = [4, 8, 16, 32, 64, 128];
                // Up to six panels in the outer angle.
                p_refine(
                    LEVELS.len(),
                    |k| 6 * LEVELS[k] * LEVELS[k],
                    b,
                    |k| rule_sum(|visit| rect.disk_rule(x, r, LEVELS[k], LEVELS[k], |p, w| visit(p, w)), dens, f),
                )
            }
            (Piece::Curve(curve), _) => {
                let ivs = curve.ball_intervals(x, r);
                adaptive_1d(
                    &ivs,
                    |s| {
                        let p = curve.position(s);
                        let w = density_at(dens, &p).map_err(|_| s)? * curve.speed(s);
                        let v = f(&p);
                        if !v.is_finite() {
                            return Err(s);
                        }
                        Ok([w, w * v])
                    },
                    b,
                )
                .map_err(|e| match e {
                    AmvError::Evaluation { node, detail } => {
                        AmvError::Evaluation { node: curve.position(node[0]), detail }
                    }
                    e => e,
                })
            }
            _ => Err(AmvError::Unsupported(format!("{:?} in dimension {}", c.piece, self.dim))),
        }
    }

    fn sampling_box(&self, c: &Component, x: &[f64], r: f64) -> Option<Vec<(f64, f64)>> {
        match &c.piece {
            Piece::Whole => Some(x.iter().map(|&v| (v - r, v + r)).collect()),
            Piece::Boxed { min, max } => {
                let b: Vec<(f64, f64)> =
                    (0..self.dim).map(|i| ((x[i] - r).max(min[i]), (x[i] + r).min(max[i]))).collect();
                b.iter().all(|(a, b)| a < b).then_some(b)
            }
            Piece::Curve(curve) => {
                let ivs = curve.ball_intervals(x, r);
                let lo = ivs.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
                let hi = ivs.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
                (lo < hi).then_some(vec![(lo, hi)])
            }
            Piece::Atom { .. } => None,
        }
    }

    fn monte_carlo_part(
        &self,
        idx: usize,
        c: &Component,
        x: &[f64],
        r: f64,
        f: Integrand<'_>,
        b: &EffortBudget,
    ) -> Result<Part> {
        let Some(bx) = self.sampling_box(c, x, r) else {
            return Ok(Part::exact(0.0, 0.0));
        };
        let vol: f64 = bx.iter().map(|(a, b)| b - a).product();
        let dens = &c.density;
        let draw = |rng: &mut ChaCha8Rng, buf: &mut Vec<f64>| -> Result<(f64, f64)> {
            buf.clear();
            match &c.piece {
                Piece::Curve(curve) => {
                    let s = rng.gen_range(bx[0].0..bx[0].1);
                    let p = curve.position(s);
                    if norm_diff(&p, x) >= r {
                        return Ok((0.0, 0.0));
                    }
                    let a = vol * curve.speed(s) * density_at(dens, &p)?;
                    Ok((a, a * finite_at(f(&p), &p)?))
                }
                _ => {
                    for &(lo, hi) in &bx {
                        buf.push(rng.gen_range(lo..hi));
                    }
                    if norm_diff(buf, x) >= r {
                        return Ok((0.0, 0.0));
                    }
                    let a = vol * density_at(dens, buf)?;
                    Ok((a, a * finite_at(f(buf), buf)?))
                }
            }
        };
        let stats = mc_run(b, idx as u64, draw)?;
        Ok(stats.into_part())
    }
}

/// Running sums of Monte Carlo draws `(a, b)` with `a` a mass sample and `b`
/// an integral sample.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct McSums {
    pub n: usize,
    pub sa: f64,
    pub sb: f64,
    pub saa: f64,
    pub sbb: f64,
    pub sab: f64,
}

impl McSums {
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    pub fn merge(&mut self, o: &McSums) {
        self.n += o.n;
        self.sa += o.sa;
        self.sb += o.sb;
        self.saa += o.saa;
        self.sbb += o.sbb;
        self.sab += o.sab;
    }

    /// (mean a, mean b, var of mean a, var of mean b, cov of means).
    pub fn moments(&self) -> (f64, f64, f64, f64, f64) {
        let n = self.n as f64;
        let ma = self.sa / n;
        let mb = self.sb / n;
        let d = (n - 1.0).max(1.0);
        let va = ((self.saa - n * ma * ma) / d).max(0.0) / n;
        let vb = ((self.sbb - n * mb * mb) / d).max(0.0) / n;
        let cab = (self.sab - n * ma * mb) / d / n;
        (ma, mb, va, vb, cab)
    }

    fn into_part(self) -> Part {
        let (ma, mb, va, vb, cab) = self.moments();
        Part {
            mass: ma,
            integral: mb,
            mass_err: 0.0,
            int_err: 0.0,
            var_m: va,
            var_i: vb,
            cov: cab,
            evals: self.n,
            mass_method: Method::MonteCarlo,
            int_method: Method::MonteCarlo,
        }
    }
}

pub(crate) const MC_CHUNK: usize = 1 << 14;

/// Seeded generator for chunk `chunk` of stream family `family`.
pub(crate) fn chunk_rng(seed: u64, family: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((family << 40) | chunk);
    rng
}

/// Draws up to `budget.max_evals` samples in fixed-size chunks, in parallel,
/// merging in chunk order. Stops early once `k·SE(integral) ≤ target`.
fn mc_run<D>(budget: &EffortBudget, family: u64, draw: D) -> Result<McSums>
where
    D: Fn(&mut ChaCha8Rng, &mut Vec<f64>) -> Result<(f64, f64)> + Sync,
{
    let total = budget.max_evals.max(2);
    let nchunks = total.div_ceil(MC_CHUNK);
    let round = rayon::current_num_threads().max(1) * 4;
    let mut acc = McSums::default();
    let mut next = 0;
    while next < nchunks {
        let end = (next + round).min(nchunks);
        let sums: Vec<Result<McSums>> = (next..end)
            .into_par_iter()
            .map(|ch| {
                let mut rng = chunk_rng(budget.seed, family, ch as u64);
                let len = MC_CHUNK.min(total - ch * MC_CHUNK);
                let mut s = McSums::default();
                let mut buf = Vec::with_capacity(4);
                for _ in 0..len {
                    let (a, b) = draw(&mut rng, &mut buf)?;
                    s.push(a, b);
                }
                Ok(s)
            })
            .collect();
        for s in sums {
            acc.merge(&s?);
        }
        next = end;
        if budget.target_error > 0.0 {
            let (_, _, _, vb, _) = acc.moments();
            if budget.mc_k * vb.sqrt() <= budget.target_error {
                break;
            }
        }
    }
    Ok(acc)
}

fn pair_at(dens: &Option<Density>, f: Integrand<'_>, p: &[f64]) -> std::result::Result<Pair, f64> {
    let w = density_at(dens, p).map_err(|_| p[0])?;
    let v = f(p);
    if v.is_finite() {
        Ok([w, w * v])
    } else {
        Err(p[0])
    }
}

/// Adaptive Gauss–Kronrod over a list of parameter intervals. An `Err(s)`
/// from the integrand becomes an evaluation error at parameter `s`.
fn adaptive_1d<F>(ivs: &[(f64, f64)], mut g: F, b: &EffortBudget) -> Result<Part>
where
    F: FnMut(f64) -> std::result::Result<Pair, f64>,
{
    let m = ivs.len().max(1);
    let mut value = [0.0; 2];
    let mut error = [0.0; 2];
    let mut evals = 0;
    for &(lo, hi) in ivs {
        let res = adaptive_pair(&mut g, lo, hi, b.target_error / m as f64, (b.max_evals / m).max(15))
            .map_err(|s| AmvError::Evaluation { node: vec![s], detail: "non-finite integrand or density".into() })?;
        for k in 0..2 {
            value[k] += res.value[k];
            error[k] += res.error[k];
        }
        evals += res.evals;
    }
    Ok(Part::quadrature(value, error, evals))
}

/// Sums a node rule as `[Σ w ρ, Σ w ρ f]`, rejecting non-finite values.
fn rule_sum<R>(rule: R, dens: &Option<Density>, f: Integrand<'_>) -> Result<(Pair, usize)>
where
    R: FnOnce(&mut dyn FnMut(&[f64], f64)),
{
    let mut s = [0.0; 2];
    let mut n = 0;
    let mut bad: Option<AmvError> = None;
    rule(&mut |p: &[f64], w: f64| {
        n += 1;
        if bad.is_some() {
            return;
        }
        let rho = match density_at(dens, p) {
            Ok(v) => v,
            Err(e) => {
                bad = Some(e);
                return;
            }
        };
        let v = f(p);
        if !v.is_finite() {
            bad = Some(AmvError::Evaluation { node: p.to_vec(), detail: format!("integrand value {v}") });
            return;
        }
        s[0] += w * rho;
        s[1] += w * rho * v;
    });
    match bad {
        Some(e) => Err(e),
        None => Ok((s, n)),
    }
}

/// Evaluates successively finer rules until two consecutive levels agree to
/// the target or the budget runs out; the error is the last difference.
fn p_refine<F>(levels: usize, cost: impl Fn(usize) -> usize, b: &EffortBudget, mut run: F) -> Result<Part>
where
    F: FnMut(usize) -> Result<(Pair, usize)>,
{
    let (mut prev, n0) = run(0)?;
    let (mut cur, n1) = run(1)?;
    let mut evals = n0 + n1;
    let mut k = 1;
    loop {
        let err = [(cur[0] - prev[0]).abs(), (cur[1] - prev[1]).abs()];
        let ratio = if cur[0] != 0.0 { (cur[1] / cur[0]).abs() } else { 0.0 };
        let done = err[1] + ratio * err[0] <= b.target_error;
        if done || k + 1 >= levels || evals + cost(k + 1) > b.max_evals {
            return Ok(Part::quadrature(cur, err, evals));
        }
        k += 1;
        prev = cur;
        let (next, n) = run(k)?;
        cur = next;
        evals += n;
    }
}

impl MetricMeasureSpace for EuclideanSpace {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn descriptor(&self) -> SpaceDescriptor {
        self.descriptor.clone()
    }

    fn distance_unchecked(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        Ok(norm_diff(p, q))
    }

    fn in_support(&self, p: &[f64]) -> bool {
        self.components.iter().any(|c| c.contains(p))
    }

    fn mass_unchecked(&self, x: &[f64], r: f64, budget: &EffortBudget) -> Result<BallEstimate> {
        let one = |_: &[f64]| 1.0;
        let n = self.components.len();
        let parts = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| self.part(i, c, x, r, None, &one, budget, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine(&parts, budget.mc_k, true))
    }

    fn integrate_unchecked(&self, x: &[f64], r: f64, f: Integrand<'_>, budget: &EffortBudget) -> Result<BallEstimate> {
        let one = |_: &[f64]| 1.0;
        let n = self.components.len();
        let parts = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| self.part(i, c, x, r, Some(f), &one, budget, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine(&parts, budget.mc_k, false))
    }

    fn cloud_unchecked(&self, region: &RegionSpec, resolution: usize, seed: u64) -> Result<Vec<Atom>> {
        let (lo, hi) = match &region.bounds {
            Bounds::Box { min, max } => (min.clone(), max.clone()),
            Bounds::Whole => self
                .compact_hull()
                .ok_or_else(|| AmvError::Domain("the whole support is unbounded; give a box region".into()))?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms = Vec::new();
        for c in &self.components {
            match &c.piece {
                Piece::Whole => grid_atoms(&lo, &hi, resolution, region.jitter, &c.density, &mut rng, &mut atoms)?,
                Piece::Boxed { min, max } => {
                    let a: Vec<f64> = lo.iter().zip(min).map(|(u, v)| u.max(*v)).collect();
                    let b: Vec<f64> = hi.iter().zip(max).map(|(u, v)| u.min(*v)).collect();
                    if a.iter().zip(&b).all(|(u, v)| u < v) {
                        grid_atoms(&a, &b, resolution, region.jitter, &c.density, &mut rng, &mut atoms)?;
                    }
                }
                Piece::Curve(curve) => {
                    let (s0, s1) = curve.param_range();
                    let h = (s1 - s0) / resolution as f64;
                    for k in 0..resolution {
                        let s = s0 + (k as f64 + 0.5 + region.jitter * (rng.gen::<f64>() - 0.5)) * h;
                        let p = curve.position(s);
                        if !region.contains(&p) {
                            continue;
                        }
                        let w = h * curve.speed(s) * density_at(&c.density, &p)?;
                        if w > 0.0 {
                            atoms.push(Atom { point: p, weight: w });
                        }
                    }
                }
                Piece::Atom { point, weight } => {
                    if region.contains(point) {
                        atoms.push(Atom { point: point.clone(), weight: *weight });
                    }
                }
            }
        }
        Ok(atoms)
    }

    fn coordinate_reach(&self, r: f64) -> Option<Vec<f64>> {
        Some(vec![r; self.dim])
    }

    fn region_mass(&self, region: &RegionSpec) -> Option<f64> {
        let Bounds::Box { min: lo, max: hi } = &region.bounds else {
            return None;
        };
        let mut total = 0.0;
        for c in &self.components {
            total += match &c.piece {
                Piece::Whole => box_mass(lo, hi, &c.density)?,
                Piece::Boxed { min, max } => {
                    let a: Vec<f64> = lo.iter().zip(min).map(|(u, v)| u.max(*v)).collect();
                    let b: Vec<f64> = hi.iter().zip(max).map(|(u, v)| u.min(*v)).collect();
                    if a.iter().zip(&b).all(|(u, v)| u < v) {
                        box_mass(&a, &b, &c.density)?
                    } else {
                        0.0
                    }
                }
                Piece::Curve(Curve::Segment { from, to }) if c.density.is_none() => {
                    // Clip the segment parameter to the box, slab by slab.
                    let (mut s0, mut s1) = (0.0f64, 1.0f64);
                    for i in 0..self.dim {
                        let d = to[i] - from[i];
                        if d == 0.0 {
                            if from[i] < lo[i] || from[i] > hi[i] {
                                return Some(total);
                            }
                            continue;
                        }
                        let (a, b) = ((lo[i] - from[i]) / d, (hi[i] - from[i]) / d);
                        s0 = s0.max(a.min(b));
                        s1 = s1.min(a.max(b));
                    }
                    (s1 - s0).max(0.0) * norm_diff(from, to)
                }
                Piece::Curve(_) => return None,
                Piece::Atom { point, weight } => {
                    if region.contains(point) {
                        *weight
                    } else {
                        0.0
                    }
                }
            };
        }
        Some(total)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

impl EuclideanSpace {
    /// Bounding box of the support when no component is unbounded.
    fn compact_hull(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        let mut grow = |p: &[f64]| {
            for i in 0..p.len() {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        };
        for c in &self.components {
            match &c.piece {
                Piece::Whole => return None,
                Piece::Boxed { min, max } => {
                    grow(min);
                    grow(max);
                }
                Piece::Curve(curve) => {
                    let (s0, s1) = curve.param_range();
                    for k in 0..=256 {
                        grow(&curve.position(s0 + (s1 - s0) * k as f64 / 256.0));
                    }
                }
                Piece::Atom { point, .. } => grow(point),
            }
        }
        // Widen degenerate axes (e.g. a horizontal segment) so the box is nonempty.
        for i in 0..self.dim {
            if hi[i] - lo[i] < 1e-9 {
                lo[i] -= 0.5e-9;
                hi[i] += 0.5e-9;
            }
        }
        Some((lo, hi))
    }
}

/// Tensor Gauss–Legendre mass of a box; exact for polynomial densities of
/// degree ≤ 63 per variable.
fn box_mass(lo: &[f64], hi: &[f64], dens: &Option<Density>) -> Option<f64> {
    let Some(d) = dens else {
        return Some(lo.iter().zip(hi).map(|(a, b)| b - a).product());
    };
    let n = 32;
    let mut total = 0.0;
    let mut p = vec![0.0; lo.len()];
    #[allow(clippy::too_many_arguments)]
    fn rec(i: usize, lo: &[f64], hi: &[f64], n: usize, p: &mut Vec<f64>, w: f64, d: &Density, total: &mut f64) {
        if i == lo.len() {
            *total += w * d.field.value(p);
            return;
        }
        gauss_interval(lo[i], hi[i], n, |s, ws| {
            p[i] = s;
            rec(i + 1, lo, hi, n, p, w * ws, d, total);
        });
    }
    rec(0, lo, hi, n, &mut p, 1.0, d, &mut total);
    total.is_finite().then_some(total)
}

/// Midpoint grid with `m` cells per axis, weights = density × cell volume.
fn grid_atoms(
    lo: &[f64],
    hi: &[f64],
    m: usize,
    jitter: f64,
    dens: &Option<Density>,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Atom>,
) -> Result<()> {
    let n = lo.len();
    let h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / m as f64).collect();
    let cell: f64 = h.iter().product();
    let total = m
        .checked_pow(n as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| AmvError::Input(format!("resolution {m} in dimension {n} is too large")))?;
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let p: Vec<f64> = (0..n)
            .map(|i| {
                let off = if jitter > 0.0 { jitter * (rng.gen::<f64>() - 0.5) } else { 0.0 };
                lo[i] + (idx[i] as f64 + 0.5 + off) * h[i]
            })
            .collect();
        let w = cell * density_at(dens, &p)?;
        if w > 0.0 {
            out.push(Atom { point: p, weight: w });
        }
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < m {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ball_integrate_fn, ball_mass};
    use std::f64::consts::PI;

    fn space(dim: usize, comps: Vec<Component>) -> EuclideanSpace {
        EuclideanSpace::new(dim, comps, SpaceDescriptor::Euclidean { dim }).unwrap()
    }

    #[test]
    fn lebesgue_masses_are_closed_form() {
        let b = EffortBudget::default();
        for (n, v) in [(1, 2.0), (2, PI), (3, 4.0 * PI / 3.0)] {
            let s = space(n, vec![Component::whole(None)]);
            let e = ball_mass(&s, &vec![0.3; n], 0.5, &b).unwrap();
            assert_eq!(e.method, Method::Analytic);
            assert!((e.mass - v * 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn one_dimensional_square_average() {
        let s = space(1, vec![Component::whole(None)]);
        let f = |p: &[f64]| p[0] * p[0];
        let e = ball_integrate_fn(&s, &[0.0], 0.3, &f, &EffortBudget::default()).unwrap();
        assert!((e.integral - 2.0 * 0.027 / 3.0).abs() < 1e-16);
        assert!((e.average() - 0.03).abs() < 1e-16);
    }

    #[test]
    fn constant_average_is_exact() {
        let d = Density::parse("(x+y)^2 + 0.1").unwrap();
        let s = space(2, vec![Component::whole(Some(d)), Component::atom(vec![0.0, 0.0], 1.0)]);
        let one = |_: &[f64]| 1.0;
        let e = ball_integrate_fn(&s, &[0.1, 0.05], 0.4, &one, &EffortBudget::default()).unwrap();
        assert_eq!(e.integral, e.mass);
    }

    #[test]
    fn weighted_disk_mass() {
        let d = Density::parse("(x+y)^2").unwrap();
        let s = space(2, vec![Component::whole(Some(d))]);
        let e = ball_mass(&s, &[0.0, 0.0], 0.7, &EffortBudget::default()).unwrap();
        assert!((e.mass - PI * 0.7f64.powi(4) / 2.0).abs() < 1e-14);
        assert_eq!(e.method, Method::Quadrature);
    }

    #[test]
    fn three_rays_have_mass_3r() {
        let rays: Vec<Component> = (0..3)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / 3.0;
                Component::curve(Curve::Segment { from: vec![0.0, 0.0], to: vec![th.cos(), th.sin()] }, None)
            })
            .collect();
        let s = space(2, rays);
        let e = ball_mass(&s, &[0.0, 0.0], 0.25, &EffortBudget::default()).unwrap();
        assert!((e.mass - 0.75).abs() < 1e-15);
    }

    #[test]
    fn non_finite_integrand_names_node() {
        let s = space(2, vec![Component::whole(None)]);
        let f = |p: &[f64]| 1.0 / (p[0] - 0.1);
        // Node exactly on a polar ray: centre shifted so ρ cos θ = 0.1 at some node is unlikely;
        // use a guaranteed blow-up instead.
        let g = |p: &[f64]| if p[1] > 0.0 { f64::NAN } else { f(p) };
        let err = ball_integrate_fn(&s, &[0.0, 0.0], 0.5, &g, &EffortBudget::default()).unwrap_err();
        match err {
            AmvError::Evaluation { node, .. } => assert!(node[1] > 0.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let d = Density::parse("1 + x*y").unwrap();
        let s = space(2, vec![Component::whole(Some(d)), Component::atom(vec![0.0, 0.0], 0.5)]);
        let auto = ball_mass(&s, &[0.0, 0.0], 0.5, &EffortBudget::default()).unwrap();
        let mc = ball_mass(&s, &[0.0, 0.0], 0.5, &EffortBudget::monte_carlo(200_000, 11)).unwrap();
        assert_eq!(mc.method, Method::MonteCarlo);
        assert_eq!(mc.mc_k, 3.0);
        assert!((auto.mass - mc.mass).abs() <= mc.mass_error, "{} vs {} ± {}", auto.mass, mc.mass, mc.mass_error);
        let again = ball_mass(&s, &[0.0, 0.0], 0.5, &EffortBudget::monte_carlo(200_000, 11)).unwrap();
        assert_eq!(mc.mass.to_bits(), again.mass.to_bits());
    }

    #[test]
    fn unit_grid_cloud() {
        let s: crate::space::SpaceHandle = Arc::new(space(1, vec![Component::whole(None)]));
        let c = crate::space::make_atom_cloud(&s, &RegionSpec::boxed([0.0], [1.0]), 100, 0).unwrap();
        assert_eq!(c.len(), 100);
        assert!(c.atoms.iter().all(|a| (a.weight - 0.01).abs() < 1e-17));
        assert!((c.atoms[0].point[0] - 0.005).abs() < 1e-17);
        assert_eq!(c.seed, None);
    }
}
