//! Concrete spaces: Euclidean, weighted and Dirac-augmented Lebesgue,
//! Heisenberg, stratified complexes and embedded curves.

pub mod euclid;
pub mod geometry;
pub mod heisenberg;

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AmvError, Result};
use crate::field::{directional_derivative, ScalarField};
use crate::space::{ball_mass, EffortBudget, SpaceHandle};

pub use euclid::{Component, Density, EuclideanSpace, Piece};
pub use geometry::{Curve, Rect};
pub use heisenberg::{cc_distance, cc_norm, kohn_laplacian, HeisenbergConstants, HeisenbergSpace};

/// Machine-readable identity of a space; also the `space` entry of CLI configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceDescriptor {
    Euclidean {
        dim: usize,
    },
    Weighted {
        dim: usize,
        density: String,
        #[serde(default)]
        zero_set_hint: Option<String>,
        #[serde(default)]
        regularity: Regularity,
    },
    LebesgueDirac {
        dim: usize,
    },
    Heisenberg,
    Stratified {
        strata: Vec<StratumDescriptor>,
    },
    Submanifold {
        spec: SubmanifoldSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    #[default]
    C1,
    Measurable,
}

/// A density `w ≥ 0` for weighted Lebesgue measure.
#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub density: Density,
    pub zero_set_hint: Option<String>,
    pub regularity: Regularity,
}

impl WeightSpec {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(Self { density: Density::parse(src)?, zero_set_hint: None, regularity: Regularity::C1 })
    }

    pub fn with_zero_set(mut self, hint: impl Into<String>) -> Self {
        self.zero_set_hint = Some(hint.into());
        self
    }
}

/// Geometric carrier of a stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Segment { from: Vec<f64>, to: Vec<f64> },
    Arc { center: [f64; 2], radius: f64, start: f64, sweep: f64 },
    Graph { coeffs: Vec<f64>, x0: f64, x1: f64 },
    Interval { a: f64, b: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2] },
    Point { at: Vec<f64>, weight: f64 },
}

impl Support {
    pub fn dim(&self) -> usize {
        match self {
            Support::Segment { from, .. } => from.len(),
            Support::Interval { .. } => 1,
            Support::Point { at, .. } => at.len(),
            _ => 2,
        }
    }

    /// Natural Ahlfors dimension of the carrier.
    pub fn natural_dim(&self) -> f64 {
        match self {
            Support::Segment { .. } | Support::Arc { .. } | Support::Graph { .. } | Support::Interval { .. } => 1.0,
            Support::Rectangle { .. } => 2.0,
            Support::Point { .. } => 0.0,
        }
    }

    pub fn curve(&self) -> Option<Curve> {
        match self {
            Support::Segment { from, to } => Some(Curve::Segment { from: from.clone(), to: to.clone() }),
            Support::Arc { center, radius, start, sweep } => {
                Some(Curve::Arc { center: *center, radius: *radius, start: *start, sweep: *sweep })
            }
            Support::Graph { coeffs, x0, x1 } => Some(Curve::Graph { coeffs: coeffs.clone(), x0: *x0, x1: *x1 }),
            _ => None,
        }
    }
}

/// Serializable form of a [`Stratum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDescriptor {
    pub support: Support,
    #[serde(default)]
    pub density: Option<String>,
    #[serde(default)]
    pub ahlfors_dim: Option<f64>,
    #[serde(default)]
    pub ahlfors_constants: Option<[f64; 2]>,
}

/// One summand `μ_j` of a stratified measure.
#[derive(Debug, Clone)]
pub struct Stratum {
    pub support: Support,
    pub density: Option<Density>,
    pub ahlfors_dim: f64,
    /// `(c, C)` with `c r^Q ≤ μ_j(B_r(x)) ≤ C r^Q` on the support for small `r`.
    pub ahlfors_constants: Option<(f64, f64)>,
}

impl Stratum {
    pub fn new(support: Support) -> Self {
        let q = support.natural_dim();
        Self { support, density: None, ahlfors_dim: q, ahlfors_constants: None }
    }

    pub fn segment(from: impl Into<Vec<f64>>, to: impl Into<Vec<f64>>) -> Self {
        Self::new(Support::Segment { from: from.into(), to: to.into() })
    }

    /// Planar ray of the given length leaving `origin` at angle `angle`.
    pub fn ray(origin: [f64; 2], angle: f64, length: f64) -> Self {
        let to = vec![origin[0] + length * angle.cos(), origin[1] + length * angle.sin()];
        Self::segment(origin.to_vec(), to)
    }

    pub fn rectangle(min: [f64; 2], max: [f64; 2]) -> Self {
        Self::new(Support::Rectangle { min, max })
    }

    pub fn point(at: impl Into<Vec<f64>>, weight: f64) -> Self {
        Self::new(Support::Point { at: at.into(), weight })
    }

    pub fn with_density(mut self, d: Density) -> Self {
        self.density = Some(d);
        self
    }

    pub fn with_ahlfors(mut self, q: f64, c: f64, big_c: f64) -> Self {
        self.ahlfors_dim = q;
        self.ahlfors_constants = Some((c, big_c));
        self
    }

    pub fn descriptor(&self) -> StratumDescriptor {
        StratumDescriptor {
            support: self.support.clone(),
            density: self.density.as_ref().map(|d| d.label.clone()),
            ahlfors_dim: Some(self.ahlfors_dim),
            ahlfors_constants: self.ahlfors_constants.map(|(a, b)| [a, b]),
        }
    }

    pub fn from_descriptor(d: &StratumDescriptor) -> Result<Self> {
        let mut s = Self::new(d.support.clone());
        if let Some(src) = &d.density {
            s.density = Some(Density::parse(src)?);
        }
        if let Some(q) = d.ahlfors_dim {
            s.ahlfors_dim = q;
        }
        s.ahlfors_constants = d.ahlfors_constants.map(|[a, b]| (a, b));
        Ok(s)
    }

    fn component(&self) -> Component {
        match &self.support {
            Support::Interval { a, b } => Component::boxed(vec![*a], vec![*b], self.density.clone()),
            Support::Rectangle { min, max } => Component::boxed(min.to_vec(), max.to_vec(), self.density.clone()),
            Support::Point { at, weight } => Component::atom(at.clone(), *weight),
            other => Component::curve(other.curve().expect("curve support"), self.density.clone()),
        }
    }

    /// Outgoing unit tangents of a curve stratum at `vertex` (empty when the
    /// vertex is not an endpoint).
    pub fn directions_at(&self, vertex: &[f64]) -> Vec<Vec<f64>> {
        let Some(c) = self.support.curve() else {
            return Vec::new();
        };
        let (s0, s1) = c.param_range();
        let mut out = Vec::new();
        if geometry::norm_diff(&c.position(s0), vertex) <= 1e-12 {
            out.push(c.tangent(s0));
        }
        if geometry::norm_diff(&c.position(s1), vertex) <= 1e-12 {
            out.push(c.tangent(s1).iter().map(|v| -v).collect());
        }
        out
    }

    /// Checks `c r^Q ≤ μ_j(B_r(x)) ≤ C r^Q` at the given centres and radii.
    /// Returns the extreme ratios `μ_j(B_r(x)) / r^Q` seen.
    pub fn ahlfors_ratios(&self, centers: &[Vec<f64>], radii: &[f64]) -> Result<(f64, f64)> {
        let dim = self.support.dim();
        let sp = EuclideanSpace::new(
            dim,
            vec![self.component()],
            SpaceDescriptor::Stratified { strata: vec![self.descriptor()] },
        )?;
        let budget = EffortBudget::default();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for x in centers {
            for &r in radii {
                let m = ball_mass(&sp, x, r, &budget)?.mass;
                let q = m / r.powf(self.ahlfors_dim);
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        Ok((lo, hi))
    }
}

/// Every outgoing curve direction at `vertex`, stratum by stratum.
pub fn vertex_directions(strata: &[Stratum], vertex: &[f64]) -> Vec<Vec<f64>> {
    strata.iter().flat_map(|s| s.directions_at(vertex)).collect()
}

/// `Σ_i ∂_{τ_i} u(vertex)` over the outgoing curve directions, from the
/// field's gradient oracle.
pub fn kirchhoff_sum(strata: &[Stratum], u: &dyn ScalarField, vertex: &[f64]) -> Option<f64> {
    let dirs = vertex_directions(strata, vertex);
    let mut s = 0.0;
    for d in &dirs {
        s += directional_derivative(u, vertex, d)?;
    }
    Some(s)
}

/// Embedded curve kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubmanifoldKind {
    Circle {
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    GraphCurve {
        coeffs: Vec<f64>,
        x0: f64,
        x1: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    /// Norm of the second fundamental form.
    pub second_fundamental: f64,
    /// Norm of the mean curvature vector.
    pub mean: f64,
    /// Scalar curvature.
    pub scalar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmanifoldSpec {
    pub kind: SubmanifoldKind,
    #[serde(default = "one")]
    pub intrinsic_dim: usize,
    #[serde(default)]
    pub analytic_curvature: Option<Curvature>,
}

fn one() -> usize {
    1
}

impl SubmanifoldSpec {
    pub fn circle(radius: f64) -> Self {
        let k = 1.0 / radius;
        Self {
            kind: SubmanifoldKind::Circle { radius, center: [0.0, 0.0] },
            intrinsic_dim: 1,
            analytic_curvature: Some(Curvature { second_fundamental: k, mean: k, scalar: 0.0 }),
        }
    }

    pub fn segment(from: impl Into<Vec<f64>>, to: impl Into<Vec<f64>>) -> Self {
        Self {
            kind: SubmanifoldKind::Segment { from: from.into(), to: to.into() },
            intrinsic_dim: 1,
            analytic_curvature: Some(Curvature { second_fundamental: 0.0, mean: 0.0, scalar: 0.0 }),
        }
    }

    pub fn curve(&self) -> Curve {
        match &self.kind {
            SubmanifoldKind::Circle { radius, center } => {
                Curve::Arc { center: *center, radius: *radius, start: 0.0, sweep: TAU }
            }
            SubmanifoldKind::Segment { from, to } => Curve::Segment { from: from.clone(), to: to.clone() },
            SubmanifoldKind::GraphCurve { coeffs, x0, x1 } => Curve::Graph { coeffs: coeffs.clone(), x0: *x0, x1: *x1 },
        }
    }

    /// `ω_m r^m (1 + (2‖II‖² − ‖H‖²) r² / (8(m+2)))`, the small-radius
    /// expansion of the extrinsic ball measure.
    pub fn extrinsic_mass_expansion(&self, r: f64) -> Option<f64> {
        let k = self.analytic_curvature?;
        let m = self.intrinsic_dim as f64;
        let coef = (2.0 * k.second_fundamental.powi(2) - k.mean.powi(2)) / (8.0 * (m + 2.0));
        Some(2.0 * r * (1.0 + coef * r * r))
    }

    /// Arclength of the intrinsic (geodesic) ball of radius `r` around an
    /// interior point; `2r` until the ball wraps or reaches an end.
    pub fn intrinsic_ball_mass(&self, r: f64) -> f64 {
        let len = self.curve().length();
        match self.kind {
            SubmanifoldKind::Circle { .. } => (2.0 * r).min(len),
            _ => 2.0 * r,
        }
    }
}

/// `(R^n, |·|, L^n)`.
pub fn euclidean_lebesgue(n: usize) -> Result<SpaceHandle> {
    check_dim(n)?;
    Ok(Arc::new(EuclideanSpace::new(n, vec![Component::whole(None)], SpaceDescriptor::Euclidean { dim: n })?))
}

/// `(R^n, |·|, w L^n)`. Samples `w` on a grid of `[−4, 4]^n` and rejects
/// negative values.
pub fn weighted_lebesgue(n: usize, w: WeightSpec) -> Result<SpaceHandle> {
    check_dim(n)?;
    let m: usize = match n {
        1 => 401,
        2 => 81,
        _ => 21,
    };
    let mut idx = vec![0usize; n];
    for _ in 0..m.pow(n as u32) {
        let p: Vec<f64> = idx.iter().map(|&i| -4.0 + 8.0 * i as f64 / (m - 1) as f64).collect();
        let v = w.density.field.value(&p);
        if v < 0.0 || v.is_nan() {
            return Err(AmvError::Domain(format!("density {} is {v} at {p:?}", w.density.label)));
        }
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < m {
                break;
            }
            idx[i] = 0;
        }
    }
    let desc = SpaceDescriptor::Weighted {
        dim: n,
        density: w.density.label.clone(),
        zero_set_hint: w.zero_set_hint.clone(),
        regularity: w.regularity,
    };
    Ok(Arc::new(EuclideanSpace::new(n, vec![Component::whole(Some(w.density))], desc)?))
}

/// `(R^n, |·|, L^n + δ_o)`.
pub fn lebesgue_plus_dirac(n: usize) -> Result<SpaceHandle> {
    check_dim(n)?;
    let comps = vec![Component::whole(None), Component::atom(vec![0.0; n], 1.0)];
    Ok(Arc::new(EuclideanSpace::new(n, comps, SpaceDescriptor::LebesgueDirac { dim: n })?))
}

pub fn heisenberg_cc() -> SpaceHandle {
    Arc::new(HeisenbergSpace::new())
}

/// `μ = Σ_j μ_j` on the strata's common ambient space.
pub fn stratified_complex(strata: Vec<Stratum>) -> Result<SpaceHandle> {
    let Some(first) = strata.first() else {
        return Err(AmvError::Input("a stratified complex needs at least one stratum".into()));
    };
    let dim = first.support.dim();
    for s in &strata {
        if s.support.dim() != dim {
            return Err(AmvError::DimensionMismatch { expected: dim, got: s.support.dim() });
        }
        if !(s.ahlfors_dim >= 0.0) {
            return Err(AmvError::Input(format!("Ahlfors dimension must be nonnegative, got {}", s.ahlfors_dim)));
        }
    }
    let comps = strata.iter().map(Stratum::component).collect();
    let desc = SpaceDescriptor::Stratified { strata: strata.iter().map(Stratum::descriptor).collect() };
    Ok(Arc::new(EuclideanSpace::new(dim, comps, desc)?))
}

/// `(R^n, |·|, H^m ⌞ M)` with extrinsic balls.
pub fn embedded_submanifold(spec: SubmanifoldSpec) -> Result<SpaceHandle> {
    if spec.intrinsic_dim != 1 {
        return Err(AmvError::Unsupported(format!("intrinsic dimension {} (only curves)", spec.intrinsic_dim)));
    }
    if let SubmanifoldKind::Circle { radius, .. } = spec.kind {
        if !(radius > 0.0) {
            return Err(AmvError::Domain(format!("circle radius must be positive, got {radius}")));
        }
    }
    let curve = spec.curve();
    let dim = curve.dim();
    Ok(Arc::new(EuclideanSpace::new(dim, vec![Component::curve(curve, None)], SpaceDescriptor::Submanifold { spec })?))
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(AmvError::Unsupported(format!("dimension {n}; built-in spaces have n ∈ {{1, 2, 3}}")))
    }
}

/// Rebuilds a space from its descriptor.
pub fn build_space(d: &SpaceDescriptor) -> Result<SpaceHandle> {
    match d {
        SpaceDescriptor::Euclidean { dim } => euclidean_lebesgue(*dim),
        SpaceDescriptor::Weighted { dim, density, zero_set_hint, regularity } => weighted_lebesgue(
            *dim,
            WeightSpec {
                density: Density::parse(density)?,
                zero_set_hint: zero_set_hint.clone(),
                regularity: *regularity,
            },
        ),
        SpaceDescriptor::LebesgueDirac { dim } => lebesgue_plus_dirac(*dim),
        SpaceDescriptor::Heisenberg => Ok(heisenberg_cc()),
        SpaceDescriptor::Stratified { strata } => {
            stratified_complex(strata.iter().map(Stratum::from_descriptor).collect::<Result<_>>()?)
        }
        SpaceDescriptor::Submanifold { spec } => embedded_submanifold(spec.clone()),
    }
}

/// The two strata of the segment-plus-half-square complex: `L = [0,1]×{0}`
/// and `S = [−1,0]×[−1/2,1/2]`, with optional densities.
pub fn segment_square_strata(segment_density: Option<&str>, square_density: Option<&str>) -> Result<Vec<Stratum>> {
    let mut l = Stratum::segment([0.0, 0.0], [1.0, 0.0]);
    if let Some(d) = segment_density {
        l = l.with_density(Density::parse(d)?);
    }
    let mut s = Stratum::rectangle([-1.0, -0.5], [0.0, 0.5]);
    if let Some(d) = square_density {
        s = s.with_density(Density::parse(d)?);
    }
    Ok(vec![l, s])
}

/// `l` unit rays from the origin at the given angles.
pub fn ray_strata(angles: &[f64]) -> Vec<Stratum> {
    angles.iter().map(|&a| Stratum::ray([0.0, 0.0], a, 1.0)).collect()
}

/// Angles of `l` equally spaced rays.
pub fn equiangular(l: usize) -> Vec<f64> {
    (0..l).map(|k| 2.0 * PI * k as f64 / l as f64).collect()
}
