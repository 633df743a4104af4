//! Pointwise scalar fields on the ambient chart.
//!
//! A field always evaluates; gradient and Hessian oracles are optional and are
//! only consulted by verification code. Hessians are row-major `n × n`.

mod expr;
mod poly;

use std::fmt;
use std::sync::Arc;

pub use expr::{Expr, Node};
pub use poly::{Monomial, Polynomial};

pub trait ScalarField: Send + Sync {
    fn value(&self, p: &[f64]) -> f64;

    fn gradient(&self, _p: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn hessian(&self, _p: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Scale of the terms that are summed to produce `value(p)`. Used to size
    /// roundoff floors; defaults to `|value(p)|`.
    fn magnitude(&self, p: &[f64]) -> f64 {
        self.value(p).abs()
    }

    fn describe(&self) -> String {
        "custom".to_string()
    }
}

pub type Field = Arc<dyn ScalarField>;

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.describe())
    }
}

/// Trace of the Hessian, when available.
pub fn laplacian(field: &dyn ScalarField, p: &[f64]) -> Option<f64> {
    let n = p.len();
    field.hessian(p).map(|h| (0..n).map(|i| h[i * n + i]).sum())
}

/// First derivative along `dir` (not normalized).
pub fn directional_derivative(field: &dyn ScalarField, p: &[f64], dir: &[f64]) -> Option<f64> {
    field.gradient(p).map(|g| g.iter().zip(dir).map(|(a, b)| a * b).sum())
}

/// Second derivative along `dir`: dirᵀ H dir.
pub fn second_directional_derivative(field: &dyn ScalarField, p: &[f64], dir: &[f64]) -> Option<f64> {
    let n = p.len();
    field.hessian(p).map(|h| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += dir[i] * h[i * n + j] * dir[j];
            }
        }
        s
    })
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Closure-backed field with optional derivative closures.
pub struct FnField {
    value: Box<ValueFn>,
    gradient: Option<Box<VecFn>>,
    hessian: Option<Box<VecFn>>,
    name: String,
}

impl FnField {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Box::new(f), gradient: None, hessian: None, name: name.into() }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }

    pub fn into_field(self) -> Field {
        Arc::new(self)
    }
}

impl ScalarField for FnField {
    fn value(&self, p: &[f64]) -> f64 {
        (self.value)(p)
    }
    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(p))
    }
    fn hessian(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.hessian.as_ref().map(|h| h(p))
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn value(&self, _p: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; p.len()])
    }
    fn hessian(&self, p: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; p.len() * p.len()])
    }
    fn describe(&self) -> String {
        format!("{}", self.0)
    }
}

/// `base` everywhere except at one point, where the value is overridden.
///
/// Models functions whose value at a point differs from their Lebesgue-point
/// value there. Derivative oracles are not forwarded.
pub struct WithPointValue {
    pub base: Field,
    pub point: Vec<f64>,
    pub value: f64,
}

impl ScalarField for WithPointValue {
    fn value(&self, p: &[f64]) -> f64 {
        if p == self.point.as_slice() {
            self.value
        } else {
            self.base.value(p)
        }
    }
    fn magnitude(&self, p: &[f64]) -> f64 {
        if p == self.point.as_slice() {
            self.value.abs()
        } else {
            self.base.magnitude(p)
        }
    }
    fn describe(&self) -> String {
        format!("{} with value {} at {:?}", self.base.describe(), self.value, self.point)
    }
}

/// `a·f + b·g`, with derivatives when both parts provide them.
pub struct LinearCombination {
    pub a: f64,
    pub f: Field,
    pub b: f64,
    pub g: Field,
}

impl ScalarField for LinearCombination {
    fn value(&self, p: &[f64]) -> f64 {
        self.a * self.f.value(p) + self.b * self.g.value(p)
    }
    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        let (gf, gg) = (self.f.gradient(p)?, self.g.gradient(p)?);
        Some(gf.iter().zip(&gg).map(|(x, y)| self.a * x + self.b * y).collect())
    }
    fn hessian(&self, p: &[f64]) -> Option<Vec<f64>> {
        let (hf, hg) = (self.f.hessian(p)?, self.g.hessian(p)?);
        Some(hf.iter().zip(&hg).map(|(x, y)| self.a * x + self.b * y).collect())
    }
    fn magnitude(&self, p: &[f64]) -> f64 {
        self.a.abs() * self.f.magnitude(p) + self.b.abs() * self.g.magnitude(p)
    }
    fn describe(&self) -> String {
        format!("{}*({}) + {}*({})", self.a, self.f.describe(), self.b, self.g.describe())
    }
}
