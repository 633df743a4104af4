use rand::Rng;

use super::ScalarField;

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exps: Vec<u32>,
}

/// Multivariate polynomial in monomial form with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

fn ipow(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Self {
        assert!(terms.iter().all(|t| t.exps.len() == dim), "monomial arity must equal dim");
        Self { dim, terms }
    }

    pub fn from_terms(dim: usize, terms: &[(f64, &[u32])]) -> Self {
        Self::new(dim, terms.iter().map(|(c, e)| Monomial { coef: *c, exps: e.to_vec() }).collect())
    }

    /// Every monomial of total degree ≤ `degree`, coefficients uniform in [-1, 1].
    pub fn random(dim: usize, degree: u32, rng: &mut impl Rng) -> Self {
        let terms = exponents_up_to(dim, degree)
            .into_iter()
            .map(|exps| Monomial { coef: rng.gen_range(-1.0..=1.0), exps })
            .collect();
        Self { dim, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exps.iter().sum::<u32>()).max().unwrap_or(0)
    }

    fn term_value(t: &Monomial, p: &[f64]) -> f64 {
        t.exps.iter().zip(p).fold(t.coef, |acc, (&e, &x)| acc * ipow(x, e))
    }

    /// Value of `∂^k t / ∂x_i ∂x_j …` for the listed variable indices.
    fn term_derivative(t: &Monomial, p: &[f64], vars: &[usize]) -> f64 {
        let mut exps = t.exps.clone();
        let mut c = t.coef;
        for &v in vars {
            if exps[v] == 0 {
                return 0.0;
            }
            c *= exps[v] as f64;
            exps[v] -= 1;
        }
        exps.iter().zip(p).fold(c, |acc, (&e, &x)| acc * ipow(x, e))
    }
}

/// All exponent vectors in `dim` variables with total degree ≤ `degree`, in
/// graded lexicographic order.
pub fn exponents_up_to(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    // Fills `cur` with exponents summing to exactly `left`.
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree {
        rec(dim, d, &mut Vec::new(), &mut out);
    }
    out
}

impl ScalarField for Polynomial {
    fn value(&self, p: &[f64]) -> f64 {
        self.terms.iter().map(|t| Self::term_value(t, p)).sum()
    }

    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        Some((0..self.dim).map(|i| self.terms.iter().map(|t| Self::term_derivative(t, p, &[i])).sum()).collect())
    }

    fn hessian(&self, p: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = self.terms.iter().map(|t| Self::term_derivative(t, p, &[i, j])).sum();
                h[i * n + j] = v;
                h[j * n + i] = v;
            }
        }
        Some(h)
    }

    fn magnitude(&self, p: &[f64]) -> f64 {
        self.terms.iter().map(|t| Self::term_value(t, p).abs()).sum()
    }

    fn describe(&self) -> String {
        const NAMES: [&str; 3] = ["x", "y", "z"];
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let mut s = format!("({:e})", t.coef);
                for (i, &e) in t.exps.iter().enumerate() {
                    if e > 0 {
                        let name = NAMES.get(i).copied().unwrap_or("?");
                        s.push_str(&format!("*{name}^{e}"));
                    }
                }
                s
            })
            .collect();
        parts.join(" + ")
    }
}
