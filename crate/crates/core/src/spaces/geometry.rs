//! Intersections of Euclidean balls with the pieces that carry strata.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::quadrature::gauss_legendre;

/// Parametrized planar or spatial curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    /// `a + s(b − a)`, `s ∈ [0, 1]`.
    Segment { from: Vec<f64>, to: Vec<f64> },
    /// `center + R(cos φ, sin φ)`, `φ ∈ [start, start + sweep]`.
    Arc { center: [f64; 2], radius: f64, start: f64, sweep: f64 },
    /// Graph `y = Σ coeffs[k] x^k` for `x ∈ [x0, x1]`.
    Graph { coeffs: Vec<f64>, x0: f64, x1: f64 },
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn poly_deriv(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a)
}

fn poly_deriv2(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(2).rev().fold(0.0, |acc, (k, &a)| acc * x + (k * (k - 1)) as f64 * a)
}

impl Curve {
    pub fn dim(&self) -> usize {
        match self {
            Curve::Segment { from, .. } => from.len(),
            Curve::Arc { .. } | Curve::Graph { .. } => 2,
        }
    }

    pub fn param_range(&self) -> (f64, f64) {
        match self {
            Curve::Segment { .. } => (0.0, 1.0),
            Curve::Arc { start, sweep, .. } => (*start, start + sweep),
            Curve::Graph { x0, x1, .. } => (*x0, *x1),
        }
    }

    pub fn position(&self, s: f64) -> Vec<f64> {
        match self {
            Curve::Segment { from, to } => from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect(),
            Curve::Arc { center, radius, .. } => vec![center[0] + radius * s.cos(), center[1] + radius * s.sin()],
            Curve::Graph { coeffs, .. } => vec![s, poly(coeffs, s)],
        }
    }

    /// |c'(s)|.
    pub fn speed(&self, s: f64) -> f64 {
        match self {
            Curve::Segment { from, to } => norm_diff(from, to),
            Curve::Arc { radius, .. } => *radius,
            Curve::Graph { coeffs, .. } => (1.0 + poly_deriv(coeffs, s).powi(2)).sqrt(),
        }
    }

    /// Unit tangent in the direction of increasing parameter.
    pub fn tangent(&self, s: f64) -> Vec<f64> {
        match self {
            Curve::Segment { from, to } => {
                let l = norm_diff(from, to);
                from.iter().zip(to).map(|(a, b)| (b - a) / l).collect()
            }
            Curve::Arc { .. } => vec![-s.sin(), s.cos()],
            Curve::Graph { coeffs, .. } => {
                let d = poly_deriv(coeffs, s);
                let l = (1.0 + d * d).sqrt();
                vec![1.0 / l, d / l]
            }
        }
    }

    /// Acceleration with respect to arclength, `d²c/ds²`.
    pub fn curvature_vector(&self, s: f64) -> Vec<f64> {
        match self {
            Curve::Segment { from, .. } => vec![0.0; from.len()],
            Curve::Arc { radius, .. } => vec![-s.cos() / radius, -s.sin() / radius],
            Curve::Graph { coeffs, .. } => {
                let d1 = poly_deriv(coeffs, s);
                let d2 = poly_deriv2(coeffs, s);
                let q = 1.0 + d1 * d1;
                // c(x) = (x, g(x)); arclength derivative twice.
                let k = d2 / (q * q);
                vec![-d1 * k, k]
            }
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            Curve::Segment { from, to } => norm_diff(from, to),
            Curve::Arc { radius, sweep, .. } => radius * sweep,
            Curve::Graph { x0, x1, .. } => {
                let mut l = 0.0;
                let m = 64;
                let h = (x1 - x0) / m as f64;
                for k in 0..m {
                    let a = x0 + k as f64 * h;
                    crate::quadrature::gauss_interval(a, a + h, 20, |s, w| l += w * self.speed(s));
                }
                l
            }
        }
    }

    /// Parameter intervals on which the curve lies in the open ball `B_r(x)`,
    /// ascending and disjoint.
    pub fn ball_intervals(&self, x: &[f64], r: f64) -> Vec<(f64, f64)> {
        match self {
            Curve::Segment { from, to } => segment_interval(from, to, x, r).into_iter().collect(),
            Curve::Arc { center, radius, start, sweep } => arc_intervals(center, *radius, *start, *sweep, x, r),
            Curve::Graph { coeffs, x0, x1 } => graph_intervals(coeffs, *x0, *x1, x, r),
        }
    }

    /// Whether `p` lies within `tol` of the curve.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim() && self.distance_to(p) <= tol
    }

    /// Euclidean distance from `p` to the curve (vertical distance for graphs).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        match self {
            Curve::Segment { from, to } => {
                let mut dd = 0.0;
                let mut de = 0.0;
                for i in 0..from.len() {
                    dd += (to[i] - from[i]).powi(2);
                    de += (to[i] - from[i]) * (p[i] - from[i]);
                }
                let s = if dd > 0.0 { (de / dd).clamp(0.0, 1.0) } else { 0.0 };
                norm_diff(&self.position(s), p)
            }
            Curve::Arc { center, radius, start, sweep } => {
                let v = [p[0] - center[0], p[1] - center[1]];
                let phi = v[1].atan2(v[0]);
                let off = (phi - start).rem_euclid(TAU);
                if off <= *sweep {
                    ((v[0] * v[0] + v[1] * v[1]).sqrt() - radius).abs()
                } else {
                    let a = norm_diff(&self.position(*start), p);
                    let b = norm_diff(&self.position(start + sweep), p);
                    a.min(b)
                }
            }
            Curve::Graph { coeffs, x0, x1 } => {
                if p[0] < *x0 || p[0] > *x1 {
                    f64::INFINITY
                } else {
                    (poly(coeffs, p[0]) - p[1]).abs()
                }
            }
        }
    }
}

pub(crate) fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn segment_interval(a: &[f64], b: &[f64], x: &[f64], r: f64) -> Option<(f64, f64)> {
    // |a − x + s d|² < r², d = b − a.
    let mut dd = 0.0;
    let mut de = 0.0;
    let mut ee = 0.0;
    for i in 0..a.len() {
        let d = b[i] - a[i];
        let e = a[i] - x[i];
        dd += d * d;
        de += d * e;
        ee += e * e;
    }
    if dd == 0.0 {
        return None;
    }
    let c = ee - r * r;
    let disc = de * de - dd * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable roots of dd s² + 2 de s + c.
    let q = -(de + de.signum() * sq);
    let (s1, s2) = if q != 0.0 {
        let r1 = q / dd;
        let r2 = c / q;
        (r1.min(r2), r1.max(r2))
    } else {
        (-sq / dd, sq / dd)
    };
    let lo = s1.max(0.0);
    let hi = s2.min(1.0);
    (lo < hi).then_some((lo, hi))
}

fn arc_intervals(center: &[f64; 2], radius: f64, start: f64, sweep: f64, x: &[f64], r: f64) -> Vec<(f64, f64)> {
    let v = [x[0] - center[0], x[1] - center[1]];
    let d = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let full = vec![(start, start + sweep)];
    if d == 0.0 {
        return if radius < r { full } else { Vec::new() };
    }
    let gap = radius - d;
    if r * r <= gap * gap {
        return Vec::new();
    }
    let s2 = (r * r - gap * gap) / (4.0 * radius * d);
    if s2 >= 1.0 {
        return full;
    }
    let half = 2.0 * s2.sqrt().asin();
    let phi_v = v[1].atan2(v[0]);
    let uc = (phi_v - start).rem_euclid(TAU);
    let mut out = Vec::new();
    for k in [-1.0, 0.0, 1.0] {
        let c = uc + k * TAU;
        let lo = (c - half).max(0.0);
        let hi = (c + half).min(sweep);
        if lo < hi {
            out.push((start + lo, start + hi));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn graph_intervals(coeffs: &[f64], x0: f64, x1: f64, x: &[f64], r: f64) -> Vec<(f64, f64)> {
    let lo = x0.max(x[0] - r);
    let hi = x1.min(x[0] + r);
    if lo >= hi {
        return Vec::new();
    }
    let h = |s: f64| (s - x[0]).powi(2) + (poly(coeffs, s) - x[1]).powi(2) - r * r;
    let m = 512;
    let step = (hi - lo) / m as f64;
    let root = |mut a: f64, mut b: f64| {
        let ha = h(a);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if c == a || c == b {
                break;
            }
            if (h(c) < 0.0) == (ha < 0.0) {
                a = c;
            } else {
                b = c;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut inside_from: Option<f64> = if h(lo) < 0.0 { Some(lo) } else { None };
    let mut prev = lo;
    for k in 1..=m {
        let s = if k == m { hi } else { lo + k as f64 * step };
        let inside = h(s) < 0.0;
        match (inside_from, inside) {
            (None, true) => inside_from = Some(root(prev, s)),
            (Some(a), false) => {
                out.push((a, root(prev, s)));
                inside_from = None;
            }
            _ => {}
        }
        prev = s;
    }
    if let Some(a) = inside_from {
        out.push((a, hi));
    }
    out.retain(|(a, b)| a < b);
    out
}

/// Axis-aligned rectangle `[min0, max0] × [min1, max1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    /// Panels in the angle `s` (with `x = cx + r sin s`) between which the
    /// chord of the disk clipped to the rectangle varies smoothly.
    fn panels(&self, c: &[f64], r: f64) -> Vec<(f64, f64)> {
        let asin_c = |v: f64| (v / r).clamp(-1.0, 1.0).asin();
        let s_lo = asin_c(self.min[0] - c[0]);
        let s_hi = asin_c(self.max[0] - c[0]);
        if s_lo >= s_hi {
            return Vec::new();
        }
        let mut br = vec![s_lo, s_hi];
        for yb in [self.min[1], self.max[1]] {
            let d = (yb - c[1]).abs();
            if d < r {
                let a = (d / r).acos();
                br.push(a);
                br.push(-a);
            }
        }
        br.retain(|&s| s >= s_lo && s <= s_hi);
        br.sort_by(f64::total_cmp);
        br.dedup();
        br.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| a < b).collect()
    }

    /// Visits nodes of a rule on `B_r(c) ∩ rect`: `no` Gauss points in `s` per
    /// panel and `ni` Gauss points across each chord.
    pub fn disk_rule(&self, c: &[f64], r: f64, no: usize, ni: usize, mut visit: impl FnMut(&[f64; 2], f64)) {
        let glo = gauss_legendre(no);
        let gli = gauss_legendre(ni);
        for (a, b) in self.panels(c, r) {
            let hs = 0.5 * (b - a);
            let ms = 0.5 * (a + b);
            for (&t, &wt) in glo.nodes.iter().zip(&glo.weights) {
                let s = ms + hs * t;
                let (sn, cs) = s.sin_cos();
                let x = c[0] + r * sn;
                let half = r * cs;
                let ylo = self.min[1].max(c[1] - half);
                let yhi = self.max[1].min(c[1] + half);
                if yhi <= ylo {
                    continue;
                }
                let hy = 0.5 * (yhi - ylo);
                let my = 0.5 * (yhi + ylo);
                let wx = hs * wt * r * cs;
                for (&u, &wu) in gli.nodes.iter().zip(&gli.weights) {
                    visit(&[x, my + hy * u], wx * hy * wu);
                }
            }
        }
    }

    /// Exact area of `B_r(c) ∩ rect`.
    pub fn disk_area(&self, c: &[f64], r: f64) -> f64 {
        // H(x) = ∫ sqrt(r² − (x − cx)²) dx
        let big_h = |x: f64| {
            let u = (x - c[0]).clamp(-r, r);
            0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).asin())
        };
        let mut area = 0.0;
        for (a, b) in self.panels(c, r) {
            let xa = c[0] + r * a.sin();
            let xb = c[0] + r * b.sin();
            let sm = 0.5 * (a + b);
            let half = r * sm.cos();
            let top_flat = self.max[1] < c[1] + half;
            let bot_flat = self.min[1] > c[1] - half;
            let dh = big_h(xb) - big_h(xa);
            let dx = xb - xa;
            let (ylo_mid, yhi_mid) = (self.min[1].max(c[1] - half), self.max[1].min(c[1] + half));
            if yhi_mid <= ylo_mid {
                continue;
            }
            area += match (top_flat, bot_flat) {
                (true, true) => (self.max[1] - self.min[1]) * dx,
                (true, false) => (self.max[1] - c[1]) * dx + dh,
                (false, true) => (c[1] - self.min[1]) * dx + dh,
                (false, false) => 2.0 * dh,
            };
        }
        area
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.min[0] <= p[0] && p[0] <= self.max[0] && self.min[1] <= p[1] && p[1] <= self.max[1]
    }
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 / 3.0 * PI,
        _ => panic!("unit ball volume only tabulated for n ≤ 3"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_interval_cases() {
        let (a, b) = ([0.0, 0.0], [1.0, 0.0]);
        let iv = segment_interval(&a, &b, &[0.5, 0.0], 0.1).unwrap();
        assert!((iv.0 - 0.4).abs() < 1e-15 && (iv.1 - 0.6).abs() < 1e-15);
        let iv = segment_interval(&a, &b, &[0.0, 0.0], 0.3).unwrap();
        assert_eq!(iv.0, 0.0);
        assert!((iv.1 - 0.3).abs() < 1e-15);
        assert!(segment_interval(&a, &b, &[0.5, 0.2], 0.2).is_none());
    }

    #[test]
    fn circle_ball_length_is_chord_arc() {
        let c = Curve::Arc { center: [0.0, 0.0], radius: 1.0, start: 0.0, sweep: TAU };
        for r in [1e-3, 0.1, 0.5, 1.5, 1.99] {
            let len: f64 = c.ball_intervals(&[1.0, 0.0], r).iter().map(|(a, b)| b - a).sum();
            let exact = 4.0 * (r / 2.0f64).asin();
            assert!((len - exact).abs() < 1e-14, "r={r}: {len} vs {exact}");
        }
        let len: f64 = c.ball_intervals(&[1.0, 0.0], 2.5).iter().map(|(a, b)| b - a).sum();
        assert_eq!(len, TAU);
    }

    #[test]
    fn arc_clipping_respects_sweep() {
        // Quarter arc from angle 0 to π/2; ball around (0, 1) catches only its end.
        let c = Curve::Arc { center: [0.0, 0.0], radius: 1.0, start: 0.0, sweep: PI / 2.0 };
        let iv = c.ball_intervals(&[0.0, 1.0], 0.2);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].1 - PI / 2.0).abs() < 1e-15);
        assert!((PI / 2.0 - iv[0].0 - 2.0 * (0.1f64).asin()).abs() < 1e-14);
    }

    #[test]
    fn graph_intervals_match_line_case() {
        let g = Curve::Graph { coeffs: vec![0.0, 1.0], x0: -1.0, x1: 1.0 };
        let iv = g.ball_intervals(&[0.0, 0.0], 0.5);
        assert_eq!(iv.len(), 1);
        let h = 0.5 / 2f64.sqrt();
        assert!((iv[0].0 + h).abs() < 1e-12 && (iv[0].1 - h).abs() < 1e-12);
    }

    #[test]
    fn graph_curvature_of_parabola() {
        let g = Curve::Graph { coeffs: vec![0.0, 0.0, 0.5], x0: -1.0, x1: 1.0 };
        let k = g.curvature_vector(0.0);
        assert!((k[0]).abs() < 1e-15 && (k[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_disk_area_and_rule() {
        let s = Rect { min: [-1.0, -0.5], max: [0.0, 0.5] };
        for r in [0.01, 0.2, 0.45] {
            let exact = PI * r * r / 2.0;
            assert!((s.disk_area(&[0.0, 0.0], r) - exact).abs() < 1e-16);
            let mut m = 0.0;
            s.disk_rule(&[0.0, 0.0], r, 16, 8, |_, w| m += w);
            assert!((m - exact).abs() < 1e-15 * exact.max(1.0) * 10.0);
        }
    }

    #[test]
    fn disk_rect_area_against_monte_carlo_grid() {
        let s = Rect { min: [-0.3, -0.2], max: [0.4, 0.1] };
        let c = [0.05, 0.0];
        let r = 0.27;
        let m = 2000;
        let mut count = 0usize;
        for i in 0..m {
            for j in 0..m {
                let x = s.min[0] + (i as f64 + 0.5) * (s.max[0] - s.min[0]) / m as f64;
                let y = s.min[1] + (j as f64 + 0.5) * (s.max[1] - s.min[1]) / m as f64;
                if (x - c[0]).powi(2) + (y - c[1]).powi(2) < r * r {
                    count += 1;
                }
            }
        }
        let grid = count as f64 * s.area() / (m * m) as f64;
        let exact = s.disk_area(&c, r);
        assert!((grid - exact).abs() < 2e-5, "{grid} vs {exact}");
        let mut q = 0.0;
        s.disk_rule(&c, r, 24, 8, |_, w| q += w);
        assert!((q - exact).abs() < 1e-13);
    }
}
