//! Gauss–Legendre and Gauss–Kronrod rules, adaptive 1-D integration of a
//! paired integrand, and polar/spherical product rules on Euclidean balls.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

pub const MAX_GL: usize = 256;

/// Gauss–Legendre nodes and weights on [-1, 1], ascending nodes.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static GL_CACHE: [OnceLock<GaussLegendre>; MAX_GL + 1] = [const { OnceLock::new() }; MAX_GL + 1];

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p1, mut p2) = (1.0, 0.0);
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
    }
    (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
}

fn compute_gauss_legendre(n: usize) -> GaussLegendre {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussLegendre { nodes, weights }
}

/// Cached `n`-point rule, `1 ≤ n ≤ 256`.
pub fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    assert!((1..=MAX_GL).contains(&n), "Gauss-Legendre order {n} out of range");
    GL_CACHE[n].get_or_init(|| compute_gauss_legendre(n))
}

// Kronrod 15 / Gauss 7 abscissae and weights (QUADPACK qk15).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Paired integrand value: `[mass density, mass density × f]`.
pub type Pair = [f64; 2];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Pair,
    error: Pair,
    combined: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.combined.total_cmp(&o.combined).then_with(|| o.a.total_cmp(&self.a))
    }
}

/// One Kronrod-15 panel: (value, |K15 − G7| error) per component.
fn kronrod15<F>(f: &mut F, a: f64, b: f64) -> Result<(Pair, Pair), f64>
where
    F: FnMut(f64) -> Result<Pair, f64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut resk = [fc[0] * WGK[7], fc[1] * WGK[7]];
    let mut resg = [fc[0] * WG[3], fc[1] * WG[3]];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        for k in 0..2 {
            let s = f1[k] + f2[k];
            resk[k] += WGK[j] * s;
            if j % 2 == 1 {
                resg[k] += WG[j / 2] * s;
            }
        }
    }
    let val = [resk[0] * h, resk[1] * h];
    let err = [((resk[0] - resg[0]) * h).abs(), ((resk[1] - resg[1]) * h).abs()];
    Ok((val, err))
}

/// Result of an adaptive paired integration.
#[derive(Debug, Clone, Copy)]
pub struct PairIntegral {
    pub value: Pair,
    pub error: Pair,
    pub evals: usize,
}

/// Globally adaptive Gauss–Kronrod integration of a paired integrand on `[a, b]`.
///
/// Refinement stops when `err_1 + |I_1/I_0|·err_0 ≤ target` or when the next
/// split would exceed `max_evals`. An `Err(x)` from the integrand aborts with
/// the offending abscissa.
pub fn adaptive_pair<F>(mut f: F, a: f64, b: f64, target: f64, max_evals: usize) -> Result<PairIntegral, f64>
where
    F: FnMut(f64) -> Result<Pair, f64>,
{
    if b <= a {
        return Ok(PairIntegral { value: [0.0; 2], error: [0.0; 2], evals: 0 });
    }
    let combine = |e: Pair, tot: Pair| {
        let ratio = if tot[0] != 0.0 { (tot[1] / tot[0]).abs() } else { 0.0 };
        e[1] + ratio * e[0]
    };
    let (v0, e0) = kronrod15(&mut f, a, b)?;
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v0, error: e0, combined: combine(e0, v0) });
    let mut done: Vec<Segment> = Vec::new();
    let min_width = (b - a) * 1e-14;
    loop {
        let (tot, err) = totals(heap.iter().chain(done.iter()));
        let comb = combine(err, tot);
        if comb <= target || evals + 30 > max_evals {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if worst.b - worst.a < min_width {
            done.push(worst);
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        let (vl, el) = kronrod15(&mut f, worst.a, m)?;
        let (vr, er) = kronrod15(&mut f, m, worst.b)?;
        evals += 30;
        heap.push(Segment { a: worst.a, b: m, value: vl, error: el, combined: combine(el, tot) });
        heap.push(Segment { a: m, b: worst.b, value: vr, error: er, combined: combine(er, tot) });
    }
    let mut all: Vec<Segment> = heap.into_vec();
    all.extend(done);
    all.sort_by(|x, y| x.a.total_cmp(&y.a));
    let (value, error) = totals(all.iter());
    Ok(PairIntegral { value, error, evals })
}

fn totals<'a>(segs: impl Iterator<Item = &'a Segment>) -> (Pair, Pair) {
    let mut v = [0.0; 2];
    let mut e = [0.0; 2];
    for s in segs {
        for k in 0..2 {
            v[k] += s.value[k];
            e[k] += s.error[k];
        }
    }
    (v, e)
}

/// Visits the nodes of a polar product rule on the disk `B_r(center)`:
/// `nr`-point Gauss–Legendre in the radius (weight ρ dρ) times an `na`-point
/// trapezoid rule in the angle. Exact for polynomials of degree
/// `≤ min(2·nr − 2, na − 1)`.
pub fn polar_disk(center: &[f64], r: f64, nr: usize, na: usize, mut visit: impl FnMut(&[f64; 2], f64)) {
    let gl = gauss_legendre(nr);
    let dth = 2.0 * PI / na as f64;
    for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
        let rho = 0.5 * r * (x + 1.0);
        let wr = 0.5 * r * w * rho * dth;
        for j in 0..na {
            let th = j as f64 * dth;
            let p = [center[0] + rho * th.cos(), center[1] + rho * th.sin()];
            visit(&p, wr);
        }
    }
}

/// Visits the nodes of a spherical product rule on the ball `B_r(center)` in
/// R³: Gauss–Legendre in ρ (weight ρ²) and in cos θ, trapezoid in φ.
pub fn spherical_ball(center: &[f64], r: f64, nr: usize, nc: usize, na: usize, mut visit: impl FnMut(&[f64; 3], f64)) {
    let glr = gauss_legendre(nr);
    let glc = gauss_legendre(nc);
    let dph = 2.0 * PI / na as f64;
    for (&x, &w) in glr.nodes.iter().zip(&glr.weights) {
        let rho = 0.5 * r * (x + 1.0);
        let wr = 0.5 * r * w * rho * rho;
        for (&c, &wc) in glc.nodes.iter().zip(&glc.weights) {
            let s = (1.0 - c * c).sqrt();
            let wrc = wr * wc * dph;
            for k in 0..na {
                let ph = k as f64 * dph;
                let p = [center[0] + rho * s * ph.cos(), center[1] + rho * s * ph.sin(), center[2] + rho * c];
                visit(&p, wrc);
            }
        }
    }
}

/// Fixed Gauss–Legendre rule on `[a, b]`.
pub fn gauss_interval(a: f64, b: f64, n: usize, mut visit: impl FnMut(f64, f64)) {
    let gl = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
        visit(c + h * x, h * w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in [1, 2, 3, 7, 16, 64, 256] {
            let gl = gauss_legendre(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} weight sum {s}");
            for w in gl.nodes.windows(2) {
                assert!(w[0] < w[1]);
            }
            // ∫ x^(2n-2) = 2/(2n-1)
            let k = 2 * n as i32 - 2;
            let q: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - 2.0 / (k as f64 + 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn kronrod_constants_integrate_polynomials() {
        let mut f = |x: f64| Ok::<_, f64>([1.0, x.powi(20)]);
        let (v, _) = kronrod15(&mut f, -1.0, 1.0).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-15);
        assert!((v[1] - 2.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kink_and_jump() {
        let r = adaptive_pair(|x| Ok([1.0, x.abs()]), -1.0, 1.0, 1e-14, 100_000).unwrap();
        assert!((r.value[1] - 1.0).abs() < 1e-14);
        let r = adaptive_pair(|x| Ok([1.0, if x < 0.3 { 0.0 } else { 1.0 }]), -1.0, 1.0, 1e-12, 100_000).unwrap();
        assert!((r.value[1] - 0.7).abs() < 1e-11, "{:?}", r);
    }

    #[test]
    fn adaptive_symmetric_odd_is_exact_zero() {
        let sgn = |x: f64| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let r = adaptive_pair(|x| Ok([1.0, sgn(x)]), -0.37, 0.37, 1e-14, 100_000).unwrap();
        assert_eq!(r.value[1], 0.0);
        assert_eq!(r.evals, 15);
    }

    #[test]
    fn adaptive_reports_failing_abscissa() {
        let r = adaptive_pair(|x| if x > 0.5 { Err(x) } else { Ok([1.0, 1.0]) }, 0.0, 1.0, 1e-12, 1000);
        assert!(matches!(r, Err(x) if x > 0.5));
    }

    #[test]
    fn product_rules_integrate_moments() {
        let mut m = 0.0;
        let mut i = 0.0;
        polar_disk(&[0.3, -0.2], 0.7, 8, 16, |p, w| {
            m += w;
            i += w * (p[0] - 0.3).powi(2) * (p[1] + 0.2).powi(2);
        });
        assert!((m - PI * 0.49).abs() < 1e-14);
        // ∫ x²y² over disk = π r⁶ / 24
        assert!((i - PI * 0.7f64.powi(6) / 24.0).abs() < 1e-15);

        let mut m = 0.0;
        let mut i = 0.0;
        spherical_ball(&[0.0; 3], 1.3, 8, 8, 16, |p, w| {
            m += w;
            i += w * p[2] * p[2];
        });
        assert!((m - 4.0 / 3.0 * PI * 1.3f64.powi(3)).abs() < 1e-13);
        // ∫ z² over ball = 4π r⁵ / 15
        assert!((i - 4.0 * PI * 1.3f64.powi(5) / 15.0).abs() < 1e-13);
    }
}
