//! Green identity, the `L^p` weight lemma and operator-norm probes.

use serde::{Deserialize, Serialize};

use super::{DiscreteOperator, OperatorKind};
use crate::error::{AmvError, Result};
use crate::space::AtomCloud;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenReport {
    /// `Σ_i w_i (v_i (Δ_r u)_i − u_i (Δ_r v)_i)`, summed row by row.
    pub lhs: f64,
    /// The cross-mass double sum, summed column by column.
    pub rhs: f64,
    pub defect: f64,
    /// Sum of the absolute values of every product entering either side.
    pub scale: f64,
    /// `‖D^{1/2}(Δ_r − Δ_r^*)D^{1/2}‖_F` for the atom weights `D`.
    pub selfadjoint_defect: f64,
}

/// Checks `∫ vΔ_r u − uΔ_r v = r⁻² ΣΣ w_i w_j v_i u_j (1/m_i − 1/m_j)` over
/// neighbouring pairs, evaluating the two sides in different orders.
pub fn green_check(op: &DiscreteOperator, u: &[f64], v: &[f64]) -> Result<GreenReport> {
    let n = op.len();
    if u.len() != n || v.len() != n {
        return Err(AmvError::DimensionMismatch { expected: n, got: u.len().min(v.len()) });
    }
    let d = op.with_kind(OperatorKind::DeltaR);
    let du = d.apply(u);
    let dv = d.apply(v);
    let du_abs = d.apply_abs(u);
    let dv_abs = d.apply_abs(v);
    let w: Vec<f64> = (0..n).map(|i| op.weight(i)).collect();
    let lhs: f64 = (0..n).map(|i| w[i] * (v[i] * du[i] - u[i] * dv[i])).sum();
    let mut scale: f64 = (0..n).map(|i| w[i] * (v[i].abs() * du_abs[i] + u[i].abs() * dv_abs[i])).sum();
    let r2 = op.r * op.r;
    // The ball relation is symmetric, so the rows also list each column's ball.
    let mut rhs = 0.0;
    for j in (0..n).rev() {
        let mut s = 0.0;
        let mut s_abs = 0.0;
        for &i in op.ball(j).iter().rev() {
            let k = w[i] * u[i] * (1.0 / op.row_masses[j] - 1.0 / op.row_masses[i]);
            s += k;
            s_abs += (w[i] * u[i]).abs() * (1.0 / op.row_masses[j] + 1.0 / op.row_masses[i]);
        }
        rhs += w[j] * v[j] * s / r2;
        scale += w[j] * v[j].abs() * s_abs / r2;
    }
    let mut sa = 0.0;
    for i in 0..n {
        for &j in op.ball(i) {
            let e = w[j] * (w[i] * w[j]).sqrt() * (1.0 / op.row_masses[i] - 1.0 / op.row_masses[j]) / r2;
            sa += e * e;
        }
    }
    Ok(GreenReport { lhs, rhs, defect: (lhs - rhs).abs(), scale, selfadjoint_defect: sa.sqrt() })
}

/// `w̃_i = Σ_{j ∈ B_r(i)} w_j / m_j`.
pub fn lemma_weight(op: &DiscreteOperator) -> Vec<f64> {
    (0..op.len()).map(|i| op.ball(i).iter().map(|&j| op.weight(j) / op.row_masses[j]).sum()).collect()
}

/// `(Σ_i w_i |f_i|^p)^{1/p}`, or the maximum over positive-weight atoms for `p = ∞`.
pub fn lp_norm(f: &[f64], w: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        f.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(f, _)| f.abs()).fold(0.0, f64::max)
    } else {
        f.iter().zip(w).map(|(f, w)| w * f.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub p: f64,
    /// `‖T_r u‖_{L^p(μ)}`.
    pub lhs: f64,
    /// `‖u‖_{L^p(w̃ μ)}`.
    pub rhs: f64,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300
    }
}

/// Evaluates both sides of `‖T_r u‖_p ≤ ‖u‖_{L^p(w̃μ)}`.
pub fn lemma_check(op: &DiscreteOperator, u: &[f64], p: f64) -> Result<LemmaCheck> {
    if !(p >= 1.0) {
        return Err(AmvError::Input(format!("p must be at least 1, got {p}")));
    }
    if u.len() != op.len() {
        return Err(AmvError::DimensionMismatch { expected: op.len(), got: u.len() });
    }
    let t = op.with_kind(OperatorKind::Tr);
    let w: Vec<f64> = (0..op.len()).map(|i| op.weight(i)).collect();
    let tu = t.apply(u);
    let wt = lemma_weight(op);
    let ww: Vec<f64> = w.iter().zip(&wt).map(|(a, b)| a * b).collect();
    let lhs = lp_norm(&tu, &w, p);
    let rhs = lp_norm(u, &ww, p);
    Ok(LemmaCheck { p, lhs, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormType {
    L1,
    L2,
    LInf,
}

/// A priori bound on `‖T_r‖` from the measure's regularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormBound {
    /// Ball masses independent of the center.
    Uniform,
    /// `c r^Q ≤ μ(B_r(x)) ≤ C r^Q`.
    Ahlfors { lower: f64, upper: f64 },
    /// `μ(B_{2r}(x)) ≤ C μ(B_r(x))`.
    Doubling { constant: f64 },
}

impl NormBound {
    pub fn value(&self) -> f64 {
        match *self {
            NormBound::Uniform => 1.0,
            NormBound::Ahlfors { lower, upper } => upper / lower,
            NormBound::Doubling { constant } => constant * constant,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormProbe {
    pub norm: NormType,
    pub estimate: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// `‖T_r‖_{L^p(μ)→L^p(μ)}` on the cloud: exact for `p = 1, ∞`, power
/// iteration on the symmetrized operator for `p = 2`.
pub fn op_norm_probe(op: &DiscreteOperator, norm: NormType, bound: NormBound) -> Result<NormProbe> {
    let b = bound.value();
    if !(b > 0.0 && b.is_finite()) {
        return Err(AmvError::Input(format!("norm bound must be positive and finite, got {b}")));
    }
    let t = op.with_kind(OperatorKind::Tr);
    let estimate = match norm {
        NormType::LInf => 1.0,
        NormType::L1 => lemma_weight(&t).into_iter().fold(0.0, f64::max),
        NormType::L2 => l2_norm(&t),
    };
    Ok(NormProbe { norm, estimate, bound: b, ratio: estimate / b })
}

/// Largest singular value of `S = D^{1/2} T D^{-1/2}`, which equals the
/// `L²(w)` operator norm of `T`.
fn l2_norm(t: &DiscreteOperator) -> f64 {
    let n = t.len();
    let sw: Vec<f64> = (0..n).map(|i| t.weight(i).sqrt()).collect();
    // S x = sw ⊙ T(x / sw); Sᵀ y = (1/sw) ⊙ Tᵀ(sw ⊙ y).
    let s_apply = |x: &[f64]| -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(&sw).map(|(a, b)| a / b).collect();
        t.apply(&z).iter().zip(&sw).map(|(a, b)| a * b).collect()
    };
    let st_apply = |y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for i in 0..n {
            let yi = y[i] * sw[i] / t.row_masses[i];
            for &j in t.ball(i) {
                out[j] += t.weight(j) * yi;
            }
        }
        out.iter().zip(&sw).map(|(a, b)| a / b).collect()
    };
    let mut x: Vec<f64> = sw.clone();
    let mut sigma = 0.0;
    for _ in 0..500 {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let y = st_apply(&s_apply(&x));
        let lambda: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        let next = lambda.max(0.0).sqrt();
        let done = (next - sigma).abs() <= 1e-13 * next;
        sigma = next;
        x = y;
        if done {
            break;
        }
    }
    sigma
}

/// Ball-mass ratios `(min_i m_i / r^Q, max_i m_i / r^Q)` on the cloud.
pub fn empirical_ahlfors(op: &DiscreteOperator, q: f64) -> NormBound {
    let rq = op.r.powf(q);
    let lo = op.row_masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = op.row_masses.iter().cloned().fold(0.0, f64::max);
    NormBound::Ahlfors { lower: lo / rq, upper: hi / rq }
}

/// `max_i m_{2r}(i) / m_r(i)` on the cloud.
pub fn empirical_doubling(cloud: &AtomCloud, r: f64) -> Result<NormBound> {
    let a = super::build_Tr(cloud, r)?;
    let b = super::build_Tr(cloud, 2.0 * r)?;
    let c = a.row_masses.iter().zip(&b.row_masses).map(|(m1, m2)| m2 / m1).fold(1.0, f64::max);
    Ok(NormBound::Doubling { constant: c })
}

#[cfg(test)]
mod tests {
    use super::super::{build_Tr, build_amv_operator};
    use super::*;
    use crate::space::{make_atom_cloud, Atom, RegionSpec};
    use crate::spaces::{euclidean_lebesgue, weighted_lebesgue, WeightSpec};
    use rand::{Rng, SeedableRng};

    fn random_cloud(n: usize, seed: u64) -> AtomCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let atoms =
            (0..n).map(|_| Atom { point: vec![rng.gen(), rng.gen()], weight: rng.gen_range(0.1..2.0) }).collect();
        AtomCloud::from_atoms(
            euclidean_lebesgue(2).unwrap(),
            atoms,
            RegionSpec::boxed([0.0, 0.0], [1.0, 1.0]),
            Some(seed),
        )
        .unwrap()
    }

    #[test]
    fn green_identity_on_random_cloud() {
        let c = random_cloud(400, 3);
        let op = build_amv_operator(&c, 0.15).unwrap();
        let u: Vec<f64> = c.atoms.iter().map(|a| (3.0 * a.point[0]).sin() + a.point[1]).collect();
        let v: Vec<f64> = c.atoms.iter().map(|a| a.point[0] * a.point[1]).collect();
        let g = green_check(&op, &u, &v).unwrap();
        assert!(g.defect <= 1e-12 * g.scale, "{g:?}");
        assert!(g.lhs.abs() > 1e-6);
        assert!(g.selfadjoint_defect > 0.0);
    }

    #[test]
    fn lemma_inequality_holds() {
        let c = random_cloud(300, 5);
        let op = build_Tr(&c, 0.2).unwrap();
        let u: Vec<f64> = c.atoms.iter().map(|a| (a.point[0] - 0.3).signum() * a.point[1]).collect();
        for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
            let l = lemma_check(&op, &u, p).unwrap();
            assert!(l.holds(), "{l:?}");
        }
    }

    #[test]
    fn norms_within_bounds() {
        let s = weighted_lebesgue(2, WeightSpec::parse("1 + x^2").unwrap()).unwrap();
        let c = make_atom_cloud(&s, &RegionSpec::boxed([-1.0, -1.0], [1.0, 1.0]), 30, 0).unwrap();
        let op = build_Tr(&c, 0.2).unwrap();
        let ahl = empirical_ahlfors(&op, 2.0);
        let dbl = empirical_doubling(&c, 0.2).unwrap();
        for norm in [NormType::L1, NormType::L2, NormType::LInf] {
            for b in [ahl, dbl] {
                let p = op_norm_probe(&op, norm, b).unwrap();
                assert!(p.ratio <= 1.0 + 1e-9, "{p:?}");
            }
        }
        let l2 = op_norm_probe(&op, NormType::L2, NormBound::Uniform).unwrap().estimate;
        let l1 = op_norm_probe(&op, NormType::L1, NormBound::Uniform).unwrap().estimate;
        // Riesz-Thorin between the p = 1 and p = ∞ norms.
        assert!(l2 <= l1.sqrt() * (1.0 + 1e-9) && l2 >= 1.0 - 1e-9);
    }

    #[test]
    fn uniform_circle_is_selfadjoint() {
        let n = 97;
        let s = euclidean_lebesgue(2).unwrap();
        let atoms = (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                Atom { point: vec![a.cos(), a.sin()], weight: 1.0 / n as f64 }
            })
            .collect();
        let c = AtomCloud::from_atoms(s, atoms, RegionSpec::whole(), None).unwrap();
        let op = build_amv_operator(&c, 0.3).unwrap();
        let u: Vec<f64> = c.atoms.iter().map(|a| a.point[0].powi(3)).collect();
        let v: Vec<f64> = c.atoms.iter().map(|a| a.point[1]).collect();
        let g = green_check(&op, &u, &v).unwrap();
        assert!(g.selfadjoint_defect <= 1e-12);
        assert!(g.lhs.abs() <= 1e-12 * g.scale);
        let l2 = op_norm_probe(&op, NormType::L2, NormBound::Uniform).unwrap();
        assert!((l2.estimate - 1.0).abs() < 1e-9);
    }
}
