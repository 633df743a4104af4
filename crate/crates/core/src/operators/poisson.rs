//! Dirichlet problems for `Δ_r` and the maximum-principle audit.

use serde::{Deserialize, Serialize};

use super::{DiscreteOperator, OperatorKind};
use crate::error::{AmvError, Result};
use crate::space::{AtomCloud, Bounds};

/// Atoms closer than `r` to the boundary of the cloud's region box.
pub fn collar_boundary(cloud: &AtomCloud, r: f64) -> Result<Vec<usize>> {
    let Bounds::Box { min, max } = &cloud.region.bounds else {
        return Err(AmvError::Input("a collar needs a box region".into()));
    };
    Ok(cloud
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| a.point.iter().zip(min.iter().zip(max)).any(|(x, (lo, hi))| x - lo < r || hi - x < r))
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonSolution {
    pub u: Vec<f64>,
    /// `max_{interior} |Δ_r u − f|`.
    pub residual: f64,
    /// `max |f| + max |Δ_r|·|u|` over the interior.
    pub scale: f64,
    pub refinements: usize,
    /// Ratio of the largest to the smallest elimination pivot.
    pub pivot_ratio: f64,
}

/// Dense band storage with lower and upper bandwidths.
struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    a: Vec<f64>,
}

impl Band {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// In-place LU without pivoting; returns the pivots.
    fn factor(&mut self) -> Vec<f64> {
        let mut piv = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let p = self.a[self.idx(k, k)];
            piv.push(p);
            if p == 0.0 {
                continue;
            }
            let jmax = (k + self.ku).min(self.n - 1);
            for i in k + 1..=(k + self.kl).min(self.n - 1) {
                let ik = self.idx(i, k);
                if self.a[ik] == 0.0 {
                    continue;
                }
                let l = self.a[ik] / p;
                self.a[ik] = l;
                let (ri, rk) = (self.idx(i, k + 1), self.idx(k, k + 1));
                for t in 0..jmax - k {
                    self.a[ri + t] -= l * self.a[rk + t];
                }
            }
        }
        piv
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let mut s = b[i];
            for j in lo..i {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.a[self.idx(i, i)];
        }
    }
}

/// Solves `Δ_r u = f` at interior atoms with `u = g` on the listed boundary
/// atoms. Interior atoms are ordered along the coordinates so the system is
/// banded; elimination runs without pivoting (the matrix is an M-matrix when
/// every interior atom connects to the boundary) and is followed by
/// iterative refinement. A pivot that vanishes relative to the diagonal
/// reports a singular system.
pub fn solve_poisson(op: &DiscreteOperator, f: &[f64], boundary: &[(usize, f64)]) -> Result<PoissonSolution> {
    let n = op.len();
    if f.len() != n {
        return Err(AmvError::DimensionMismatch { expected: n, got: f.len() });
    }
    let d = op.with_kind(OperatorKind::DeltaR);
    let mut u = vec![0.0; n];
    let mut is_boundary = vec![false; n];
    for &(i, g) in boundary {
        if i >= n {
            return Err(AmvError::Input(format!("boundary atom {i} out of range for {n} atoms")));
        }
        if !g.is_finite() {
            return Err(AmvError::Input(format!("boundary value at atom {i} is {g}")));
        }
        is_boundary[i] = true;
        u[i] = g;
    }
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(AmvError::Input(format!("right-hand side at atom {i} is {}", f[i])));
    }
    let mut interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    if interior.is_empty() {
        return Ok(PoissonSolution { u, residual: 0.0, scale: 0.0, refinements: 0, pivot_ratio: 1.0 });
    }
    let pts = &op.cloud.atoms;
    interior.sort_by(|&a, &b| {
        pts[a].point.iter().zip(&pts[b].point).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(a.cmp(&b))
    });
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in interior.iter().enumerate() {
        pos[i] = k;
    }
    let m = interior.len();
    let (mut kl, mut ku) = (0, 0);
    for (k, &i) in interior.iter().enumerate() {
        for &j in op.ball(i) {
            if pos[j] != usize::MAX {
                if pos[j] < k {
                    kl = kl.max(k - pos[j]);
                } else {
                    ku = ku.max(pos[j] - k);
                }
            }
        }
    }
    let mut band = Band { n: m, kl, ku, a: vec![0.0; m * (kl + ku + 1)] };
    let mut diag_max: f64 = 0.0;
    for (k, &i) in interior.iter().enumerate() {
        for &j in op.ball(i) {
            if pos[j] != usize::MAX {
                let v = d.entry(i, j);
                let ix = band.idx(k, pos[j]);
                band.a[ix] = v;
                if i == j {
                    diag_max = diag_max.max(v.abs());
                }
            }
        }
    }
    let piv = band.factor();
    let pmax = piv.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    let pmin = piv.iter().fold(f64::INFINITY, |a, p| a.min(p.abs()));
    let pivot_ratio = if pmin > 0.0 { pmax / pmin } else { f64::INFINITY };
    if !(pmin > 1e-13 * diag_max) {
        return Err(AmvError::Singular {
            detail: format!(
                "an interior cluster of {} atoms has no path to the boundary at r = {}",
                piv.iter().filter(|p| p.abs() <= 1e-13 * diag_max).count(),
                op.r
            ),
            condition: pivot_ratio,
        });
    }
    let residual_of = |u: &[f64]| -> Vec<f64> {
        let du = d.apply(u);
        interior.iter().map(|&i| f[i] - du[i]).collect()
    };
    let mut refinements = 0;
    let mut res = residual_of(&u);
    for _ in 0..4 {
        band.solve(&mut res);
        for (k, &i) in interior.iter().enumerate() {
            u[i] += res[k];
        }
        refinements += 1;
        let next = residual_of(&u);
        let prev_norm = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        res = next;
        let now = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if now == 0.0 || now > 0.5 * prev_norm {
            break;
        }
    }
    let residual = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let dabs = d.apply_abs(&u);
    let scale = interior.iter().map(|&i| f[i].abs().max(dabs[i])).fold(0.0, f64::max);
    Ok(PoissonSolution { u, residual, scale, refinements, pivot_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxPrinClass {
    Holds,
    Violated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxPrinAudit {
    pub global_max: f64,
    pub boundary_max: f64,
    /// Interior atoms where `u` exceeds every boundary value.
    pub interior_max_atoms: Vec<usize>,
    /// Interior atoms attaining the global maximum with `Δ_r u > 0`.
    pub positive_at_max: Vec<usize>,
    /// `global_max − boundary_max`.
    pub margin: f64,
    pub class: MaxPrinClass,
}

/// Compares interior and boundary maxima of `u` and the sign of `Δ_r u` at
/// interior maxima.
pub fn maxprin_audit(op: &DiscreteOperator, u: &[f64], boundary: &[usize]) -> Result<MaxPrinAudit> {
    let n = op.len();
    if u.len() != n {
        return Err(AmvError::DimensionMismatch { expected: n, got: u.len() });
    }
    if boundary.is_empty() {
        return Err(AmvError::Input("the audit needs at least one boundary atom".into()));
    }
    let mut is_boundary = vec![false; n];
    for &i in boundary {
        if i >= n {
            return Err(AmvError::Input(format!("boundary atom {i} out of range for {n} atoms")));
        }
        is_boundary[i] = true;
    }
    let global_max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let boundary_max = boundary.iter().map(|&i| u[i]).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * global_max.abs().max(boundary_max.abs()).max(1e-300);
    let interior_max_atoms: Vec<usize> = (0..n).filter(|&i| !is_boundary[i] && u[i] > boundary_max + tol).collect();
    let d = op.with_kind(OperatorKind::DeltaR);
    let du = d.apply(u);
    let dabs = d.apply_abs(u);
    let positive_at_max: Vec<usize> =
        (0..n).filter(|&i| !is_boundary[i] && u[i] >= global_max - tol && du[i] > 1e-12 * dabs[i]).collect();
    let class = if interior_max_atoms.is_empty() && positive_at_max.is_empty() {
        MaxPrinClass::Holds
    } else {
        MaxPrinClass::Violated
    };
    Ok(MaxPrinAudit {
        global_max,
        boundary_max,
        interior_max_atoms,
        positive_at_max,
        margin: global_max - boundary_max,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::super::build_amv_operator;
    use super::*;
    use crate::space::{make_atom_cloud, RegionSpec};
    use crate::spaces::euclidean_lebesgue;
    use rand::{Rng, SeedableRng};

    #[test]
    fn band_lu_solves_tridiagonal() {
        let n = 6;
        let mut b = Band { n, kl: 1, ku: 1, a: vec![0.0; n * 3] };
        for i in 0..n {
            let ii = b.idx(i, i);
            b.a[ii] = 4.0;
            if i > 0 {
                let ix = b.idx(i, i - 1);
                b.a[ix] = -1.0;
            }
            if i + 1 < n {
                let ix = b.idx(i, i + 1);
                b.a[ix] = -2.0;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| 4.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - 2.0 * if i + 1 < n { x[i + 1] } else { 0.0 })
            .collect();
        b.factor();
        b.solve(&mut rhs);
        for i in 0..n {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_reproduced_in_one_dimension() {
        // On a uniform grid, T_r x² = x² + c r² at atoms whose ball is symmetric.
        let s = euclidean_lebesgue(1).unwrap();
        let c = make_atom_cloud(&s, &RegionSpec::boxed([0.0], [1.0]), 200, 0).unwrap();
        let r = 0.0301;
        let op = build_amv_operator(&c, r).unwrap();
        let u: Vec<f64> = c.atoms.iter().map(|a| a.point[0] * a.point[0]).collect();
        let f = op.apply(&u);
        let bd: Vec<(usize, f64)> = collar_boundary(&c, r).unwrap().into_iter().map(|i| (i, u[i])).collect();
        let sol = solve_poisson(&op, &f, &bd).unwrap();
        let err = sol.u.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
        assert!(sol.residual <= 1e-10 * sol.scale);
    }

    #[test]
    fn random_subharmonic_solutions_obey_max_principle() {
        let s = euclidean_lebesgue(2).unwrap();
        let c = make_atom_cloud(&s, &RegionSpec::boxed([0.0, 0.0], [1.0, 1.0]), 25, 0).unwrap();
        let r = 0.13;
        let op = build_amv_operator(&c, r).unwrap();
        let bidx = collar_boundary(&c, r).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            let f: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(0.1..1.0)).collect();
            let bd: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, rng.gen_range(-1.0..1.0))).collect();
            let sol = solve_poisson(&op, &f, &bd).unwrap();
            assert!(sol.residual <= 1e-10 * sol.scale);
            let a = maxprin_audit(&op, &sol.u, &bidx).unwrap();
            assert_eq!(a.class, MaxPrinClass::Holds, "{a:?}");
        }
    }

    #[test]
    fn isolated_cluster_is_singular() {
        use crate::space::Atom;
        let s = euclidean_lebesgue(1).unwrap();
        let atoms = [0.0, 0.1, 0.2, 5.0, 5.1].iter().map(|&x| Atom { point: vec![x], weight: 0.1 }).collect();
        let c = AtomCloud::from_atoms(s, atoms, RegionSpec::boxed([0.0], [5.1]), None).unwrap();
        let op = build_amv_operator(&c, 0.15).unwrap();
        let err = solve_poisson(&op, &[1.0; 5], &[(0, 0.0)]).unwrap_err();
        assert!(matches!(err, AmvError::Singular { .. }), "{err}");
    }
}
