//! Discrete ball-averaging operators on atom clouds.
//!
//! Rows store the kernel weights `w_j` of the atoms in the open ball around
//! atom `i` (the atom itself included) and the row mass `m_i = Σ_j w_j`;
//! `(T_r u)_i = Σ_j w_j u_j / m_i` and `Δ_r = (T_r − I)/r²`.

mod green;
mod poisson;
mod weak;

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use green::{
    empirical_ahlfors, empirical_doubling, green_check, lemma_check, lemma_weight, lp_norm, op_norm_probe, GreenReport,
    LemmaCheck, NormBound, NormProbe, NormType,
};
pub use poisson::{collar_boundary, maxprin_audit, solve_poisson, MaxPrinAudit, MaxPrinClass, PoissonSolution};
pub use weak::{weak_pairing, PairingSpec};

use crate::error::{AmvError, Result};
use crate::space::{AtomCloud, MetricMeasureSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Ball average `T_r`.
    Tr,
    /// `Δ_r = (T_r − I)/r²`.
    DeltaR,
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OperatorKind::Tr => "T_r",
            OperatorKind::DeltaR => "Delta_r",
        })
    }
}

/// Sparse `T_r` or `Δ_r` on a cloud.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub cloud: AtomCloud,
    pub r: f64,
    pub kind: OperatorKind,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pub row_masses: Vec<f64>,
    /// Pairs at distance exactly `r` (excluded by the strict inequality).
    pub ties: usize,
}

/// Open-ball neighbour lists, sorted, with the count of exact ties.
fn neighbours(cloud: &AtomCloud, r: f64) -> Result<(Vec<Vec<usize>>, usize)> {
    let space: &dyn MetricMeasureSpace = &*cloud.space;
    let pts: Vec<&[f64]> = cloud.atoms.iter().map(|a| a.point.as_slice()).collect();
    let n = pts.len();
    let rows: Vec<Result<(Vec<usize>, usize)>> = match space.coordinate_reach(r) {
        Some(reach) => {
            let dim = reach.len();
            let key = |p: &[f64]| -> Vec<i64> { (0..dim).map(|k| (p[k] / reach[k]).floor() as i64).collect() };
            let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for (i, p) in pts.iter().enumerate() {
                cells.entry(key(p)).or_default().push(i);
            }
            let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
                .map(|mut c| {
                    (0..dim)
                        .map(|_| {
                            let o = (c % 3) as i64 - 1;
                            c /= 3;
                            o
                        })
                        .collect()
                })
                .collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let k = key(pts[i]);
                    let mut row = Vec::new();
                    let mut ties = 0;
                    for off in &offsets {
                        let c: Vec<i64> = k.iter().zip(off).map(|(a, b)| a + b).collect();
                        if let Some(list) = cells.get(&c) {
                            for &j in list {
                                let d = space.distance_unchecked(pts[i], pts[j])?;
                                if d < r {
                                    row.push(j);
                                } else if d == r {
                                    ties += 1;
                                }
                            }
                        }
                    }
                    row.sort_unstable();
                    Ok((row, ties))
                })
                .collect()
        }
        None => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::new();
                let mut ties = 0;
                for j in 0..n {
                    let d = if i == j { 0.0 } else { space.distance_unchecked(pts[i], pts[j])? };
                    if d < r {
                        row.push(j);
                    } else if d == r {
                        ties += 1;
                    }
                }
                Ok((row, ties))
            })
            .collect(),
    };
    let mut out = Vec::with_capacity(n);
    let mut ties = 0;
    for row in rows {
        let (row, t) = row?;
        out.push(row);
        ties += t;
    }
    Ok((out, ties / 2))
}

impl DiscreteOperator {
    fn build(cloud: &AtomCloud, r: f64, kind: OperatorKind) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(AmvError::Input(format!("radius must be positive and finite, got {r}")));
        }
        let (rows, ties) = neighbours(cloud, r)?;
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut row_masses = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let m: f64 = row.iter().map(|&j| cloud.atoms[j].weight).sum();
            if !(m > 0.0) {
                return Err(AmvError::Domain(format!(
                    "atom {i} at {:?} has an empty ball of radius {r}",
                    cloud.atoms[i].point
                )));
            }
            row_masses.push(m);
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        Ok(Self { cloud: cloud.clone(), r, kind, row_ptr, cols, row_masses, ties })
    }

    pub fn len(&self) -> usize {
        self.row_masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_masses.is_empty()
    }

    pub fn nnz(&self) -> usize {
        match self.kind {
            OperatorKind::Tr => self.cols.len(),
            // The diagonal is always stored: the atom lies in its own ball.
            OperatorKind::DeltaR => self.cols.len(),
        }
    }

    /// Column indices of row `i` (the ball of atom `i`).
    pub fn ball(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.cloud.atoms[j].weight
    }

    /// The same kernel as the other operator kind.
    pub fn with_kind(&self, kind: OperatorKind) -> Self {
        Self { kind, ..self.clone() }
    }

    /// Matrix entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let t = if self.ball(i).binary_search(&j).is_ok() { self.weight(j) / self.row_masses[i] } else { 0.0 };
        match self.kind {
            OperatorKind::Tr => t,
            OperatorKind::DeltaR => (t - if i == j { 1.0 } else { 0.0 }) / (self.r * self.r),
        }
    }

    /// `(row, col, value)` for every stored entry, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.cols.len());
        for i in 0..self.len() {
            for &j in self.ball(i) {
                out.push((i, j, self.entry(i, j)));
            }
        }
        out
    }

    /// `A u` with `T_r 1 = 1` and `Δ_r 1 = 0` exact.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len(), "vector length must equal atom count");
        let r2 = self.r * self.r;
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let ball = self.ball(i);
                match self.kind {
                    OperatorKind::Tr => ball.iter().map(|&j| self.weight(j) * u[j]).sum::<f64>() / self.row_masses[i],
                    OperatorKind::DeltaR => {
                        ball.iter().map(|&j| self.weight(j) * (u[j] - u[i])).sum::<f64>() / self.row_masses[i] / r2
                    }
                }
            })
            .collect()
    }

    /// `A_abs |u|`: the same sums with absolute values, for roundoff scales.
    pub fn apply_abs(&self, u: &[f64]) -> Vec<f64> {
        let r2 = self.r * self.r;
        (0..self.len())
            .map(|i| {
                let s = self.ball(i).iter().map(|&j| self.weight(j) * u[j].abs()).sum::<f64>() / self.row_masses[i];
                match self.kind {
                    OperatorKind::Tr => s,
                    OperatorKind::DeltaR => (s + u[i].abs()) / r2,
                }
            })
            .collect()
    }

    /// `max_i |Σ_j (T_r)_ij − 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let s: f64 = self.ball(i).iter().map(|&j| self.weight(j) / self.row_masses[i]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Writes the sparse triplet format: a header line, then `row col value`.
    pub fn write_triplets(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# amv-operator rows={} cols={} nnz={} r={:e} kind={}",
            self.len(),
            self.len(),
            self.nnz(),
            self.r,
            match self.kind {
                OperatorKind::Tr => "tr",
                OperatorKind::DeltaR => "delta_r",
            }
        )?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

/// `T_r` on a cloud.
#[allow(non_snake_case)]
pub fn build_Tr(cloud: &AtomCloud, r: f64) -> Result<DiscreteOperator> {
    DiscreteOperator::build(cloud, r, OperatorKind::Tr)
}

/// `Δ_r = (T_r − I)/r²` on a cloud.
pub fn build_amv_operator(cloud: &AtomCloud, r: f64) -> Result<DiscreteOperator> {
    DiscreteOperator::build(cloud, r, OperatorKind::DeltaR)
}

/// Smallest radius above `r` with no exact ties on the cloud, stepping one
/// ulp at a time.
pub fn untie_radius(cloud: &AtomCloud, r: f64) -> Result<f64> {
    let mut r = r;
    for _ in 0..64 {
        let (_, ties) = neighbours(cloud, r)?;
        if ties == 0 {
            return Ok(r);
        }
        r = r.next_up();
    }
    Err(AmvError::Numeric(format!("could not find a tie-free radius near {r}")))
}
