//! Secular matrix assembly.
//!
//! Every vertex and boundary condition is first written as a linear form in
//! the boundary data "value at an edge end" and "derivative at an edge end,
//! pointing from the vertex into the edge". These forms do not depend on λ;
//! [`SecularSystem::matrix`] substitutes the trigonometric ansatz to obtain
//! `M(λ)`, and the finite-difference oracle substitutes difference quotients.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Regime, SolverError, SpectralProblem};
use crate::graph::{EdgeEnd, PeriodCell, VertexRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Trace {
    Value,
    /// Derivative along the coordinate that starts at the vertex.
    Flux,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Term {
    pub end: EdgeEnd,
    pub trace: Trace,
    pub coef: Complex64,
}

pub(crate) type ConditionRow = Vec<Term>;

fn value(end: EdgeEnd, coef: f64) -> Term {
    Term {
        end,
        trace: Trace::Value,
        coef: Complex64::new(coef, 0.0),
    }
}

fn flux(end: EdgeEnd, coef: f64) -> Term {
    Term {
        end,
        trace: Trace::Flux,
        coef: Complex64::new(coef, 0.0),
    }
}

/// Continuity along `side`: `u(side[0]) − u(side[i]) = 0`.
fn continuity(side: &[EdgeEnd], rows: &mut Vec<ConditionRow>) {
    for &other in side.iter().skip(1) {
        rows.push(vec![value(side[0], 1.0), value(other, -1.0)]);
    }
}

/// The λ-independent condition rows of a fiber problem, `2|E|` of them.
pub(crate) fn condition_rows(
    cell: &PeriodCell,
    regime: &Regime,
    epsilon: f64,
) -> Result<Vec<ConditionRow>, SolverError> {
    let mut rows: Vec<ConditionRow> = Vec::with_capacity(2 * cell.edges().len());
    let part_of = |end: &EdgeEnd| cell.edges()[end.edge].part;
    let inv_eps = 1.0 / epsilon;

    for (v, vertex) in cell.vertices().iter().enumerate() {
        let ends = cell.incident(v);
        if vertex.role == VertexRole::ExternalBoundary {
            match regime {
                Regime::Neumann => rows.push(vec![flux(ends[0], 1.0)]),
                Regime::Dirichlet => rows.push(vec![value(ends[0], 1.0)]),
                Regime::Theta(_) => {}
            }
            continue;
        }
        let coupled = cell.coupled_parts(v);
        if coupled.is_empty() {
            // Kirchhoff: continuity plus vanishing flux. The common factor ε⁻¹
            // is dropped.
            continuity(ends, &mut rows);
            rows.push(ends.iter().map(|&e| flux(e, 1.0)).collect());
            continue;
        }

        // δ′-type vertex: one side for Y₀ and one side per coupled part.
        let base: Vec<EdgeEnd> = ends.iter().copied().filter(|e| part_of(e) == 0).collect();
        if base.is_empty() {
            return Err(SolverError::InvalidCell(format!(
                "coupling vertex `{}` has no edge of part 0",
                vertex.id
            )));
        }
        let mut sides = Vec::with_capacity(coupled.len());
        for &j in &coupled {
            let side: Vec<EdgeEnd> = ends.iter().copied().filter(|e| part_of(e) == j).collect();
            if side.is_empty() {
                return Err(SolverError::InvalidCell(format!(
                    "coupling vertex `{}` has no edge of part {j}",
                    vertex.id
                )));
            }
            let q = cell.coupling_q(j).unwrap_or(0.0);
            sides.push((side, q));
        }
        let covered = base.len() + sides.iter().map(|(s, _)| s.len()).sum::<usize>();
        if covered != ends.len() {
            return Err(SolverError::InvalidCell(format!(
                "coupling vertex `{}` touches a part it is not coupled to",
                vertex.id
            )));
        }

        continuity(&base, &mut rows);
        for (side, _) in &sides {
            continuity(side, &mut rows);
        }
        // −ε⁻¹ Σ_{Y₀} ∂u + Σ_j q_j (u₀ − u_j) = 0
        let mut row: ConditionRow = base.iter().map(|&e| flux(e, -inv_eps)).collect();
        for (side, q) in &sides {
            row.push(value(base[0], *q));
            row.push(value(side[0], -*q));
        }
        rows.push(row);
        // −ε⁻¹ Σ_{Y_j} ∂u + q_j (u_j − u₀) = 0
        for (side, q) in &sides {
            let mut row: ConditionRow = side.iter().map(|&e| flux(e, -inv_eps)).collect();
            row.push(value(side[0], *q));
            row.push(value(base[0], -*q));
            rows.push(row);
        }
    }

    if let Regime::Theta(theta) = regime {
        for p in cell.resolved_pairings() {
            let mut phase = Complex64::new(1.0, 0.0);
            for (t, &s) in theta.iter().zip(&p.shift) {
                let factor = if s >= 0 { *t } else { t.conj() };
                for _ in 0..s.unsigned_abs() {
                    phase *= factor;
                }
            }
            let minus = cell.incident(p.minus)[0];
            let plus = cell.incident(p.plus)[0];
            rows.push(vec![
                value(plus, 1.0),
                Term {
                    end: minus,
                    trace: Trace::Value,
                    coef: -phase,
                },
            ]);
            rows.push(vec![
                flux(plus, p.signs[1]),
                Term {
                    end: minus,
                    trace: Trace::Flux,
                    coef: -phase * p.signs[0],
                },
            ]);
        }
    }

    let unknowns = 2 * cell.edges().len();
    if rows.len() != unknowns {
        return Err(SolverError::RowCount {
            rows: rows.len(),
            unknowns,
        });
    }
    Ok(rows)
}

/// Prepared secular system of one problem; cheap to evaluate at many λ.
#[derive(Debug, Clone)]
pub struct SecularSystem {
    rows: Vec<ConditionRow>,
    lengths: Vec<f64>,
    epsilon: f64,
    real: bool,
}

/// Splits every edge whose two ends are paired with each other. On such an
/// edge both pairing rows vanish identically at the eigenvalues, so after row
/// normalization `σ_min` would stay away from zero there.
fn split_self_paired(cell: &PeriodCell) -> Result<Option<PeriodCell>, SolverError> {
    let mut current: Option<PeriodCell> = None;
    loop {
        let c = current.as_ref().unwrap_or(cell);
        let looped = c.resolved_pairings().iter().find_map(|p| {
            let e = c.incident(p.minus)[0].edge;
            (c.incident(p.plus)[0].edge == e).then_some(e)
        });
        let Some(e) = looped else {
            return Ok(current);
        };
        let edge = &c.edges()[e];
        let next = c
            .subdivide_edge(&edge.id, 0.5 * edge.length)
            .map_err(|err| SolverError::InvalidCell(err.to_string()))?;
        current = Some(next);
    }
}

impl SecularSystem {
    /// System used for root finding. Identical to [`assemble_secular`] except
    /// that self-paired edges are split at their midpoint first.
    pub fn new(problem: &SpectralProblem<'_>) -> Result<Self, SolverError> {
        match split_self_paired(problem.cell)? {
            Some(cell) => Self::for_cell(&cell, &problem.regime, problem.epsilon),
            None => Self::for_cell(problem.cell, &problem.regime, problem.epsilon),
        }
    }

    fn for_cell(cell: &PeriodCell, regime: &Regime, epsilon: f64) -> Result<Self, SolverError> {
        let rows = condition_rows(cell, regime, epsilon)?;
        let real = rows.iter().flatten().all(|t| t.coef.im == 0.0);
        Ok(Self {
            rows,
            lengths: cell.edges().iter().map(|e| e.length).collect(),
            epsilon,
            real,
        })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// Row-normalized `M(λ)`. Columns `2e`, `2e+1` hold the coefficients of
    /// `cos(kx)` and `sin(kx)/k` on edge `e` (`1` and `x` when `λ = 0`).
    pub fn matrix(&self, lambda: f64) -> Result<DMatrix<Complex64>, SolverError> {
        if lambda < 0.0 || lambda.is_nan() {
            return Err(SolverError::NegativeLambda(lambda));
        }
        let k = (self.epsilon * lambda).sqrt();
        // per edge: (cos kl, sin(kl)/k, k sin kl)
        let trig: Vec<(f64, f64, f64)> = self
            .lengths
            .iter()
            .map(|&l| {
                if k == 0.0 {
                    (1.0, l, 0.0)
                } else {
                    let (s, c) = (k * l).sin_cos();
                    (c, s / k, k * s)
                }
            })
            .collect();
        let n = self.rows.len();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for (r, row) in self.rows.iter().enumerate() {
            for t in row {
                let e = t.end.edge;
                let (cos, sinc, ksin) = trig[e];
                let (cc, cd) = match (t.trace, t.end.at_head) {
                    (Trace::Value, false) => (1.0, 0.0),
                    (Trace::Value, true) => (cos, sinc),
                    (Trace::Flux, false) => (0.0, 1.0),
                    (Trace::Flux, true) => (ksin, -cos),
                };
                m[(r, 2 * e)] += t.coef * cc;
                m[(r, 2 * e + 1)] += t.coef * cd;
            }
            let norm = m.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                let inv = 1.0 / norm;
                m.row_mut(r).iter_mut().for_each(|z| *z *= inv);
            }
        }
        Ok(m)
    }

    /// Singular values of `M(λ)` in ascending order.
    pub fn singular_values(&self, lambda: f64) -> Result<Vec<f64>, SolverError> {
        let m = self.matrix(lambda)?;
        let mut sv: Vec<f64> = if self.real {
            m.map(|z| z.re).singular_values().iter().copied().collect()
        } else {
            m.singular_values().iter().copied().collect()
        };
        sv.sort_by(f64::total_cmp);
        Ok(sv)
    }

    pub fn sigma_min(&self, lambda: f64) -> Result<f64, SolverError> {
        Ok(self
            .singular_values(lambda)?
            .first()
            .copied()
            .unwrap_or(0.0))
    }
}

/// `M(λ)` of a problem, rows scaled to unit Euclidean norm.
pub fn assemble_secular(
    problem: &SpectralProblem<'_>,
    lambda: f64,
) -> Result<DMatrix<Complex64>, SolverError> {
    SecularSystem::for_cell(problem.cell, &problem.regime, problem.epsilon)?.matrix(lambda)
}

/// Smallest singular value of the normalized secular matrix (of the split
/// system when the cell has self-paired edges).
pub fn sigma_min(problem: &SpectralProblem<'_>, lambda: f64) -> Result<f64, SolverError> {
    SecularSystem::new(problem)?.sigma_min(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_comb, build_line};
    use std::f64::consts::PI;

    #[test]
    fn dirichlet_interval_singular_at_squares() {
        let cell = build_line(PI).unwrap();
        let p = SpectralProblem::new(&cell, Regime::Dirichlet, 1.0, 10.0).unwrap();
        let m = assemble_secular(&p, 1.0).unwrap();
        assert_eq!(m.nrows(), 2);
        for n in 1..=3 {
            assert!(sigma_min(&p, (n * n) as f64).unwrap() < 1e-10);
        }
        assert!(sigma_min(&p, 2.5).unwrap() > 1e-3);
    }

    #[test]
    fn negative_lambda_rejected() {
        let cell = build_line(PI).unwrap();
        let p = SpectralProblem::new(&cell, Regime::Dirichlet, 1.0, 10.0).unwrap();
        assert!(matches!(
            sigma_min(&p, -1.0),
            Err(SolverError::NegativeLambda(_))
        ));
    }

    #[test]
    fn comb_constants_at_zero() {
        let cell = build_comb(1.0, &[1.0], &[2.0]).unwrap();
        let neumann = SpectralProblem::new(&cell, Regime::Neumann, 0.01, 10.0).unwrap();
        assert!(sigma_min(&neumann, 0.0).unwrap() < 1e-14);
        let twisted = SpectralProblem::new(&cell, Regime::from_angles(&[1.0]), 0.01, 10.0).unwrap();
        assert!(sigma_min(&twisted, 0.0).unwrap() > 1e-3);
    }

    #[test]
    fn rows_are_normalized() {
        let cell = build_comb(1.0, &[1.0], &[2.0]).unwrap();
        let p = SpectralProblem::new(&cell, Regime::from_angles(&[0.7]), 0.05, 10.0).unwrap();
        let m = assemble_secular(&p, 3.3).unwrap();
        assert_eq!(m.nrows(), 2 * cell.edges().len());
        for r in 0..m.nrows() {
            let norm: f64 = m.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn self_paired_edge_is_singular_at_double_root() {
        let cell = build_line(1.0).unwrap();
        let p = SpectralProblem::new(&cell, Regime::periodic(1), 1.0, 50.0).unwrap();
        assert_eq!(assemble_secular(&p, 1.0).unwrap().nrows(), 2);
        let sv = SecularSystem::new(&p)
            .unwrap()
            .singular_values(4.0 * PI * PI)
            .unwrap();
        assert!(sv[1] < 1e-12, "{sv:?}");
    }

    #[test]
    fn sigma_continuous_at_zero() {
        let cell = build_comb(1.0, &[1.0], &[2.0]).unwrap();
        let p = SpectralProblem::new(&cell, Regime::Dirichlet, 0.1, 10.0).unwrap();
        let s0 = sigma_min(&p, 0.0).unwrap();
        let s1 = sigma_min(&p, 1e-10).unwrap();
        assert!((s0 - s1).abs() < 1e-8);
    }
}
