//! Second-order finite-difference discretization of a fiber problem.
//!
//! Each edge is sampled on its own uniform grid, so values at the two ends of
//! an edge are separate unknowns (δ′-type vertices allow jumps). Interior
//! nodes carry the three-point stencil of `−ε⁻¹ u''`; end nodes carry the
//! vertex conditions, with derivatives replaced by one-sided second-order
//! quotients. Eliminating the end nodes leaves a standard eigenproblem on the
//! interior nodes.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::secular::{condition_rows, Trace};
use super::{Eigenvalue, SolverError, SpectralProblem, Spectrum};

struct EdgeGrid {
    /// Global index of interior node 1 (interior nodes are contiguous).
    first: usize,
    intervals: usize,
    h: f64,
}

/// Finite-difference spectrum below `lambda_max` with `mesh_density`
/// intervals per unit length (at least 100, and at least 4 per edge).
pub fn fem_oracle(
    problem: &SpectralProblem<'_>,
    mesh_density: usize,
) -> Result<Spectrum, SolverError> {
    if mesh_density < 100 {
        return Err(SolverError::InvalidProblem(format!(
            "mesh density {mesh_density} is below 100"
        )));
    }
    let cell = problem.cell;
    let rows = condition_rows(cell, &problem.regime, problem.epsilon)?;

    let mut grids = Vec::with_capacity(cell.edges().len());
    let mut ni = 0;
    for e in cell.edges() {
        let intervals = ((e.length * mesh_density as f64).ceil() as usize).max(4);
        grids.push(EdgeGrid {
            first: ni,
            intervals,
            h: e.length / intervals as f64,
        });
        ni += intervals - 1;
    }
    let nb = 2 * cell.edges().len();

    // Interior node `i` (1..n-1) of edge `e`, or end node 0 / n.
    enum Node {
        Interior(usize),
        End(usize),
    }
    let node = |e: usize, i: usize| -> Node {
        let g = &grids[e];
        if i == 0 {
            Node::End(2 * e)
        } else if i == g.intervals {
            Node::End(2 * e + 1)
        } else {
            Node::Interior(g.first + i - 1)
        }
    };

    let mut cb = DMatrix::<Complex64>::zeros(nb, nb);
    let mut ci = DMatrix::<Complex64>::zeros(nb, ni);
    for (r, row) in rows.iter().enumerate() {
        for t in row {
            let e = t.end.edge;
            let g = &grids[e];
            let n = g.intervals;
            let along = |i: usize| if t.end.at_head { n - i } else { i };
            let stencil: &[(usize, f64)] = match t.trace {
                Trace::Value => &[(0, 1.0)],
                Trace::Flux => &[(0, -1.5), (1, 2.0), (2, -0.5)],
            };
            let scale = if t.trace == Trace::Flux {
                1.0 / g.h
            } else {
                1.0
            };
            for &(offset, w) in stencil {
                let c = t.coef * (w * scale);
                match node(e, along(offset)) {
                    Node::End(b) => cb[(r, b)] += c,
                    Node::Interior(i) => ci[(r, i)] += c,
                }
            }
        }
    }

    let mut kii = DMatrix::<Complex64>::zeros(ni, ni);
    let mut kib = DMatrix::<Complex64>::zeros(ni, nb);
    for (e, g) in grids.iter().enumerate() {
        let w = 1.0 / (problem.epsilon * g.h * g.h);
        for i in 1..g.intervals {
            let Node::Interior(r) = node(e, i) else {
                unreachable!()
            };
            kii[(r, r)] += Complex64::new(2.0 * w, 0.0);
            for j in [i - 1, i + 1] {
                match node(e, j) {
                    Node::Interior(c) => kii[(r, c)] -= Complex64::new(w, 0.0),
                    Node::End(b) => kib[(r, b)] -= Complex64::new(w, 0.0),
                }
            }
        }
    }

    let elim = cb.lu().solve(&ci).ok_or_else(|| {
        SolverError::InvalidProblem("boundary block of the discretization is singular".into())
    })?;
    let reduced = kii - kib * elim;

    let n = reduced.nrows();
    let eig = if reduced.iter().all(|z| z.im == 0.0) {
        faer::Mat::<f64>::from_fn(n, n, |i, j| reduced[(i, j)].re).eigenvalues()
    } else {
        faer::Mat::<Complex64>::from_fn(n, n, |i, j| reduced[(i, j)]).eigenvalues()
    };
    let mut values =
        eig.map_err(|e| SolverError::InvalidProblem(format!("dense eigensolver failed: {e:?}")))?;
    values.retain(|z| z.re <= problem.lambda_max);
    values.sort_by(|a, b| a.re.total_cmp(&b.re));

    let mut eigenvalues: Vec<Eigenvalue> = Vec::new();
    for z in values {
        let x = z.re.max(0.0);
        match eigenvalues.last_mut() {
            Some(last) if (x - last.value).abs() <= 1e-7 * (1.0 + x) => {
                last.multiplicity += 1;
                last.residual = last.residual.max(z.im.abs());
            }
            _ => eigenvalues.push(Eigenvalue {
                value: x,
                multiplicity: 1,
                residual: z.im.abs(),
            }),
        }
    }
    Ok(Spectrum {
        eigenvalues,
        regime: problem.regime.clone(),
        epsilon: problem.epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{eigenvalues_below, Regime};
    use crate::graph::{build_comb, build_line};
    use std::f64::consts::PI;

    #[test]
    fn dirichlet_interval() {
        let cell = build_line(PI).unwrap();
        let p = SpectralProblem::new(&cell, Regime::Dirichlet, 1.0, 10.0).unwrap();
        let v = fem_oracle(&p, 1000).unwrap().expanded();
        assert_eq!(v.len(), 3, "{v:?}");
        for (x, e) in v.iter().zip([1.0, 4.0, 9.0]) {
            assert!((x - e).abs() < 5e-4 * e, "{v:?}");
        }
    }

    #[test]
    fn second_order_convergence() {
        let cell = build_comb(1.0, &[1.0], &[2.0]).unwrap();
        let p = SpectralProblem::new(&cell, Regime::Neumann, 0.05, 400.0).unwrap();
        let exact = eigenvalues_below(&p).unwrap().expanded();
        let coarse = fem_oracle(&p, 100).unwrap().expanded();
        let fine = fem_oracle(&p, 200).unwrap().expanded();
        let k = exact.len() - 1;
        let ratio = (coarse[k] - exact[k]).abs() / (fine[k] - exact[k]).abs();
        assert!((3.0..5.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn quasi_periodic_line() {
        let phi = 0.9;
        let cell = build_line(1.0).unwrap();
        let p = SpectralProblem::new(&cell, Regime::from_angles(&[phi]), 1.0, 60.0).unwrap();
        let v = fem_oracle(&p, 400).unwrap().expanded();
        let expected = [
            phi * phi,
            (2.0 * PI - phi).powi(2),
            (2.0 * PI + phi).powi(2),
        ];
        assert_eq!(v.len(), 3, "{v:?}");
        for (x, e) in v.iter().zip(expected) {
            assert!((x - e).abs() < 1e-3 * e, "{v:?}");
        }
    }
}
