//! Eigenvalue counting from the quadratic form.
//!
//! Write `Q_λ(u) = ε⁻¹ Σ ∫|u'|² + Σ q_j |u₀(v) − u_j(v)|² − λ‖u‖²`. Splitting
//! `u` into its λ-harmonic extension from the vertex values plus a part that
//! vanishes at every edge end gives
//!
//! `#{eigenvalues < λ} = Σ_e #{n ≥ 1 : (nπ/l_e)² < ελ} + n₋(Λ(λ))`,
//!
//! and the first sum vanishes once every edge is short compared with the
//! wavelength.
//!
//! where `Λ(λ)` is the Hermitian matrix of `Q_λ` on λ-harmonic functions,
//! indexed by the free vertex values. Continuity, quasi-periodicity and
//! Dirichlet conditions restrict the vertex values; everything else is
//! natural. The count cannot skip clustered eigenvalues, which makes it the
//! root locator; the secular matrix supplies residuals.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{Regime, SolverError};
use crate::graph::{PeriodCell, VertexRole};

/// Largest phase `k·h` of an edge piece in [`FormModel::count_below`].
const MAX_PIECE_PHASE: f64 = 1.0;

/// Edge-end value as `coef · x[index]`, or pinned to zero.
type Slot = Option<(usize, Complex64)>;

#[derive(Debug, Clone)]
pub struct FormModel {
    epsilon: f64,
    size: usize,
    edges: Vec<(f64, [Slot; 2])>,
    couplings: Vec<(usize, usize, f64)>,
    real: bool,
}

impl FormModel {
    pub fn new(cell: &PeriodCell, regime: &Regime, epsilon: f64) -> Result<Self, SolverError> {
        let nv = cell.vertices().len();
        // side 0 carries part 0 (or everything at a non-coupling vertex)
        let sides: Vec<Vec<usize>> = (0..nv)
            .map(|v| {
                let mut s = vec![0];
                s.extend(cell.coupled_parts(v));
                s
            })
            .collect();
        let side_of = |v: usize, part: usize| -> usize {
            sides[v].iter().position(|&p| p == part).unwrap_or(0)
        };

        let mut pinned = vec![false; nv];
        let mut alias: Vec<Option<(usize, Complex64)>> = vec![None; nv];
        for (v, vertex) in cell.vertices().iter().enumerate() {
            if vertex.role == VertexRole::ExternalBoundary && *regime == Regime::Dirichlet {
                pinned[v] = true;
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
                alias[p.plus] = Some((p.minus, phase));
            }
        }

        let mut first = vec![usize::MAX; nv];
        let mut size = 0;
        for v in 0..nv {
            if !pinned[v] && alias[v].is_none() {
                first[v] = size;
                size += sides[v].len();
            }
        }
        let slot = |v: usize, side: usize| -> Slot {
            if pinned[v] {
                return None;
            }
            match alias[v] {
                // paired vertices are external, so they have a single side
                Some((minus, phase)) => Some((first[minus], phase)),
                None => Some((first[v] + side, Complex64::new(1.0, 0.0))),
            }
        };

        let edges = cell
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let [t, h] = cell.endpoints(e);
                (
                    edge.length,
                    [
                        slot(t, side_of(t, edge.part)),
                        slot(h, side_of(h, edge.part)),
                    ],
                )
            })
            .collect();
        let mut couplings = Vec::new();
        for v in 0..nv {
            for (s, &part) in sides[v].iter().enumerate().skip(1) {
                let q = cell.coupling_q(part).unwrap_or(0.0);
                couplings.push((first[v], first[v] + s, q));
            }
        }
        let real = alias.iter().flatten().all(|(_, c)| c.im == 0.0);
        Ok(Self {
            epsilon,
            size,
            edges,
            couplings,
            real,
        })
    }

    /// Number of eigenvalues strictly below `lambda`, with multiplicity.
    ///
    /// Each edge is cut into `p` equal pieces with phase `k·l/p ≤ 1`, so no
    /// piece has a Dirichlet eigenvalue below `lambda` and the count is the
    /// negative index of `Λ` alone. Without the cuts, a graph eigenvalue that
    /// coincides with an edge Dirichlet eigenvalue would be hidden under a
    /// pole of `Λ`.
    pub fn count_below(&self, lambda: f64) -> usize {
        if lambda <= 0.0 {
            return 0;
        }
        let k = (self.epsilon * lambda).sqrt();
        let pieces: Vec<usize> = self
            .edges
            .iter()
            .map(|&(l, _)| ((k * l / MAX_PIECE_PHASE).ceil() as usize).max(1))
            .collect();
        let size = self.size + pieces.iter().map(|p| p - 1).sum::<usize>();
        if size == 0 {
            return 0;
        }
        let mut m = DMatrix::<Complex64>::zeros(size, size);
        let one = Complex64::new(1.0, 0.0);
        let mut next = self.size;
        for (&(l, ends), &p) in self.edges.iter().zip(&pieces) {
            // Q_λ of the λ-harmonic function on a piece of length h with end
            // values f is ε⁻¹ f* D f, D = k[[cot t − tan t, −cot t − tan t], …]/2
            // with t = kh/2; this splitting keeps both eigenvalues accurate
            let t = 0.5 * k * l / p as f64;
            let (cot, tan) = (1.0 / t.tan(), t.tan());
            let diag = 0.5 * k * (cot - tan) / self.epsilon;
            let off = -0.5 * k * (cot + tan) / self.epsilon;
            let nodes: Vec<Slot> = std::iter::once(ends[0])
                .chain((1..p).map(|i| Some((next + i - 1, one))))
                .chain(std::iter::once(ends[1]))
                .collect();
            next += p - 1;
            for w in nodes.windows(2) {
                let d = [[diag, off], [off, diag]];
                for (i, a) in w.iter().enumerate() {
                    let Some((ia, ca)) = a else { continue };
                    for (j, b) in w.iter().enumerate() {
                        let Some((ib, cb)) = b else { continue };
                        m[(*ia, *ib)] += ca.conj() * d[i][j] * cb;
                    }
                }
            }
        }
        for &(i, j, q) in &self.couplings {
            m[(i, i)] += q;
            m[(j, j)] += q;
            m[(i, j)] -= q;
            m[(j, i)] -= q;
        }
        if self.real {
            SymmetricEigen::new(m.map(|z| z.re))
                .eigenvalues
                .iter()
                .filter(|&&x| x < 0.0)
                .count()
        } else {
            SymmetricEigen::new(m)
                .eigenvalues
                .iter()
                .filter(|&&x| x < 0.0)
                .count()
        }
    }
}
