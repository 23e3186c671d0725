//! Closed-form small-ε objects of the cell.
//!
//! With `l_j` the total length of part `j`, `N_j = |𝒱_j|` and coupling `q_j`,
//! the constants `a_j = N_j q_j / l_j` are the limits of the Dirichlet fiber
//! eigenvalues, and the roots `b_j` of
//!
//! ```text
//! F(λ) = 1 + Σ_i a_i l_i / (l₀ (a_i − λ))
//! ```
//!
//! are the limits of the nonzero Neumann fiber eigenvalues. The roots interlace
//! with the poles, `a_j < b_j < a_{j+1}`, and coincide with the nonzero
//! eigenvalues of the `(m+1)×(m+1)` matrix returned by
//! [`LimitModel::limit_matrix`].

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::graph::PartTotals;

/// Relative tolerance below which two constants `a_j` count as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("constants a_{i} and a_{j} coincide ({value}); the a_j must be pairwise distinct")]
    DegenerateConstants { i: usize, j: usize, value: f64 },
    #[error("λ = {lambda} is a pole of F (a_{j} = {pole})")]
    Pole { lambda: f64, j: usize, pole: f64 },
    #[error("root bracket for b_{j} failed: F({at}) = {value}")]
    Bracketing { j: usize, at: f64, value: f64 },
    #[error("invalid limit input: {0}")]
    Input(String),
}

/// Limit data sorted so that `a` is strictly increasing. `l`, `n`, `q` are
/// permuted consistently with `a`; `order[k]` is the original (1-based) part
/// index of sorted slot `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitModel {
    l0: f64,
    l: Vec<f64>,
    n: Vec<usize>,
    q: Vec<f64>,
    a: Vec<f64>,
    b: Option<Vec<f64>>,
    order: Vec<usize>,
}

impl LimitModel {
    /// `a_j` from cell totals and couplings `q₁…q_m` (part order).
    pub fn new(totals: &PartTotals, q: &[f64]) -> Result<Self, LimitError> {
        let parts: Vec<(f64, usize)> = (1..=totals.m())
            .map(|j| (totals.length(j), totals.count(j)))
            .collect();
        Self::from_parts(totals.length(0), &parts, q)
    }

    /// `parts[j-1] = (l_j, N_j)`.
    pub fn from_parts(l0: f64, parts: &[(f64, usize)], q: &[f64]) -> Result<Self, LimitError> {
        let m = parts.len();
        if m == 0 {
            return Err(LimitError::Input("no attached parts".into()));
        }
        if q.len() != m {
            return Err(LimitError::Input(format!(
                "{} coupling constants for {m} parts",
                q.len()
            )));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(l0) || parts.iter().any(|&(l, n)| !positive(l) || n == 0) {
            return Err(LimitError::Input(
                "lengths and counts must be positive".into(),
            ));
        }
        if q.iter().any(|&x| !positive(x)) {
            return Err(LimitError::Input(
                "coupling constants must be positive".into(),
            ));
        }
        let raw: Vec<f64> = parts
            .iter()
            .zip(q)
            .map(|(&(l, n), &qj)| n as f64 * qj / l)
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]));
        for w in order.windows(2) {
            let (x, y) = (raw[w[0]], raw[w[1]]);
            if y - x <= TIE_TOLERANCE * x.abs().max(y.abs()) {
                return Err(LimitError::DegenerateConstants {
                    i: w[0] + 1,
                    j: w[1] + 1,
                    value: x,
                });
            }
        }
        Ok(Self {
            l0,
            l: order.iter().map(|&k| parts[k].0).collect(),
            n: order.iter().map(|&k| parts[k].1).collect(),
            q: order.iter().map(|&k| q[k]).collect(),
            a: order.iter().map(|&k| raw[k]).collect(),
            b: None,
            order: order.iter().map(|&k| k + 1).collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    /// `l₁…l_m` in ascending-`a` order.
    pub fn lengths(&self) -> &[f64] {
        &self.l
    }

    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn couplings(&self) -> &[f64] {
        &self.q
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Gap right endpoints, once computed by [`Self::with_gap_endpoints`].
    pub fn b(&self) -> Option<&[f64]> {
        self.b.as_deref()
    }

    /// Original part index (1-based) of each sorted slot.
    pub fn part_order(&self) -> &[usize] {
        &self.order
    }

    /// Upper end of the bracket for `b_m`: `a_m + Σ a_i l_i / l₀`.
    pub fn upper_bracket(&self) -> f64 {
        let spread: f64 = self.a.iter().zip(&self.l).map(|(a, l)| a * l).sum::<f64>() / self.l0;
        self.a[self.m() - 1] + spread
    }

    fn f_unchecked(&self, lambda: f64) -> f64 {
        1.0 + self
            .a
            .iter()
            .zip(&self.l)
            .map(|(&a, &l)| a * l / (self.l0 * (a - lambda)))
            .sum::<f64>()
    }

    fn check_pole(&self, lambda: f64) -> Result<(), LimitError> {
        for (j, &a) in self.a.iter().enumerate() {
            if (lambda - a).abs() <= TIE_TOLERANCE * a.abs().max(1.0) {
                return Err(LimitError::Pole {
                    lambda,
                    j: j + 1,
                    pole: a,
                });
            }
        }
        Ok(())
    }

    /// `F(λ)`, evaluated term by term.
    pub fn eval_f(&self, lambda: f64) -> Result<f64, LimitError> {
        self.check_pole(lambda)?;
        Ok(self.f_unchecked(lambda))
    }

    /// Fills `b` with the roots of `F`, one per interval between poles.
    pub fn with_gap_endpoints(mut self) -> Result<Self, LimitError> {
        let m = self.m();
        let mut b = Vec::with_capacity(m);
        for j in 0..m {
            let lo = self.a[j];
            let hi = if j + 1 < m {
                self.a[j + 1]
            } else {
                let hi = self.upper_bracket();
                let value = self.f_unchecked(hi);
                // F(hi) ≥ 0 analytically; equality holds for m = 1.
                if value < -1e-9 {
                    return Err(LimitError::Bracketing {
                        j: j + 1,
                        at: hi,
                        value,
                    });
                }
                hi
            };
            b.push(self.bisect(lo, hi));
        }
        self.b = Some(b);
        Ok(self)
    }

    /// F is strictly increasing between consecutive poles, negative just right
    /// of `lo` and nonnegative at `hi`; bisect to the last representable split.
    fn bisect(&self, mut lo: f64, mut hi: f64) -> f64 {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.f_unchecked(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `A` with rows and columns indexed `0…m` (sorted slots).
    pub fn limit_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        for j in 0..m {
            let w = self.q[j] * self.n[j] as f64;
            a[(0, 0)] += w / self.l0;
            a[(0, j + 1)] = -w / self.l0;
            a[(j + 1, 0)] = -w / self.l[j];
            a[(j + 1, j + 1)] = w / self.l[j];
        }
        a
    }

    /// Eigenvalues of `A` in ascending order, via the symmetric matrix
    /// `D^{1/2} A D^{-1/2}` with `D = diag(l₀,…,l_m)`.
    pub fn limit_matrix_spectrum(&self) -> Vec<f64> {
        let m = self.m();
        let mut s = DMatrix::zeros(m + 1, m + 1);
        for j in 0..m {
            let w = self.q[j] * self.n[j] as f64;
            s[(0, 0)] += w / self.l0;
            let off = -w / (self.l0 * self.l[j]).sqrt();
            s[(0, j + 1)] = off;
            s[(j + 1, 0)] = off;
            s[(j + 1, j + 1)] = w / self.l[j];
        }
        let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    /// `|det(A−λI) + λ ∏(a_j−λ) F(λ)| / (1 + |det(A−λI)|)`, with the
    /// determinant taken from an LU factorization of `A − λI`.
    pub fn det_identity_residual(&self, lambda: f64) -> Result<f64, LimitError> {
        let f = self.eval_f(lambda)?;
        let m = self.m();
        let shifted = self.limit_matrix() - DMatrix::identity(m + 1, m + 1) * lambda;
        let det = shifted.lu().determinant();
        let product: f64 = self.a.iter().map(|&a| a - lambda).product();
        let rhs = -lambda * product * f;
        Ok((det - rhs).abs() / (1.0 + det.abs()))
    }

    /// Small-ε limits of the Dirichlet fiber eigenvalues: the sorted `a_j`.
    pub fn dirichlet_limits(&self) -> Vec<f64> {
        self.a.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single() -> LimitModel {
        LimitModel::from_parts(1.0, &[(1.0, 1)], &[2.0]).unwrap()
    }

    fn double() -> LimitModel {
        LimitModel::from_parts(1.0, &[(1.5, 1), (1.0 / 6.0, 1)], &[1.5, 0.5]).unwrap()
    }

    #[test]
    fn constants() {
        assert_eq!(single().a(), &[2.0]);
        let d = double();
        assert!((d.a()[0] - 1.0).abs() < 1e-15);
        assert!((d.a()[1] - 3.0).abs() < 1e-15);
        assert_eq!(d.dirichlet_limits(), d.a().to_vec());
    }

    #[test]
    fn sorting_permutes_all_data() {
        let m = LimitModel::from_parts(2.0, &[(1.0, 1), (1.0, 2)], &[5.0, 1.0]).unwrap();
        // raw a = (5, 2) → sorted (2, 5)
        assert_eq!(m.a(), &[2.0, 5.0]);
        assert_eq!(m.counts(), &[2, 1]);
        assert_eq!(m.couplings(), &[1.0, 5.0]);
        assert_eq!(m.part_order(), &[2, 1]);
    }

    #[test]
    fn ties_are_degenerate() {
        let err = LimitModel::from_parts(1.0, &[(1.0, 1), (0.5, 1)], &[2.0, 1.0]).unwrap_err();
        assert!(matches!(err, LimitError::DegenerateConstants { .. }));
    }

    #[test]
    fn f_values() {
        let s = single();
        assert_eq!(s.eval_f(4.0).unwrap(), 0.0);
        assert_eq!(s.eval_f(0.0).unwrap(), 2.0);
        assert!(s.eval_f(2.0).is_err());
        assert!(double().eval_f(2.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn roots() {
        let s = single().with_gap_endpoints().unwrap();
        // b_1 = a_1 (1 + l_1 / l_0)
        assert!((s.b().unwrap()[0] - 4.0).abs() < 1e-14);
        let d = double().with_gap_endpoints().unwrap();
        let b = d.b().unwrap();
        assert!((b[0] - 2.0).abs() < 1e-13);
        assert!((b[1] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn matrix_single() {
        let a = single().limit_matrix();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let spec = single().limit_matrix_spectrum();
        assert!(spec[0].abs() < 1e-12);
        assert!((spec[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_double_spectrum() {
        let spec = double().limit_matrix_spectrum();
        for (x, e) in spec.iter().zip([0.0, 2.0, 4.0]) {
            assert!((x - e).abs() < 1e-12, "{spec:?}");
        }
    }

    #[test]
    fn constants_in_kernel() {
        let a = double().limit_matrix();
        let ones = nalgebra::DVector::from_element(3, 1.0);
        assert!((a * ones).amax() < 1e-15);
    }

    #[test]
    fn det_identity_examples() {
        let s = single();
        assert_eq!(s.det_identity_residual(0.0).unwrap(), 0.0);
        // det = (2-1)^2 - 4 = -3 ; rhs = -1·(2-1)·F(1) = -3
        assert!(s.det_identity_residual(1.0).unwrap() < 1e-15);
        assert!(s.det_identity_residual(2.0).is_err());
    }

    fn model_strategy() -> impl Strategy<Value = LimitModel> {
        (1usize..=8)
            .prop_flat_map(|m| {
                (
                    0.1f64..10.0,
                    prop::collection::vec((0.1f64..10.0, 1usize..=4, 0.1f64..10.0), m),
                )
            })
            .prop_filter_map("distinct a_j", |(l0, parts)| {
                let lens: Vec<(f64, usize)> = parts.iter().map(|p| (p.0, p.1)).collect();
                let q: Vec<f64> = parts.iter().map(|p| p.2).collect();
                let model = LimitModel::from_parts(l0, &lens, &q).ok()?;
                let separated = model.a().windows(2).all(|w| w[1] - w[0] > 1e-3 * w[1]);
                separated.then_some(model)
            })
    }

    proptest! {
        #[test]
        fn interlacing(model in model_strategy()) {
            let upper = model.upper_bracket();
            let model = model.with_gap_endpoints().unwrap();
            let (a, b) = (model.a(), model.b().unwrap());
            for j in 0..a.len() {
                prop_assert!(a[j] < b[j]);
                if j + 1 < a.len() {
                    prop_assert!(b[j] < a[j + 1]);
                }
            }
            prop_assert!(b[a.len() - 1] <= upper);
        }

        #[test]
        fn matrix_oracle_agrees(model in model_strategy()) {
            let model = model.with_gap_endpoints().unwrap();
            let spec = model.limit_matrix_spectrum();
            prop_assert!(spec[0].abs() < 1e-10);
            for (x, b) in spec[1..].iter().zip(model.b().unwrap()) {
                prop_assert!((x - b).abs() < 1e-9 * b, "{} vs {}", x, b);
            }
        }

        #[test]
        fn f_increasing_between_poles(model in model_strategy(), s in 0.01f64..0.49, t in 0.51f64..0.99) {
            let a = model.a();
            for j in 0..a.len().saturating_sub(1) {
                let x = a[j] + s * (a[j + 1] - a[j]);
                let y = a[j] + t * (a[j + 1] - a[j]);
                prop_assert!(model.eval_f(x).unwrap() < model.eval_f(y).unwrap());
            }
        }

        #[test]
        fn coupling_scaling(model in model_strategy(), c in 0.2f64..5.0) {
            let parts: Vec<(f64, usize)> = model.lengths().iter().copied().zip(model.counts().iter().copied()).collect();
            let q: Vec<f64> = model.couplings().iter().map(|x| c * x).collect();
            let scaled = LimitModel::from_parts(model.l0(), &parts, &q).unwrap().with_gap_endpoints().unwrap();
            let base = model.with_gap_endpoints().unwrap();
            for (x, y) in scaled.a().iter().zip(base.a()) {
                prop_assert!((x - c * y).abs() <= 1e-12 * x);
            }
            for (x, y) in scaled.b().unwrap().iter().zip(base.b().unwrap()) {
                prop_assert!((x - c * y).abs() <= 1e-12 * x);
            }
        }
    }
}
