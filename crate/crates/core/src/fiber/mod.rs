//! Eigenvalue solver for the fiber operators on a period cell.
//!
//! On every edge an eigenfunction of `−ε⁻¹ d²/dx²` with eigenvalue `λ` is
//! `c·cos(kx) + d·sin(kx)/k`, `k = √(ελ)`. Vertex and boundary conditions turn
//! the coefficients `(c_e, d_e)` into a square homogeneous system `M(λ)`
//! ([`secular`]); eigenvalues are the `λ` where `M(λ)` is singular. Roots are
//! isolated by bisection on an exact eigenvalue count ([`count`]) and
//! confirmed by the smallest singular value of `M` ([`scan`]). The module
//! [`fdm`] is an independent finite-difference discretization used to
//! cross-check the transcendental solver.

pub mod count;
pub mod fdm;
pub mod scan;
pub mod secular;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::graph::PeriodCell;

pub use fdm::fem_oracle;
pub use scan::{
    eigenvalues_below, eigenvalues_below_with, lowest_eigenvalues, lowest_eigenvalues_with,
};
pub use secular::{assemble_secular, sigma_min};

/// Boundary treatment of the external boundary `∂_ext Y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Quasi-periodic pairing with multipliers `θ_k`, `|θ_k| = 1`.
    Theta(#[serde(serialize_with = "serialize_theta")] Vec<Complex64>),
    Neumann,
    Dirichlet,
}

fn serialize_theta<S: serde::Serializer>(theta: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(theta.len()))?;
    for t in theta {
        seq.serialize_element(&t.arg())?;
    }
    seq.end()
}

impl Regime {
    /// `θ_k = e^{iφ_k}`. Components are snapped so that multiples of `π/2`
    /// give exactly real or imaginary multipliers.
    pub fn from_angles(phi: &[f64]) -> Self {
        let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
        Regime::Theta(
            phi.iter()
                .map(|&p| Complex64::new(snap(p.cos()), snap(p.sin())))
                .collect(),
        )
    }

    /// `θ = (1,…,1)`.
    pub fn periodic(n: usize) -> Self {
        Regime::Theta(vec![Complex64::new(1.0, 0.0); n])
    }

    /// `θ = (−1,…,−1)`.
    pub fn antiperiodic(n: usize) -> Self {
        Regime::Theta(vec![Complex64::new(-1.0, 0.0); n])
    }

    pub fn conj(&self) -> Self {
        match self {
            Regime::Theta(t) => Regime::Theta(t.iter().map(|z| z.conj()).collect()),
            other => other.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Theta(_) => "theta",
            Regime::Neumann => "neumann",
            Regime::Dirichlet => "dirichlet",
        }
    }
}

/// Numerical knobs of the root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest `σ_min` of the normalized secular matrix accepted at a root.
    pub accept: f64,
    /// Bisection stops at bracket width `refine_width · (1 + λ)`.
    pub refine_width: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            accept: 1e-8,
            refine_width: 1e-12,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cell is not admissible: {0}")]
    InvalidCell(String),
    #[error("invalid spectral problem: {0}")]
    InvalidProblem(String),
    #[error("secular system has {rows} rows for {unknowns} unknowns")]
    RowCount { rows: usize, unknowns: usize },
    #[error("root near λ = {lambda} not confirmed by the secular matrix (σ_min = {residual:e})")]
    Resolution { lambda: f64, residual: f64 },
    #[error("negative spectral parameter λ = {0}")]
    NegativeLambda(f64),
    #[error("only {found} eigenvalues found below {ceiling}; {wanted} requested")]
    Ceiling {
        found: usize,
        wanted: usize,
        ceiling: f64,
    },
}

/// One fiber eigenvalue problem on a cell.
#[derive(Debug, Clone)]
pub struct SpectralProblem<'a> {
    pub cell: &'a PeriodCell,
    pub regime: Regime,
    pub epsilon: f64,
    pub lambda_max: f64,
}

impl<'a> SpectralProblem<'a> {
    pub fn new(
        cell: &'a PeriodCell,
        regime: Regime,
        epsilon: f64,
        lambda_max: f64,
    ) -> Result<Self, SolverError> {
        let report = cell.validate();
        if !report.is_valid() {
            return Err(SolverError::InvalidCell(
                report.to_string().replace('\n', "; "),
            ));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(SolverError::InvalidProblem(format!("epsilon = {epsilon}")));
        }
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(SolverError::InvalidProblem(format!(
                "lambda_max = {lambda_max}"
            )));
        }
        if let Regime::Theta(theta) = &regime {
            if theta.len() != cell.dimension() {
                return Err(SolverError::InvalidProblem(format!(
                    "θ has {} components, cell dimension is {}",
                    theta.len(),
                    cell.dimension()
                )));
            }
            if theta.iter().any(|t| (t.norm() - 1.0).abs() > 1e-14) {
                return Err(SolverError::InvalidProblem("|θ_k| must equal 1".into()));
            }
        }
        Ok(Self {
            cell,
            regime,
            epsilon,
            lambda_max,
        })
    }

    pub fn with_lambda_max(&self, lambda_max: f64) -> Self {
        Self {
            lambda_max,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub value: f64,
    /// Jump of the eigenvalue count across `value`.
    pub multiplicity: usize,
    /// Smallest singular value of the normalized secular matrix at `value`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    pub regime: Regime,
    pub epsilon: f64,
}

impl Spectrum {
    /// Eigenvalues repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }
}
