//! Root isolation by bisection on the eigenvalue count, with the secular
//! matrix as residual check.

use super::count::FormModel;
use super::secular::SecularSystem;
use super::{Eigenvalue, SolverError, SolverOptions, SpectralProblem, Spectrum};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimum of `σ_min` on `[lo, hi]`.
fn golden_min(
    system: &SecularSystem,
    mut lo: f64,
    mut hi: f64,
    opts: &SolverOptions,
) -> Result<(f64, f64), SolverError> {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = system.sigma_min(x1)?;
    let mut f2 = system.sigma_min(x2)?;
    while hi - lo > opts.refine_width * (1.0 + lo.abs()) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = system.sigma_min(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = system.sigma_min(x2)?;
        }
        if x1 >= x2 {
            break;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Brackets `(lo, hi, count at lo, multiplicity)` of width at most
/// `refine_width·(1+lo)`, ascending, covering every eigenvalue below `top`. `zero` eigenvalues sit
/// at 0; the count is floored by it because the constant mode is invisible
/// to it at λ within rounding of 0.
fn isolate(
    form: &FormModel,
    top: f64,
    zero: usize,
    opts: &SolverOptions,
) -> Vec<(f64, f64, usize, usize)> {
    let count = |x: f64| form.count_below(x).max(zero);
    let mut out = Vec::new();
    if zero > 0 {
        out.push((0.0, 0.0, 0, zero));
    }
    let mut stack = vec![(0.0, top, zero, count(top))];
    while let Some((lo, hi, clo, chi)) = stack.pop() {
        if chi <= clo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= opts.refine_width * (1.0 + lo) || mid <= lo || mid >= hi {
            out.push((lo, hi, clo, chi - clo));
            continue;
        }
        let cm = count(mid);
        stack.push((mid, hi, cm, chi));
        stack.push((lo, mid, clo, cm));
    }
    out
}

/// Shrinks the bracket of a simple eigenvalue to adjacent floats, so exact
/// counts give values exact to rounding.
fn polish(form: &FormModel, mut lo: f64, mut hi: f64, below: usize, zero: usize) -> (f64, f64) {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return (lo, hi);
        }
        if form.count_below(mid).max(zero) > below {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// All eigenvalues in `[0, lambda_max)` with default options.
pub fn eigenvalues_below(problem: &SpectralProblem<'_>) -> Result<Spectrum, SolverError> {
    eigenvalues_below_with(problem, &SolverOptions::default())
}

pub fn eigenvalues_below_with(
    problem: &SpectralProblem<'_>,
    opts: &SolverOptions,
) -> Result<Spectrum, SolverError> {
    let system = SecularSystem::new(problem)?;
    let form = FormModel::new(problem.cell, &problem.regime, problem.epsilon)?;

    // λ = 0 is decided exactly from the linear ansatz
    let zero = system
        .singular_values(0.0)?
        .iter()
        .filter(|&&s| s < opts.accept)
        .count();
    let mut eigenvalues = Vec::new();
    for (lo, hi, below, multiplicity) in isolate(&form, problem.lambda_max, zero, opts) {
        let width = hi - lo;
        let (lo, hi) = if multiplicity == 1 && hi > 0.0 {
            polish(&form, lo, hi, below, zero)
        } else {
            (lo, hi)
        };
        let mut value = 0.5 * (lo + hi);
        let mut residual = system.sigma_min(value)?;
        if residual >= opts.accept && value > 0.0 {
            let pad = 1e4 * width;
            let (x, fx) = golden_min(&system, (lo - pad).max(0.0), hi + pad, opts)?;
            if fx < residual {
                (value, residual) = (x, fx);
            }
        }
        if residual >= opts.accept {
            return Err(SolverError::Resolution {
                lambda: value,
                residual,
            });
        }
        eigenvalues.push(Eigenvalue {
            value,
            multiplicity,
            residual,
        });
    }
    Ok(Spectrum {
        eigenvalues,
        regime: problem.regime.clone(),
        epsilon: problem.epsilon,
    })
}

/// The `count` lowest eigenvalues (with multiplicity), doubling `lambda_max`
/// until enough are found.
pub fn lowest_eigenvalues(
    problem: &SpectralProblem<'_>,
    count: usize,
) -> Result<Vec<f64>, SolverError> {
    lowest_eigenvalues_with(problem, count, &SolverOptions::default())
}

pub fn lowest_eigenvalues_with(
    problem: &SpectralProblem<'_>,
    count: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolverError> {
    let mut p = problem.clone();
    let mut found = 0;
    for _ in 0..40 {
        let values = eigenvalues_below_with(&p, opts)?.expanded();
        if values.len() >= count {
            return Ok(values[..count].to_vec());
        }
        found = values.len();
        p = p.with_lambda_max(2.0 * p.lambda_max);
    }
    Err(SolverError::Ceiling {
        found,
        wanted: count,
        ceiling: p.lambda_max,
    })
}
