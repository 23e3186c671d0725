//! Band diagrams, gap certificates and ε → 0 convergence studies.
//!
//! The spectrum of the periodic operator is the union over quasimomenta θ of
//! the fiber spectra λ_k^θ(ε). Sampling θ gives inner approximations of the
//! bands. Gaps are certified from two solves only: λ_k^N ≤ λ_k^θ ≤ λ_k^D for
//! every θ, so no fiber eigenvalue lies in (λ_k^D, λ_{k+1}^N).

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fiber::{
    eigenvalues_below_with, lowest_eigenvalues_with, Regime, SolverError, SolverOptions,
    SpectralProblem,
};
use crate::graph::PeriodCell;
use crate::io::fmt15;
use crate::limit::{LimitError, LimitModel};

/// `λ_{k+1}^N − λ_k^D` must exceed this times `1 + λ_k^D` to count as a gap.
pub const GAP_TOLERANCE: f64 = 1e-9;

/// Slack allowed in the ε-monotonicity flags, relative to `1 + λ`.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BandError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(
        "at epsilon = {epsilon} only {found} {regime} eigenvalues lie below {lambda_max} \
         but {needed} are needed; raise the ceiling"
    )]
    Ceiling {
        epsilon: f64,
        regime: &'static str,
        needed: usize,
        found: usize,
        lambda_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
    /// The band continues above `lambda_max`; `hi` is the ceiling.
    pub truncated: bool,
}

/// Interval `(λ_k^D, λ_{k+1}^N)` free of spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCertificate {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSample {
    /// Row-major position in the full θ-grid.
    pub index: usize,
    pub phi: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandDiagram {
    pub epsilon: f64,
    pub lambda_max: f64,
    pub theta_samples: usize,
    pub bands: Vec<Band>,
    pub certified_gaps: Vec<GapCertificate>,
    pub samples: Vec<ThetaSample>,
}

/// Angles `2πi/S` for `i < S`, plus `π` when `S` is odd, with the index of
/// each angle's negative modulo 2π.
fn sample_angles(samples: usize) -> Vec<(f64, usize)> {
    let mut angles: Vec<f64> = (0..samples)
        .map(|i| {
            if 2 * i == samples {
                PI
            } else {
                TAU * i as f64 / samples as f64
            }
        })
        .collect();
    if samples % 2 == 1 {
        angles.push(PI);
        angles.sort_by(f64::total_cmp);
    }
    angles
        .iter()
        .map(|&a| {
            let target = if a == 0.0 || a == PI { a } else { TAU - a };
            let conj = angles
                .iter()
                .position(|&b| (b - target).abs() < 1e-9)
                .expect("angle grid is symmetric");
            (a, conj)
        })
        .collect()
}

fn spectrum_below(
    cell: &PeriodCell,
    regime: Regime,
    epsilon: f64,
    lambda_max: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>, SolverError> {
    let problem = SpectralProblem::new(cell, regime, epsilon, lambda_max)?;
    Ok(eigenvalues_below_with(&problem, opts)?.expanded())
}

fn check_epsilon(epsilon: f64) -> Result<(), BandError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(BandError::Input(format!(
            "epsilon {epsilon} must be positive"
        )))
    }
}

/// Band diagram with default solver options.
pub fn band_intervals(
    cell: &PeriodCell,
    epsilon: f64,
    lambda_max: f64,
    samples_per_dim: usize,
) -> Result<BandDiagram, BandError> {
    band_intervals_with(
        cell,
        epsilon,
        lambda_max,
        samples_per_dim,
        &SolverOptions::default(),
    )
}

pub fn band_intervals_with(
    cell: &PeriodCell,
    epsilon: f64,
    lambda_max: f64,
    samples_per_dim: usize,
    opts: &SolverOptions,
) -> Result<BandDiagram, BandError> {
    if samples_per_dim < 3 {
        return Err(BandError::Input(format!(
            "{samples_per_dim} θ-samples per dimension; at least 3 are required"
        )));
    }
    check_epsilon(epsilon)?;
    let dim = cell.dimension();
    let axis = sample_angles(samples_per_dim);
    let per_axis = axis.len();
    let total = per_axis
        .checked_pow(dim as u32)
        .filter(|&t| t <= 1 << 20)
        .ok_or_else(|| BandError::Input("θ-grid too large".into()))?;

    let coords = |mut index: usize| -> Vec<usize> {
        let mut c = vec![0; dim];
        for slot in c.iter_mut().rev() {
            *slot = index % per_axis;
            index /= per_axis;
        }
        c
    };
    let linear = |c: &[usize]| c.iter().fold(0, |acc, &i| acc * per_axis + i);
    let conj_of =
        |index: usize| linear(&coords(index).iter().map(|&i| axis[i].1).collect::<Vec<_>>());

    // conjugate quasimomenta share a spectrum, so only one of each pair is solved
    let representatives: Vec<usize> = (0..total).filter(|&i| i <= conj_of(i)).collect();
    let solved: Vec<Vec<f64>> = representatives
        .par_iter()
        .map(|&i| {
            let phi: Vec<f64> = coords(i).iter().map(|&c| axis[c].0).collect();
            spectrum_below(cell, Regime::from_angles(&phi), epsilon, lambda_max, opts)
        })
        .collect::<Result<_, _>>()?;
    let (neumann, dirichlet) = rayon::join(
        || spectrum_below(cell, Regime::Neumann, epsilon, lambda_max, opts),
        || spectrum_below(cell, Regime::Dirichlet, epsilon, lambda_max, opts),
    );
    let (neumann, dirichlet) = (neumann?, dirichlet?);

    let mut samples = Vec::with_capacity(total);
    for index in 0..total {
        let rep = representatives
            .binary_search(&index.min(conj_of(index)))
            .expect("representative was solved");
        samples.push(ThetaSample {
            index,
            phi: coords(index).iter().map(|&c| axis[c].0).collect(),
            eigenvalues: solved[rep].clone(),
        });
    }

    let pi_slot = axis
        .iter()
        .position(|&(a, _)| a == PI)
        .expect("π is sampled");
    let periodic = &samples[0].eigenvalues;
    let antiperiodic = &samples[linear(&vec![pi_slot; dim])].eigenvalues;
    let count = samples
        .iter()
        .map(|s| s.eigenvalues.len())
        .max()
        .unwrap_or(0);
    let mut bands = Vec::with_capacity(count);
    for k in 1..=count {
        let present: Vec<f64> = samples
            .iter()
            .filter_map(|s| s.eigenvalues.get(k - 1).copied())
            .collect();
        let mut lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut truncated = present.len() < samples.len();
        if truncated {
            hi = lambda_max;
        }
        // the N/D bounds are applied last so they win over rounding noise
        if let Some(&p) = periodic.get(k - 1) {
            lo = lo.min(p);
        }
        if let Some(&n) = neumann.get(k - 1) {
            lo = lo.max(n);
        }
        if let Some(&a) = antiperiodic.get(k - 1) {
            hi = hi.max(a);
        }
        if let Some(&d) = dirichlet.get(k - 1) {
            hi = hi.min(d);
            truncated = false;
        }
        bands.push(Band {
            k,
            lo,
            hi: hi.max(lo),
            truncated,
        });
    }

    let certified_gaps = certify(cell, epsilon, lambda_max, neumann, &dirichlet, opts)?;
    Ok(BandDiagram {
        epsilon,
        lambda_max,
        theta_samples: samples_per_dim,
        bands,
        certified_gaps,
        samples,
    })
}

/// Certified gaps starting below `lambda_max`, with default solver options.
pub fn certify_gaps(
    cell: &PeriodCell,
    epsilon: f64,
    lambda_max: f64,
) -> Result<Vec<GapCertificate>, BandError> {
    certify_gaps_with(cell, epsilon, lambda_max, &SolverOptions::default())
}

pub fn certify_gaps_with(
    cell: &PeriodCell,
    epsilon: f64,
    lambda_max: f64,
    opts: &SolverOptions,
) -> Result<Vec<GapCertificate>, BandError> {
    check_epsilon(epsilon)?;
    let (neumann, dirichlet) = rayon::join(
        || spectrum_below(cell, Regime::Neumann, epsilon, lambda_max, opts),
        || spectrum_below(cell, Regime::Dirichlet, epsilon, lambda_max, opts),
    );
    certify(cell, epsilon, lambda_max, neumann?, &dirichlet?, opts)
}

fn certify(
    cell: &PeriodCell,
    epsilon: f64,
    lambda_max: f64,
    mut neumann: Vec<f64>,
    dirichlet: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<GapCertificate>, BandError> {
    let mut gaps = Vec::new();
    for (i, &lo) in dirichlet.iter().enumerate() {
        let k = i + 1;
        if neumann.len() <= k {
            // λ_{k+1}^N lies above the ceiling; search further up
            let problem = SpectralProblem::new(cell, Regime::Neumann, epsilon, lambda_max)?;
            neumann = lowest_eigenvalues_with(&problem, k + 1, opts)?;
        }
        let hi = neumann[k];
        if hi - lo > GAP_TOLERANCE * (1.0 + lo) {
            gaps.push(GapCertificate { lo, hi, k });
        }
    }
    Ok(gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub j: usize,
    /// `λ_j^D(ε)`
    pub a_eps: f64,
    /// `λ_{j+1}^N(ε)`
    pub b_eps: f64,
    pub a: f64,
    pub b: f64,
    pub err_a: f64,
    pub err_b: f64,
}

/// Trends of one gap along the decreasing ε sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonotonicityFlags {
    pub j: usize,
    pub dirichlet_nondecreasing: bool,
    pub neumann_nondecreasing: bool,
    pub err_a_decreasing: bool,
    pub err_b_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub epsilons: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    /// `λ_1^N(ε)` per ε.
    pub neumann_ground: Vec<f64>,
    pub flags: Vec<MonotonicityFlags>,
}

impl ConvergenceTable {
    /// Rows of gap `j` in ε order.
    pub fn gap(&self, j: usize) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(move |r| r.j == j)
    }
}

/// Gap endpoints `(λ_j^D(ε), λ_{j+1}^N(ε))` against the limits `(a_j, b_j)`.
pub fn convergence_study(
    cell: &PeriodCell,
    epsilons: &[f64],
    limit: &LimitModel,
    lambda_max: f64,
) -> Result<ConvergenceTable, BandError> {
    convergence_study_with(cell, epsilons, limit, lambda_max, &SolverOptions::default())
}

pub fn convergence_study_with(
    cell: &PeriodCell,
    epsilons: &[f64],
    limit: &LimitModel,
    lambda_max: f64,
    opts: &SolverOptions,
) -> Result<ConvergenceTable, BandError> {
    if epsilons.is_empty() {
        return Err(BandError::Input("no epsilon values".into()));
    }
    for &e in epsilons {
        check_epsilon(e)?;
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BandError::Input(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    let m = limit.m();
    if m == 0 {
        return Err(BandError::Input("limit model has no attached parts".into()));
    }
    let limit = match limit.b() {
        Some(_) => limit.clone(),
        None => limit.clone().with_gap_endpoints()?,
    };
    let b = limit.b().expect("gap endpoints computed");

    let spectra: Vec<(Vec<f64>, Vec<f64>)> = epsilons
        .par_iter()
        .map(|&epsilon| {
            let (n, d) = rayon::join(
                || spectrum_below(cell, Regime::Neumann, epsilon, lambda_max, opts),
                || spectrum_below(cell, Regime::Dirichlet, epsilon, lambda_max, opts),
            );
            let (n, d) = (n?, d?);
            for (regime, found, needed) in [("neumann", n.len(), m + 1), ("dirichlet", d.len(), m)]
            {
                if found < needed {
                    return Err(BandError::Ceiling {
                        epsilon,
                        regime,
                        needed,
                        found,
                        lambda_max,
                    });
                }
            }
            Ok((n, d))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(epsilons.len() * m);
    for (&epsilon, (n, d)) in epsilons.iter().zip(&spectra) {
        for j in 1..=m {
            let (a_eps, b_eps) = (d[j - 1], n[j]);
            let (a, bj) = (limit.a()[j - 1], b[j - 1]);
            rows.push(ConvergenceRow {
                epsilon,
                j,
                a_eps,
                b_eps,
                a,
                b: bj,
                err_a: a_eps - a,
                err_b: b_eps - bj,
            });
        }
    }

    let nondecreasing = |xs: &[f64]| {
        xs.windows(2)
            .all(|w| w[1] >= w[0] - MONOTONE_SLACK * (1.0 + w[0].abs()))
    };
    let decreasing = |xs: &[f64]| xs.windows(2).all(|w| w[1].abs() < w[0].abs());
    let flags = (1..=m)
        .map(|j| {
            let col = |f: fn(&ConvergenceRow) -> f64| -> Vec<f64> {
                rows.iter().filter(|r| r.j == j).map(f).collect()
            };
            MonotonicityFlags {
                j,
                dirichlet_nondecreasing: nondecreasing(&col(|r| r.a_eps)),
                neumann_nondecreasing: nondecreasing(&col(|r| r.b_eps)),
                err_a_decreasing: decreasing(&col(|r| r.err_a)),
                err_b_decreasing: decreasing(&col(|r| r.err_b)),
            }
        })
        .collect();

    Ok(ConvergenceTable {
        epsilons: epsilons.to_vec(),
        rows,
        neumann_ground: spectra.iter().map(|(n, _)| n[0]).collect(),
        flags,
    })
}

/// `epsilon,k,theta_index,phi1,…,phin,lambda`, one line per sampled eigenvalue.
pub fn sweep_csv(diagrams: &[BandDiagram]) -> String {
    let dim = diagrams
        .iter()
        .flat_map(|d| d.samples.first())
        .map(|s| s.phi.len())
        .next()
        .unwrap_or(1);
    let phi_cols: Vec<String> = (1..=dim).map(|i| format!("phi{i}")).collect();
    let mut out = format!("epsilon,k,theta_index,{},lambda\n", phi_cols.join(","));
    for d in diagrams {
        for s in &d.samples {
            let phi: Vec<String> = s.phi.iter().map(|&p| fmt15(p)).collect();
            for (k, &lambda) in s.eigenvalues.iter().enumerate() {
                out += &format!(
                    "{},{},{},{},{}\n",
                    fmt15(d.epsilon),
                    k + 1,
                    s.index,
                    phi.join(","),
                    fmt15(lambda)
                );
            }
        }
    }
    out
}

/// `epsilon,gap_lo,gap_hi,cert_k`.
pub fn certificates_csv(diagrams: &[(f64, &[GapCertificate])]) -> String {
    let mut out = String::from("epsilon,gap_lo,gap_hi,cert_k\n");
    for (epsilon, gaps) in diagrams {
        for g in *gaps {
            out += &format!(
                "{},{},{},{}\n",
                fmt15(*epsilon),
                fmt15(g.lo),
                fmt15(g.hi),
                g.k
            );
        }
    }
    out
}

/// `epsilon,j,aj_eps,bj_eps,aj,bj,err_a,err_b`.
pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from("epsilon,j,aj_eps,bj_eps,aj,bj,err_a,err_b\n");
    for r in &table.rows {
        out += &format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt15(r.epsilon),
            r.j,
            fmt15(r.a_eps),
            fmt15(r.b_eps),
            fmt15(r.a),
            fmt15(r.b),
            fmt15(r.err_a),
            fmt15(r.err_b)
        );
    }
    out
}
