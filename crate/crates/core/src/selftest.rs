//! Acceptance suite. Every criterion builds its own inputs (comb cells and
//! seeded random models), so it runs without external data.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bands::{certify_gaps, convergence_study};
use crate::design::{design, realize, verify_system, GapTargets};
use crate::fiber::{eigenvalues_below, fem_oracle, lowest_eigenvalues, Regime, SpectralProblem};
use crate::graph::{build_comb, build_line, PeriodCell};
use crate::limit::{LimitError, LimitModel};

const SEED: u64 = 0x005e_ed0f_9a95;

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {}: {} ({}; {:.2} s of {} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

type Check = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget_secs: u64,
    run: fn() -> Check,
}

const CRITERIA: [Criterion; 9] = [
    Criterion {
        name: "limit matrix spectrum equals {0} and the roots of F",
        budget_secs: 5,
        run: limit_oracle,
    },
    Criterion {
        name: "determinant identity",
        budget_secs: 5,
        run: determinant_identity,
    },
    Criterion {
        name: "design round trip",
        budget_secs: 5,
        run: design_round_trip,
    },
    Criterion {
        name: "analytic solver cases",
        budget_secs: 10,
        run: analytic_cases,
    },
    Criterion {
        name: "secular solver against finite differences",
        budget_secs: 60,
        run: discretization_oracle,
    },
    Criterion {
        name: "Neumann/theta/Dirichlet enclosure",
        budget_secs: 60,
        run: enclosure,
    },
    Criterion {
        name: "small-epsilon convergence of the (2,4) comb",
        budget_secs: 120,
        run: convergence,
    },
    Criterion {
        name: "two-gap design end to end",
        budget_secs: 180,
        run: two_gap_end_to_end,
    },
    Criterion {
        name: "structural properties",
        budget_secs: 60,
        run: structural,
    },
];

pub const CRITERION_COUNT: usize = CRITERIA.len();

/// Runs criterion `id` (1-based). A criterion passes when its checks hold
/// and it finishes within its time budget.
pub fn run_criterion(id: usize) -> CriterionReport {
    let c = &CRITERIA[id - 1];
    let start = Instant::now();
    let outcome = (c.run)();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(c.budget_secs);
    let (ok, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CriterionReport {
        id,
        name: c.name,
        passed: ok && elapsed <= budget,
        detail: if ok && elapsed > budget {
            format!("{detail}; over budget")
        } else {
            detail
        },
        elapsed,
        budget,
    }
}

pub fn run_all() -> Vec<CriterionReport> {
    (1..=CRITERION_COUNT).map(run_criterion).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn comb24() -> PeriodCell {
    build_comb(1.0, &[1.0], &[2.0]).expect("(2,4) comb")
}

/// Random models with `m ≤ 8`, `l, q ∈ [0.1, 10]`, `N ∈ {1,…,4}`, with gap
/// endpoints. Draws with coinciding `a_j` are redrawn.
pub fn random_models(count: usize, seed: u64) -> Vec<LimitModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = Vec::with_capacity(count);
    while models.len() < count {
        let m = rng.gen_range(1..=8);
        let l0 = rng.gen_range(0.1..=10.0);
        let parts: Vec<(f64, usize)> = (0..m)
            .map(|_| (rng.gen_range(0.1..=10.0), rng.gen_range(1..=4)))
            .collect();
        let q: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..=10.0)).collect();
        match LimitModel::from_parts(l0, &parts, &q) {
            Ok(model) => models.push(model.with_gap_endpoints().expect("roots bracket")),
            Err(LimitError::DegenerateConstants { .. }) => continue,
            Err(e) => panic!("random model rejected: {e}"),
        }
    }
    models
}

/// Admissible targets with `m ≤ 5`, endpoint separation at least 0.1 and
/// `L ≤ 50`.
pub fn random_targets(count: usize, seed: u64) -> Vec<GapTargets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let m = rng.gen_range(1..=5);
        let lambda_max = rng.gen_range(5.0..=50.0);
        let mut ends: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(0.0..lambda_max)).collect();
        ends.sort_by(f64::total_cmp);
        let separated = ends[0] >= 0.1
            && ends.windows(2).all(|w| w[1] - w[0] >= 0.1)
            && lambda_max - ends[2 * m - 1] >= 0.1;
        if !separated {
            continue;
        }
        let mut t = GapTargets::new(lambda_max, ends.chunks(2).map(|c| [c[0], c[1]]).collect());
        t.l0 = rng.gen_range(0.1..=10.0);
        t.n = (0..m).map(|_| rng.gen_range(1..=4)).collect();
        out.push(t);
    }
    out
}

fn limit_oracle() -> Check {
    let mut worst = 0.0_f64;
    for model in random_models(100, SEED) {
        let spectrum = model.limit_matrix_spectrum();
        let expected: Vec<f64> = std::iter::once(0.0)
            .chain(model.b().unwrap().iter().copied())
            .collect();
        let scale = spectrum.last().copied().unwrap_or(1.0);
        for (x, y) in spectrum.iter().zip(&expected) {
            // the zero eigenvalue is compared relative to the spectral radius
            let denom = if *y == 0.0 { scale } else { y.abs() };
            worst = worst.max((x - y).abs() / denom);
        }
    }
    ensure(worst < 1e-9, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("100 models, max relative error {worst:.2e}"))
}

fn determinant_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut worst = 0.0_f64;
    for model in random_models(100, SEED) {
        let top = 1.2 * model.upper_bracket();
        let mut taken = 0;
        while taken < 20 {
            let lambda = rng.gen_range(0.0..top);
            if model
                .a()
                .iter()
                .any(|&a| (lambda - a).abs() <= 1e-6 * (1.0 + a))
            {
                continue;
            }
            let r = model
                .det_identity_residual(lambda)
                .map_err(|e| e.to_string())?;
            worst = worst.max(r);
            taken += 1;
        }
    }
    ensure(worst < 1e-8, || format!("max residual {worst:.3e}"))?;
    Ok(format!("2000 points, max residual {worst:.2e}"))
}

fn design_round_trip() -> Check {
    let mut worst = 0.0_f64;
    for t in random_targets(200, SEED ^ 3) {
        let d = design(&t).map_err(|e| format!("{t:?}: {e}"))?;
        ensure(d.lengths().iter().all(|&l| l > 0.0), || {
            format!("{t:?}: non-positive length")
        })?;
        let r = d.residuals();
        worst = worst.max(r.a).max(r.b).max(verify_system(&d));
    }
    ensure(worst < 1e-9, || format!("max residual {worst:.3e}"))?;
    Ok(format!("200 designs, max residual {worst:.2e}"))
}

fn analytic_cases() -> Check {
    let interval = build_line(PI).map_err(|e| e.to_string())?;
    let mut worst_abs = 0.0_f64;
    for (regime, expected) in [
        (Regime::Dirichlet, [1.0, 4.0, 9.0, 16.0, 25.0]),
        (Regime::Neumann, [0.0, 1.0, 4.0, 9.0, 16.0]),
    ] {
        let name = regime.name();
        let p = SpectralProblem::new(&interval, regime, 1.0, 26.0).map_err(|e| e.to_string())?;
        let got = lowest_eigenvalues(&p, 5).map_err(|e| e.to_string())?;
        for (x, e) in got.iter().zip(expected) {
            worst_abs = worst_abs.max((x - e).abs());
        }
        ensure(worst_abs < 1e-8, || format!("{name}: {got:?}"))?;
    }

    let ring = build_line(1.0).map_err(|e| e.to_string())?;
    let top = (6.0 * PI).powi(2) + 10.0;
    let p =
        SpectralProblem::new(&ring, Regime::periodic(1), 1.0, top).map_err(|e| e.to_string())?;
    let spec = eigenvalues_below(&p).map_err(|e| e.to_string())?;
    let shape: Vec<(f64, usize)> = spec
        .eigenvalues
        .iter()
        .map(|e| (e.value, e.multiplicity))
        .collect();
    ensure(spec.eigenvalues.len() == 4, || {
        format!("periodic ring: {shape:?}")
    })?;
    ensure(shape[0] == (0.0, 1), || format!("periodic ring: {shape:?}"))?;
    let mut worst_rel = 0.0_f64;
    for (n, &(x, mult)) in shape.iter().enumerate().skip(1) {
        let e = (2.0 * PI * n as f64).powi(2);
        ensure(mult == 2, || format!("periodic ring: {shape:?}"))?;
        worst_rel = worst_rel.max((x - e).abs() / e);
    }
    ensure(worst_rel < 1e-7, || {
        format!("periodic ring relative error {worst_rel:.3e}")
    })?;
    Ok(format!(
        "interval abs error {worst_abs:.2e}, ring relative error {worst_rel:.2e}"
    ))
}

fn discretization_oracle() -> Check {
    let cell = comb24();
    let mut worst = 0.0_f64;
    for regime in [Regime::Neumann, Regime::Dirichlet] {
        let name = regime.name();
        let p = SpectralProblem::new(&cell, regime, 0.05, 10.0).map_err(|e| e.to_string())?;
        let exact = lowest_eigenvalues(&p, 6).map_err(|e| e.to_string())?;
        let fd_problem = p.with_lambda_max(exact[5] * 1.01);
        let fd = fem_oracle(&fd_problem, 500)
            .map_err(|e| e.to_string())?
            .expanded();
        ensure(fd.len() >= 6, || {
            format!("{name}: oracle found {} values", fd.len())
        })?;
        for (x, y) in fd.iter().zip(&exact) {
            // the Neumann ground state is 0; compare it on an absolute scale of 1
            worst = worst.max((x - y).abs() / y.abs().max(1.0));
        }
        ensure(worst < 1e-3, || {
            format!("{name}: secular {exact:?} vs oracle {:?}", &fd[..6])
        })?;
    }
    Ok(format!(
        "first 6 Neumann and Dirichlet values, max relative gap {worst:.2e}"
    ))
}

fn enclosure() -> Check {
    let cell = comb24();
    let axis: Vec<f64> = (0..16)
        .map(|i| {
            if i == 8 {
                PI
            } else {
                2.0 * PI * i as f64 / 16.0
            }
        })
        .collect();
    let mut min_slack = f64::INFINITY;
    for eps in [0.1, 0.01] {
        let lowest = |regime: Regime| -> Result<Vec<f64>, String> {
            let p = SpectralProblem::new(&cell, regime, eps, 10.0).map_err(|e| e.to_string())?;
            lowest_eigenvalues(&p, 8).map_err(|e| e.to_string())
        };
        let n = lowest(Regime::Neumann)?;
        let d = lowest(Regime::Dirichlet)?;
        let slacks: Vec<f64> = axis
            .par_iter()
            .map(|&phi| -> Result<f64, String> {
                let t = lowest(Regime::from_angles(&[phi]))?;
                Ok((0..8)
                    .map(|k| (t[k] - n[k]).min(d[k] - t[k]))
                    .fold(f64::INFINITY, f64::min))
            })
            .collect::<Result<_, _>>()?;
        min_slack = slacks.into_iter().fold(min_slack, f64::min);
    }
    ensure(min_slack >= -1e-8, || {
        format!("minimum slack {min_slack:.3e}")
    })?;
    Ok(format!(
        "epsilon 0.1 and 0.01, 16 samples, k <= 8, minimum slack {min_slack:.2e}"
    ))
}

fn convergence() -> Check {
    let cell = comb24();
    let limit = LimitModel::new(&cell.part_totals(), &[2.0]).map_err(|e| e.to_string())?;
    let t =
        convergence_study(&cell, &[1e-1, 1e-2, 1e-3], &limit, 10.0).map_err(|e| e.to_string())?;
    let a: Vec<f64> = t.gap(1).map(|r| r.a_eps).collect();
    let b: Vec<f64> = t.gap(1).map(|r| r.b_eps).collect();
    let toward = |xs: &[f64], target: f64| {
        xs.windows(2)
            .all(|w| w[1] > w[0] && (w[1] - target).abs() < (w[0] - target).abs())
    };
    ensure(toward(&a, 2.0), || format!("lambda_1^D = {a:?}"))?;
    ensure(toward(&b, 4.0), || format!("lambda_2^N = {b:?}"))?;
    let (ea, eb) = ((a[2] - 2.0).abs() / 2.0, (b[2] - 4.0).abs() / 4.0);
    ensure(ea < 0.05 && eb < 0.05, || {
        format!("relative errors {ea:.3e}, {eb:.3e}")
    })?;
    ensure(t.neumann_ground.iter().all(|&x| x == 0.0), || {
        format!("lambda_1^N = {:?}", t.neumann_ground)
    })?;
    let gaps = certify_gaps(&cell, 1e-3, 10.0).map_err(|e| e.to_string())?;
    ensure(gaps.len() == 1, || format!("{} certified gaps", gaps.len()))?;
    let g = gaps[0];
    ensure((g.lo - 2.0).abs() < 0.1 && (g.hi - 4.0).abs() < 0.2, || {
        format!("gap ({}, {})", g.lo, g.hi)
    })?;
    Ok(format!(
        "lambda_1^D {a:.4?}, lambda_2^N {b:.4?}, gap ({:.4}, {:.4})",
        g.lo, g.hi
    ))
}

fn two_gap_end_to_end() -> Check {
    let targets = GapTargets::new(6.0, vec![[1.0, 2.0], [3.0, 4.0]]);
    let d = design(&targets).map_err(|e| e.to_string())?;
    ensure(d.lengths() == [1.5, 1.0 / 6.0], || {
        format!("l = {:?}", d.lengths())
    })?;
    ensure(d.couplings() == [1.5, 0.5], || {
        format!("q = {:?}", d.couplings())
    })?;
    let cell = realize(&d).map_err(|e| e.to_string())?;
    let gaps = certify_gaps(&cell, 1e-3, 6.0).map_err(|e| e.to_string())?;
    ensure(gaps.len() == 2, || {
        format!("{} certified gaps: {gaps:?}", gaps.len())
    })?;
    let mut worst = 0.0_f64;
    for (g, iv) in gaps.iter().zip(&targets.intervals) {
        worst = worst
            .max((g.lo - iv[0]).abs() / iv[0])
            .max((g.hi - iv[1]).abs() / iv[1]);
    }
    ensure(worst < 0.05, || {
        format!("gaps {gaps:?}, worst relative error {worst:.3e}")
    })?;
    Ok(format!(
        "l = (1.5, 1/6), q = (1.5, 0.5), 2 gaps, worst relative error {worst:.2e}"
    ))
}

fn structural() -> Check {
    let cell = comb24();
    let solve = |c: &PeriodCell, regime: Regime, eps: f64| -> Result<Vec<f64>, String> {
        let p = SpectralProblem::new(c, regime, eps, 60.0).map_err(|e| e.to_string())?;
        Ok(eigenvalues_below(&p).map_err(|e| e.to_string())?.expanded())
    };
    let regimes = || {
        [
            Regime::Neumann,
            Regime::Dirichlet,
            Regime::from_angles(&[1.1]),
        ]
    };

    // subdivision
    let mut worst_sub = 0.0_f64;
    for (edge, at) in [("backbone0", 0.2), ("pendant1", 0.7)] {
        let split = cell.subdivide_edge(edge, at).map_err(|e| e.to_string())?;
        for regime in regimes() {
            let x = solve(&cell, regime.clone(), 0.05)?;
            let y = solve(&split, regime, 0.05)?;
            ensure(x.len() == y.len(), || {
                format!("subdividing {edge}: {x:?} vs {y:?}")
            })?;
            for (u, v) in x.iter().zip(&y) {
                worst_sub = worst_sub.max((u - v).abs());
            }
        }
    }
    ensure(worst_sub < 1e-9, || {
        format!("subdivision changes spectra by {worst_sub:.3e}")
    })?;

    // ε-monotonicity of the first 6 Neumann and Dirichlet values
    for regime in [Regime::Neumann, Regime::Dirichlet] {
        let mut previous: Option<Vec<f64>> = None;
        for eps in [0.1, 0.05, 0.01] {
            let p = SpectralProblem::new(&cell, regime.clone(), eps, 10.0)
                .map_err(|e| e.to_string())?;
            let v = lowest_eigenvalues(&p, 6).map_err(|e| e.to_string())?;
            if let Some(prev) = &previous {
                ensure(
                    prev.iter().zip(&v).all(|(x, y)| *y >= x - 1e-9 * (1.0 + x)),
                    || {
                        format!(
                            "{} values decrease at epsilon {eps}: {prev:?} -> {v:?}",
                            regime.name()
                        )
                    },
                )?;
            }
            previous = Some(v);
        }
    }

    // conjugation
    let mut worst_conj = 0.0_f64;
    for phi in [0.3, 1.1, 2.5] {
        let x = solve(&cell, Regime::from_angles(&[phi]), 0.05)?;
        let y = solve(&cell, Regime::from_angles(&[phi]).conj(), 0.05)?;
        ensure(x.len() == y.len(), || {
            format!("conjugate spectra differ: {x:?} vs {y:?}")
        })?;
        for (u, v) in x.iter().zip(&y) {
            worst_conj = worst_conj.max((u - v).abs());
        }
    }
    ensure(worst_conj < 1e-9, || {
        format!("conjugation changes spectra by {worst_conj:.3e}")
    })?;

    // interlacing
    for model in random_models(100, SEED) {
        let b = model.b().unwrap();
        let a = model.a();
        let ok = (0..a.len()).all(|j| a[j] < b[j] && (j + 1 == a.len() || b[j] < a[j + 1]));
        ensure(ok, || format!("interlacing fails: a = {a:?}, b = {b:?}"))?;
    }
    Ok(format!(
        "subdivision {worst_sub:.1e}, conjugation {worst_conj:.1e}, monotone in epsilon, 100 models interlace"
    ))
}
