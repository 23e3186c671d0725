use std::path::PathBuf;

use bandgap::fiber::count::FormModel;
use bandgap::fiber::{
    eigenvalues_below, fem_oracle, lowest_eigenvalues, sigma_min, Regime, SpectralProblem,
};
use bandgap::graph::{build_comb, build_line, GraphDocument, PeriodCell};
use proptest::prelude::*;

fn plane_cell() -> PeriodCell {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/plane_cell.json");
    let doc: GraphDocument = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    PeriodCell::new(doc).unwrap()
}

fn lowest(cell: &PeriodCell, regime: Regime, epsilon: f64, count: usize) -> Vec<f64> {
    let p = SpectralProblem::new(cell, regime, epsilon, 1.0).unwrap();
    lowest_eigenvalues(&p, count).unwrap()
}

fn below(cell: &PeriodCell, regime: Regime, epsilon: f64, lambda_max: f64) -> Vec<f64> {
    let p = SpectralProblem::new(cell, regime, epsilon, lambda_max).unwrap();
    eigenvalues_below(&p).unwrap().expanded()
}

fn assert_close(x: &[f64], y: &[f64], rel: f64) {
    assert_eq!(x.len(), y.len(), "{x:?} vs {y:?}");
    for (a, b) in x.iter().zip(y) {
        assert!((a - b).abs() <= rel * b.abs().max(1.0), "{x:?} vs {y:?}");
    }
}

fn regimes(dim: usize) -> Vec<Regime> {
    vec![
        Regime::Neumann,
        Regime::Dirichlet,
        Regime::periodic(dim),
        Regime::antiperiodic(dim),
        Regime::from_angles(&vec![0.7; dim]),
    ]
}

#[test]
fn coupling_free_spectra_scale_with_inverse_epsilon() {
    let cell = build_line(1.3).unwrap();
    for regime in regimes(1) {
        let unit = lowest(&cell, regime.clone(), 1.0, 5);
        for eps in [0.5, 0.1, 0.01] {
            let scaled: Vec<f64> = unit.iter().map(|x| x / eps).collect();
            assert_close(&lowest(&cell, regime.clone(), eps, 5), &scaled, 1e-9);
        }
    }
}

#[test]
fn coupled_spectra_scale_with_epsilon_times_q() {
    // spectrum(ε, q) = spectrum(1, εq) / ε; dividing by ε alone is wrong once q > 0
    let eps = 0.1;
    let cell = build_comb(1.0, &[1.0], &[2.0]).unwrap();
    let rescaled = build_comb(1.0, &[1.0], &[2.0 * eps]).unwrap();
    for regime in regimes(1) {
        let direct = lowest(&cell, regime.clone(), eps, 4);
        let unit: Vec<f64> = lowest(&rescaled, regime.clone(), 1.0, 4)
            .iter()
            .map(|x| x / eps)
            .collect();
        assert_close(&direct, &unit, 1e-9);
        let naive: Vec<f64> = lowest(&cell, regime.clone(), 1.0, 4)
            .iter()
            .map(|x| x / eps)
            .collect();
        assert!(direct
            .iter()
            .zip(&naive)
            .any(|(a, b)| (a - b).abs() > 1e-3 * b.max(1.0)));
    }
}

#[test]
fn ground_state_is_zero_for_neumann_and_periodic() {
    for cell in [
        build_comb(1.0, &[1.5, 1.0 / 6.0], &[1.5, 0.5]).unwrap(),
        plane_cell(),
    ] {
        let dim = cell.dimension();
        assert_eq!(lowest(&cell, Regime::Neumann, 0.1, 1), vec![0.0]);
        assert_eq!(lowest(&cell, Regime::periodic(dim), 0.1, 1), vec![0.0]);
        assert!(lowest(&cell, Regime::Dirichlet, 0.1, 1)[0] > 1e-3);
        assert!(lowest(&cell, Regime::antiperiodic(dim), 0.1, 1)[0] > 1e-3);
    }
}

#[test]
fn plane_cell_subdivision_invariance() {
    let cell = plane_cell();
    let split = cell
        .subdivide_edge("e18", 0.3)
        .unwrap()
        .subdivide_edge("e5", 0.2)
        .unwrap();
    for regime in [
        Regime::Neumann,
        Regime::Dirichlet,
        Regime::from_angles(&[0.4, 2.0]),
    ] {
        assert_close(
            &below(&split, regime.clone(), 0.1, 20.0),
            &below(&cell, regime, 0.1, 20.0),
            1e-9,
        );
    }
}

#[test]
fn plane_cell_conjugation_symmetry() {
    let cell = plane_cell();
    let regime = Regime::from_angles(&[0.4, 2.0]);
    assert_close(
        &below(&cell, regime.conj(), 0.1, 20.0),
        &below(&cell, regime, 0.1, 20.0),
        1e-9,
    );
}

#[test]
fn plane_cell_enclosure() {
    let cell = plane_cell();
    let n = lowest(&cell, Regime::Neumann, 0.1, 6);
    let d = lowest(&cell, Regime::Dirichlet, 0.1, 6);
    for phi in [
        [0.0, 0.0],
        [1.0, 2.5],
        [3.1, 0.3],
        [std::f64::consts::PI; 2],
    ] {
        let t = lowest(&cell, Regime::from_angles(&phi), 0.1, 6);
        for k in 0..6 {
            let slack = 1e-9 * (1.0 + t[k]);
            assert!(
                n[k] <= t[k] + slack && t[k] <= d[k] + slack,
                "{phi:?} k={k}: {n:?} {t:?} {d:?}"
            );
        }
    }
}

#[test]
fn count_agrees_with_located_roots() {
    let cell = plane_cell();
    let regime = Regime::from_angles(&[0.4, 2.0]);
    let eps = 0.1;
    let values = below(&cell, regime.clone(), eps, 30.0);
    assert!(values.len() >= 4, "{values:?}");
    let form = FormModel::new(&cell, &regime, eps).unwrap();
    let mut probes: Vec<f64> = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probes.push(0.5 * values[0]);
    for x in probes {
        let expected = values.iter().filter(|&&v| v < x).count();
        assert_eq!(form.count_below(x), expected, "at {x}");
    }
    let p = SpectralProblem::new(&cell, regime, eps, 30.0).unwrap();
    for v in values {
        assert!(sigma_min(&p, v).unwrap() < 1e-8, "σ_min at {v}");
    }
}

#[test]
fn plane_cell_against_finite_differences() {
    let cell = plane_cell();
    let p = SpectralProblem::new(&cell, Regime::Neumann, 0.1, 12.0).unwrap();
    let exact = eigenvalues_below(&p).unwrap().expanded();
    let fd = fem_oracle(&p.with_lambda_max(exact.last().unwrap() * 1.01), 150)
        .unwrap()
        .expanded();
    assert_eq!(fd.len(), exact.len());
    for (a, b) in fd.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-3 * b.max(1.0), "{fd:?} vs {exact:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_law_on_random_combs(
        parts in prop::collection::vec((0.2f64..3.0, 0.2f64..5.0), 1..3),
        eps in 0.02f64..1.0,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let lengths: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let q: Vec<f64> = parts.iter().map(|p| p.1).collect();
        let eq: Vec<f64> = q.iter().map(|x| x * eps).collect();
        let (Ok(cell), Ok(rescaled)) = (build_comb(1.0, &lengths, &q), build_comb(1.0, &lengths, &eq)) else {
            return Ok(());
        };
        for regime in [Regime::Neumann, Regime::Dirichlet, Regime::from_angles(&[phi])] {
            let direct = lowest(&cell, regime.clone(), eps, 4);
            let unit: Vec<f64> = lowest(&rescaled, regime, 1.0, 4).iter().map(|x| x / eps).collect();
            for (a, b) in direct.iter().zip(&unit) {
                prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{direct:?} vs {unit:?}");
            }
        }
    }

    #[test]
    fn subdivision_never_moves_comb_spectra(at in 0.05f64..0.95, phi in 0.0f64..std::f64::consts::PI) {
        let cell = build_comb(1.0, &[1.5, 1.0 / 6.0], &[1.5, 0.5]).unwrap();
        let split = cell.subdivide_edge("pendant1", at * 1.5).unwrap();
        for regime in [Regime::Neumann, Regime::Dirichlet, Regime::from_angles(&[phi])] {
            let a = below(&cell, regime.clone(), 0.05, 60.0);
            let b = below(&split, regime, 0.05, 60.0);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * y.max(1.0), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn conjugate_multipliers_share_spectra(phi in 0.0f64..std::f64::consts::TAU) {
        let cell = build_comb(1.0, &[1.5, 1.0 / 6.0], &[1.5, 0.5]).unwrap();
        let r = Regime::from_angles(&[phi]);
        let a = below(&cell, r.conj(), 0.05, 60.0);
        let b = below(&cell, r, 0.05, 60.0);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * y.max(1.0));
        }
    }
}
