//! Inverse design: edge lengths and couplings that place the limit gaps on
//! prescribed intervals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_comb_with_counts, GraphError, PeriodCell};
use crate::limit::{LimitError, LimitModel};

/// Largest accepted relative verification residual.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("target intervals out of order: {0}")]
    TargetOrder(String),
    #[error("invalid targets: {0}")]
    Input(String),
    #[error("design failed verification, residual {residual:e} exceeds {VERIFY_TOLERANCE:e}")]
    Conditioning { residual: f64 },
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn default_l0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapTargets {
    #[serde(rename = "L")]
    pub lambda_max: f64,
    pub intervals: Vec<[f64; 2]>,
    #[serde(default = "default_l0")]
    pub l0: f64,
    /// Coupling-vertex count per part; empty means one each.
    #[serde(rename = "N", default)]
    pub n: Vec<usize>,
}

impl GapTargets {
    pub fn new(lambda_max: f64, intervals: Vec<[f64; 2]>) -> Self {
        Self {
            lambda_max,
            intervals,
            l0: 1.0,
            n: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.intervals.len()
    }

    /// `N_j`, defaulting to 1.
    pub fn counts(&self) -> Vec<usize> {
        if self.n.is_empty() {
            vec![1; self.m()]
        } else {
            self.n.clone()
        }
    }

    pub fn check(&self) -> Result<(), DesignError> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if self.intervals.is_empty() {
            return Err(DesignError::Input("no target intervals".into()));
        }
        if !finite_pos(self.l0) {
            return Err(DesignError::Input(format!(
                "l0 = {} must be positive",
                self.l0
            )));
        }
        if !finite_pos(self.lambda_max) {
            return Err(DesignError::Input(format!(
                "L = {} must be positive",
                self.lambda_max
            )));
        }
        if !self.n.is_empty() && self.n.len() != self.m() {
            return Err(DesignError::Input(format!(
                "{} vertex counts for {} intervals",
                self.n.len(),
                self.m()
            )));
        }
        if self.n.contains(&0) {
            return Err(DesignError::Input(
                "vertex counts must be at least 1".into(),
            ));
        }
        let ends: Vec<f64> = self.intervals.iter().flat_map(|iv| *iv).collect();
        if ends.iter().any(|x| !x.is_finite()) {
            return Err(DesignError::Input(
                "interval endpoints must be finite".into(),
            ));
        }
        if ends[0] <= 0.0 {
            return Err(DesignError::TargetOrder(format!(
                "alpha_1 = {} is not positive",
                ends[0]
            )));
        }
        for (i, w) in ends.windows(2).enumerate() {
            if w[0] >= w[1] {
                let name = |k: usize| {
                    let kind = if k.is_multiple_of(2) { "alpha" } else { "beta" };
                    format!("{kind}_{}", k / 2 + 1)
                };
                return Err(DesignError::TargetOrder(format!(
                    "{} = {} is not below {} = {}",
                    name(i),
                    w[0],
                    name(i + 1),
                    w[1]
                )));
            }
        }
        let last = ends[ends.len() - 1];
        if last >= self.lambda_max {
            return Err(DesignError::TargetOrder(format!(
                "beta_{} = {last} is not below L = {}",
                self.m(),
                self.lambda_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `max_j |a_j − α_j| / α_j`
    pub a: f64,
    /// `max_j |b_j − β_j| / β_j`
    pub b: f64,
    /// [`verify_system`]
    pub system: f64,
}

/// A verified design. Only [`design`] constructs it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapDesign {
    targets: GapTargets,
    l: Vec<f64>,
    q: Vec<f64>,
    residuals: Residuals,
}

impl GapDesign {
    pub fn targets(&self) -> &GapTargets {
        &self.targets
    }

    pub fn lengths(&self) -> &[f64] {
        &self.l
    }

    pub fn couplings(&self) -> &[f64] {
        &self.q
    }

    pub fn residuals(&self) -> Residuals {
        self.residuals
    }

    /// Limit model of the designed parameters, with gap endpoints.
    pub fn limit_model(&self) -> Result<LimitModel, LimitError> {
        model(&self.targets, &self.l, &self.q)
    }
}

fn model(targets: &GapTargets, l: &[f64], q: &[f64]) -> Result<LimitModel, LimitError> {
    let parts: Vec<(f64, usize)> = l.iter().copied().zip(targets.counts()).collect();
    LimitModel::from_parts(targets.l0, &parts, q)?.with_gap_endpoints()
}

/// `l_j = l₀ (β_j − α_j)/α_j · ∏_{i≠j} (β_i − α_j)/(α_i − α_j)`.
fn length(targets: &GapTargets, j: usize) -> f64 {
    let iv = &targets.intervals;
    let (aj, bj) = (iv[j][0], iv[j][1]);
    let factors = std::iter::once((bj - aj) / aj).chain(
        iv.iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, &[ai, bi])| (bi - aj) / (ai - aj)),
    );
    if iv.len() <= 3 {
        return factors.fold(targets.l0, |acc, f| acc * f);
    }
    // log-magnitude with separate sign, so long products neither overflow nor underflow
    let (log, negative) = factors.fold((0.0, false), |(log, neg), f: f64| {
        (log + f.abs().ln(), neg ^ (f < 0.0))
    });
    let magnitude = targets.l0 * log.exp();
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Closed-form design, verified against the limit model before it is returned.
pub fn design(targets: &GapTargets) -> Result<GapDesign, DesignError> {
    targets.check()?;
    let counts = targets.counts();
    let l: Vec<f64> = (0..targets.m()).map(|j| length(targets, j)).collect();
    // admissible targets force every product positive; this guards overflow
    if l.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(DesignError::Conditioning {
            residual: f64::INFINITY,
        });
    }
    let q: Vec<f64> = l
        .iter()
        .zip(&targets.intervals)
        .zip(&counts)
        .map(|((&lj, iv), &n)| iv[0] * lj / n as f64)
        .collect();

    let limit = model(targets, &l, &q)?;
    let b = limit.b().expect("gap endpoints computed");
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let residuals = Residuals {
        a: limit
            .a()
            .iter()
            .zip(&targets.intervals)
            .map(|(&a, iv)| rel(a, iv[0]))
            .fold(0.0, f64::max),
        b: b.iter()
            .zip(&targets.intervals)
            .map(|(&b, iv)| rel(b, iv[1]))
            .fold(0.0, f64::max),
        system: system_residual(targets, &l),
    };
    let all = [residuals.a, residuals.b, residuals.system];
    if all.iter().any(|r| r.is_nan() || *r >= VERIFY_TOLERANCE) {
        let worst = all.into_iter().fold(f64::NAN, f64::max);
        return Err(DesignError::Conditioning { residual: worst });
    }
    Ok(GapDesign {
        targets: targets.clone(),
        l,
        q,
        residuals,
    })
}

/// `max_i |1 + Σ_j α_j l_j / (l₀ (α_j − β_i))|` for arbitrary lengths `l`.
pub fn system_residual(targets: &GapTargets, l: &[f64]) -> f64 {
    targets
        .intervals
        .iter()
        .map(|&[_, bi]| {
            let sum: f64 = targets
                .intervals
                .iter()
                .zip(l)
                .map(|(&[aj, _], &lj)| aj * lj / (targets.l0 * (aj - bi)))
                .sum();
            (1.0 + sum).abs()
        })
        .fold(0.0, f64::max)
}

/// Residual of the linear system whose unique solution is the design.
pub fn verify_system(design: &GapDesign) -> f64 {
    system_residual(&design.targets, &design.l)
}

/// Comb cell carrying the design: backbone `l₀`, part `j` of total length
/// `l_j` attached at `N_j` points with coupling `q_j`.
pub fn realize(design: &GapDesign) -> Result<PeriodCell, DesignError> {
    let t = &design.targets;
    Ok(build_comb_with_counts(
        t.l0,
        &design.l,
        &design.q,
        &t.counts(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn targets(intervals: &[[f64; 2]]) -> GapTargets {
        GapTargets::new(50.0, intervals.to_vec())
    }

    #[test]
    fn single_gap() {
        let d = design(&targets(&[[2.0, 4.0]])).unwrap();
        assert_eq!(d.lengths(), &[1.0]);
        assert_eq!(d.couplings(), &[2.0]);
        assert_eq!(verify_system(&d), 0.0);
    }

    #[test]
    fn two_gaps_closed_form() {
        let d = design(&targets(&[[1.0, 2.0], [3.0, 4.0]])).unwrap();
        assert_eq!(d.lengths(), &[1.5, 1.0 / 6.0]);
        assert_eq!(d.couplings(), &[1.5, 0.5]);
        assert!(verify_system(&d) < 1e-12);
        let b = d.limit_model().unwrap().b().unwrap().to_vec();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_lengths_fail_the_system() {
        let d = design(&targets(&[[1.0, 2.0], [3.0, 4.0]])).unwrap();
        let mut l = d.lengths().to_vec();
        l[0] *= 1.01;
        assert!(system_residual(d.targets(), &l) > 1e-3);
    }

    #[test]
    fn overlapping_targets_rejected() {
        let err = design(&targets(&[[2.0, 4.0], [3.0, 5.0]])).unwrap_err();
        assert!(matches!(err, DesignError::TargetOrder(_)), "{err}");
        assert!(err.to_string().contains("beta_1"));
    }

    #[test]
    fn ceiling_and_sign_checked() {
        let mut t = targets(&[[2.0, 4.0]]);
        t.lambda_max = 4.0;
        assert!(matches!(design(&t), Err(DesignError::TargetOrder(_))));
        assert!(matches!(
            design(&targets(&[[0.0, 1.0]])),
            Err(DesignError::TargetOrder(_))
        ));
        let mut t = targets(&[[2.0, 4.0]]);
        t.n = vec![1, 1];
        assert!(matches!(design(&t), Err(DesignError::Input(_))));
    }

    #[test]
    fn targets_json() {
        let t: GapTargets =
            serde_json::from_str(r#"{ "L": 10, "intervals": [[1, 2], [3, 4]] }"#).unwrap();
        assert_eq!(t.l0, 1.0);
        assert_eq!(t.counts(), vec![1, 1]);
        let bad = serde_json::from_str::<GapTargets>(r#"{ "L": 10, "intervals": [], "x": 1 }"#);
        assert!(bad.is_err());
    }

    #[test]
    fn realize_reproduces_totals() {
        let mut t = targets(&[[1.0, 2.0], [3.0, 4.0]]);
        t.n = vec![1, 3];
        let d = design(&t).unwrap();
        let cell = realize(&d).unwrap();
        assert!(cell.validate().is_valid());
        let totals = cell.part_totals();
        assert_eq!(totals.counts, vec![1, 3]);
        assert_eq!(totals.length(1), d.lengths()[0]);
        assert!((totals.length(2) - d.lengths()[1]).abs() <= 1e-15 * d.lengths()[1]);
        assert_eq!(cell.coupling_constants().unwrap(), d.couplings());
    }

    /// Sorted endpoints with pairwise separation at least 0.1 below 50.
    fn admissible(max_m: usize) -> impl Strategy<Value = GapTargets> {
        (1..=max_m)
            .prop_flat_map(|m| prop::collection::vec(0.1..5.0f64, 2 * m))
            .prop_filter_map("fits below L", |steps| {
                let mut x = 0.0;
                let ends: Vec<f64> = steps
                    .iter()
                    .map(|s| {
                        x += s;
                        x
                    })
                    .collect();
                (x < 49.9)
                    .then(|| GapTargets::new(50.0, ends.chunks(2).map(|c| [c[0], c[1]]).collect()))
            })
    }

    proptest! {
        #[test]
        fn round_trip(t in admissible(5)) {
            let d = design(&t).unwrap();
            prop_assert!(d.lengths().iter().all(|&l| l > 0.0));
            let r = d.residuals();
            prop_assert!(r.a < 1e-10 && r.b < 1e-9 && r.system < 1e-9, "{r:?}");
        }

        #[test]
        fn homogeneous_in_l0(t in admissible(4), c in 0.1..10.0f64) {
            let d = design(&t).unwrap();
            let mut scaled = t.clone();
            scaled.l0 *= c;
            let s = design(&scaled).unwrap();
            for (x, y) in d.lengths().iter().zip(s.lengths()) {
                prop_assert!((y - c * x).abs() <= 1e-12 * y);
            }
            for (x, y) in d.couplings().iter().zip(s.couplings()) {
                prop_assert!((y - c * x).abs() <= 1e-12 * y);
            }
        }

        #[test]
        fn limits_ignore_vertex_counts(t in admissible(4), seed in prop::collection::vec(1usize..5, 4)) {
            let mut counted = t.clone();
            counted.n = seed[..t.m()].to_vec();
            let plain = design(&t).unwrap().limit_model().unwrap();
            let with_n = design(&counted).unwrap().limit_model().unwrap();
            for (x, y) in plain.a().iter().zip(with_n.a()) {
                prop_assert!((x - y).abs() <= 1e-12 * x);
            }
            for (x, y) in plain.b().unwrap().iter().zip(with_n.b().unwrap()) {
                prop_assert!((x - y).abs() <= 1e-10 * x);
            }
        }
    }
}
