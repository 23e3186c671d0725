//! Command-line front end.
//!
//! Every failure becomes a [`Failure`]: exit status 2 for input that cannot
//! be read or does not describe a problem, 1 when a well-formed problem
//! violates a domain invariant or a computation cannot be certified. The
//! diagnostic is a single line `error:<code>:<message>`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bands::{
    band_intervals_with, certificates_csv, convergence_csv, convergence_study_with, sweep_csv,
    BandError,
};
use crate::design::{design, realize, DesignError, GapTargets};
use crate::fiber::{
    eigenvalues_below_with, fem_oracle, Regime, SolverError, SolverOptions, SpectralProblem,
};
use crate::graph::{GraphDocument, GraphError, PeriodCell, StructuralError};
use crate::io::{fmt15, join15};
use crate::limit::{LimitError, LimitModel};
use crate::selftest::{run_criterion, CRITERION_COUNT};

/// Environment variable capping the worker thread count.
pub const THREADS_VAR: &str = "BANDGAP_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "bandgap",
    version,
    about = "Spectral engine for periodic quantum graphs with delta'-type couplings"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a cell against the standing assumptions.
    Validate {
        #[arg(long)]
        cell: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Limit constants a_j, gap ends b_j and the spectrum of the limit matrix.
    Limit {
        #[arg(long)]
        cell: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fiber eigenvalues below --lmax for one regime.
    Spectrum {
        #[arg(long)]
        cell: PathBuf,
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// Quasimomentum angles in radians (theta regime only).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long)]
        lmax: f64,
        /// Use the finite-difference oracle with this many intervals per unit length.
        #[arg(long)]
        mesh_density: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Band diagram and certified gaps for each epsilon.
    Bands {
        #[arg(long)]
        cell: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long)]
        lmax: f64,
        #[arg(long, default_value_t = 16)]
        theta_samples: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Gap endpoints against their small-epsilon limits.
    Converge {
        #[arg(long)]
        cell: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long)]
        lmax: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Lengths and couplings that open prescribed gaps.
    Design {
        #[arg(long)]
        targets: PathBuf,
        /// Build the comb cell; written to --out when given.
        #[arg(long)]
        realize: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the acceptance criteria.
    Selftest {
        /// Run only this criterion (1-based).
        #[arg(long)]
        criterion: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Neumann,
    Dirichlet,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Tolerance override NAME=VALUE; NAME is accept or refine-width.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

impl SolverArgs {
    fn options(&self) -> Result<SolverOptions, Failure> {
        let mut opts = SolverOptions::default();
        for item in &self.tol {
            let (name, value) = item.split_once('=').ok_or_else(|| {
                Failure::input("tolerance", format!("`{item}` is not NAME=VALUE"))
            })?;
            let value: f64 = value
                .parse()
                .map_err(|_| Failure::input("tolerance", format!("`{value}` is not a number")))?;
            if !(value.is_finite() && value > 0.0) {
                return Err(Failure::input(
                    "tolerance",
                    format!("{name} = {value}; tolerances must be positive"),
                ));
            }
            match name {
                "accept" => opts.accept = value,
                "refine-width" => opts.refine_width = value,
                _ => {
                    return Err(Failure::input(
                        "tolerance",
                        format!("unknown tolerance `{name}`"),
                    ))
                }
            }
        }
        Ok(opts)
    }
}

/// A failed run: exit status and one-line diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub status: i32,
    pub code: &'static str,
    pub message: String,
}

impl Failure {
    fn input(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: 2,
            code,
            message: message.into(),
        }
    }

    fn domain(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: 1,
            code,
            message: message.into(),
        }
    }

    pub fn diagnostic(&self) -> String {
        format!("error:{}:{}", self.code, self.message.replace('\n', "; "))
    }
}

impl From<StructuralError> for Failure {
    fn from(e: StructuralError) -> Self {
        Failure::input("structure", e.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Structural(s) => s.into(),
            GraphError::Limit(l) => l.into(),
            other => Failure::domain("graph", other.to_string()),
        }
    }
}

impl From<LimitError> for Failure {
    fn from(e: LimitError) -> Self {
        let code = match e {
            LimitError::DegenerateConstants { .. } => "degenerate",
            LimitError::Input(_) => return Failure::input("limit-input", e.to_string()),
            _ => "limit",
        };
        Failure::domain(code, e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let code = match e {
            SolverError::InvalidCell(_) => "validation",
            SolverError::InvalidProblem(_) => return Failure::input("problem", e.to_string()),
            SolverError::Resolution { .. } => "resolution",
            SolverError::Ceiling { .. } => "ceiling",
            SolverError::NegativeLambda(_) | SolverError::RowCount { .. } => "solver",
        };
        Failure::domain(code, e.to_string())
    }
}

impl From<BandError> for Failure {
    fn from(e: BandError) -> Self {
        match e {
            BandError::Solver(s) => s.into(),
            BandError::Limit(l) => l.into(),
            BandError::Input(_) => Failure::input("problem", e.to_string()),
            BandError::Ceiling { .. } => Failure::domain("ceiling", e.to_string()),
        }
    }
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::TargetOrder(_) => Failure::domain("target-order", e.to_string()),
            DesignError::Input(_) => Failure::input("targets", e.to_string()),
            DesignError::Conditioning { .. } => Failure::domain("conditioning", e.to_string()),
            DesignError::Limit(l) => l.into(),
            DesignError::Graph(g) => g.into(),
        }
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit status. Results go to stdout or `--out`, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return report(&Failure::input("usage", first));
        }
    };
    if let Err(f) = configure_threads() {
        return report(&f);
    }
    match run(cli) {
        Ok(()) => 0,
        Err(f) => report(&f),
    }
}

fn report(f: &Failure) -> i32 {
    eprintln!("{}", f.diagnostic());
    f.status
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Failure::input(
                "threads",
                format!("{THREADS_VAR}=`{value}` is not a positive integer"),
            )
        })?;
    // a pool configured earlier in the process wins
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { cell, output } => validate(&cell, &output),
        Command::Limit { cell, output } => {
            let cell = load_valid_cell(&cell)?;
            let text = limit_report(&cell, output.format.unwrap_or(Format::Csv))?;
            emit(&output.out, &text)
        }
        Command::Spectrum {
            cell,
            regime,
            phi,
            epsilon,
            lmax,
            mesh_density,
            solver,
            output,
        } => {
            let cell = load_valid_cell(&cell)?;
            let epsilon = single_epsilon(&epsilon)?;
            let regime = regime_of(regime, &phi)?;
            let problem = SpectralProblem::new(&cell, regime, epsilon, lmax)?;
            let spectrum = match mesh_density {
                Some(d) => fem_oracle(&problem, d)?,
                None => eigenvalues_below_with(&problem, &solver.options()?)?,
            };
            let text = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => format!("{}\n", join15(&spectrum.expanded())),
                Format::Json => to_json(&json!({
                    "regime": spectrum.regime,
                    "epsilon": epsilon,
                    "lambda_max": lmax,
                    "method": if mesh_density.is_some() { "finite-difference" } else { "secular" },
                    "mesh_density": mesh_density,
                    "eigenvalues": spectrum.eigenvalues,
                })),
            };
            emit(&output.out, &text)
        }
        Command::Bands {
            cell,
            epsilon,
            lmax,
            theta_samples,
            solver,
            output,
        } => {
            let cell = load_valid_cell(&cell)?;
            let opts = solver.options()?;
            let diagrams = epsilon
                .iter()
                .map(|&e| band_intervals_with(&cell, e, lmax, theta_samples, &opts))
                .collect::<Result<Vec<_>, _>>()?;
            let text = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let certs: Vec<_> = diagrams
                        .iter()
                        .map(|d| (d.epsilon, d.certified_gaps.as_slice()))
                        .collect();
                    format!("{}\n{}", sweep_csv(&diagrams), certificates_csv(&certs))
                }
                Format::Json => to_json(&diagrams),
            };
            emit(&output.out, &text)
        }
        Command::Converge {
            cell,
            epsilon,
            lmax,
            solver,
            output,
        } => {
            let cell = load_valid_cell(&cell)?;
            let limit = limit_model(&cell)?;
            let table = convergence_study_with(&cell, &epsilon, &limit, lmax, &solver.options()?)?;
            let text = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => convergence_csv(&table),
                Format::Json => to_json(&table),
            };
            emit(&output.out, &text)
        }
        Command::Design {
            targets,
            realize: build,
            output,
        } => design_command(&targets, build, &output),
        Command::Selftest { criterion } => selftest(criterion),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::input("parse", format!("{}: {e}", path.display())))
}

fn load_cell(path: &Path) -> Result<PeriodCell, Failure> {
    Ok(PeriodCell::new(parse::<GraphDocument>(path)?)?)
}

fn load_valid_cell(path: &Path) -> Result<PeriodCell, Failure> {
    let cell = load_cell(path)?;
    let report = cell.validate();
    if report.is_valid() {
        Ok(cell)
    } else {
        Err(Failure::domain("validation", report.to_string()))
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::input("io", format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| Failure::input("io", format!("stdout: {e}")))
        }
    }
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn single_epsilon(epsilon: &[f64]) -> Result<f64, Failure> {
    match epsilon {
        [e] => Ok(*e),
        _ => Err(Failure::input(
            "usage",
            "spectrum takes a single --epsilon value",
        )),
    }
}

fn regime_of(regime: RegimeArg, phi: &[f64]) -> Result<Regime, Failure> {
    match regime {
        RegimeArg::Theta if phi.is_empty() => {
            Err(Failure::input("usage", "--regime theta requires --phi"))
        }
        RegimeArg::Theta => Ok(Regime::from_angles(phi)),
        _ if !phi.is_empty() => Err(Failure::input(
            "usage",
            "--phi applies to --regime theta only",
        )),
        RegimeArg::Neumann => Ok(Regime::Neumann),
        RegimeArg::Dirichlet => Ok(Regime::Dirichlet),
    }
}

fn limit_model(cell: &PeriodCell) -> Result<LimitModel, Failure> {
    let q = cell
        .coupling_constants()
        .ok_or_else(|| Failure::domain("validation", "a part has no coupling set"))?;
    Ok(LimitModel::new(&cell.part_totals(), &q)?.with_gap_endpoints()?)
}

fn validate(path: &Path, output: &OutputArgs) -> Result<(), Failure> {
    let cell = load_cell(path)?;
    let report = cell.validate();
    let text = match output.format {
        None => format!("{report}\n"),
        Some(Format::Json) => to_json(&json!({
            "valid": report.is_valid(),
            "violations": report.violations.iter().map(|v| json!({
                "condition": v.condition.label(),
                "ids": v.ids,
                "message": v.message,
            })).collect::<Vec<_>>(),
        })),
        Some(Format::Csv) => {
            let mut s = String::from("condition,ids,message\n");
            for v in &report.violations {
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    csv_field(v.condition.label()),
                    csv_field(&v.ids.join(" ")),
                    csv_field(&v.message)
                );
            }
            s
        }
    };
    emit(&output.out, &text)?;
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::domain("validation", report.to_string()))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Row `j = 0` is the backbone with `b₀ = 0`; rows `j ≥ 1` are parts in
/// ascending-`a` order. `mu` is the matching eigenvalue of the limit matrix
/// and `deviation` its relative distance from `b` (absolute for row 0,
/// scaled by the largest eigenvalue).
fn limit_report(cell: &PeriodCell, format: Format) -> Result<String, Failure> {
    let model = limit_model(cell)?;
    let b = model.b().expect("gap endpoints computed");
    let mu = model.limit_matrix_spectrum();
    let scale = mu
        .last()
        .copied()
        .unwrap_or(1.0)
        .abs()
        .max(f64::MIN_POSITIVE);
    let deviation: Vec<f64> = std::iter::once(mu[0].abs() / scale)
        .chain(b.iter().zip(&mu[1..]).map(|(b, m)| (m - b).abs() / b))
        .collect();
    let worst = deviation.iter().copied().fold(0.0, f64::max);
    Ok(match format {
        Format::Csv => {
            let mut s = String::from("j,part,l,N,q,a,b,mu,deviation\n");
            let _ = writeln!(
                s,
                "0,0,{},,,,0,{},{}",
                fmt15(model.l0()),
                fmt15(mu[0]),
                fmt15(deviation[0])
            );
            for j in 0..model.m() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    j + 1,
                    model.part_order()[j],
                    fmt15(model.lengths()[j]),
                    model.counts()[j],
                    fmt15(model.couplings()[j]),
                    fmt15(model.a()[j]),
                    fmt15(b[j]),
                    fmt15(mu[j + 1]),
                    fmt15(deviation[j + 1])
                );
            }
            s
        }
        Format::Json => to_json(&json!({
            "l0": model.l0(),
            "parts": (0..model.m()).map(|j| json!({
                "j": j + 1,
                "part": model.part_order()[j],
                "l": model.lengths()[j],
                "N": model.counts()[j],
                "q": model.couplings()[j],
                "a": model.a()[j],
                "b": b[j],
            })).collect::<Vec<_>>(),
            "matrix_spectrum": mu,
            "max_deviation": worst,
        })),
    })
}

fn design_command(path: &Path, build: bool, output: &OutputArgs) -> Result<(), Failure> {
    let targets: GapTargets = parse(path)?;
    let d = design(&targets)?;
    let cell = if build { Some(realize(&d)?) } else { None };
    let text = match output.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut v = json!({
                "l": d.lengths(),
                "q": d.couplings(),
                "residuals": d.residuals(),
            });
            if let (Some(c), None) = (&cell, &output.out) {
                v["cell"] = serde_json::to_value(c.document()).expect("documents serialize");
            }
            to_json(&v)
        }
        Format::Csv => {
            let mut s = String::from("j,alpha,beta,N,l,q\n");
            for (j, (iv, n)) in targets.intervals.iter().zip(targets.counts()).enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    j + 1,
                    fmt15(iv[0]),
                    fmt15(iv[1]),
                    n,
                    fmt15(d.lengths()[j]),
                    fmt15(d.couplings()[j])
                );
            }
            s
        }
    };
    match (&cell, &output.out) {
        // the cell goes to --out, the design to stdout
        (Some(c), Some(_)) => {
            emit(&output.out, &to_json(c.document()))?;
            emit(&None, &text)
        }
        _ => emit(&output.out, &text),
    }
}

fn selftest(only: Option<usize>) -> Result<(), Failure> {
    let ids: Vec<usize> = match only {
        Some(id) if (1..=CRITERION_COUNT).contains(&id) => vec![id],
        Some(id) => {
            return Err(Failure::input(
                "usage",
                format!("criterion {id} outside 1..={CRITERION_COUNT}"),
            ))
        }
        None => (1..=CRITERION_COUNT).collect(),
    };
    let mut failed = Vec::new();
    for id in ids {
        let r = run_criterion(id);
        emit(&None, &format!("{r}\n"))?;
        if !r.passed {
            failed.push(id.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::domain(
            "selftest",
            format!("criteria {} failed", failed.join(",")),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_args(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("bandgap").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(parse_args(&["limit", "--cell", "x.json", "--bogus"]).is_err());
    }

    #[test]
    fn epsilon_lists_split_on_commas() {
        let cli = parse_args(&[
            "bands",
            "--cell",
            "c",
            "--epsilon",
            "0.1,0.05",
            "--lmax",
            "5",
        ])
        .unwrap();
        match cli.command {
            Command::Bands { epsilon, .. } => assert_eq!(epsilon, vec![0.1, 0.05]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn negative_angles_parse() {
        let cli = parse_args(&[
            "spectrum",
            "--cell",
            "c",
            "--regime",
            "theta",
            "--phi",
            "-1.5,0.5",
            "--epsilon",
            "1",
            "--lmax",
            "5",
        ])
        .unwrap();
        match cli.command {
            Command::Spectrum { phi, .. } => assert_eq!(phi, vec![-1.5, 0.5]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn tolerances_must_be_positive_and_known() {
        let args = |t: &[&str]| SolverArgs {
            tol: t.iter().map(|s| s.to_string()).collect(),
        };
        let o = args(&["accept=1e-7", "refine-width=1e-10"])
            .options()
            .unwrap();
        assert_eq!((o.accept, o.refine_width), (1e-7, 1e-10));
        for bad in ["accept=0", "accept=-1", "gap=1e-9", "accept", "accept=x"] {
            let f = args(&[bad]).options().unwrap_err();
            assert_eq!((f.status, f.code), (2, "tolerance"), "{bad}");
        }
    }

    #[test]
    fn regime_flags_are_consistent() {
        assert!(regime_of(RegimeArg::Theta, &[]).is_err());
        assert!(regime_of(RegimeArg::Neumann, &[0.5]).is_err());
        assert_eq!(
            regime_of(RegimeArg::Dirichlet, &[]).unwrap(),
            Regime::Dirichlet
        );
    }

    #[test]
    fn diagnostics_are_single_lines() {
        let f = Failure::domain("validation", "one\ntwo");
        assert_eq!(f.diagnostic(), "error:validation:one; two");
    }

    #[test]
    fn error_statuses() {
        let f: Failure = DesignError::Input("x".into()).into();
        assert_eq!(f.status, 2);
        let f: Failure = DesignError::TargetOrder("x".into()).into();
        assert_eq!(f.status, 1);
        let f: Failure = SolverError::Resolution {
            lambda: 1.0,
            residual: 1.0,
        }
        .into();
        assert_eq!((f.status, f.code), (1, "resolution"));
    }
}
