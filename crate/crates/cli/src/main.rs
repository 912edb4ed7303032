//! `walg`: batch front end with JSON on stdout.
//!
//! Exit status is 0 when every asserted identity holds, 1 when one fails (the residuals
//! are printed), and 2 on a usage or input error.

use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;
use walg::a1_suite::{self, CorrelatorTable};
use walg::acceptance;
use walg::exact_arith::{parse_rational, Rational};
use walg::lattice_va::{minuscule_orbit, LatticeState, LatticeVa, StateJson};
use walg::root_system::RootSystem;
use walg::twisted_fock::{LaurentWindow, TwistedFock, DEFAULT_LEVEL_CAP};

#[derive(Parser)]
#[command(name = "walg", version, about = "Exact W-algebra and twisted Fock space computations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump a root system (roots, Cartan matrix, Coxeter number, exponents).
    Roots {
        /// ADE type such as A2 or D4.
        name: String,
    },
    /// The n-th product of two lattice states read from JSON files.
    Product {
        #[arg(long = "type")]
        ty: String,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        n: i64,
    },
    /// Apply the screening operator of a root.
    Screen {
        #[arg(long = "type")]
        ty: String,
        /// Root in simple-root coordinates, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[command(flatten)]
        element: ElementArgs,
    },
    /// Decide membership in the W-algebra (kernel of all screenings).
    WalgCheck {
        #[arg(long = "type")]
        ty: String,
        #[command(flatten)]
        element: ElementArgs,
    },
    /// Check the Virasoro relations of the modes of ω on low-weight states.
    VirasoroCheck {
        #[arg(long = "type")]
        ty: String,
        #[arg(long, default_value_t = 5)]
        max_weight: i64,
        #[arg(long, default_value_t = 3)]
        mode_bound: i64,
        /// Defaults to the rank.
        #[arg(long)]
        central_charge: Option<String>,
    },
    /// The twisted field of a Fock state as a normally ordered operator.
    TwistedField {
        #[arg(long = "type")]
        ty: String,
        #[command(flatten)]
        element: ElementArgs,
        /// Range of λ-exponents kept, as lo..hi.
        #[arg(long, default_value = "-8..8", allow_hyphen_values = true)]
        window: String,
        #[arg(long, default_value_t = DEFAULT_LEVEL_CAP)]
        cap: u16,
    },
    /// Witten-Kontsevich correlators from the DVV recursion.
    Wk {
        #[arg(long)]
        genus: usize,
        /// Bound on the total ψ-weight.
        #[arg(long)]
        deg: u32,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the A1 Virasoro operators to the truncated tau-function.
    Constraints {
        #[arg(long, default_value = "-1..5", allow_hyphen_values = true)]
        m_range: String,
        #[arg(long, required_unless_present = "table")]
        genus: Option<usize>,
        #[arg(long, required_unless_present = "table")]
        deg: Option<u32>,
        /// Rescale ℏ ↦ ℏΔ, q ↦ q√Δ first; Δ as p/q.
        #[arg(long)]
        rescale: Option<String>,
        /// Use a correlator table written by `wk` instead of the recursion.
        #[arg(long, conflicts_with_all = ["genus", "deg"])]
        table: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Acceptance {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Element {
    Omega,
    Nu,
    Pi,
}

#[derive(clap::Args)]
#[group(skip)]
struct ElementArgs {
    /// A named element: omega (or ω^d with --d), nu (needs --d), pi (type D only).
    #[arg(long, value_enum, required_unless_present = "state", conflicts_with = "state")]
    element: Option<Element>,
    /// A state in JSON form.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long, requires = "element")]
    d: Option<u32>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Lattice(#[from] walg::lattice_va::LatticeError),
    #[error(transparent)]
    Twisted(#[from] walg::twisted_fock::TwistedError),
    #[error(transparent)]
    A1(#[from] walg::a1_suite::A1Error),
}

/// What a command produced: a JSON value and whether its identities held.
struct Output {
    value: Value,
    holds: bool,
}

impl Output {
    fn data(value: Value) -> Self {
        Output { value, holds: true }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn root_system(name: &str) -> Result<Arc<RootSystem>, CliError> {
    RootSystem::parse(name).map(Arc::new).map_err(|e| usage(e.to_string()))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
}

fn read_state(path: &Path) -> Result<LatticeState, CliError> {
    let j: StateJson =
        serde_json::from_value(read_json(path)?).map_err(|source| CliError::Json { path: path.into(), source })?;
    Ok(LatticeState::from_json(&j))
}

fn parse_range(s: &str) -> Result<RangeInclusive<i64>, CliError> {
    let bad = || usage(format!("expected a range lo..hi, got {s:?}"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: i64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

fn parse_root(s: &str) -> Result<Vec<i64>, CliError> {
    s.split(',').map(|x| x.trim().parse().map_err(|_| usage(format!("bad root coordinate {x:?}")))).collect()
}

fn element(v: &LatticeVa, args: &ElementArgs) -> Result<LatticeState, CliError> {
    if let Some(path) = &args.state {
        return read_state(path);
    }
    match (args.element, args.d) {
        (Some(Element::Omega), None) => Ok(v.build_omega()),
        (Some(Element::Omega), Some(d)) => Ok(v.build_omega_d(d)?),
        (Some(Element::Nu), Some(d)) => Ok(v.build_nu_d(&minuscule_orbit(v.root_system())?, d)),
        (Some(Element::Nu), None) => Err(usage("--element nu needs --d")),
        (Some(Element::Pi), _) => Ok(v.build_pi_n()?),
        (None, _) => Err(usage("give --element or --state")),
    }
}

fn run(cmd: Command) -> Result<Output, CliError> {
    match cmd {
        Command::Roots { name } => {
            Ok(Output::data(serde_json::to_value(root_system(&name)?.export()).expect("serializable")))
        }
        Command::Product { ty, a, b, n } => {
            let v = LatticeVa::new(root_system(&ty)?);
            let p = v.nth_product(&read_state(&a)?, &read_state(&b)?, n)?;
            Ok(Output::data(serde_json::to_value(p.to_json()).expect("serializable")))
        }
        Command::Screen { ty, alpha, element: e } => {
            let v = LatticeVa::new(root_system(&ty)?);
            let x = element(&v, &e)?;
            let s = v.screening(&parse_root(&alpha)?, &x)?;
            Ok(Output::data(json!({ "zero": s.is_zero(), "result": s.to_json() })))
        }
        Command::WalgCheck { ty, element: e } => {
            let v = LatticeVa::new(root_system(&ty)?);
            let x = element(&v, &e)?;
            let member = v.in_w_algebra(&x)?;
            let mut value = json!({ "member": member });
            if !member {
                let mut failing = Vec::new();
                for alpha in &v.root_system().roots {
                    let s = v.screening(alpha, &x)?;
                    if !s.is_zero() {
                        failing.push(json!({ "alpha": alpha, "screening": s.to_json() }));
                    }
                }
                value["residuals"] = Value::Array(failing);
            }
            Ok(Output { value, holds: member })
        }
        Command::VirasoroCheck { ty, max_weight, mode_bound, central_charge } => {
            let v = LatticeVa::new(root_system(&ty)?);
            let c = match central_charge {
                Some(s) => parse_rational(&s).map_err(usage)?,
                None => Rational::from_integer((v.rank() as i64).into()),
            };
            let fails = v.virasoro_check(max_weight, mode_bound, &c)?;
            let residuals: Vec<Value> = fails
                .iter()
                .map(|f| json!({ "m": f.m, "n": f.n, "lattice": f.lattice, "monomial": f.monomial.factors().collect::<Vec<_>>() }))
                .collect();
            Ok(Output {
                holds: residuals.is_empty(),
                value: json!({ "holds": residuals.is_empty(), "central_charge": c.to_string(), "residuals": residuals }),
            })
        }
        Command::TwistedField { ty, element: e, window, cap } => {
            let rs = root_system(&ty)?;
            let v = LatticeVa::new(rs.clone());
            let x = element(&v, &e)?;
            let r = parse_range(&window)?;
            let op = TwistedFock::new(rs).twisted_field(&x, &LaurentWindow::ints(*r.start(), *r.end()), cap)?;
            Ok(Output::data(serde_json::to_value(op.to_json()).expect("serializable")))
        }
        Command::Wk { genus, deg, out } => {
            let table = a1_suite::dvv_oracle(genus, deg).to_json();
            match out {
                Some(path) => {
                    let text = serde_json::to_string_pretty(&table).expect("serializable");
                    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
                    Ok(Output::data(json!({ "written": path, "genus_max": genus, "weight_max": deg })))
                }
                None => Ok(Output::data(table)),
            }
        }
        Command::Constraints { m_range, genus, deg, rescale, table } => {
            let ms = parse_range(&m_range)?;
            if *ms.start() < -1 {
                return Err(usage("the constraints start at m = -1"));
            }
            let delta = match rescale {
                Some(s) => {
                    let d = parse_rational(&s).map_err(usage)?;
                    if d <= Rational::from_integer(0.into()) {
                        return Err(usage("--rescale must be positive"));
                    }
                    Some(d)
                }
                None => None,
            };
            let table = match table {
                Some(path) => {
                    CorrelatorTable::from_json(&read_json(&path)?).map_err(|source| CliError::Json { path, source })?
                }
                None => a1_suite::dvv_oracle(genus.expect("required"), deg.expect("required")),
            };
            let report = a1_suite::check_table_annihilation(&table, ms, delta.as_ref())?;
            Ok(Output { holds: report.passed(), value: report.to_json() })
        }
        Command::Acceptance { only } => {
            let ids = if only.is_empty() { acceptance::criterion_ids() } else { only };
            let mut outcomes = Vec::new();
            for id in ids {
                let o = acceptance::run_one(id).ok_or_else(|| usage(format!("no criterion {id}")))?;
                eprintln!("{o}");
                outcomes.push(o);
            }
            let holds = outcomes.iter().all(|o| o.passed);
            Ok(Output { holds, value: json!({ "passed": holds, "criteria": outcomes }) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&out.value).expect("serializable"));
            if out.holds {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("walg: {e}");
            ExitCode::from(2)
        }
    }
}
