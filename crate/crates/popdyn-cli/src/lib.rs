//! Command-line driver: parses protocol files and runs the analysis
//! pipeline, writing CSV or plain-text reports.
//!
//! Exit codes: 0 on success, 1 when the input fails to parse or validate
//! (or a subcommand is applied to an inapplicable kind), 2 when a numerical
//! procedure fails (stiff integration, reducible chain, eigenvalue
//! breakdown).

pub mod format;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};
use format::{parse_density, parse_protocol_file, serialize_protocol, vector_csv};
use popdyn::dynamics::{integrate, IntegrateError, IntegrateOptions};
use popdyn::markov::{build_generator, stationary_distribution, MarkovError};
use popdyn::reduction::ppp_to_spp;
use popdyn::sim::{simulate_ppp, simulate_spp, PopulationCounts, SimError};
use popdyn::stability::{
    find_fixed_points, stability_report, StabilityError, DEFAULT_HYPERBOLICITY_EPS,
    DEFAULT_SEEDS_PER_FACE,
};
use popdyn::viral::{is_replicator_fixed_point, lyapunov_certificate, relative_entropy, to_lotka_volterra};
use popdyn::{DensityVector, ProtocolKind, ProtocolSpec};
use std::io::Write;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Parser)]
#[command(name = "popdyn", about = "Mean-field analysis of population protocols", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a protocol file and report its shape.
    Validate {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite a rule protocol in rate/switch form.
    Reduce {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-field velocity at a point.
    Rhs {
        file: PathBuf,
        /// Density vector, comma separated.
        #[arg(long)]
        at: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the mean-field dynamics and emit the trajectory.
    Integrate {
        file: PathBuf,
        /// Initial densities, comma separated.
        #[arg(long)]
        x0: String,
        /// End time.
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
        #[arg(long, default_value_t = 1e-10)]
        abs_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stochastic finite-population simulation.
    Simulate {
        file: PathBuf,
        /// Number of agents.
        #[arg(long)]
        n: u64,
        /// End time.
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial densities (default uniform); rounded to counts.
        #[arg(long)]
        x0: Option<String>,
        /// Sampling period (default t/100).
        #[arg(long)]
        sample_dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate fixed points of the mean-field dynamics.
    FixedPoints {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEEDS_PER_FACE)]
        seeds_per_face: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed points with reduced-Jacobian spectra and verdicts.
    Stability {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEEDS_PER_FACE)]
        seeds_per_face: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary distribution of a constant-specification protocol.
    Stationary {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative entropy of two density vectors.
    Entropy {
        file: PathBuf,
        /// Reference point x*, comma separated.
        #[arg(long)]
        star: String,
        /// Evaluation point, comma separated.
        #[arg(long)]
        at: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled entropy-descent certificate around a replicator fixed point.
    Lyapunov {
        file: PathBuf,
        /// Fixed point x*, comma separated.
        #[arg(long)]
        star: String,
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lotka-Volterra image of a linear viral protocol.
    LvMap {
        file: PathBuf,
        /// Pivot state name (default: the last state).
        #[arg(long)]
        pivot: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CmdError {
    Invalid(String),
    Numerical(String),
}

impl CmdError {
    fn exit_code(&self) -> i32 {
        match self {
            CmdError::Invalid(_) => EXIT_INVALID,
            CmdError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Invalid(m) | CmdError::Numerical(m) => m,
        }
    }
}

impl From<IntegrateError> for CmdError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::InvalidOptions(_) | IntegrateError::Protocol(_) => {
                CmdError::Invalid(e.to_string())
            }
            IntegrateError::StepUnderflow { .. } | IntegrateError::DomainEscape(_) => {
                CmdError::Numerical(e.to_string())
            }
        }
    }
}

impl From<MarkovError> for CmdError {
    fn from(e: MarkovError) -> Self {
        match e {
            MarkovError::NotGenerator(_) | MarkovError::Protocol(_) => {
                CmdError::Invalid(e.to_string())
            }
            _ => CmdError::Numerical(e.to_string()),
        }
    }
}

impl From<StabilityError> for CmdError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Protocol(_) => CmdError::Invalid(e.to_string()),
            _ => CmdError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CmdError {
    fn from(e: SimError) -> Self {
        CmdError::Invalid(e.to_string())
    }
}

impl From<popdyn::ProtocolError> for CmdError {
    fn from(e: popdyn::ProtocolError) -> Self {
        CmdError::Invalid(e.to_string())
    }
}

/// Runs one invocation. `args` includes the program name; normal output
/// goes to `stdout` unless the subcommand carries `--out`.
pub fn run<W: Write>(args: &[String], stdout: &mut W) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                eprint!("{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli.cmd, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch<W: Write>(cmd: Cmd, stdout: &mut W) -> Result<(), CmdError> {
    match cmd {
        Cmd::Validate { file, out } => {
            let spec = load(&file)?;
            let report = spec.validate();
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let detail = match spec.kind() {
                ProtocolKind::Ppp { rules } => format!(", {} rules", rules.len()),
                _ => String::new(),
            };
            emit(
                out,
                stdout,
                &format!("valid: {}, {} states{detail}\n", spec.kind_name(), spec.k()),
            )
        }
        Cmd::Reduce { file, out } => {
            let spec = load(&file)?;
            if !matches!(spec.kind(), ProtocolKind::Ppp { .. }) {
                return Err(CmdError::Invalid(format!(
                    "reduce: requires a ppp protocol, got {}",
                    spec.kind_name()
                )));
            }
            let reduced = ppp_to_spp(&spec)?;
            emit(out, stdout, &serialize_protocol(&reduced))
        }
        Cmd::Rhs { file, at, out } => {
            let spec = load(&file)?;
            let x = density(&at, spec.k())?;
            let v = popdyn::dynamics::rhs(&spec, &x);
            emit(out, stdout, &format!("{}\n", vector_csv(&v)))
        }
        Cmd::Integrate { file, x0, t, rel_tol, abs_tol, out } => {
            let spec = load(&file)?;
            let x0 = density(&x0, spec.k())?;
            let opts = IntegrateOptions { rel_tol, abs_tol, ..IntegrateOptions::to(t) };
            let output = integrate(&spec, &x0, &opts)?;
            emit(out, stdout, &output.trajectory.to_csv(spec.states().names()))
        }
        Cmd::Simulate { file, n, t, seed, x0, sample_dt, out } => {
            let spec = load(&file)?;
            let x0 = match x0 {
                Some(text) => density(&text, spec.k())?,
                None => DensityVector::uniform(spec.k()),
            };
            let counts = PopulationCounts::from_density(&x0, n);
            let sample_dt = sample_dt.unwrap_or(t / 100.0);
            let text = if matches!(spec.kind(), ProtocolKind::Ppp { .. }) {
                let run = simulate_ppp(&spec, &counts, t, sample_dt, seed)?;
                with_event_comment(
                    run.trajectory.to_csv(spec.states().names()),
                    &format!("# events={} noop_events={}\n", run.events, run.noop_events),
                )
            } else {
                let run = simulate_spp(&spec, &counts, t, sample_dt, seed)?;
                with_event_comment(
                    run.trajectory.to_csv(spec.states().names()),
                    &format!("# events={}\n", run.events),
                )
            };
            emit(out, stdout, &text)
        }
        Cmd::FixedPoints { file, seeds_per_face, out } => {
            let spec = load(&file)?;
            let search = find_fixed_points(&spec, seeds_per_face);
            let names = spec.states().names();
            let mut text = format!("{},residual,boundary\n", names.join(","));
            for p in &search.points {
                text.push_str(&format!(
                    "{},{},{}\n",
                    vector_csv(&p.x),
                    p.residual,
                    p.boundary
                ));
            }
            if search.continuum_suspected {
                text.push_str("# continuum of fixed points suspected\n");
            }
            emit(out, stdout, &text)
        }
        Cmd::Stability { file, seeds_per_face, out } => {
            let spec = load(&file)?;
            let report = stability_report(&spec, seeds_per_face, DEFAULT_HYPERBOLICITY_EPS)?;
            emit(out, stdout, &report.to_csv(spec.states().names()))
        }
        Cmd::Stationary { file, out } => {
            let spec = load(&file)?;
            if !matches!(spec.kind(), ProtocolKind::Mpp { .. }) {
                return Err(CmdError::Invalid(format!(
                    "stationary: requires an mpp protocol, got {} \
                     (constant rates and switch probabilities; for rule protocols use \
                     `reduce` and `integrate` to study the long-run mix)",
                    spec.kind_name()
                )));
            }
            let q = build_generator(&spec)?;
            let x = stationary_distribution(&q)?;
            emit(out, stdout, &format!("{}\n", vector_csv(&x)))
        }
        Cmd::Entropy { file, star, at, out } => {
            let spec = load(&file)?;
            let star = density(&star, spec.k())?;
            let x = density(&at, spec.k())?;
            emit(out, stdout, &format!("{}\n", relative_entropy(&star, &x)))
        }
        Cmd::Lyapunov { file, star, radius, samples, seed, out } => {
            let spec = load(&file)?;
            if !matches!(spec.kind(), ProtocolKind::Lvp { .. }) {
                return Err(CmdError::Invalid(format!(
                    "lyapunov: requires an lvp protocol, got {}",
                    spec.kind_name()
                )));
            }
            let star = density(&star, spec.k())?;
            if !is_replicator_fixed_point(&spec, &star, 1e-7)? {
                return Err(CmdError::Invalid(
                    "lyapunov: --star is not a fixed point (state immunities differ from the \
                     population average on its support)"
                        .into(),
                ));
            }
            let verdict = lyapunov_certificate(&spec, &star, radius, samples, seed)?;
            emit(out, stdout, &verdict.to_report(spec.states().names(), radius))
        }
        Cmd::LvMap { file, pivot, out } => {
            let spec = load(&file)?;
            if !matches!(spec.kind(), ProtocolKind::Lvp { .. }) {
                return Err(CmdError::Invalid(format!(
                    "lv-map: requires an lvp protocol, got {}",
                    spec.kind_name()
                )));
            }
            let pivot_idx = match pivot {
                Some(name) => Some(spec.states().index_of(&name).ok_or_else(|| {
                    CmdError::Invalid(format!("lv-map: unknown pivot state `{name}`"))
                })?),
                None => None,
            };
            let lv = to_lotka_volterra(&spec, pivot_idx)?;
            let mut text = format!(
                "pivot {}\ndim {}\nr {}\n",
                spec.states().name(lv.pivot),
                lv.dim(),
                vector_csv(&lv.intrinsic)
            );
            for row in &lv.interaction {
                text.push_str(&format!("B {}\n", vector_csv(row)));
            }
            emit(out, stdout, &text)
        }
    }
}

fn load(path: &PathBuf) -> Result<ProtocolSpec, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_protocol_file(&text).map_err(|errs| {
        CmdError::Invalid(format!("{} is not a valid protocol file:\n{errs}", path.display()))
    })
}

fn density(text: &str, k: usize) -> Result<DensityVector, CmdError> {
    parse_density(text, k).map_err(CmdError::Invalid)
}

fn with_event_comment(csv: String, comment: &str) -> String {
    // The metadata comment block sits above the CSV header.
    match csv.find('\n') {
        Some(pos) => {
            let (first, rest) = csv.split_at(pos + 1);
            format!("{first}{comment}{rest}")
        }
        None => csv,
    }
}

fn emit<W: Write>(out: Option<PathBuf>, stdout: &mut W, text: &str) -> Result<(), CmdError> {
    match out {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| CmdError::Invalid(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CmdError::Invalid(format!("cannot write output: {e}"))),
    }
}
