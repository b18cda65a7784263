//! Command line front end. Every run prints one JSON header line holding the
//! fully resolved configuration, followed by CSV (or a JSON document for
//! `tower-build`). Feeding that header back through `--config` replays the
//! run exactly.
//!
//! Exit codes: `0` success, `1` usage error, `2` invalid parameters,
//! `3` numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cohomology::{uni_scan, FibreFamily, UniStatus};
use crate::dynamics::{BaseMap, FibreMap, SingularitySet, SystemConfig};
use crate::error::Error;
use crate::hyperbolic_times::{certify_return_times, HypTimeParams};
use crate::spectral::{spectral_radius, verify_renewal, UlamGeometry};
use crate::statistics::{
    correlation_mc, fit_rate, recurrence_decay_fit, recurrence_report, Observable, RecurrenceParams,
};
use crate::tower::{twist_bound_constant, twist_suprema, InducedScheme};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "skew-tower", version, about = "Experiments on the doubling-map skew-product and its induced tower")]
struct Cli {
    /// Replay a run from its echoed JSON header (first line of the file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// key=value file selecting the map, fibre and singular set.
    #[arg(long, global = true)]
    system: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Command {
    /// Periodic-orbit obstruction over a grid of exponents.
    UniScan(UniScanArgs),
    /// Certify that R = l is a hyperbolic time on every cell.
    HypCheck(HypCheckArgs),
    /// Per-cell suprema of the induced twist against the bound.
    TwistBound(TwistArgs),
    /// Describe the truncated inducing scheme.
    TowerBuild(TowerArgs),
    /// Spectral radii of the Ulam twisted operators per mode.
    UlamSpectrum(UlamArgs),
    /// Renewal identity deviations.
    RenewalCheck(RenewalArgs),
    /// Monte Carlo correlations of fibre-mode observables.
    Correlation(CorrelationArgs),
    /// Measures of the slow-recurrence sets.
    Recurrence(RecurrenceArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::UniScan(_) => "uni-scan",
            Command::HypCheck(_) => "hyp-check",
            Command::TwistBound(_) => "twist-bound",
            Command::TowerBuild(_) => "tower-build",
            Command::UlamSpectrum(_) => "ulam-spectrum",
            Command::RenewalCheck(_) => "renewal-check",
            Command::Correlation(_) => "correlation",
            Command::Recurrence(_) => "recurrence",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct UniScanArgs {
    /// power | coboundary | smooth_counterexample
    #[arg(long, default_value = "power")]
    pub family: String,
    /// lo:hi:count, endpoints included.
    #[arg(long, default_value = "0.01:0.99:99")]
    pub a_grid: String,
    /// Cell pairs, e.g. "1,2;2,3".
    #[arg(long, default_value = "1,2")]
    pub cells: String,
    #[arg(long = "L", default_value_t = 40)]
    pub levels: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct HypCheckArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 1.5)]
    pub b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 30)]
    pub lmax: u32,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long = "L", default_value_t = 40)]
    pub levels: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TwistArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 1.5)]
    pub b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 30)]
    pub lmax: u32,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long = "L", default_value_t = 40)]
    pub levels: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TowerArgs {
    #[arg(long = "L", default_value_t = 40)]
    pub levels: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct UlamArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 10)]
    pub k_max: i64,
    #[arg(long = "N", default_value_t = 1024)]
    pub grid: usize,
    #[arg(long = "L", default_value_t = 40)]
    pub levels: u32,
    #[arg(long, default_value_t = 8)]
    pub q: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Directory for binary matrix dumps (`ulam_k<k>.bin`).
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RenewalArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 5)]
    pub n_max: u32,
    #[arg(long, default_value_t = 3)]
    pub k_max: i64,
    #[arg(long = "N", default_value_t = 64)]
    pub grid: usize,
    #[arg(long = "L", default_value_t = 40)]
    pub levels: u32,
    #[arg(long, default_value_t = 8)]
    pub q: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    /// Fibre mode k of g = e^{2 pi i k u} bump(x); h is its conjugate.
    #[arg(long, default_value_t = 1)]
    pub mode: i64,
    #[arg(long, default_value_t = 60)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// First lag of the rate fit reported on stderr.
    #[arg(long, default_value_t = 5)]
    pub fit_from: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceArgs {
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Comma separated N values.
    #[arg(long, default_value = "1,2,5,10,20,40")]
    pub n_values: String,
    #[arg(long, default_value_t = 100_000)]
    pub grid: usize,
    /// Quantifier horizon: cap = factor * max N.
    #[arg(long, default_value_t = 4)]
    pub cap_factor: usize,
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConvergence { .. }
            | Error::NoiseFloor { .. }
            | Error::Singularity { .. }
            | Error::ExcludedIterate { .. } => EXIT_NUMERICAL,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::Config(format!("grid '{spec}' is not lo:hi:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !(lo <= hi) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

pub fn parse_pairs(spec: &str) -> Result<Vec<(u32, u32)>, Error> {
    spec.split(';')
        .map(|pair| {
            let v: Vec<&str> = pair.split(',').collect();
            match v.as_slice() {
                [n, m] => Ok((
                    n.trim().parse().map_err(|_| Error::Config(format!("bad cell '{n}'")))?,
                    m.trim().parse().map_err(|_| Error::Config(format!("bad cell '{m}'")))?,
                )),
                _ => Err(Error::Config(format!("cell pair '{pair}' is not n,m"))),
            }
        })
        .collect()
}

fn parse_list(spec: &str) -> Result<Vec<usize>, Error> {
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad integer '{s}'"))))
        .collect()
}

fn check_a(a: f64) -> Result<(), Failure> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("a must lie in (0, 1) (got {a})")))
    }
}

fn warn_b(a: f64, b: f64, err: &mut dyn Write) {
    let upper = 1.0 / (1.0 - a);
    if !(b > 1.0 && b < upper) {
        let _ = writeln!(
            err,
            "warning: b = {b} lies outside (1, {upper}); the hyperbolic-time argument needs 1 < b < 1/(1-a)"
        );
    }
}

/// Map, fibre and singular set: the system file when given, otherwise the
/// doubling map with `(1 - x)^a`.
fn system_for(a: f64, system: &Option<String>) -> Result<(BaseMap, FibreMap, SingularitySet), Failure> {
    match system {
        Some(text) => {
            let cfg = SystemConfig::parse(text)?;
            Ok((cfg.map, cfg.fibre, cfg.singularities))
        }
        None => {
            check_a(a)?;
            let fib = FibreMap::power(a)?;
            let s = fib.singularities();
            Ok((BaseMap::doubling(), fib, s))
        }
    }
}

fn execute(cmd: &Command, system: &Option<String>, err: &mut dyn Write) -> Result<String, Failure> {
    let mut out = String::new();
    match cmd {
        Command::UniScan(p) => {
            let family = FibreFamily::parse(&p.family)?;
            let grid = parse_grid(&p.a_grid)?;
            let pairs = parse_pairs(&p.cells)?;
            let scheme = InducedScheme::new(p.levels)?;
            writeln!(out, "a,n,m,obstruction,status").unwrap();
            for row in uni_scan(&scheme, family, &grid, &pairs)? {
                let status = match row.status {
                    UniStatus::NotCohomologous => "not_cohomologous",
                    UniStatus::Inconclusive => "inconclusive",
                    UniStatus::Excluded => "excluded",
                };
                let v = row.obstruction.map(|v| v.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{},{}", row.a, row.n, row.m, v, status).unwrap();
            }
        }
        Command::HypCheck(p) => {
            check_a(p.a)?;
            warn_b(p.a, p.b, err);
            let params = HypTimeParams::new(p.b, p.sigma, p.delta)?;
            let (_, _, s) = system_for(p.a, system)?;
            let scheme = InducedScheme::new(p.levels)?;
            let certs = certify_return_times(&scheme, &s, &params, p.lmax, p.points)?;
            writeln!(out, "level,points,passed,failed,distance_bound_failures,min_distance_ratio").unwrap();
            for c in &certs {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.level, c.points, c.passed, c.failed, c.distance_bound_failures, c.min_distance_ratio
                )
                .unwrap();
            }
            let all = certs.iter().all(|c| c.failed == 0 && c.distance_bound_failures == 0);
            let _ = writeln!(err, "all cells pass: {all}");
        }
        Command::TwistBound(p) => {
            warn_b(p.a, p.b, err);
            let (_, fib, _) = system_for(p.a, system)?;
            let bound = twist_bound_constant(fib.twist_constant(), p.sigma, p.b, fib.singular_exponent())?;
            let scheme = InducedScheme::new(p.levels)?;
            writeln!(out, "level,sup_twist,bound,within").unwrap();
            for c in twist_suprema(&scheme, &fib, p.lmax, p.points)? {
                writeln!(out, "{},{},{},{}", c.level, c.sup_twist, bound, c.sup_twist <= bound).unwrap();
            }
        }
        Command::TowerBuild(p) => {
            let scheme = InducedScheme::new(p.levels)?;
            out = serde_json::to_string_pretty(&scheme.describe()).expect("serialisable");
            out.push('\n');
        }
        Command::UlamSpectrum(p) => {
            let (_, fib, _) = system_for(p.a, system)?;
            if p.k_max < 0 {
                return Err(invalid("k-max must be nonnegative"));
            }
            let scheme = InducedScheme::new(p.levels)?;
            let geom = UlamGeometry::new(&scheme, &fib, p.grid, p.q)?;
            if let Some(dir) = &p.dump_dir {
                std::fs::create_dir_all(dir).map_err(|e| invalid(format!("dump dir: {e}")))?;
            }
            writeln!(out, "k,radius,residual,N,L").unwrap();
            for k in -p.k_max..=p.k_max {
                let op = geom.operator(k);
                if let Some(dir) = &p.dump_dir {
                    let path = dir.join(format!("ulam_k{k}.bin"));
                    let file = std::fs::File::create(&path)
                        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                    op.write_binary(std::io::BufWriter::new(file))
                        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                }
                let est = spectral_radius(&op, p.tol, p.max_iter)?;
                writeln!(out, "{},{},{},{},{}", k, est.radius, est.residual, p.grid, p.levels).unwrap();
            }
        }
        Command::RenewalCheck(p) => {
            let (_, fib, _) = system_for(p.a, system)?;
            let scheme = InducedScheme::new(p.levels)?;
            writeln!(out, "n,k,deviation,compositions,mass_defect").unwrap();
            for n in 1..=p.n_max {
                for k in -p.k_max..=p.k_max {
                    let r = verify_renewal(&scheme, &fib, n, k, p.grid, p.q)?;
                    let mass = r.mass_defect.map(|m| m.to_string()).unwrap_or_default();
                    writeln!(out, "{},{},{},{},{}", n, k, r.deviation, r.compositions, mass).unwrap();
                }
            }
        }
        Command::Correlation(p) => {
            let (map, fib, _) = system_for(p.a, system)?;
            let g = Observable::mode(p.mode);
            let h = g.conj();
            let s = correlation_mc(&map, &fib, &g, &h, p.n_max, p.samples, p.seed)?;
            writeln!(out, "lag,re,im,stderr").unwrap();
            for n in 0..s.lags.len() {
                let c = s.estimates[n];
                writeln!(out, "{},{},{},{}", s.lags[n], c.re, c.im, s.standard_errors[n]).unwrap();
            }
            match fit_rate(&s, p.fit_from, p.n_max) {
                Ok(fit) => {
                    let _ = writeln!(
                        err,
                        "rate fit: theta = {} (slope se {}), window {:?}, residual {}, resamples {}",
                        fit.theta, fit.confidence, fit.window, fit.residual_rms, s.resamples
                    );
                }
                Err(e) => {
                    let _ = writeln!(err, "rate fit unavailable: {e}");
                }
            }
        }
        Command::Recurrence(p) => {
            let params = RecurrenceParams::new(p.epsilon, p.delta, p.lambda)?;
            let (map, _, s) = system_for(0.5, system)?;
            let ns = parse_list(&p.n_values)?;
            let r = recurrence_report(&map, &s, &params, &ns, p.grid, p.cap_factor)?;
            writeln!(out, "N,P,Q").unwrap();
            for ((n, pm), qm) in ns.iter().zip(&r.p_measure).zip(&r.q_measure) {
                writeln!(out, "{n},{pm},{qm}").unwrap();
            }
            let _ = writeln!(err, "quantifier horizon cap = {}", r.cap);
            match recurrence_decay_fit(&ns, &r.p_measure) {
                Ok(fit) => {
                    let _ = writeln!(err, "P decay fit: {}", serde_json::to_string(&fit).expect("json"));
                }
                Err(e) => {
                    let _ = writeln!(err, "P decay fit unavailable: {e}");
                }
            }
        }
    }
    Ok(out)
}

/// The echoed header: `{"command": .., "params": {..}, "system": ..}`.
fn header(cmd: &Command, system: &Option<String>) -> String {
    let mut v = serde_json::to_value(cmd).expect("serialisable command");
    v.as_object_mut()
        .expect("tagged command")
        .insert("system".into(), serde_json::to_value(system).expect("json"));
    v.to_string()
}

fn load_config(path: &PathBuf) -> Result<(Command, Option<String>), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or("");
    let mut v: Value =
        serde_json::from_str(first).map_err(|e| invalid(format!("config header: {e}")))?;
    let system = match v.as_object_mut().and_then(|o| o.remove("system")) {
        Some(Value::String(s)) => Some(s),
        _ => None,
    };
    let cmd: Command =
        serde_json::from_value(v).map_err(|e| invalid(format!("config header: {e}")))?;
    Ok((cmd, system))
}

/// Runs the CLI on `args` (including the program name), writing results to
/// `out` (or the `--output` file) and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let resolved = match (&cli.config, cli.command) {
        (Some(_), Some(_)) => {
            let _ = writeln!(err, "error: --config replays a run; do not also give a subcommand");
            return EXIT_USAGE;
        }
        (None, None) => {
            let _ = writeln!(err, "error: a subcommand is required (see --help)");
            return EXIT_USAGE;
        }
        (Some(path), None) => load_config(path),
        (None, Some(cmd)) => match &cli.system {
            Some(path) => std::fs::read_to_string(path)
                .map(|s| (cmd, Some(s)))
                .map_err(|e| invalid(format!("{}: {e}", path.display()))),
            None => Ok((cmd, None)),
        },
    };
    let (cmd, system) = match resolved {
        Ok(r) => r,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            return f.code;
        }
    };
    let body = match execute(&cmd, &system, err) {
        Ok(b) => b,
        Err(f) => {
            let _ = writeln!(err, "error ({}): {}", cmd.name(), f.message);
            return f.code;
        }
    };
    let text = format!("{}\n{}", header(&cmd, &system), body);
    let written = match &cli.output {
        Some(path) => std::fs::write(path, text.as_bytes()),
        None => out.write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: writing output: {e}");
        return EXIT_INVALID;
    }
    EXIT_OK
}
