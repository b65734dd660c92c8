//! `spin7`: batch front end for the Spin(7) phase flow.
//!
//! Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 property failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spin7_core::critical::all_critical_points;
use spin7_core::integrator::{monotone_check, parse_csv, to_csv, IntegratorSettings, Projection, Trajectory};
use spin7_core::metric::{asymptotics_report, classify_asymptotics, profile_to_csv, reconstruct};
use spin7_core::shooting::{bisect_theta, classify, sweep, theta_grid, Fate, ShootConfig, ShootResult};
use spin7_core::verify::{run_suite, Suite, VerifyConfig};
use spin7_core::{validate_pair, CoprimePair, Error, Orbit};

macro_rules! out {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! outln {
    ($($t:tt)*) => { emit(format_args!("{}\n", format_args!($($t)*))) };
}

/// Writes to stdout, exiting quietly when the reader has gone away.
fn emit(args: std::fmt::Arguments) {
    use std::io::Write as _;
    if let Err(e) = std::io::stdout().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(3);
    }
}

const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Residual and field norm a tabulated critical point must meet.
const POINT_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "spin7", version, about = "Cohomogeneity-one Spin(7) phase flow", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List every critical point with its residual and field norm.
    CriticalPoints(PairArgs),
    /// Shoot one curve from a singular orbit and classify its fate.
    Shoot(ShootArgs),
    /// Classify a uniform grid of shooting angles.
    Sweep(SweepArgs),
    /// Bisect for the transition angle between the two fates.
    Bisect(BisectArgs),
    /// Rebuild the metric profile from a trajectory CSV.
    Reconstruct(ReconstructArgs),
    /// Run the sampling property suites.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct PairArgs {
    #[arg(long, allow_hyphen_values = true)]
    k: i64,
    #[arg(long, allow_hyphen_values = true)]
    l: i64,
}

#[derive(Args, Clone)]
struct IntegratorArgs {
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    /// Length of the integration window in eta.
    #[arg(long, default_value_t = 300.0)]
    eta_span: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: usize,
    /// off, trace_only or full.
    #[arg(long, default_value = "trace_only")]
    projection: String,
    /// Sampling interval in eta.
    #[arg(long, default_value_t = 0.05)]
    stride: f64,
    /// Offset from the singular orbit.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

#[derive(Args)]
struct ShootArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// kplusl, l or k.
    #[arg(long)]
    orbit: String,
    #[arg(long)]
    theta: f64,
    #[command(flatten)]
    integ: IntegratorArgs,
    /// Output directory for trajectory.csv and manifest.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail with exit 4 unless the fate matches (ALC, AC(plus), AC(minus), FiberBlowup).
    #[arg(long)]
    expect: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    orbit: String,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[command(flatten)]
    integ: IntegratorArgs,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for sweep.csv and manifest.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BisectArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    orbit: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    integ: IntegratorArgs,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for boundary.csv and manifest.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Trajectory CSV written by `shoot` or `bisect`.
    #[arg(long)]
    input: PathBuf,
    /// tr L at the first sample.
    #[arg(long, default_value_t = 1.0)]
    gauge: f64,
    /// Output directory for profile.csv and asymptotics.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// polynomials, fields, flow, invariance or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Restrict pair-dependent suites to one pair (requires --l).
    #[arg(long, requires = "l", allow_hyphen_values = true)]
    k: Option<i64>,
    #[arg(long, requires = "k", allow_hyphen_values = true)]
    l: Option<i64>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 10_000)]
    surface_samples: usize,
    #[arg(long, default_value_t = 1_000)]
    boundary_samples: usize,
    #[arg(long, default_value_t = 1_000)]
    starts: usize,
    #[arg(long, default_value_t = 30.0)]
    span: f64,
    #[arg(long, default_value_t = VerifyConfig::default().seed)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn property(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NegativePair { .. }
            | Error::NotCoprime { .. }
            | Error::Exceptional { .. }
            | Error::DomainError { .. }
            | Error::InvalidSettings(_)
            | Error::OffSurface { .. }
            | Error::NonPositiveGauge(_)
            | Error::EmptyTrajectory
            | Error::Parse { .. } => 2,
            Error::NoSeparatrix { .. } => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::input(format!("{e:#}"))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let args = match expand_manifests(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::CriticalPoints(a) => cmd_critical_points(&a),
        Command::Shoot(a) => cmd_shoot(&a, &args),
        Command::Sweep(a) => cmd_sweep(&a, &args),
        Command::Bisect(a) => cmd_bisect(&a, &args),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Verify(a) => cmd_verify(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Replaces every `--manifest FILE` with the flags stored in FILE, in place, so
/// later flags override manifest entries.
fn expand_manifests(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let path = if a == "--manifest" {
            Some(it.next().context("--manifest needs a file")?)
        } else {
            a.strip_prefix("--manifest=").map(str::to_string)
        };
        match path {
            Some(p) => out.extend(read_manifest(Path::new(&p))?),
            None => out.push(a),
        }
    }
    Ok(out)
}

fn read_manifest(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .with_context(|| format!("{}:{}: expected `key value`", path.display(), i + 1))?;
        flags.push(format!("--{key}"));
        flags.push(value.trim().to_string());
    }
    Ok(flags)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    argv: &[String],
    entries: &[(&str, String)],
    outputs: &[&str],
    started: Instant,
) -> anyhow::Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# spin7 {command} run manifest; replay with `spin7 {command} --manifest <this file>`");
    let _ = writeln!(s, "# version {VERSION}");
    let _ = writeln!(s, "# command_line {}", argv.join(" "));
    let _ = writeln!(s, "# outputs {}", outputs.join(" "));
    let _ = writeln!(s, "# wall_time_s {:.3}", started.elapsed().as_secs_f64());
    for (k, v) in entries {
        let _ = writeln!(s, "{k} {v}");
    }
    write_file(&dir.join("manifest.txt"), &s)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pair_of(a: &PairArgs) -> Result<CoprimePair, Failure> {
    Ok(validate_pair(a.k, a.l)?)
}

fn orbit_of(s: &str) -> Result<Orbit, Failure> {
    Orbit::parse(s).ok_or_else(|| Failure::input(format!("unknown orbit `{s}` (expected kplusl, l or k)")))
}

fn shoot_config(a: &IntegratorArgs) -> Result<ShootConfig, Failure> {
    let projection = Projection::parse(&a.projection)
        .ok_or_else(|| Failure::input(format!("unknown projection `{}`", a.projection)))?;
    let base = ShootConfig::default();
    Ok(ShootConfig {
        epsilon: a.epsilon,
        integrator: IntegratorSettings {
            rtol: a.rtol,
            atol: a.atol,
            eta_max_span: a.eta_span,
            max_steps: a.max_steps,
            projection,
            sample_stride: a.stride,
            ..base.integrator
        },
        ..base
    })
}

fn integrator_entries(a: &IntegratorArgs) -> Vec<(&'static str, String)> {
    vec![
        ("epsilon", format!("{:?}", a.epsilon)),
        ("rtol", format!("{:?}", a.rtol)),
        ("atol", format!("{:?}", a.atol)),
        ("eta-span", format!("{:?}", a.eta_span)),
        ("max-steps", a.max_steps.to_string()),
        ("projection", a.projection.clone()),
        ("stride", format!("{:?}", a.stride)),
    ]
}

fn set_jobs(jobs: Option<usize>) -> CmdResult {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::input("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(())
}

fn fmt_point(p: &[f64; 8]) -> String {
    p.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(" ")
}

fn cmd_critical_points(a: &PairArgs) -> CmdResult {
    let pair = pair_of(a)?;
    let points = all_critical_points(&pair)?;
    outln!("pair {pair}");
    outln!("name,kind,branch,X1,X2,X3,X4,Z1,Z2,Z3,Z4,field_norm,residual");
    let mut failed = Vec::new();
    for c in &points {
        let field = c.field_norm(&pair);
        let res = c.residual_norm(&pair);
        let coords: Vec<String> = c.point.to_array().iter().map(|v| format!("{v:.16e}")).collect();
        outln!(
            "{},{:?},{},{},{field:.3e},{res:.3e}",
            c.name(),
            c.kind,
            c.branch.branches().iter().map(|b| b.name()).collect::<Vec<_>>().join("|"),
            coords.join(",")
        );
        if !(field < POINT_TOL && res < POINT_TOL) {
            failed.push(c.name());
        }
    }
    outln!("count {}", points.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::property(format!("residual check failed for {}", failed.join(", "))))
    }
}

fn print_shot(r: &ShootResult) {
    let t = &r.trajectory;
    outln!("fate {}", r.fate.name());
    outln!("entered {}", r.entered.map(|s| s.name()).unwrap_or_else(|| "none".into()));
    outln!("terminal {}", t.terminal);
    if let Some(s) = t.last() {
        outln!("eta_end {:.6}", s.eta);
        outln!("final_point {}", fmt_point(&s.point.to_array()));
    }
    outln!("max_relative_residual {:.3e}", t.max_relative_residual());
    for e in &t.events {
        outln!("event {} {:.9}", e.kind, e.eta);
    }
}

fn cmd_shoot(a: &ShootArgs, argv: &[String]) -> CmdResult {
    let started = Instant::now();
    let pair = pair_of(&a.pair)?;
    let orbit = orbit_of(&a.orbit)?;
    let cfg = shoot_config(&a.integ)?.with_theta(a.theta);
    let r = classify(&pair, orbit, &cfg)?;
    print_shot(&r);
    if let Some(dir) = &a.out {
        write_file(&dir.join("trajectory.csv"), &to_csv(&r.trajectory))?;
        let mut entries = vec![
            ("k", a.pair.k.to_string()),
            ("l", a.pair.l.to_string()),
            ("orbit", orbit.name().to_string()),
            ("theta", format!("{:?}", a.theta)),
        ];
        entries.extend(integrator_entries(&a.integ));
        entries.push(("out", dir.display().to_string()));
        let outs = ["trajectory.csv"];
        write_manifest(dir, "shoot", argv, &entries, &outs, started)?;
    }
    match &a.expect {
        Some(e) if !e.eq_ignore_ascii_case(r.fate.name()) => {
            Err(Failure::property(format!("fate {} differs from expected {e}", r.fate.name())))
        }
        None if r.fate == Fate::Undetermined => Err(Failure::property(format!("fate undetermined ({})", r.trajectory.terminal))),
        _ => Ok(()),
    }
}

fn cmd_sweep(a: &SweepArgs, argv: &[String]) -> CmdResult {
    let started = Instant::now();
    set_jobs(a.jobs)?;
    let pair = pair_of(&a.pair)?;
    let orbit = orbit_of(&a.orbit)?;
    let cfg = shoot_config(&a.integ)?;
    let thetas = theta_grid(a.points);
    let results = sweep(&pair, orbit, &thetas, &cfg);
    let mut csv = String::from("theta,fate,entered,terminal,eta_end,max_monotone_increase\n");
    let mut fates = Vec::new();
    for (theta, r) in thetas.iter().zip(results) {
        let r = r?;
        let eta_end = r.trajectory.last().map_or(0.0, |s| s.eta);
        let mono = monotone_check(&r.trajectory).map_or(f64::NAN, |m| m.max_relative_increase);
        let _ = writeln!(
            csv,
            "{theta:.16e},{},{},{},{eta_end:.16e},{mono:.3e}",
            r.fate.name(),
            r.entered.map(|s| s.name()).unwrap_or_else(|| "none".into()),
            r.trajectory.terminal
        );
        fates.push(r.fate);
    }
    out!("{csv}");
    if let Some(dir) = &a.out {
        write_file(&dir.join("sweep.csv"), &csv)?;
        let mut entries = vec![
            ("k", a.pair.k.to_string()),
            ("l", a.pair.l.to_string()),
            ("orbit", orbit.name().to_string()),
            ("points", a.points.to_string()),
        ];
        entries.extend(integrator_entries(&a.integ));
        entries.push(("out", dir.display().to_string()));
        write_manifest(dir, "sweep", argv, &entries, &["sweep.csv"], started)?;
    }
    let switches = fates.windows(2).filter(|w| w[0] != w[1]).count();
    let single = switches == 1 && fates.first() == Some(&Fate::Alc) && fates.last() == Some(&Fate::FiberBlowup);
    outln!("fate_switches {switches}");
    if single {
        Ok(())
    } else {
        Err(Failure::property(format!(
            "fate structure: expected one switch from ALC to FiberBlowup, found {switches}"
        )))
    }
}

fn cmd_bisect(a: &BisectArgs, argv: &[String]) -> CmdResult {
    let started = Instant::now();
    set_jobs(a.jobs)?;
    let pair = pair_of(&a.pair)?;
    let orbit = orbit_of(&a.orbit)?;
    let cfg = shoot_config(&a.integ)?;
    let r = bisect_theta(&pair, orbit, a.tol, &cfg)?;
    outln!("theta {:.16e}", r.theta);
    outln!("lower {:.16e}", r.lower);
    outln!("upper {:.16e}", r.upper);
    outln!("width {:.3e}", r.width());
    outln!("probes {}", r.probes);
    outln!("target {}", r.target.name());
    outln!("target_point {}", fmt_point(&r.target.point.to_array()));
    outln!("min_distance {:.6e}", r.min_distance);
    print_shot(&r.boundary);
    if let Some(dir) = &a.out {
        write_file(&dir.join("boundary.csv"), &to_csv(&r.boundary.trajectory))?;
        let mut entries = vec![
            ("k", a.pair.k.to_string()),
            ("l", a.pair.l.to_string()),
            ("orbit", orbit.name().to_string()),
            ("tol", format!("{:?}", a.tol)),
        ];
        entries.extend(integrator_entries(&a.integ));
        entries.push(("out", dir.display().to_string()));
        write_manifest(dir, "bisect", argv, &entries, &["boundary.csv"], started)?;
    }
    if r.min_distance < 1e-3 {
        Ok(())
    } else {
        Err(Failure::property(format!(
            "boundary run closest approach to {} is {:.3e}, not below 1e-3",
            r.target.name(),
            r.min_distance
        )))
    }
}

fn cmd_reconstruct(a: &ReconstructArgs) -> CmdResult {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows = parse_csv(&text)?;
    let traj = Trajectory::from_rows(&rows);
    let profile = reconstruct(&traj, a.gauge)?;
    let report = match classify_asymptotics(&profile) {
        Ok(x) => asymptotics_report(&x),
        Err(e @ Error::WindowTooShort { .. }) => format!("kind: Inconclusive\nreason: {e}\n"),
        Err(e) => return Err(e.into()),
    };
    outln!("t_ref: {:.16e}", profile.gauge.t_ref);
    outln!("eta_ref: {:.16e}", profile.gauge.eta_ref);
    outln!("trL_ref: {:.16e}", profile.gauge.trl_ref);
    out!("{report}");
    if let Some(dir) = &a.out {
        write_file(&dir.join("profile.csv"), &profile_to_csv(&profile))?;
        write_file(&dir.join("asymptotics.txt"), &report)?;
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    set_jobs(a.jobs)?;
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&a.suite).ok_or_else(|| Failure::input(format!("unknown suite `{}`", a.suite)))?]
    };
    let pairs = match (a.k, a.l) {
        (Some(k), Some(l)) => vec![validate_pair(k, l)?],
        _ => vec![validate_pair(2, 1)?, validate_pair(3, 1)?, validate_pair(3, 2)?],
    };
    let cfg = VerifyConfig {
        polynomial_samples: a.samples,
        surface_samples: a.surface_samples,
        boundary_samples: a.boundary_samples,
        invariance_starts: a.starts,
        invariance_span: a.span,
        seed: a.seed,
        ..VerifyConfig::default()
    };
    let mut failed = Vec::new();
    for s in suites {
        outln!("suite {}", s.name());
        for r in run_suite(s, &pairs, &cfg) {
            outln!("{r}");
            if !r.passed() {
                eprintln!("property failed: {}", r.name);
                failed.push(r.name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::property(format!("{} properties failed: {}", failed.len(), failed.join("; "))))
    }
}
