//! Command-line front end. `main.rs` only forwards to [`run`].

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Tolerances, Verdict, SCHEMA_VERSION};
use crate::certify::{certify_hankel, certify_relaxation, mode_hankel, QuadratureSpec};
use crate::diffusion_ref::{figure2_datasets, gaussian_solution, write_samples_csv, DiffusionParams, FigureSpec};
use crate::error::{Error, Result};
use crate::grid::{make_frequency_grid, FrequencyGrid};
use crate::hankel::{write_hankel_csv, HankelDiscretization};
use crate::linalg::C64;
use crate::passivity::{identity_certificate, verify_and_record, PassivityCertificate};
use crate::spectral_sim::{
    simulate, storage_identity_check, InitialState, PastInput, QuadratureAssignment, SimulationConfig,
    SpatioTemporalField, StorageReport,
};
use crate::symbol::{validate_family, FamilyKind, SymbolFamily};

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 64;
pub const THREADS_ENV: &str = "LTSI_RELAX_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Certify,
    Hankel,
    Passivity,
    Simulate,
    StorageCheck,
    Figures,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "ltsi-relax", version, about = "Relaxation and passivity certification for LTSI systems")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Family JSON, or a run configuration with a `family` field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Frequency grid `omega_max,count`.
    #[arg(long)]
    pub grid: Option<GridSpec>,
    /// Time quadrature `scheme,N` (trapezoid or laguerre).
    #[arg(long)]
    pub quad: Option<QuadratureSpec>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the full Hankel matrix of the reported mode here.
    #[arg(long)]
    pub dump_hankel: Option<PathBuf>,
    /// Passivity certificate to verify.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub omega_max: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { omega_max: 10.0, count: 201 }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("grid spec '{s}' is not 'omega_max,count'"));
        let (w, n) = s.split_once(',').ok_or_else(bad)?;
        Ok(Self {
            omega_max: w.trim().parse().map_err(|_| bad())?,
            count: n.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Initial condition for `simulate`, placed on state channel 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    #[default]
    Zero,
    /// Unit-mass Gaussian of standard deviation `sigma` centred at `center`.
    Gaussian {
        sigma: f64,
        #[serde(default)]
        center: f64,
    },
}

/// Input field for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSpec {
    #[default]
    Zero,
    /// Independent samples uniform in `[-amplitude, amplitude]`, drawn from
    /// the run seed.
    Random { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub family: Option<SymbolFamily>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub initial_state: Option<InitialCondition>,
    #[serde(default)]
    pub input: Option<InputSpec>,
    #[serde(default)]
    pub past_input: Option<PastInput>,
    #[serde(default)]
    pub figures: Option<FigureSpec>,
    /// Frequency whose Hankel spectrum is reported.
    #[serde(default)]
    pub hankel_mode: Option<Vec<f64>>,
}

impl RunConfig {
    fn empty() -> Self {
        Self {
            family: None,
            grid: None,
            quadrature: None,
            tolerances: None,
            simulation: None,
            initial_state: None,
            input: None,
            past_input: None,
            figures: None,
            hankel_mode: None,
        }
    }

    /// Accepts either a bare family object or a full run configuration.
    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        if value.get("kind").is_some() {
            let mut cfg = Self::empty();
            cfg.family = Some(serde_json::from_value(value)?);
            Ok(cfg)
        } else {
            Ok(serde_json::from_value(value)?)
        }
    }
}

/// Everything a run depends on, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub command: Command,
    pub config_path: Option<String>,
    pub grid: GridSpec,
    pub quadrature: QuadratureSpec,
    pub tolerance_overrides: Vec<String>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub exit_code: i32,
    pub artifacts: Vec<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Hypothesis(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Hypothesis(_) => Verdict::Inconclusive.exit_code(),
            Failure::Other(_) => EXIT_ERROR,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Hypothesis(m) | Failure::Other(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn analysis(e: Error) -> Failure {
    match e {
        Error::InternalForm { .. } | Error::NotStable { .. } | Error::NonSquare { .. } => {
            Failure::Hypothesis(e.to_string())
        }
        other => Failure::Other(other.to_string()),
    }
}

struct Run {
    cli: Cli,
    config: RunConfig,
    grid_spec: GridSpec,
    quad: QuadratureSpec,
    tolerances: Tolerances,
    artifacts: Vec<String>,
}

impl Run {
    fn new(cli: Cli) -> std::result::Result<Self, Failure> {
        let config = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
                RunConfig::from_json(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
            }
            None if cli.command == Command::Figures => RunConfig::empty(),
            None => return Err(usage("--config is required for this command")),
        };
        if let Some(f) = &config.family {
            let findings = validate_family(f);
            if !findings.is_empty() {
                let msgs: Vec<String> = findings.iter().map(|f| format!("{}: {}", f.location, f.message)).collect();
                return Err(usage(format!("invalid family: {}", msgs.join("; "))));
            }
        }
        let mut tolerances = config.tolerances.clone().unwrap_or_default();
        for t in &cli.tol {
            let (name, value) = t
                .split_once('=')
                .ok_or_else(|| usage(format!("--tol '{t}' is not name=value")))?;
            tolerances.set(name.trim(), value.trim()).map_err(usage)?;
        }
        let grid_spec = cli.grid.or(config.grid).unwrap_or_default();
        let quad = cli.quad.or(config.quadrature).unwrap_or_default();
        fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
        Ok(Self {
            cli,
            config,
            grid_spec,
            quad,
            tolerances,
            artifacts: Vec::new(),
        })
    }

    fn family(&self) -> std::result::Result<&SymbolFamily, Failure> {
        self.config
            .family
            .as_ref()
            .ok_or_else(|| usage("the configuration has no family"))
    }

    fn grid(&self) -> std::result::Result<FrequencyGrid, Failure> {
        let s = self.family()?.dims.s;
        make_frequency_grid(self.grid_spec.omega_max, self.grid_spec.count, s).map_err(usage)
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> std::result::Result<(), Failure> {
        let path = self.cli.out.join(name);
        write_file(&path, f)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::result::Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.to_string()))?;
        self.write(name, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    fn write_certificate(&mut self, name: &str, mut cert: Certificate) -> std::result::Result<(), Failure> {
        cert.notes.push(format!("seed = {}", self.cli.seed));
        self.write_json(name, &cert)
    }

    fn dump_hankel(&self, disc: &HankelDiscretization) -> std::result::Result<(), Failure> {
        if let Some(p) = &self.cli.dump_hankel {
            write_file(p, |w| write_hankel_csv(disc, w))?;
        }
        Ok(())
    }

    fn spectrum(&mut self, omega: &[f64], disc: &HankelDiscretization) -> std::result::Result<(), Failure> {
        let label = omega.iter().map(|w| format!("{w:e}")).collect::<Vec<_>>().join(" ");
        let eig = disc.eigenvalues.clone();
        self.write("hankel_spectrum.csv", |w| {
            writeln!(w, "omega,index,eigenvalue")?;
            for (i, l) in eig.iter().enumerate() {
                writeln!(w, "{label},{i},{l:e}")?;
            }
            Ok(())
        })?;
        self.dump_hankel(disc)
    }

    fn manifest(&mut self, exit_code: i32) -> std::result::Result<(), Failure> {
        let mut artifacts = self.artifacts.clone();
        artifacts.push("manifest.json".into());
        let m = RunManifest {
            schema: SCHEMA_VERSION,
            command: self.cli.command,
            config_path: self.cli.config.as_ref().map(|p| p.display().to_string()),
            grid: self.grid_spec,
            quadrature: self.quad,
            tolerance_overrides: self.cli.tol.clone(),
            tolerances: self.tolerances.clone(),
            seed: self.cli.seed,
            exit_code,
            artifacts,
        };
        self.write_json("manifest.json", &m)
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> std::result::Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| Failure::Other(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Failure::Other(format!("cannot write {}: {e}", path.display())))?;
    w.flush().map_err(|e| Failure::Other(e.to_string()))
}

fn cmd_certify(run: &mut Run) -> std::result::Result<i32, Failure> {
    let family = run.family()?.clone();
    let grid = run.grid()?;
    let a = certify_relaxation(&family, &grid, run.quad, &run.tolerances).map_err(analysis)?;
    let code = a.relaxation.verdict.exit_code();
    run.write_certificate("certificate.json", a.relaxation.clone())?;
    #[derive(Serialize)]
    struct Supplement<'a> {
        seed: u64,
        internal_relaxation: &'a Certificate,
        stability: &'a Certificate,
        modes: &'a [crate::certify::ModeReport],
    }
    let seed = run.cli.seed;
    run.write_json(
        "analysis.json",
        &Supplement {
            seed,
            internal_relaxation: &a.internal_relaxation,
            stability: &a.stability,
            modes: &a.modes,
        },
    )?;
    if run.cli.dump_hankel.is_some() {
        let omega = match (&run.config.hankel_mode, a.worst_hankel_mode()) {
            (Some(w), _) => w.clone(),
            (None, Some(i)) => a.modes[i].verdict.omega.clone(),
            (None, None) => return Ok(code),
        };
        let disc = mode_hankel(&family, &omega, run.quad, &run.tolerances).map_err(analysis)?;
        run.dump_hankel(&disc)?;
    }
    Ok(code)
}

fn cmd_hankel(run: &mut Run) -> std::result::Result<i32, Failure> {
    let family = run.family()?.clone();
    let grid = run.grid()?;
    let a = certify_hankel(&family, &grid, run.quad, &run.tolerances).map_err(analysis)?;
    let code = a.relaxation.verdict.exit_code();
    run.write_certificate("certificate.json", a.relaxation.clone())?;
    let omega = match (&run.config.hankel_mode, a.worst_hankel_mode()) {
        (Some(w), _) => Some(w.clone()),
        (None, Some(i)) => Some(a.modes[i].verdict.omega.clone()),
        (None, None) => None,
    };
    if let Some(omega) = omega {
        let disc = mode_hankel(&family, &omega, run.quad, &run.tolerances).map_err(analysis)?;
        run.spectrum(&omega, &disc)?;
    }
    Ok(code)
}

fn cmd_passivity(run: &mut Run) -> std::result::Result<i32, Failure> {
    let family = run.family()?.clone();
    let grid = run.grid()?;
    let mut cert = match &run.cli.certificate {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            PassivityCertificate::from_json(&text).map_err(|e| usage(format!("invalid certificate: {e}")))?
        }
        None => identity_certificate(&family, &grid, run.tolerances.structure).map_err(analysis)?,
    };
    let verdict = verify_and_record(&family, &grid, &mut cert, &run.tolerances).map_err(|e| match e {
        Error::MissingMode(_) => usage(e),
        other => analysis(other),
    })?;
    let code = verdict.verdict.exit_code();
    run.write_certificate("certificate.json", verdict)?;
    let text = cert.to_json().map_err(|e| Failure::Other(e.to_string()))?;
    run.write("passivity_certificate.json", |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(code)
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    seed: u64,
    config: SimulationConfig,
    initial_state: InitialCondition,
    input: InputSpec,
    state_energy: Vec<f64>,
    /// `max|y - y_ref| / max|y_ref|` at the final time, when an analytic
    /// reference exists.
    reference_error: Option<f64>,
    warnings: Vec<String>,
}

fn cmd_simulate(run: &mut Run) -> std::result::Result<i32, Failure> {
    let family = run.family()?.clone();
    let cfg = run
        .config
        .simulation
        .clone()
        .ok_or_else(|| usage("simulate needs a 'simulation' section"))?;
    cfg.validate().map_err(usage)?;
    let times = cfg.times().map_err(usage)?;
    let x = cfg.x_grid();
    let dims = family.dims;
    let ic = run.config.initial_state.unwrap_or_default();
    let input_spec = run.config.input.unwrap_or_default();

    let init = match ic {
        InitialCondition::Zero => InitialState::Zero,
        InitialCondition::Gaussian { sigma, center } => {
            let unit = DiffusionParams::new(1.0).map_err(usage)?;
            InitialState::Physical(SpatioTemporalField::from_fn(vec![times[0]], x.clone(), dims.n, |_, xi, ch| {
                if ch == 0 {
                    C64::new(gaussian_solution(&unit, sigma, 0.0, xi - center), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }))
        }
    };
    let input = match input_spec {
        InputSpec::Zero => None,
        InputSpec::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(run.cli.seed);
            let len = times.len() * x.len() * dims.m;
            let data = (0..len).map(|_| C64::new(rng.gen_range(-amplitude..=amplitude), 0.0)).collect();
            Some(SpatioTemporalField::from_data(times.clone(), x.clone(), dims.m, data).map_err(usage)?)
        }
    };
    let result = simulate(&family, &cfg, input.as_ref(), &init).map_err(analysis)?;

    let reference_error = match (&family.kind, ic, input_spec) {
        (FamilyKind::Diffusion { alpha }, InitialCondition::Gaussian { sigma, center }, InputSpec::Zero) => {
            let p = DiffusionParams::new(*alpha).map_err(usage)?;
            let it = times.len() - 1;
            let t = times[it] - times[0];
            let (mut err, mut peak) = (0.0f64, 0.0f64);
            for (ix, xi) in x.iter().enumerate() {
                let r = gaussian_solution(&p, sigma, t, xi - center);
                err = err.max((result.output.get(it, ix, 0) - r).norm());
                peak = peak.max(r.abs());
            }
            Some(err / peak)
        }
        _ => None,
    };
    run.write("field.csv", |w| result.output.write_csv(w))?;
    let summary = SimulationSummary {
        seed: run.cli.seed,
        config: cfg,
        initial_state: ic,
        input: input_spec,
        state_energy: result.state_energy,
        reference_error,
        warnings: result.warnings,
    };
    run.write_json("simulation.json", &summary)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct StorageOutput<'a> {
    seed: u64,
    past_input: PastInput,
    quadrature: QuadratureSpec,
    #[serde(flatten)]
    report: &'a StorageReport,
}

/// Past input used by `storage-check` when the configuration gives none.
pub fn default_past_input() -> PastInput {
    PastInput::gaussian(1.0, 0.4)
}

fn cmd_storage_check(run: &mut Run) -> std::result::Result<i32, Failure> {
    let family = run.family()?.clone();
    let grid = run.grid()?;
    let past = run.config.past_input.unwrap_or_else(default_past_input);
    let quads = QuadratureAssignment::PerMode {
        scheme: run.quad.scheme,
        nodes: run.quad.nodes,
    };
    let report = storage_identity_check(&family, &grid, &quads, &past, &run.tolerances).map_err(analysis)?;
    let verdict = if !report.passed {
        Verdict::Fail
    } else if report.inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    let out = StorageOutput {
        seed: run.cli.seed,
        past_input: past,
        quadrature: run.quad,
        report: &report,
    };
    run.write_json("storage_report.json", &out)?;
    Ok(verdict.exit_code())
}

fn cmd_figures(run: &mut Run) -> std::result::Result<i32, Failure> {
    let spec = run.config.figures.clone().unwrap_or_default();
    let data = figure2_datasets(&spec).map_err(usage)?;
    run.write("fig2a.csv", |w| write_samples_csv(&data.profiles, w))?;
    run.write("fig2b.csv", |w| write_samples_csv(&data.curves, w))?;
    let family = run
        .config
        .family
        .clone()
        .unwrap_or_else(|| SymbolFamily::diffusion(spec.alpha));
    let omega = run
        .config
        .hankel_mode
        .clone()
        .unwrap_or_else(|| vec![1.0; family.dims.s]);
    let disc = mode_hankel(&family, &omega, run.quad, &run.tolerances).map_err(analysis)?;
    run.spectrum(&omega, &disc)?;
    Ok(0)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if the pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn execute(cli: Cli) -> std::result::Result<i32, Failure> {
    let mut run = Run::new(cli)?;
    let code = match run.cli.command {
        Command::Certify => cmd_certify(&mut run),
        Command::Hankel => cmd_hankel(&mut run),
        Command::Passivity => cmd_passivity(&mut run),
        Command::Simulate => cmd_simulate(&mut run),
        Command::StorageCheck => cmd_storage_check(&mut run),
        Command::Figures => cmd_figures(&mut run),
    }?;
    run.manifest(code)?;
    Ok(code)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("ltsi-relax: {}", f.message());
            f.code()
        }
    }
}
