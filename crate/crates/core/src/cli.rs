//! Command-line front end. [`run`] returns the process exit code.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
//! 4 a failed check (endpoint-constraint violation or a `--check` threshold).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{CoefficientsDoc, RunConfig};
use crate::dynamics::{ensemble_transfer, DensityState, ModelBundle};
use crate::error::{Error, Result};
use crate::invariant::{
    reverse_pulses, synthesize_samples, AnsatzCoefficients, Table1Case, CONSTRAINT_TOLERANCE,
};
use crate::levels::{DecoherenceSpec, GroundLevel, PEAKS};
use crate::manifest::RunManifest;
use crate::optimizer::{multi_start, optimize, random_start, score_report, OptimizerSettings, ScoreSpec};
use crate::protocol::{
    extract_pair_fidelity, format_protocol_table, overall_fidelities, ExtractionBasis, PopulationPulses,
    SuperpositionPulses, FOUR_PHASES,
};
use crate::pulse_file::{format_pulses, read_pulses, write_pulses};
use crate::spectra::{
    fit_peaks, format_fit_report, format_spectrum, populations_from_areas, read_spectrum, synthesize_traces,
    Spectrum,
};
use crate::tomography::{qst_symmetry_study, PulseKind, ReadoutEffects, StateRegion, SymmetryStudy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "invpulse", version, about = "Invariant-based shortcut pulses for ensemble qubits")]
pub struct Cli {
    /// Worker threads for ensemble fan-out (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fail with exit code 4 when the command's acceptance threshold is missed.
    #[arg(long, global = true)]
    pub check: bool,
    /// Run configuration (TOML); defaults to the built-in Pr:YSO model.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a pulse file from coefficients, or time-reverse one.
    Synth(SynthArgs),
    /// Propagate the ensemble through a pulse file.
    Simulate(SimulateArgs),
    /// Consecutive-transfer experiment with per-transfer fidelity extraction.
    Protocol(ProtocolArgs),
    /// Optimize the free coefficients of a case.
    Optimize(OptimizeArgs),
    /// Readout fidelity of random states and of their quarter-turn copies.
    QstStudy(QstStudyArgs),
    /// Synthesize, fit and convert absorption spectra.
    Spectra(SpectraArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Published case, e.g. `table1-case1`.
    #[arg(long, conflicts_with_all = ["coefficients", "reverse"])]
    pub case: Option<String>,
    /// Coefficient file (TOML).
    #[arg(long, conflicts_with = "reverse")]
    pub coefficients: Option<PathBuf>,
    /// Time-reverse and sign-flip an existing pulse file.
    #[arg(long)]
    pub reverse: Option<PathBuf>,
    /// Constant phase of the p tone, rad.
    #[arg(long, default_value_t = 0.0)]
    pub phi: f64,
    #[arg(long, default_value_t = crate::invariant::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InitialLevel {
    One,
    Zero,
    Aux,
}

impl From<InitialLevel> for GroundLevel {
    fn from(l: InitialLevel) -> Self {
        match l {
            InitialLevel::One => GroundLevel::One,
            InitialLevel::Zero => GroundLevel::Zero,
            InitialLevel::Aux => GroundLevel::Aux,
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub pulses: PathBuf,
    #[arg(long, value_enum, default_value_t = InitialLevel::One)]
    pub initial: InitialLevel,
    /// Optical T2 override, s.
    #[arg(long)]
    pub t2: Option<f64>,
    /// Fidelity needed to pass `--check`.
    #[arg(long, default_value_t = 0.95)]
    pub min_fidelity: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolMode {
    Population,
    Superposition,
}

#[derive(Args, Debug)]
pub struct ProtocolArgs {
    #[arg(long, value_enum)]
    pub mode: ProtocolMode,
    /// Last N of the extraction range; transfers run up to N + 2.
    #[arg(long, default_value_t = 4)]
    pub nmax: usize,
    #[arg(long)]
    pub t2: Option<f64>,
    /// Read superposition runs through the configured tomography instead of exactly.
    #[arg(long)]
    pub qst: bool,
    /// Reuse the forward pulses on the way back (population mode only).
    #[arg(long)]
    pub no_interchange: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StartPoint {
    Table1,
    Random,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Case whose target and, with `--start table1`, coefficients are used.
    #[arg(long, default_value = "table1-case1")]
    pub case: String,
    #[arg(long, value_enum, default_value_t = StartPoint::Table1)]
    pub start: StartPoint,
    #[arg(long, default_value_t = 0.0)]
    pub phi: f64,
    /// Override the annealing length from the config.
    #[arg(long)]
    pub sa_iterations: Option<usize>,
    /// `global` replaces the configured schedule with the long, wide anneal.
    #[arg(long, value_enum, default_value_t = Schedule::Config)]
    pub schedule: Schedule,
    /// Independent random-start chains; the lowest score wins. Only with `--start random`.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Config,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Region {
    Equator,
    NearOne,
}

#[derive(Args, Debug)]
pub struct QstStudyArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Region::Equator)]
    pub region: Region,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SpectraArgs {
    /// Fit these spectrum files instead of synthesizing traces.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// `|0>` population of the synthesized qubit; `|1>` holds the rest.
    #[arg(long, default_value_t = 0.97)]
    pub p0: f64,
    /// Noise standard deviation relative to the tallest peak.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long)]
    pub traces: Option<usize>,
    /// Largest `|P0 - p0|` that passes `--check`.
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Outcome of a command body before exit-code mapping.
enum Failure {
    Error(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Constraint { .. } => EXIT_CHECK,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| dispatch(&cli, command)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_CHECK
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    config: RunConfig,
    manifest: RunManifest,
    started: Instant,
}

impl Context {
    fn new(cli: &Cli, command: Vec<String>, seed: Option<u64>) -> Result<Self> {
        let mut manifest = RunManifest::new(command, seed, cli.threads);
        let config = match &cli.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                manifest.add_config(p)?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        Ok(Context {
            config,
            manifest,
            started: Instant::now(),
        })
    }

    fn model(&self, t2: Option<f64>) -> Result<ModelBundle> {
        let mut m = self.config.model()?;
        if let Some(t2) = t2 {
            m.dec = DecoherenceSpec {
                t2_optical: t2,
                ..m.dec.clone()
            };
            m.dec.validate()?;
        }
        Ok(m)
    }

    fn write(&mut self, path: &Path, text: &str) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text)?;
        self.manifest.add_output(path)
    }

    fn finish(mut self, dir: &Path) -> Result<()> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        std::fs::create_dir_all(dir)?;
        self.manifest.write(&dir.join("manifest.json"))
    }
}

fn dispatch(cli: &Cli, command: Vec<String>) -> CmdResult {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, command, a),
        Command::Simulate(a) => cmd_simulate(cli, command, a),
        Command::Protocol(a) => cmd_protocol(cli, command, a),
        Command::Optimize(a) => cmd_optimize(cli, command, a),
        Command::QstStudy(a) => cmd_qst_study(cli, command, a),
        Command::Spectra(a) => cmd_spectra(cli, command, a),
    }
}

fn parse_case(name: &str) -> Result<Table1Case> {
    Table1Case::from_name(name).ok_or_else(|| {
        Error::Parse(format!(
            "unknown case `{name}`; expected one of table1-case1, table1-case2, table1-case3"
        ))
    })
}

fn cmd_synth(_cli: &Cli, _command: Vec<String>, a: &SynthArgs) -> CmdResult {
    let pulses = if let Some(src) = &a.reverse {
        reverse_pulses(&read_pulses(src)?)
    } else {
        let coeffs = match (&a.case, &a.coefficients) {
            (Some(case), None) => AnsatzCoefficients::table1(parse_case(case)?, a.phi)?,
            (None, Some(path)) => CoefficientsDoc::parse(&std::fs::read_to_string(path)?)?.build()?,
            _ => {
                return Err(Error::Parse("give exactly one of --case, --coefficients or --reverse".into()).into())
            }
        };
        coeffs.check_constraints(CONSTRAINT_TOLERANCE)?;
        synthesize_samples(&coeffs.with_exact_constraints(), a.samples)?
    };
    write_pulses(&a.output, &pulses)?;
    eprintln!("wrote {}", a.output.display());
    Ok(())
}

fn cmd_simulate(cli: &Cli, command: Vec<String>, a: &SimulateArgs) -> CmdResult {
    let mut ctx = Context::new(cli, command, None)?;
    ctx.manifest.add_config(&a.pulses)?;
    let pulses = read_pulses(&a.pulses)?;
    let model = ctx.model(a.t2)?;
    let initial: GroundLevel = a.initial.into();
    let target = match (pulses.meta.theta, initial) {
        (Some(theta), GroundLevel::One) => {
            let c = AnsatzCoefficients {
                a: [0.0; 8],
                t_f: pulses.t_f,
                theta,
                phi: pulses.phi,
            };
            Some(model.embed(&c.target_state()))
        }
        _ => None,
    };
    let rho0 = DensityState::ground(initial);
    let probe = target.unwrap_or_else(|| {
        let mut v = crate::dynamics::CVec6::zeros();
        v[initial.index()] = num_complex::Complex64::new(1.0, 0.0);
        v
    });
    let r = ensemble_transfer(&rho0, &pulses, &model, &probe)?;
    let mut out = String::from("# invpulse-simulate v1\n");
    let _ = writeln!(out, "# initial {:?}", initial);
    let _ = writeln!(out, "# level population");
    for (name, p) in ["aux", "one", "zero", "e1", "e2", "e3"].iter().zip(r.populations) {
        let _ = writeln!(out, "{name} {p:.12e}");
    }
    match target {
        Some(_) => {
            let _ = writeln!(out, "# fidelity {:.12e}", r.fidelity);
        }
        None => {
            let _ = writeln!(out, "# fidelity - (no target recorded; overlap with initial {:.12e})", r.fidelity);
        }
    }
    let _ = writeln!(out, "# spectator_excitation {:.12e}", r.spectator_excitation);
    let path = a.out.join("simulate.txt");
    ctx.write(&path, &out)?;
    print!("{out}");
    ctx.finish(&a.out)?;
    if cli.check && target.is_some() && r.fidelity < a.min_fidelity {
        return Err(Failure::Check(format!(
            "fidelity {:.6} below {}",
            r.fidelity, a.min_fidelity
        )));
    }
    Ok(())
}

fn cmd_protocol(cli: &Cli, command: Vec<String>, a: &ProtocolArgs) -> CmdResult {
    let mut ctx = Context::new(cli, command, None)?;
    let model = ctx.model(a.t2)?;
    if a.nmax == 0 {
        return Err(Error::Parse("--nmax must be at least 1".into()).into());
    }
    let n_run = a.nmax + 2;
    let (table, estimate, band) = match a.mode {
        ProtocolMode::Population => {
            if a.qst {
                return Err(Error::Parse("--qst applies to superposition runs".into()).into());
            }
            let pulses = PopulationPulses::table1()?;
            let recs = pulses.run(n_run, &model, &ctx.config.population_readout, !a.no_interchange)?;
            let est = extract_pair_fidelity(&overall_fidelities(&recs), (1, a.nmax), ExtractionBasis::Population)?;
            (
                format_protocol_table(&recs, "population", Some(&est)),
                est,
                (0.95, 0.99),
            )
        }
        ProtocolMode::Superposition => {
            if a.no_interchange {
                return Err(Error::Parse("--no-interchange applies to population runs".into()).into());
            }
            let sets: Vec<SuperpositionPulses> = FOUR_PHASES
                .iter()
                .map(|&ph| SuperpositionPulses::table1(ph))
                .collect::<Result<_>>()?;
            let effects = if a.qst {
                Some(ReadoutEffects::build(&ctx.config.tomography, &model)?)
            } else {
                None
            };
            let run = crate::protocol::run_superposition_protocol(n_run, &sets, effects.as_ref(), &model)?;
            let est = extract_pair_fidelity(&run.averaged, (1, a.nmax), ExtractionBasis::Superposition)?;
            let mut text = format_protocol_table(&run.records, if a.qst { "qst" } else { "direct" }, Some(&est));
            for (k, f) in run.averaged.iter().enumerate() {
                let _ = writeln!(text, "# phase_average n={} fidelity={:.12e}", k + 1, f);
            }
            (text, est, (0.97, 0.99))
        }
    };
    ctx.write(&a.out.join("protocol.txt"), &table)?;
    println!(
        "per-transfer fidelity {:.6} +- {:.6} (N = {}..={})",
        estimate.per_transfer_fidelity, estimate.uncertainty, estimate.n_range.0, estimate.n_range.1
    );
    ctx.finish(&a.out)?;
    if cli.check && !(band.0..=band.1).contains(&estimate.per_transfer_fidelity) {
        return Err(Failure::Check(format!(
            "extracted fidelity {:.6} outside [{}, {}]",
            estimate.per_transfer_fidelity, band.0, band.1
        )));
    }
    Ok(())
}

fn cmd_optimize(cli: &Cli, command: Vec<String>, a: &OptimizeArgs) -> CmdResult {
    let seed = cli.seed.unwrap_or(1);
    let mut ctx = Context::new(cli, command, Some(seed))?;
    let model = ctx.model(None)?;
    let case = parse_case(&a.case)?;
    let reference = AnsatzCoefficients::table1(case, a.phi)?.with_exact_constraints();
    let mut settings = match a.schedule {
        Schedule::Config => ctx.config.optimizer.clone(),
        Schedule::Global => OptimizerSettings {
            bounds: ctx.config.optimizer.bounds.clone(),
            ..OptimizerSettings::global(seed)
        },
    };
    settings.seed = seed;
    if let Some(n) = a.sa_iterations {
        settings.sa_iterations = n;
    }
    if a.chains > 1 && a.start != StartPoint::Random {
        return Err(Error::invariant("optimize", "--chains needs --start random").into());
    }
    let start = match a.start {
        StartPoint::Table1 => reference,
        StartPoint::Random => {
            let x = random_start(&settings.bounds, seed);
            AnsatzCoefficients::from_free(std::array::from_fn(|i| x[i]), reference.t_f, reference.theta, reference.phi)?
        }
    };
    let mut spec = ScoreSpec::for_coefficients(&reference);
    spec.band_halfwidth_hz = ctx.config.score.band_halfwidth_hz;
    spec.band_samples = ctx.config.score.band_samples;
    spec.spectator_weight = ctx.config.score.spectator_weight;
    let initial = score_report(&start, &spec, &model)?;
    let res = if a.chains > 1 {
        multi_start(&reference, &spec, &settings, a.chains, &model)?
    } else {
        optimize(&start, &spec, &settings, &model)?
    };
    let best = score_report(&res.best, &spec, &model)?;
    ctx.write(
        &a.out.join("optimized.toml"),
        &CoefficientsDoc::from_coefficients(&res.best).to_toml(),
    )?;
    let mut hist = String::from("# invpulse-optimize-history v1\n# evaluation best_score\n");
    for (i, h) in res.history.iter().enumerate() {
        let _ = writeln!(hist, "{} {:.12e}", i + 1, h);
    }
    let _ = writeln!(
        hist,
        "# initial score={:.9e} band_fidelity={:.9} spectator={:.3e}",
        initial.score, initial.band_fidelity, initial.spectator_excitation
    );
    let _ = writeln!(
        hist,
        "# best score={:.9e} band_fidelity={:.9} spectator={:.3e} infeasible={}",
        best.score, best.band_fidelity, best.spectator_excitation, res.infeasible
    );
    if let Some(w) = &res.warning {
        let _ = writeln!(hist, "# warning {w}");
        eprintln!("warning: {w}");
    }
    ctx.write(&a.out.join("history.txt"), &hist)?;
    println!(
        "score {:.6e} -> {:.6e}, band fidelity {:.6} -> {:.6}",
        initial.score, best.score, initial.band_fidelity, best.band_fidelity
    );
    ctx.finish(&a.out)?;
    if cli.check {
        if res.warning.is_some() {
            return Err(Failure::Check("best point found only at the box boundary".into()));
        }
        if best.score > initial.score {
            return Err(Failure::Check("optimization made the score worse".into()));
        }
    }
    Ok(())
}

/// Readout fidelity of the `+X` state and the worst and best states 45 degrees off it.
pub fn axis_profile(effects: &ReadoutEffects) -> Result<(f64, f64, f64)> {
    let on = crate::tomography::equator_fidelity(effects, 0.0)?;
    let diag: Vec<f64> = [0.25, 0.75, 1.25, 1.75]
        .iter()
        .map(|k| crate::tomography::equator_fidelity(effects, k * PI))
        .collect::<Result<_>>()?;
    Ok((
        on,
        diag.iter().copied().fold(f64::INFINITY, f64::min),
        diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}

pub fn format_study(study: &SymmetryStudy, region: StateRegion, seed: u64) -> String {
    let mut out = String::from("# invpulse-qst-study v1\n");
    let _ = writeln!(out, "# region {:?} seed {seed} states {}", region, study.quartets.len());
    out.push_str("# azimuth z f0 f90 f180 f270 averaged\n");
    for q in &study.quartets {
        let _ = write!(out, "{:.12e} {:.12e}", q.azimuth, q.z);
        for f in q.fidelities {
            let _ = write!(out, " {f:.12e}");
        }
        let _ = writeln!(out, " {:.12e}", q.averaged);
    }
    for (name, s) in [("unaveraged", &study.unaveraged), ("averaged", &study.averaged)] {
        let _ = writeln!(
            out,
            "# {name} min={:.9} max={:.9} mean={:.9} spread={:.9}",
            s.min,
            s.max,
            s.mean,
            s.width()
        );
    }
    out
}

fn cmd_qst_study(cli: &Cli, command: Vec<String>, a: &QstStudyArgs) -> CmdResult {
    let seed = cli.seed.unwrap_or(7);
    let mut ctx = Context::new(cli, command, Some(seed))?;
    let model = ctx.model(None)?;
    let region = match a.region {
        Region::Equator => StateRegion::Equator,
        Region::NearOne => StateRegion::NearOne,
    };
    let ideal = matches!(ctx.config.tomography.pulse, PulseKind::Ideal);
    let effects = ReadoutEffects::build(&ctx.config.tomography, &model)?;
    let study = qst_symmetry_study(a.n, seed, region, &effects)?;
    let mut text = format_study(&study, region, seed);
    let (on, diag_lo, diag_hi) = axis_profile(&effects)?;
    let _ = writeln!(
        text,
        "# profile plus_x={on:.9} diagonal_min={diag_lo:.9} diagonal_max={diag_hi:.9}"
    );
    ctx.write(&a.out.join("qst_study.txt"), &text)?;
    println!(
        "unaveraged [{:.4}, {:.4}], four-state averaged [{:.4}, {:.4}] mean {:.4}",
        study.unaveraged.min, study.unaveraged.max, study.averaged.min, study.averaged.max, study.averaged.mean
    );
    ctx.finish(&a.out)?;
    if cli.check {
        let problems = match (ideal, region) {
            (true, _) => {
                if study.unaveraged.width() > 1e-9 || (study.unaveraged.mean - 1.0).abs() > 1e-9 {
                    vec!["ideal tomography should read every state perfectly".to_string()]
                } else {
                    vec![]
                }
            }
            (false, StateRegion::Equator) => qst_band_problems(&study, on, diag_lo),
            (false, StateRegion::NearOne) => vec![],
        };
        if !problems.is_empty() {
            return Err(Failure::Check(problems.join("; ")));
        }
    }
    Ok(())
}

/// Bands for the sech-mode equator study: unaveraged spread of at least 5
/// points, `+X` at 95-96% (0.5 point slack), some 45-degree state at 88-92%,
/// four-state average within 2 points and centred in [0.905, 0.925].
pub fn qst_band_problems(study: &SymmetryStudy, plus_x: f64, diagonal_min: f64) -> Vec<String> {
    let mut p = Vec::new();
    if study.unaveraged.width() < 0.05 {
        p.push(format!("unaveraged spread {:.4} < 0.05", study.unaveraged.width()));
    }
    if !(0.945..=0.965).contains(&plus_x) {
        p.push(format!("+X fidelity {plus_x:.4} outside [0.945, 0.965]"));
    }
    if !(0.88..=0.92).contains(&diagonal_min) {
        p.push(format!("worst 45-degree fidelity {diagonal_min:.4} outside [0.88, 0.92]"));
    }
    if study.averaged.width() > 0.02 {
        p.push(format!("averaged spread {:.4} > 0.02", study.averaged.width()));
    }
    if !(0.905..=0.925).contains(&study.averaged.mean) {
        p.push(format!("averaged mean {:.4} outside [0.905, 0.925]", study.averaged.mean));
    }
    p
}

fn cmd_spectra(cli: &Cli, command: Vec<String>, a: &SpectraArgs) -> CmdResult {
    let seed = cli.seed.unwrap_or(1);
    let mut ctx = Context::new(cli, command, Some(seed))?;
    let sys = ctx.config.level_system()?;
    let fit_opts = ctx.config.spectra.fit.clone();
    let traces: Vec<Spectrum> = if a.input.is_empty() {
        if !(0.0..=1.0).contains(&a.p0) {
            return Err(Error::Parse("--p0 must lie in [0, 1]".into()).into());
        }
        let ground = [0.0, 1.0 - a.p0, a.p0];
        let mut synth = ctx.config.spectra.synth.clone();
        let top = PEAKS
            .iter()
            .map(|&(g, e)| synth.depth * ground[g.index()] * sys.strength(g, e))
            .fold(0.0, f64::max);
        synth.noise = a.noise * top;
        let count = a.traces.unwrap_or(ctx.config.spectra.traces);
        synthesize_traces(ground, &sys, &synth, seed, count)?
    } else {
        for p in &a.input {
            ctx.manifest.add_config(p)?;
        }
        a.input.iter().map(|p| read_spectrum(p)).collect::<Result<_>>()?
    };
    let fits = fit_peaks(&traces, &sys, &fit_opts)?;
    let pops = populations_from_areas(&fits, &sys)?;
    ctx.write(&a.out.join("spectrum_mean.txt"), &format_spectrum(&Spectrum::mean(&traces)?))?;
    ctx.write(&a.out.join("fit.txt"), &format_fit_report(&fits, Some(&pops)))?;
    println!(
        "P0 = {:.4} +- {:.4}, P1 = {:.4} +- {:.4}",
        pops.p0, pops.p0_uncertainty, pops.p1, pops.p1_uncertainty
    );
    ctx.finish(&a.out)?;
    if cli.check && a.input.is_empty() && (pops.p0 - a.p0).abs() > a.tolerance {
        return Err(Failure::Check(format!(
            "recovered P0 {:.4} differs from {} by more than {}",
            pops.p0, a.p0, a.tolerance
        )));
    }
    Ok(())
}

/// Text of a pulse file for `case`, as `synth --case` writes it.
pub fn synth_text(case: Table1Case, phi: f64, samples: usize) -> Result<String> {
    let c = AnsatzCoefficients::table1(case, phi)?;
    c.check_constraints(CONSTRAINT_TOLERANCE)?;
    Ok(format_pulses(&synthesize_samples(&c.with_exact_constraints(), samples)?))
}
