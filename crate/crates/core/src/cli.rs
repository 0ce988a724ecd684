//! Command-line front end. Exit codes: 0 success, 1 invalid input,
//! 2 runtime failure.

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classifier::classify;
use crate::config::{self, default_c_s, parent_is_dir, Command, RenderKind, RunConfig, SurveyMode};
use crate::error::Error;
use crate::kamcheck::{check_inequalities, check_jacobian_bounds, search_constants, JacobianReport, LedgerReport};
use crate::map_engine::{iterate, Orbit, PhaseState};
use crate::output::{orbit_csv, survey_csv, to_json, write_atomic};
use crate::pendulum::{frequency_and_twist, project_reduced, reduce};
use crate::resonance::SingleResonanceGeometry;
use crate::survey::{conditional_from_survey, double_from_survey, run_survey_with};
use crate::svg::{render_action_projection, render_phase_portrait};

#[derive(Parser, Debug)]
#[command(name = "kamtori", version, about = "Near-integrable twist maps: orbits, pendulum reduction, surveys and KAM ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the file.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Map iterations per orbit.
    #[arg(long, value_name = "N")]
    steps: Option<u64>,
    /// Record every N-th state.
    #[arg(long, value_name = "N")]
    stride: Option<u64>,
    /// Perturbation size; surveys accept a comma-separated list.
    #[arg(long, value_name = "F", allow_hyphen_values = true)]
    eps: Option<String>,
    /// Survey journal to resume from (created when missing).
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
    /// Survey worker threads; results do not depend on it.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct KamArgs {
    #[command(flatten)]
    common: Common,
    /// Number of slow actions.
    #[arg(long)]
    n: Option<usize>,
    /// Search for admissible (c_s, c_N, c_λ) instead of checking given ones.
    #[arg(long)]
    search: bool,
    /// Last KAM stage checked.
    #[arg(long)]
    m: Option<usize>,
    /// Random block matrices for the determinant bound check.
    #[arg(long, value_name = "N")]
    jacobian_samples: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Iterate one orbit and write its states as CSV.
    Simulate(Common),
    /// Iterate one orbit and classify it.
    Classify(Common),
    /// Reduce to the resonant pendulum and tabulate its action-angle data.
    Pendulum(Common),
    /// Monte Carlo census of orbit classes.
    Survey(Common),
    /// Evaluate the KAM constant inequalities.
    Kamcheck(KamArgs),
    /// Draw an action projection or a reduced phase portrait as SVG.
    Render(Common),
}

impl Sub {
    fn name(&self) -> &'static str {
        match self {
            Sub::Simulate(_) => "simulate",
            Sub::Classify(_) => "classify",
            Sub::Pendulum(_) => "pendulum",
            Sub::Survey(_) => "survey",
            Sub::Kamcheck(_) => "kamcheck",
            Sub::Render(_) => "render",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Sub::Simulate(c) | Sub::Classify(c) | Sub::Pendulum(c) | Sub::Survey(c) | Sub::Render(c) => c,
            Sub::Kamcheck(k) => &k.common,
        }
    }
}

enum Failure {
    Invalid(Vec<String>),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::Domain(_) => Failure::Invalid(vec![e.to_string()]),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

struct Term {
    color: bool,
}

impl Term {
    fn detect() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Self { color: !no_color && std::io::stderr().is_terminal() }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn info(&self, msg: &str) {
        eprintln!("{} {msg}", self.paint("32", "ok"));
    }

    fn error(&self, msg: &str) {
        eprintln!("{} {msg}", self.paint("31", "error:"));
    }
}

fn parse_eps(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Failure::Invalid(vec![format!("--eps: cannot parse '{t}'")])))
        .collect()
}

fn single_eps(text: &str) -> Result<f64, Failure> {
    match parse_eps(text)?.as_slice() {
        [e] => Ok(*e),
        _ => Err(Failure::Invalid(vec!["--eps takes a single value for this command".into()])),
    }
}

fn load(sub: &Sub) -> Result<RunConfig, Failure> {
    let common = sub.common();
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Failure::Invalid(vec![format!("cannot read config {}: {e}", p.display())]))?,
        None => {
            let mut t = format!("[{}]\n", sub.name());
            if let Sub::Kamcheck(k) = sub {
                if let Some(n) = k.n {
                    t.push_str(&format!("n = {n}\n"));
                }
            }
            t
        }
    };
    let mut cfg = config::parse_config(&text)
        .map_err(|errs| Failure::Invalid(errs.iter().map(ToString::to_string).collect()))?;
    if cfg.command.name() != sub.name() {
        return Err(Failure::Invalid(vec![format!(
            "config describes '{}' but the '{}' command was requested",
            cfg.command.name(),
            sub.name()
        )]));
    }
    apply_overrides(&mut cfg, sub)?;
    Ok(cfg)
}

fn inapplicable(flag: &str, cmd: &str) -> Failure {
    Failure::Invalid(vec![format!("{flag} does not apply to {cmd}")])
}

fn apply_overrides(cfg: &mut RunConfig, sub: &Sub) -> Result<(), Failure> {
    let c = sub.common();
    let name = sub.name();
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let mut errors = Vec::new();
    match &mut cfg.command {
        Command::Simulate(o) | Command::Classify { orbit: o, .. } => {
            o.steps = c.steps.unwrap_or(o.steps);
            o.stride = c.stride.unwrap_or(o.stride);
            if let Some(e) = &c.eps {
                o.eps = single_eps(e)?;
            }
            if c.out.is_some() {
                o.out.clone_from(&c.out);
            }
            if o.stride == 0 || o.steps < o.stride {
                errors.push("need steps ≥ stride ≥ 1".to_string());
            }
            check_eps(o.eps, &mut errors);
            check_out(&o.out, &mut errors);
        }
        Command::Pendulum(p) => {
            if c.steps.is_some() || c.stride.is_some() {
                return Err(inapplicable("--steps/--stride", name));
            }
            if let Some(e) = &c.eps {
                p.eps = single_eps(e)?;
            }
            if c.out.is_some() {
                p.out.clone_from(&c.out);
            }
            check_eps(p.eps, &mut errors);
            check_out(&p.out, &mut errors);
        }
        Command::Survey(s) => {
            s.config.seed = cfg.seed;
            s.config.steps = c.steps.unwrap_or(s.config.steps);
            s.config.stride = c.stride.unwrap_or(s.config.stride);
            s.config.workers = c.workers.unwrap_or(s.config.workers).max(1);
            if let Some(e) = &c.eps {
                s.config.eps = parse_eps(e)?;
            }
            if let Some(out) = &c.out {
                s.json = Some(out.with_extension("json"));
                s.csv = Some(out.with_extension("csv"));
            }
            if c.resume.is_some() {
                s.journal.clone_from(&c.resume);
            }
            for p in [&s.json, &s.csv, &s.journal] {
                check_out(p, &mut errors);
            }
            if s.config.eps.iter().any(|e| !(*e >= 0.0)) {
                errors.push("eps must be ≥ 0".into());
            } else if let Err(e) = s.config.validate() {
                errors.push(e.to_string());
            }
        }
        Command::Kamcheck(k) => {
            let Sub::Kamcheck(args) = sub else { unreachable!("command names match") };
            if c.steps.is_some() || c.stride.is_some() {
                return Err(inapplicable("--steps/--stride", name));
            }
            if let Some(n) = args.n {
                k.constants.n = n;
                if !k.c_s_explicit {
                    k.constants.c_s = default_c_s(n);
                }
            }
            if let Some(e) = &c.eps {
                k.constants.eps = single_eps(e)?;
            }
            k.search |= args.search;
            k.m_max = args.m.unwrap_or(k.m_max);
            k.jacobian_samples = args.jacobian_samples.unwrap_or(k.jacobian_samples);
            if c.out.is_some() {
                k.out.clone_from(&c.out);
            }
            if let Err(e) = k.constants.validate() {
                errors.push(e.to_string());
            }
            check_out(&k.out, &mut errors);
        }
        Command::Render(r) => {
            r.steps = c.steps.unwrap_or(r.steps);
            r.stride = c.stride.unwrap_or(r.stride);
            if let Some(e) = &c.eps {
                r.eps = single_eps(e)?;
            }
            if c.out.is_some() {
                r.out.clone_from(&c.out);
            }
            if r.stride == 0 || r.steps < r.stride {
                errors.push("need steps ≥ stride ≥ 1".to_string());
            }
            check_eps(r.eps, &mut errors);
            check_out(&r.out, &mut errors);
        }
    }
    if !matches!(cfg.command, Command::Survey(_)) {
        if c.resume.is_some() {
            return Err(inapplicable("--resume", name));
        }
        if c.workers.is_some() {
            return Err(inapplicable("--workers", name));
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invalid(errors))
    }
}

fn check_eps(eps: f64, errors: &mut Vec<String>) {
    if !(eps >= 0.0 && eps.is_finite()) {
        errors.push("eps must be ≥ 0".into());
    }
}

fn check_out(path: &Option<PathBuf>, errors: &mut Vec<String>) {
    if let Some(p) = path {
        if !parent_is_dir(p) {
            errors.push(format!("directory of {} does not exist", p.display()));
        }
    }
}

fn emit(term: &Term, path: Option<&Path>, body: &str, what: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            write_atomic(p, body.as_bytes())?;
            term.info(&format!("wrote {what} to {}", p.display()));
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes()).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn orbit_of(cfg: &RunConfig, y0: &[f64], x0: &[f64], eps: f64, steps: u64, stride: u64) -> Result<Orbit, Failure> {
    let init = PhaseState::new(y0.to_vec(), x0.to_vec())?;
    Ok(iterate(&init, &cfg.potential, eps, steps, stride)?)
}

#[derive(Serialize)]
struct KamOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    searched: Option<(f64, f64, f64)>,
    #[serde(flatten)]
    report: LedgerReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    jacobian: Option<JacobianReport>,
}

fn execute(cfg: RunConfig, term: &Term) -> Result<(), Failure> {
    match &cfg.command {
        Command::Simulate(o) => {
            let orbit = orbit_of(&cfg, &o.y0, &o.x0, o.eps, o.steps, o.stride)?;
            emit(term, o.out.as_deref(), &orbit_csv(&orbit), "orbit")
        }
        Command::Classify { orbit: o, classifier } => {
            let orbit = orbit_of(&cfg, &o.y0, &o.x0, o.eps, o.steps, o.stride)?;
            let class = classify(&orbit, classifier);
            term.info(&format!("label {}", class.label.name()));
            emit(term, o.out.as_deref(), &to_json(&class)?, "classification")
        }
        Command::Pendulum(p) => {
            let geometry = SingleResonanceGeometry::standard(p.k.clone(), p.k0)?;
            let model = reduce(&cfg.potential, &geometry, &p.y_on_sigma, p.eps)?;
            let grid = model.default_grid(p.energies, p.band);
            let table = frequency_and_twist(&model, &grid, p.twist_constant)?;
            #[derive(Serialize)]
            struct Out<'a> {
                model: &'a crate::pendulum::PendulumModel,
                table: &'a crate::pendulum::ActionTable,
            }
            emit(term, p.out.as_deref(), &to_json(&Out { model: &model, table: &table })?, "pendulum table")
        }
        Command::Survey(s) => {
            let result = run_survey_with(&s.config, s.journal.as_deref(), None)?
                .ok_or_else(|| Failure::Runtime("survey did not complete".into()))?;
            let csv = survey_csv(&result);
            let json = match s.mode {
                SurveyMode::Fractions => to_json(&result)?,
                SurveyMode::Conditional => to_json(&conditional_from_survey(&s.config, Some(s.band), result)?)?,
                SurveyMode::DoubleResonance => to_json(&double_from_survey(&s.config, result)?)?,
            };
            if s.csv.is_some() {
                emit(term, s.csv.as_deref(), &csv, "survey table")?;
            }
            if s.json.is_some() || s.csv.is_none() {
                emit(term, s.json.as_deref(), &json, "survey result")?;
            }
            Ok(())
        }
        Command::Kamcheck(k) => {
            let (searched, report) = if k.search {
                let found = search_constants(&k.constants, k.m_max)?;
                (Some((found.c_s, found.c_n, found.c_lambda)), found.report)
            } else {
                (None, check_inequalities(&k.constants, k.m_max)?)
            };
            let jacobian = match k.jacobian_samples {
                0 => None,
                n => Some(check_jacobian_bounds(&report.constants, n, cfg.seed)?),
            };
            let verdict = if report.pass { "all inequalities hold" } else { "ledger has failures" };
            term.info(&format!("{verdict} for m ≤ {}", report.m_max));
            emit(term, k.out.as_deref(), &to_json(&KamOutput { searched, report, jacobian })?, "ledger")
        }
        Command::Render(r) => {
            let orbits = r
                .orbits
                .iter()
                .map(|(y, x)| orbit_of(&cfg, y, x, r.eps, r.steps, r.stride))
                .collect::<Result<Vec<_>, _>>()?;
            let svg = match r.kind {
                RenderKind::Action => render_action_projection(&orbits, &r.options)?,
                RenderKind::Portrait => {
                    let geometry = SingleResonanceGeometry::standard(r.k.clone(), r.k0)?;
                    let base = geometry.chi(&orbits[0].initial().y)?;
                    let model = reduce(&cfg.potential, &geometry, &base, r.eps)?;
                    let mut points = Vec::new();
                    for o in &orbits {
                        points.extend(project_reduced(o, &geometry, r.eps)?);
                    }
                    render_phase_portrait(&model, &points, &r.levels, &r.options)?
                }
            };
            emit(term, r.out.as_deref(), &svg, "figure")
        }
    }
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let term = Term::detect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = load(&cli.command).and_then(|cfg| execute(cfg, &term));
    match outcome {
        Ok(()) => 0,
        Err(Failure::Invalid(msgs)) => {
            for m in msgs {
                term.error(&m);
            }
            1
        }
        Err(Failure::Runtime(m)) => {
            term.error(&m);
            2
        }
    }
}
