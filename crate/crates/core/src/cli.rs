//! Command-line orchestration: flag parsing, subcommand dispatch and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{split_pair, FlowScheme, RunConfig};
use crate::elliptic::{solve_poisson, PoissonProblem};
use crate::error::{Error, Result};
use crate::expansion::{discrete_rhs, expand_solution, flow_rhs, ExpansionReport};
use crate::field::format_number;
use crate::flow::{
    normalization_constant, picard_local_solve, run_flow, time_derivative_cascade, FlowState,
    HistoryRow,
};
use crate::linear::{neumann_gap, run_linear, solve_neumann_disk, FnCoefficients, MonitorRow};
use crate::presets::initial_field;
use crate::{Domain, SpectralField};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "conic-flow",
    version,
    about = "Normalized Ricci flow on surfaces with cone points"
)]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for randomized presets (overrides `seed`).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// `key=value` applied after the config file; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE", value_parser = parse_override)]
    pub overrides: Vec<(String, String)>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    split_pair(s).ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[derive(Clone, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the flow; writes history, final state and blow-up report.
    Flow {
        #[arg(value_parser = ["run"])]
        action: Option<String>,
    },
    /// Picard iteration on a short interval against the direct solver.
    Picard,
    /// Linear parabolic run with monitors.
    LinearRun,
    /// Annulus approximations on the cone disk for increasing k.
    NeumannConvergence,
    /// Poisson solve for a field CSV right-hand side.
    Poisson,
    /// Asymptotic expansion of a field at the cone point.
    Expand,
    /// Sup norms of higher time derivatives along a flow run.
    Cascade,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Flow { .. } => "flow",
            Self::Picard => "picard",
            Self::LinearRun => "linear-run",
            Self::NeumannConvergence => "neumann-convergence",
            Self::Poisson => "poisson",
            Self::Expand => "expand",
            Self::Cascade => "cascade",
        }
    }
}

/// Files written by a successful subcommand and an optional abnormal stop.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub blow_up: Option<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.blow_up.is_some() {
            EXIT_BLOW_UP
        } else {
            EXIT_OK
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        Error::Io(_) => EXIT_FAILURE,
        _ => EXIT_PRECONDITION,
    }
}

/// Machine-readable reason tag for an error.
pub fn reason_tag(e: &Error) -> &'static str {
    match e {
        Error::Surface(_) => "surface",
        Error::OutOfDomain { .. } => "out-of-domain",
        Error::Unresolved(_) => "unresolved",
        Error::AngularResolution { .. } => "angular-resolution",
        Error::Shape(_) => "shape",
        Error::NonzeroMean { .. } => "nonzero-mean",
        Error::Singular { .. } => "singular",
        Error::Precondition(_) => "precondition",
        Error::Resonance { .. } => "resonance",
        Error::InsufficientDecay { .. } => "insufficient-decay",
        Error::NotHarmonic { .. } => "not-harmonic",
        Error::DecayStall { .. } => "decay-stall",
        Error::NonContraction { .. } => "non-contraction",
        Error::BlowUp { .. } => "blow-up",
        Error::CascadeOrder(_) => "cascade-order",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
    }
}

/// Resolves the configuration from the parsed flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

/// Parses flags, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    let config = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            report_error(&e);
            return exit_code(&e);
        }
    };
    match run(&config, &cli.command) {
        Ok(outcome) => {
            if let Some(reason) = &outcome.blow_up {
                eprintln!("{{\"status\":\"blow-up\",\"reason\":{}}}", json!(reason));
            }
            outcome.exit_code()
        }
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn report_error(e: &Error) {
    let details: Vec<String> = match e {
        Error::Config(list) => list.clone(),
        other => vec![other.to_string()],
    };
    let v = json!({"status": reason_tag(e), "errors": details});
    eprintln!("{v}");
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Parse(format!("json encoding of {name}: {e}")))?;
        body.push('\n');
        self.text(name, &body)
    }
}

/// Runs one subcommand and writes its outputs plus `manifest.json`.
///
/// On failure the manifest records the reason before the error is returned.
pub fn run(config: &RunConfig, command: &Command) -> Result<Outcome> {
    let mut w = Writer::new(&config.output_dir)?;
    let result = dispatch(config, command, &mut w);
    let (status, reason) = match &result {
        Ok(Some(r)) => ("blow-up", Some(r.clone())),
        Ok(None) => ("ok", None),
        Err(e) => (reason_tag(e), Some(e.to_string())),
    };
    let manifest = json!({
        "subcommand": command.name(),
        "config": config.resolved,
        "status": status,
        "reason": reason,
        "outputs": w.files.clone(),
    });
    w.json("manifest.json", &manifest)?;
    let blow_up = result?;
    Ok(Outcome {
        files: w.files,
        blow_up,
    })
}

fn dispatch(config: &RunConfig, command: &Command, w: &mut Writer) -> Result<Option<String>> {
    let domain = config.domain()?;
    match command {
        Command::Flow { .. } => flow(config, &domain, w),
        Command::Picard => picard(config, &domain, w).map(|_| None),
        Command::LinearRun => linear_run(config, &domain, w).map(|_| None),
        Command::NeumannConvergence => neumann(config, &domain, w).map(|_| None),
        Command::Poisson => poisson(config, &domain, w).map(|_| None),
        Command::Expand => expand(config, &domain, w).map(|_| None),
        Command::Cascade => cascade(config, &domain, w),
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("t,volume,gauss_bonnet,sup_k,sup_u,energy,dt_energy_cum\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}",
            [
                r.t,
                r.volume,
                r.gauss_bonnet,
                r.sup_k,
                r.sup_u,
                r.energy,
                r.dt_energy_cum
            ]
            .map(format_number)
            .join(",")
        );
    }
    s
}

pub fn monitor_csv(rows: &[MonitorRow]) -> String {
    let mut s = String::from("t,sup_u,energy,dt_energy,bound_h,slack\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}",
            [r.t, r.sup_u, r.energy, r.dt_energy, r.bound_h, r.slack]
                .map(format_number)
                .join(",")
        );
    }
    s
}

fn history_summary(domain: &Domain, rows: &[HistoryRow], r: f64) -> Value {
    let v0 = rows.first().map_or(f64::NAN, |h| h.volume);
    let gb = 2.0 * std::f64::consts::PI * domain.surface.euler_characteristic();
    let drift = rows
        .iter()
        .fold(0.0f64, |m, h| m.max((h.volume - v0).abs() / v0));
    let gb_err = rows.iter().fold(0.0f64, |m, h| {
        m.max((h.gauss_bonnet - gb).abs() / gb.abs().max(1e-300))
    });
    json!({
        "r": r,
        "v0": v0,
        "t_final": rows.last().map_or(0.0, |h| h.t),
        "rows": rows.len(),
        "max_relative_volume_drift": drift,
        "max_relative_gauss_bonnet_error": gb_err,
        "max_sup_u": rows.iter().fold(0.0f64, |m, h| m.max(h.sup_u)),
    })
}

fn flow(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<Option<String>> {
    let f = &config.flow;
    let u0 = initial_field(domain, &f.initial)?;
    if f.scheme == FlowScheme::Picard {
        let r = normalization_constant(domain, &u0)?;
        let res = picard_local_solve(
            domain,
            &u0,
            r,
            f.t_end,
            f.dt,
            f.picard_tol,
            f.picard_max_iters,
        )?;
        let mut rows = Vec::with_capacity(res.trajectory.len());
        let mut cum = 0.0;
        for (n, u) in res.trajectory.iter().enumerate() {
            if n > 0 {
                let d = u.sub(&res.trajectory[n - 1]);
                cum += domain.inner(&d, &d) / f.dt;
            }
            let mut row = FlowState::with_r(domain, u.clone(), r)?.history.remove(0);
            row.t = f.dt * n as f64;
            row.dt_energy_cum = cum;
            rows.push(row);
        }
        w.text("history.csv", &history_csv(&rows))?;
        if let Some(last) = res.trajectory.last() {
            w.text("final_u.csv", &domain.field_csv(last))?;
        }
        let mut report = history_summary(domain, &rows, r);
        report["picard_iterations"] = json!(res.iterations);
        w.json("flow_report.json", &report)?;
        return Ok(None);
    }
    let state = FlowState::new(domain, u0)?;
    let r = state.r;
    let run = run_flow(
        domain,
        state,
        f.dt,
        f.t_end,
        f.scheme.time_scheme(),
        f.record_every,
    )?;
    w.text("history.csv", &history_csv(&run.state.history))?;
    w.text("final_u.csv", &domain.field_csv(&run.state.u))?;
    let mut report = history_summary(domain, &run.state.history, r);
    report["blow_up"] = json!(run.blow_up);
    w.json("flow_report.json", &report)?;
    if let Some(b) = &run.blow_up {
        w.json("blowup.json", b)?;
        return Ok(Some(format!(
            "sup|K| = {:e} at t = {} with dt = {:e}",
            b.sup_k, b.t, b.dt
        )));
    }
    Ok(None)
}

fn picard(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<()> {
    let f = &config.flow;
    let u0 = initial_field(domain, &f.initial)?;
    let r = normalization_constant(domain, &u0)?;
    let t = f.picard_t_end;
    let full = picard_local_solve(domain, &u0, r, t, f.dt, f.picard_tol, f.picard_max_iters)?;
    let half = picard_local_solve(
        domain,
        &u0,
        r,
        0.5 * t,
        f.dt,
        f.picard_tol,
        f.picard_max_iters,
    )?;
    let direct = run_flow(
        domain,
        FlowState::with_r(domain, u0.clone(), r)?,
        f.dt,
        t,
        f.scheme.time_scheme(),
        1,
    )?;
    let gap = full
        .trajectory
        .iter()
        .zip(&direct.snapshots)
        .fold(0.0f64, |m, (a, b)| m.max(domain.sup_abs(&a.sub(&b.u))));
    let q_full = full.contraction_factor();
    let q_half = half.contraction_factor();
    let report = json!({
        "t_end": t,
        "dt": f.dt,
        "tol": f.picard_tol,
        "iterations": full.iterations,
        "differences": full.differences,
        "ratios": full.ratios,
        "contraction_factor": q_full,
        "half_interval": {
            "t_end": 0.5 * t,
            "iterations": half.iterations,
            "contraction_factor": q_half,
        },
        "factor_ratio": q_full.zip(q_half).map(|(a, b)| b / a),
        "direct_gap": gap,
    });
    w.json("picard.json", &report)?;
    if let Some(last) = full.trajectory.last() {
        w.text("picard_final.csv", &domain.field_csv(last))?;
    }
    Ok(())
}

fn linear_coefficients(config: &RunConfig) -> FnCoefficients<f64> {
    let mut c = FnCoefficients::heat(config.linear.a);
    let b = config.linear.b;
    if b != 0.0 {
        c.b = Some(Box::new(move |_, _, _| b));
        c.b_bound = b.abs();
    }
    c
}

fn linear_run(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<()> {
    let l = &config.linear;
    let u0 = initial_field(domain, &l.initial)?;
    let coeffs = linear_coefficients(config);
    let run = run_linear(domain, &u0, &coeffs, l.t_end, l.dt, l.scheme, false)?;
    w.text("linear.csv", &monitor_csv(&run.monitors))?;
    let report = json!({
        "steps": run.monitors.len() - 1,
        "max_u": run.max_u,
        "worst_bound_excess": run.worst_bound_excess,
        "lipschitz_a": run.lipschitz_a,
    });
    w.json("linear.json", &report)
}

fn neumann(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<()> {
    if domain.surface.is_closed() {
        return Err(Error::Precondition(
            "neumann-convergence needs surface.kind = conedisk".into(),
        ));
    }
    let l = &config.linear;
    let u0 = initial_field(domain, &l.initial)?;
    let coeffs = linear_coefficients(config);
    let mut runs = Vec::with_capacity(l.k.len());
    for &k in &l.k {
        let run = solve_neumann_disk(domain, &u0, &coeffs, k, l.t_end, l.dt)?;
        w.text(
            &format!("neumann_k{k}.csv"),
            &monitor_csv(&run.run.monitors),
        )?;
        runs.push(run);
    }
    let gaps: Vec<f64> = runs
        .windows(2)
        .map(|p| neumann_gap(&p[0], &p[1], 2.0 / p[0].k as f64))
        .collect();
    let mut csv = String::from("k,k_next,gap\n");
    for (p, g) in runs.windows(2).zip(&gaps) {
        let _ = writeln!(csv, "{},{},{}", p[0].k, p[1].k, format_number(*g));
    }
    w.text("neumann.csv", &csv)?;
    let monotone = gaps.windows(2).all(|g| g[1] < g[0]);
    let report = json!({
        "k": l.k,
        "gaps": gaps,
        "monotone_decreasing": monotone,
        "final_over_first": gaps.last().zip(gaps.first()).map(|(a, b)| a / b),
    });
    w.json("neumann.json", &report)
}

fn read_field(domain: &Domain, path: &Path) -> Result<SpectralField> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Precondition(format!("cannot read {}: {e}", path.display())))?;
    domain.parse_field_csv(&text)
}

fn poisson(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<()> {
    let rhs = match &config.poisson.rhs {
        Some(p) => read_field(domain, p)?,
        None => {
            let mean = domain.integrate_radial(&domain.curvature) / domain.volume();
            let values = domain.curvature.iter().map(|&k| mean - k).collect();
            SpectralField::radial(values, domain.l_max)
        }
    };
    let sol = solve_poisson(&PoissonProblem::new(domain, rhs, config.poisson.gauge))?;
    w.text("poisson_u.csv", &domain.field_csv(&sol.u))?;
    let report = json!({
        "gauge": config.resolved["poisson.gauge"],
        "relative_residual": sol.relative_residual,
        "mean_defect": sol.mean_defect,
    });
    w.json("poisson.json", &report)
}

/// JSON layout of an expansion report.
pub fn expansion_json(beta: f64, q_target: f64, report: &ExpansionReport<f64>) -> Value {
    let terms: Vec<Value> = report
        .expansion
        .terms
        .iter()
        .map(|(t, c)| {
            json!({
                "j": t.j,
                "k": t.k,
                "l": t.l,
                "trig": t.trig.name(),
                "exponent": t.exponent(beta),
                "coefficient": c,
            })
        })
        .collect();
    json!({
        "beta": beta,
        "q_target": q_target,
        "terms": terms,
        "remainder_order": report.remainder_order,
        "per_rung": report.rungs,
    })
}

fn expand(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<()> {
    let q = config.expand.q_target;
    let report = match &config.expand.input {
        Some(path) => {
            let u = read_field(domain, path)?;
            match &config.expand.rhs {
                Some(p) => {
                    let rhs = read_field(domain, p)?;
                    expand_solution(domain, &u, |_| Ok(rhs.clone()), q)?
                }
                None => expand_solution(domain, &u, discrete_rhs(domain), q)?,
            }
        }
        None => {
            let f = &config.flow;
            let u0 = initial_field(domain, &f.initial)?;
            let state = FlowState::new(domain, u0)?;
            let r = state.r;
            let run = run_flow(
                domain,
                state,
                f.dt,
                f.t_end,
                f.scheme.time_scheme(),
                f.record_every,
            )?;
            if let Some(b) = run.blow_up {
                return Err(Error::BlowUp {
                    t: b.t,
                    sup_k: b.sup_k,
                    dt: b.dt,
                });
            }
            w.text("snapshot_u.csv", &domain.field_csv(&run.state.u))?;
            expand_solution(domain, &run.state.u, flow_rhs(domain, r), q)?
        }
    };
    w.json(
        "expansion.json",
        &expansion_json(domain.surface.beta, q, &report),
    )
}

fn cascade(config: &RunConfig, domain: &Domain, w: &mut Writer) -> Result<Option<String>> {
    let f = &config.flow;
    let u0 = initial_field(domain, &f.initial)?;
    let state = FlowState::new(domain, u0)?;
    let r = state.r;
    let run = run_flow(
        domain,
        state,
        f.dt,
        f.t_end,
        f.scheme.time_scheme(),
        f.record_every,
    )?;
    let floor = f.cascade_pole_floor * domain.surface.length;
    let report = time_derivative_cascade(
        domain,
        &run.snapshots,
        r,
        f.cascade_order,
        f.cascade_delta,
        floor,
    )?;
    w.json("cascade.json", &report)?;
    let mut csv = String::from("order,sup_beyond_floor,sup_all_nodes\n");
    for (i, (a, b)) in report
        .sup_norms
        .iter()
        .zip(&report.sup_norms_all_nodes)
        .enumerate()
    {
        let _ = writeln!(csv, "{},{},{}", i + 1, format_number(*a), format_number(*b));
    }
    w.text("cascade.csv", &csv)?;
    Ok(run
        .blow_up
        .map(|b| format!("sup|K| = {:e} at t = {}", b.sup_k, b.t)))
}
