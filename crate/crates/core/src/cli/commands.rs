//! The four subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{stationary_phase_amplitude, write_csv, DecayFit, Monitor};
use crate::dirichlet_neumann::WaveState;
use crate::evolution::{dispersive_variable, run_from, EvolutionError};
use crate::suite::{
    dn_flat_exactness, dn_order, monitored_run, scattering_report, sup_decay, symbols_verify as run_symbols, FlatReport,
    MonitoredRun, ScatteringReport, SuiteError,
};
use crate::transforms::{SymbolConstants, SymbolTable};

use super::artifacts::{
    column, complete_rows, complete_states, parse_resume_point, read_state_at, write_atomic, CheckEntry, RunWriter,
    DIAGNOSTICS_FILE, RUN_MARKER, STATES_FILE,
};
use super::{CliError, Context, Outcome};

/// Flat-bottom exactness threshold for both DN evaluators.
pub const FLAT_TOL: f64 = 1e-10;
/// Accepted band for the log₂ slope of the cubic DN truncation error.
pub const DN_SLOPE: (f64, f64) = (4.0, 0.3);
pub const SYMBOL_RESIDUAL_TOL: f64 = 1e-12;
/// Relative change allowed under 4× sampling.
pub const STABILITY_TOL: f64 = 0.2;
pub const DECAY_TARGET: f64 = -0.5;
pub const DECAY_TOL: f64 = 0.1;
pub const LINEAR_DECAY_TOL: f64 = 0.05;
pub const MODULUS_TOL: f64 = 0.05;
pub const MODIFIED_GAIN: f64 = 3.0;
pub const STATIONARY_PHASE_TOL: f64 = 0.2;
/// Exponent of the (1+t) allowance for growth of the H^{N₀,p} norm.
pub const ENERGY_GROWTH_EXPONENT: f64 = 0.05;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

fn suite_error(e: SuiteError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

// ---------------------------------------------------------------------------
// simulate

/// Where a (possibly resumed) run starts.
struct Start {
    state: WaveState,
    step: usize,
    writer: RunWriter,
    first_hamiltonian: Option<f64>,
}

fn fresh_start(ctx: &Context, monitored: usize) -> Result<Start, CliError> {
    write_atomic(&ctx.out.join(RUN_MARKER), ctx.digest.as_bytes())?;
    Ok(Start {
        state: ctx.cfg.initial_state()?,
        step: 0,
        writer: RunWriter::create(&ctx.out, monitored)?,
        first_hamiltonian: None,
    })
}

fn resume_start(ctx: &Context, monitor: &mut Monitor, monitored: usize) -> Result<Start, CliError> {
    let marker = ctx.out.join(RUN_MARKER);
    let states = ctx.out.join(STATES_FILE);
    let csv = ctx.out.join(DIAGNOSTICS_FILE);
    if !marker.exists() || !states.exists() || !csv.exists() {
        return fresh_start(ctx, monitored);
    }
    let previous = std::fs::read_to_string(&marker).map_err(|e| CliError::io(&marker, e))?;
    if previous.trim() != ctx.digest {
        return Err(CliError::Config(format!(
            "{} was started from a different config (digest {}); refusing to resume",
            ctx.out.display(),
            previous.trim()
        )));
    }
    let grid = ctx.cfg.grid()?;
    let (header, rows) = complete_rows(&csv)?;
    let keep = complete_states(&states, grid.n())?.min(rows.len());
    if keep == 0 {
        return fresh_start(ctx, monitored);
    }
    let state = read_state_at(&states, &grid, keep - 1)?;
    let point = parse_resume_point(&header, &rows[keep - 1])?;
    if point.t != state.t || point.fhat.len() != monitored {
        return Err(CliError::Runtime(format!("{STATES_FILE} and {DIAGNOSTICS_FILE} disagree at snapshot {keep}")));
    }
    let first_hamiltonian = Some(column(&header, &rows[0], "hamiltonian")?);
    monitor.resume(&state, point.t, point.phase, &point.fhat);
    let step = (state.t / ctx.cfg.time.dt).round() as usize;
    Ok(Start { state, step, writer: RunWriter::reopen(&ctx.out, grid.n(), keep)?, first_hamiltonian })
}

fn relative_drift(h: f64, h0: f64) -> f64 {
    if h0 == 0.0 {
        (h - h0).abs()
    } else {
        ((h - h0) / h0).abs()
    }
}

pub fn simulate(ctx: &Context, resume: bool) -> Result<Outcome, CliError> {
    let solver = ctx.cfg.solver();
    let mut monitor = Monitor::new(ctx.cfg.diagnostics());
    let monitored = ctx.cfg.diagnostics.monitored_xi.len();
    let start = if resume { resume_start(ctx, &mut monitor, monitored)? } else { fresh_start(ctx, monitored)? };
    let Start { state, step, mut writer, mut first_hamiltonian } = start;

    let mut drift = 0.0f64;
    let mut all_finite = true;
    let mut last_t = state.t;
    let result = if step >= solver.n_steps() && step > 0 {
        Ok(Default::default())
    } else {
        run_from(&solver, &state, step, false, |s, _| {
            let r = monitor.observe(s).map_err(|e| e.to_string())?;
            writer.append(s, &r).map_err(|e| format!("writing run files: {e}"))?;
            let h0 = *first_hamiltonian.get_or_insert(r.hamiltonian);
            drift = drift.max(relative_drift(r.hamiltonian, h0));
            all_finite &= r.is_finite();
            last_t = s.t;
            Ok(())
        })
    };
    if let Err(e) = result {
        if let EvolutionError::Config(msg) = &e {
            return Err(CliError::Config(msg.clone()));
        }
        let good = match &e {
            EvolutionError::Observer { .. } => last_t,
            other => other.last_good().map_or(last_t, |s| s.t),
        };
        return Err(CliError::Runtime(format!("{e} (last good state at t={good})")));
    }

    let mut outcome = Outcome {
        outputs: vec![STATES_FILE.into(), DIAGNOSTICS_FILE.into()],
        ..Default::default()
    };
    outcome.checks.push(CheckEntry::new("finite_diagnostics", f64::from(u8::from(all_finite)), "== 1", all_finite));
    let drift_check = match ctx.cfg.diagnostics.hamiltonian_tol {
        Some(tol) => CheckEntry::new("hamiltonian_drift", drift, &format!("<= {tol:e}"), drift <= tol),
        None => CheckEntry::new("hamiltonian_drift", drift, "reported", true).informational(),
    };
    outcome.checks.push(drift_check);
    if let Some(w) = monitor.phase().stride_warning() {
        outcome.warnings.push(w);
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// dn-check

#[derive(Serialize)]
struct DnSummary {
    flat: FlatReport,
    order: crate::suite::DnOrderReport,
}

pub fn dn_check(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let fp = cfg.fixed_point();
    let flat = dn_flat_exactness(cfg.grid.n, &fp).map_err(suite_error)?;
    let order = dn_order(&cfg.experiment.eps, cfg.grid.n, &fp, cfg.dn.oracle_nz).map_err(suite_error)?;

    let path = ctx.out.join("dn_check.csv");
    let mut f = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(f, "eps,gap_taylor_oracle,gap_fixed_oracle,slope").map_err(io)?;
    for (i, r) in order.rows.iter().enumerate() {
        let slope = if i == 0 { String::new() } else { format!("{:.16e}", order.slopes[i - 1]) };
        writeln!(f, "{:.16e},{:.16e},{:.16e},{slope}", r.eps, r.gap_taylor_oracle, r.gap_fixed_oracle).map_err(io)?;
    }
    f.flush().map_err(io)?;
    write_json(&ctx.out.join("summary.json"), &DnSummary { flat: flat.clone(), order: order.clone() })?;

    let (target, tol) = DN_SLOPE;
    let band = format!("{target} ± {tol}");
    let mut checks = vec![
        CheckEntry::new("flat_taylor3", flat.taylor_rel, &format!("<= {FLAT_TOL:e}"), flat.taylor_rel <= FLAT_TOL),
        CheckEntry::new(
            "flat_fixed_point",
            flat.fixed_point_rel,
            &format!("<= {FLAT_TOL:e}"),
            flat.fixed_point_rel <= FLAT_TOL,
        ),
        CheckEntry::new("taylor3_fitted_slope", order.fitted_slope, &band, within(order.fitted_slope, target, tol)),
    ];
    for (i, s) in order.slopes.iter().enumerate() {
        checks.push(CheckEntry::new(&format!("taylor3_slope_{i}"), *s, &band, within(*s, target, tol)));
    }
    // Required at every amplitude, not only the largest.
    let worst = order.rows.iter().map(|r| r.gap_fixed_oracle).fold(0.0, f64::max);
    let tol_fp = cfg.experiment.fixed_point_tol;
    checks.push(CheckEntry::new("fixed_point_vs_oracle", worst, &format!("<= {tol_fp:e}"), worst <= tol_fp));
    Ok(Outcome { checks, outputs: vec!["dn_check.csv".into(), "summary.json".into()], warnings: Vec::new() })
}

// ---------------------------------------------------------------------------
// symbols-verify

#[derive(Serialize)]
struct ConstantRow {
    name: &'static str,
    coarse: f64,
    refined: f64,
    relative_change: f64,
}

#[derive(Serialize)]
struct PhaseRow {
    name: &'static str,
    samples: usize,
    min_ratio: f64,
    min_ratio_refined: f64,
    relative_change: f64,
}

#[derive(Serialize)]
struct SymbolsSummary {
    seed: u64,
    residual_samples: usize,
    skipped_singular: usize,
    max_relative_residual: [f64; 3],
    per_dim: usize,
    constants: Vec<ConstantRow>,
    phases: Vec<PhaseRow>,
}

fn constant_values(c: &SymbolConstants) -> [f64; 5] {
    [c.separated, c.comparable, c.cancellation, c.cancellation_gain, c.normal_form]
}

pub fn symbols_verify(ctx: &Context) -> Result<Outcome, CliError> {
    let e = &ctx.cfg.experiment;
    let report = run_symbols(e.samples, e.per_dim, e.phase_samples, ctx.seed);
    let changes = report.constants.relative_changes();
    let (coarse, refined) = (constant_values(&report.constants.coarse), constant_values(&report.constants.refined));
    let constants: Vec<ConstantRow> = SymbolConstants::NAMES
        .iter()
        .enumerate()
        .map(|(i, &name)| ConstantRow { name, coarse: coarse[i], refined: refined[i], relative_change: changes[i] })
        .collect();
    let phases: Vec<PhaseRow> = report
        .phases
        .estimates
        .iter()
        .map(|p| PhaseRow {
            name: p.name,
            samples: p.samples,
            min_ratio: p.min_ratio,
            min_ratio_refined: p.min_ratio_refined,
            relative_change: p.relative_change(),
        })
        .collect();

    let path = ctx.out.join("constants.csv");
    let mut f = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(f, "name,coarse,refined,relative_change").map_err(io)?;
    for c in &constants {
        writeln!(f, "{},{:.16e},{:.16e},{:.16e}", c.name, c.coarse, c.refined, c.relative_change).map_err(io)?;
    }
    f.flush().map_err(io)?;

    let path = ctx.out.join("phase_bounds.csv");
    let mut f = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(f, "name,samples,min_ratio,min_ratio_refined,relative_change").map_err(io)?;
    for p in &phases {
        writeln!(
            f,
            "{},{},{:.16e},{:.16e},{:.16e}",
            p.name, p.samples, p.min_ratio, p.min_ratio_refined, p.relative_change
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)?;

    let path = ctx.out.join("symbols.csv");
    let lattice = crate::spectral_core::Grid::new(e.lattice_n, 2.0 * std::f64::consts::PI)
        .map_err(|err| CliError::Config(format!("experiment.lattice_n: {err}")))?;
    let mut f = create(&path)?;
    SymbolTable::default().write_lattice_csv(&lattice, &mut f).and_then(|_| f.flush()).map_err(|e| CliError::io(&path, e))?;

    let worst = report.residuals.worst();
    let summary = SymbolsSummary {
        seed: ctx.seed,
        residual_samples: report.residuals.checked,
        skipped_singular: report.residuals.skipped_singular,
        max_relative_residual: report.residuals.max_relative,
        per_dim: report.constants.per_dim,
        constants,
        phases,
    };
    write_json(&ctx.out.join("summary.json"), &summary)?;

    let stab = format!("<= {STABILITY_TOL}");
    let mut checks =
        vec![CheckEntry::new("symbol_residual", worst, &format!("<= {SYMBOL_RESIDUAL_TOL:e}"), worst <= SYMBOL_RESIDUAL_TOL)];
    for p in &summary.phases {
        let ok = p.min_ratio > 0.0 && p.min_ratio_refined > 0.0 && p.relative_change <= STABILITY_TOL;
        checks.push(CheckEntry::new(&format!("phase_min_{}", p.name), p.relative_change, &stab, ok));
    }
    for c in &summary.constants {
        let ok = c.relative_change <= STABILITY_TOL;
        checks.push(CheckEntry::new(&format!("constant_{}", c.name), c.relative_change, &stab, ok).informational());
    }
    Ok(Outcome {
        checks,
        outputs: vec!["constants.csv".into(), "phase_bounds.csv".into(), "symbols.csv".into(), "summary.json".into()],
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// scatter-diag

#[derive(Serialize, Default)]
struct ScatterSummary {
    empty: bool,
    decay: Option<DecayFit>,
    linear_control_decay: Option<DecayFit>,
    scattering: Option<ScatteringReport>,
    stationary_phase_median_gap: Option<f64>,
    energy_growth_worst: Option<f64>,
    phase_warning: Option<String>,
}

#[derive(Serialize)]
struct StationaryRow {
    x: f64,
    xi: f64,
    predicted: f64,
    observed: f64,
}

/// Stationary-phase predictions against |u| at the final snapshot, for
/// points whose stationary frequency lies inside the excited band.
fn stationary_phase_rows(state: &WaveState, band: [f64; 2]) -> Vec<StationaryRow> {
    let u = dispersive_variable(state);
    let grid = state.grid();
    let t = state.t;
    let mut rows = Vec::new();
    for m in 0..grid.n() {
        let x = grid.x(m);
        if x == 0.0 {
            continue;
        }
        let xi = t * t / (4.0 * x * x);
        if xi < band[0] || xi > band[1] {
            continue;
        }
        if let Some(predicted) = stationary_phase_amplitude(&u, t, x) {
            rows.push(StationaryRow { x, xi: x.signum() * xi, predicted, observed: u.values()[m].norm() });
        }
    }
    rows
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

fn write_decay(path: &Path, run: &MonitoredRun, control: Option<&MonitoredRun>) -> Result<(), CliError> {
    let mut f = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(f, "run,t,sup_u,sup_linear").map_err(io)?;
    let tagged = std::iter::once(("nonlinear", run)).chain(control.map(|c| ("linear_control", c)));
    for (tag, r) in tagged {
        for rec in &r.records {
            writeln!(f, "{tag},{:.16e},{:.16e},{:.16e}", rec.t, rec.sup_u, rec.sup_linear).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

pub fn scatter_diag(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let e = &cfg.experiment;
    let initial = cfg.initial_state()?;
    let mut outcome = Outcome { outputs: vec!["summary.json".into()], ..Default::default() };
    if initial.h.is_zero() && initial.psi.is_zero() {
        write_json(&ctx.out.join("summary.json"), &ScatterSummary { empty: true, ..Default::default() })?;
        return Ok(outcome);
    }

    let solver = cfg.solver();
    let run = monitored_run(&solver, &initial, cfg.diagnostics()).map_err(suite_error)?;
    let mut f = create(&ctx.out.join(DIAGNOSTICS_FILE))?;
    write_csv(&run.records, cfg.diagnostics.monitored_xi.len(), &mut f)
        .and_then(|_| f.flush())
        .map_err(|err| CliError::io(&ctx.out.join(DIAGNOSTICS_FILE), err))?;
    outcome.outputs.push(DIAGNOSTICS_FILE.into());

    let window = (e.decay_window[0], e.decay_window[1]);
    let control = if e.linear_control {
        let mut lin = solver.clone();
        lin.linear_only = true;
        lin.t_final = lin.t_final.min(window.1);
        Some(monitored_run(&lin, &initial, cfg.diagnostics()).map_err(suite_error)?)
    } else {
        None
    };
    write_decay(&ctx.out.join("decay.csv"), &run, control.as_ref())?;
    outcome.outputs.push("decay.csv".into());

    let mut summary = ScatterSummary { phase_warning: run.phase_warning.clone(), ..Default::default() };
    let band = format!("{DECAY_TARGET} ± {DECAY_TOL}");
    match sup_decay(&run, window, solver.linear_only) {
        Ok(fit) => {
            let ok = within(fit.exponent, DECAY_TARGET, DECAY_TOL);
            outcome.checks.push(CheckEntry::new("decay_exponent", fit.exponent, &band, ok));
            summary.decay = Some(fit);
        }
        Err(err) => outcome.warnings.push(format!("decay fit skipped: {err}")),
    }
    if let Some(c) = &control {
        match sup_decay(c, window, true) {
            Ok(fit) => {
                let ok = within(fit.exponent, DECAY_TARGET, LINEAR_DECAY_TOL);
                let band = format!("{DECAY_TARGET} ± {LINEAR_DECAY_TOL}");
                outcome.checks.push(CheckEntry::new("linear_decay_exponent", fit.exponent, &band, ok));
                summary.linear_control_decay = Some(fit);
            }
            Err(err) => outcome.warnings.push(format!("linear decay fit skipped: {err}")),
        }
    }

    if !cfg.diagnostics.monitored_xi.is_empty() && solver.t_final >= 2.0 * e.late_t0 {
        let sc = scattering_report(&run, e.late_t0);
        let path = ctx.out.join("scattering.csv");
        let mut f = create(&path)?;
        let io = |err| CliError::io(&path, err);
        writeln!(f, "xi,modulus_variation,profile_variation,modified_variation").map_err(io)?;
        for m in 0..sc.xi.len() {
            writeln!(
                f,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                sc.xi[m], sc.modulus_variation[m], sc.profile_variation[m], sc.modified_variation[m]
            )
            .map_err(io)?;
            let mv = sc.modulus_variation[m];
            outcome.checks.push(CheckEntry::new(&format!("modulus_variation_{m}"), mv, &format!("<= {MODULUS_TOL}"), mv <= MODULUS_TOL));
            let gain = sc.profile_variation[m] / sc.modified_variation[m];
            let ok = gain >= MODIFIED_GAIN;
            outcome.checks.push(CheckEntry::new(&format!("modified_gain_{m}"), gain, &format!(">= {MODIFIED_GAIN}"), ok));
        }
        f.flush().map_err(io)?;
        outcome.outputs.push("scattering.csv".into());
        summary.scattering = Some(sc);
    }

    let rows = stationary_phase_rows(&run.final_state, e.band);
    let path = ctx.out.join("stationary_phase.csv");
    let mut f = create(&path)?;
    let io = |err| CliError::io(&path, err);
    writeln!(f, "x,xi,predicted,observed").map_err(io)?;
    for r in &rows {
        writeln!(f, "{:.16e},{:.16e},{:.16e},{:.16e}", r.x, r.xi, r.predicted, r.observed).map_err(io)?;
    }
    f.flush().map_err(io)?;
    outcome.outputs.push("stationary_phase.csv".into());
    summary.stationary_phase_median_gap =
        median(rows.iter().map(|r| (r.predicted - r.observed).abs() / r.observed).collect());
    if let Some(g) = summary.stationary_phase_median_gap {
        let ok = g <= STATIONARY_PHASE_TOL;
        outcome.checks.push(
            CheckEntry::new("stationary_phase_median_gap", g, &format!("<= {STATIONARY_PHASE_TOL}"), ok).informational(),
        );
    }

    let n0 = run.records[0].u_h_n0p;
    if n0 > 0.0 {
        let worst = run
            .records
            .iter()
            .map(|r| r.u_h_n0p / n0 / (1.0 + r.t).powf(ENERGY_GROWTH_EXPONENT))
            .fold(0.0, f64::max);
        let threshold = format!("<= 1 (ratio to (1+t)^{ENERGY_GROWTH_EXPONENT})");
        outcome.checks.push(CheckEntry::new("energy_growth", worst, &threshold, worst <= 1.0));
        summary.energy_growth_worst = Some(worst);
    }
    if let Some(w) = &run.phase_warning {
        outcome.warnings.push(w.clone());
    }
    write_json(&ctx.out.join("summary.json"), &summary)?;
    Ok(outcome)
}
