//! Time stepping of the water-wave system with g = 1.

use num_complex::Complex64;
use thiserror::Error;

use crate::dirichlet_neumann::{DnError, DnMethod, WaveState};
use crate::spectral_core::{abs_deriv, abs_deriv_pow, deriv, smootherstep, Grid, SpectralError, SpectralField};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("non-finite state at t={t}")]
    BlowUp { t: f64, last_good: Box<WaveState> },
    #[error("DN evaluation failed at t={t}: {source}")]
    Dn {
        t: f64,
        #[source]
        source: DnError,
        last_good: Box<WaveState>,
    },
    #[error("localization lost at t={t}: outer-band mass fraction {fraction:.3e} > {limit:.1e}")]
    Localization { t: f64, fraction: f64, limit: f64, last_good: Box<WaveState> },
    #[error("snapshot consumer failed at t={t}: {message}")]
    Observer { t: f64, message: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl EvolutionError {
    pub fn last_good(&self) -> Option<&WaveState> {
        match self {
            EvolutionError::BlowUp { last_good, .. }
            | EvolutionError::Dn { last_good, .. }
            | EvolutionError::Localization { last_good, .. } => Some(last_good),
            _ => None,
        }
    }
}

/// Largest admissible dt·max|ξ|^{1/2} for plain RK4.
pub const CFL_LIMIT: f64 = 2.8;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    pub dn_method: DnMethod,
    pub dealias: bool,
    /// Relative coefficient floor; `None` disables the filter.
    pub krasny_floor: Option<f64>,
    pub output_stride: usize,
    pub integrating_factor: bool,
    /// Drop every nonlinear term.
    pub linear_only: bool,
    /// Abort when more than this fraction of the L² mass of h + i|∇|^{1/2}ψ
    /// sits in the outer 10% of the box on each side.
    pub localization_limit: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_final: 1.0,
            dn_method: DnMethod::Taylor3,
            dealias: true,
            krasny_floor: Some(1e-13),
            output_stride: 1,
            integrating_factor: true,
            linear_only: false,
            localization_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, max_wavenumber: f64) -> Result<(), EvolutionError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EvolutionError::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(EvolutionError::Config(format!("t_final = {} must be nonnegative", self.t_final)));
        }
        if self.output_stride == 0 {
            return Err(EvolutionError::Config("output_stride must be at least 1".into()));
        }
        let cfl = self.dt * max_wavenumber.sqrt();
        if !self.integrating_factor && cfl > CFL_LIMIT {
            return Err(EvolutionError::Config(format!("dt*sqrt(kmax) = {cfl:.3} exceeds {CFL_LIMIT}")));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Time derivative (∂_t h, ∂_t ψ).
pub fn rhs(
    state: &WaveState,
    method: &DnMethod,
    dealias: bool,
) -> Result<(SpectralField, SpectralField), DnError> {
    let (h, psi) = (&state.h, &state.psi);
    let g = method.apply(h, psi, dealias)?;
    let hx = deriv(h);
    let px = deriv(psi);
    let num = g.add(&hx.product(&px, dealias)?)?;
    let num2 = num.product(&num, dealias)?;
    let den = hx.product(&hx, dealias)?;
    let q: Vec<f64> =
        num2.values().iter().zip(den.values()).map(|(n, d)| n.re / (2.0 * (1.0 + d.re))).collect();
    let q = SpectralField::from_real(h.grid(), &q)?;
    let dpsi = q.sub(h)?.axpy(-0.5, &px.product(&px, dealias)?)?;
    Ok((g, dpsi))
}

fn linear_rhs(state: &WaveState) -> (SpectralField, SpectralField) {
    (abs_deriv(&state.psi), state.h.scale(-1.0))
}

/// Nonlinear remainder N(w) = rhs(w) − L w.
fn nonlinear(state: &WaveState, cfg: &SolverConfig) -> Result<(SpectralField, SpectralField), DnError> {
    if cfg.linear_only {
        let z = SpectralField::zeros(state.grid());
        return Ok((z.clone(), z));
    }
    let (dh, dp) = rhs(state, &cfg.dn_method, cfg.dealias)?;
    let (lh, lp) = linear_rhs(state);
    Ok((dh.sub(&lh)?, dp.sub(&lp)?))
}

fn full_rhs(state: &WaveState, cfg: &SolverConfig) -> Result<(SpectralField, SpectralField), DnError> {
    if cfg.linear_only {
        return Ok(linear_rhs(state));
    }
    rhs(state, &cfg.dn_method, cfg.dealias)
}

/// Exact flow of ∂_t h = |∇|ψ, ∂_t ψ = −h over time `tau`, mode by mode.
pub fn linear_propagate(h: &SpectralField, psi: &SpectralField, tau: f64) -> (SpectralField, SpectralField) {
    let grid = h.grid();
    let n = grid.n();
    let mut hc = Vec::with_capacity(n);
    let mut pc = Vec::with_capacity(n);
    for j in 0..n {
        let (a, b) = (h.coeffs()[j], psi.coeffs()[j]);
        let w = grid.wavenumber(j).abs().sqrt();
        if w == 0.0 {
            hc.push(a);
            pc.push(b - a * tau);
        } else {
            let (s, c) = (w * tau).sin_cos();
            hc.push(a * c + b * (w * s));
            pc.push(b * c - a * (s / w));
        }
    }
    (
        SpectralField::from_coeffs(grid, hc, h.is_real()).expect("grid length"),
        SpectralField::from_coeffs(grid, pc, psi.is_real()).expect("grid length"),
    )
}

fn pair_axpy(
    base: &(SpectralField, SpectralField),
    c: f64,
    k: &(SpectralField, SpectralField),
) -> Result<(SpectralField, SpectralField), SpectralError> {
    Ok((base.0.axpy(c, &k.0)?, base.1.axpy(c, &k.1)?))
}

fn prop(p: &(SpectralField, SpectralField), tau: f64) -> (SpectralField, SpectralField) {
    linear_propagate(&p.0, &p.1, tau)
}

fn as_state(p: (SpectralField, SpectralField), t: f64) -> WaveState {
    WaveState { h: p.0, psi: p.1, t }
}

fn dn_err(state: &WaveState) -> impl Fn(DnError) -> EvolutionError + '_ {
    move |e| EvolutionError::Dn { t: state.t, source: e, last_good: Box::new(state.clone()) }
}

fn canonical(f: &SpectralField) -> SpectralField {
    SpectralField::from_coeffs(f.grid(), f.coeffs().to_vec(), f.is_real()).expect("same grid")
}

/// One RK4 step (Lawson integrating factor when enabled), then the Krasny filter.
pub fn step(state: &WaveState, dt: f64, cfg: &SolverConfig) -> Result<WaveState, EvolutionError> {
    let w = (state.h.clone(), state.psi.clone());
    let t = state.t;
    let err = dn_err(state);
    let next = if cfg.integrating_factor {
        let k1 = nonlinear(state, cfg).map_err(&err)?;
        let half = prop(&w, 0.5 * dt);
        let a = prop(&pair_axpy(&w, 0.5 * dt, &k1)?, 0.5 * dt);
        let k2 = nonlinear(&as_state(a, t + 0.5 * dt), cfg).map_err(&err)?;
        let b = pair_axpy(&half, 0.5 * dt, &k2)?;
        let k3 = nonlinear(&as_state(b, t + 0.5 * dt), cfg).map_err(&err)?;
        let full = prop(&w, dt);
        let c = pair_axpy(&full, dt, &prop(&k3, 0.5 * dt))?;
        let k4 = nonlinear(&as_state(c, t + dt), cfg).map_err(&err)?;
        let mid = prop(&(k2.0.add(&k3.0)?, k2.1.add(&k3.1)?), 0.5 * dt);
        let k1f = prop(&k1, dt);
        let mut out = pair_axpy(&full, dt / 6.0, &k1f)?;
        out = pair_axpy(&out, dt / 3.0, &mid)?;
        pair_axpy(&out, dt / 6.0, &k4)?
    } else {
        let k1 = full_rhs(state, cfg).map_err(&err)?;
        let k2 = full_rhs(&as_state(pair_axpy(&w, 0.5 * dt, &k1)?, t + 0.5 * dt), cfg).map_err(&err)?;
        let k3 = full_rhs(&as_state(pair_axpy(&w, 0.5 * dt, &k2)?, t + 0.5 * dt), cfg).map_err(&err)?;
        let k4 = full_rhs(&as_state(pair_axpy(&w, dt, &k3)?, t + dt), cfg).map_err(&err)?;
        let mut out = pair_axpy(&w, dt / 6.0, &k1)?;
        out = pair_axpy(&out, dt / 3.0, &k2)?;
        out = pair_axpy(&out, dt / 3.0, &k3)?;
        pair_axpy(&out, dt / 6.0, &k4)?
    };
    let (h, psi) = next;
    // Rebuilding from coefficients makes the state a function of its
    // coefficients alone, so a run resumed from stored coefficients
    // continues bit for bit.
    let (h, psi) = match cfg.krasny_floor {
        Some(floor) => (h.krasny_filter(floor), psi.krasny_filter(floor)),
        None => (canonical(&h), canonical(&psi)),
    };
    let out = WaveState { h, psi, t: t + dt };
    if !out.is_finite() {
        return Err(EvolutionError::BlowUp { t: out.t, last_good: Box::new(state.clone()) });
    }
    Ok(out)
}

/// ℋ = ½∫ψ G(h)ψ + ½∫h².
pub fn hamiltonian(state: &WaveState, method: &DnMethod) -> Result<f64, DnError> {
    let g = method.apply(&state.h, &state.psi, true)?;
    Ok(0.5 * state.psi.inner(&g)? + 0.5 * state.h.inner(&state.h)?)
}

/// Linear-energy density carrier u = h + i|∇|^{1/2}ψ.
pub fn dispersive_variable(state: &WaveState) -> SpectralField {
    let half = abs_deriv_pow(&state.psi, 0.5);
    let n = state.grid().n();
    let coeffs: Vec<Complex64> =
        (0..n).map(|j| state.h.coeffs()[j] + Complex64::new(0.0, 1.0) * half.coeffs()[j]).collect();
    SpectralField::from_coeffs(state.grid(), coeffs, false).expect("grid length")
}

/// Fraction of ∫|u|² with |x| > 0.4 L.
pub fn outer_mass_fraction(state: &WaveState) -> f64 {
    let u = dispersive_variable(state);
    let grid = state.grid();
    let cut = 0.4 * grid.length();
    let (mut outer, mut total) = (0.0, 0.0);
    for (m, v) in u.values().iter().enumerate() {
        let e = v.norm_sqr();
        total += e;
        if grid.x(m).abs() > cut {
            outer += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// Snapshots emitted on the output stride.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub snapshots: Vec<WaveState>,
    /// Global step index of each snapshot.
    pub steps: Vec<usize>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

/// Advances from `initial` (taken to sit at global step `start_step`, time
/// `start_step * dt`) to `t_final`. `on_snapshot` sees every emitted state;
/// times are always `step * dt`, so a resumed run reproduces the same grid
/// of times bit for bit. The initial state is rebuilt from its coefficients
/// like every later one.
pub fn run_from(
    cfg: &SolverConfig,
    initial: &WaveState,
    start_step: usize,
    keep: bool,
    mut on_snapshot: impl FnMut(&WaveState, usize) -> Result<(), String>,
) -> Result<Trajectory, EvolutionError> {
    cfg.validate(initial.grid().max_wavenumber())?;
    let n_steps = cfg.n_steps();
    let mut traj = Trajectory::default();
    let mut state =
        WaveState { h: canonical(&initial.h), psi: canonical(&initial.psi), t: start_step as f64 * cfg.dt };
    let mut emit = |s: &WaveState, i: usize, traj: &mut Trajectory| -> Result<(), EvolutionError> {
        on_snapshot(s, i).map_err(|message| EvolutionError::Observer { t: s.t, message })?;
        if keep {
            traj.snapshots.push(s.clone());
            traj.steps.push(i);
        }
        Ok(())
    };
    let check_local = |s: &WaveState, last: &WaveState| -> Result<(), EvolutionError> {
        if let Some(limit) = cfg.localization_limit {
            let fraction = outer_mass_fraction(s);
            if fraction > limit {
                return Err(EvolutionError::Localization { t: s.t, fraction, limit, last_good: Box::new(last.clone()) });
            }
        }
        Ok(())
    };
    check_local(&state, &state)?;
    if start_step == 0 || !start_step.is_multiple_of(cfg.output_stride) {
        emit(&state, start_step, &mut traj)?;
    }
    for i in start_step + 1..=n_steps {
        let mut next = step(&state, cfg.dt, cfg)?;
        next.t = i as f64 * cfg.dt;
        check_local(&next, &state)?;
        state = next;
        if i % cfg.output_stride == 0 || i == n_steps {
            emit(&state, i, &mut traj)?;
        }
    }
    Ok(traj)
}

/// Full run from t = 0 keeping every snapshot.
pub fn run(cfg: &SolverConfig, initial: &WaveState) -> Result<Trajectory, EvolutionError> {
    run_from(cfg, initial, 0, true, |_, _| Ok(()))
}

/// Real, even elevation whose spectrum is a Gaussian centered in the band
/// `lo < |ξ| < hi` and smoothly cut off at its edges; ψ = 0, sup|h| = amplitude.
pub fn band_limited_packet(grid: &Grid, amplitude: f64, lo: f64, hi: f64) -> Result<WaveState, EvolutionError> {
    if !(0.0 < lo && lo < hi && hi < grid.max_wavenumber()) {
        return Err(EvolutionError::Config(format!("packet band [{lo}, {hi}] must sit inside (0, {}]", grid.max_wavenumber())));
    }
    let (mid, width, ramp) = (0.5 * (lo + hi), 0.25 * (hi - lo), 0.125 * (hi - lo));
    let coeffs: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .map(|&xi| {
            let a = xi.abs();
            let w = smootherstep((a - lo) / ramp) * smootherstep((hi - a) / ramp);
            Complex64::new(w * (-(a - mid).powi(2) / (2.0 * width * width)).exp(), 0.0)
        })
        .collect();
    let h = SpectralField::from_coeffs(grid, coeffs, true)?;
    let peak = h.sup_norm();
    let h = if peak > 0.0 { h.scale(amplitude / peak) } else { h };
    WaveState::new(h, SpectralField::zeros(grid), 0.0).map_err(|e| EvolutionError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::Grid;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(64, 2.0 * PI).unwrap()
    }

    #[test]
    fn flat_rhs_example() {
        let g = grid();
        let st = WaveState::new(SpectralField::zeros(&g), SpectralField::from_real_fn(&g, f64::cos), 0.0).unwrap();
        let (dh, dp) = rhs(&st, &DnMethod::Taylor3, true).unwrap();
        assert!(dh.sub(&st.psi).unwrap().sup_norm() < 1e-14);
        let want = SpectralField::from_real_fn(&g, |x| 0.5 * (2.0 * x).cos());
        assert!(dp.sub(&want).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn zero_state_is_stationary() {
        let g = grid();
        let st = WaveState::zero(&g);
        let cfg = SolverConfig::default();
        let next = step(&st, 0.1, &cfg).unwrap();
        assert!(next.h.is_zero() && next.psi.is_zero());
    }

    #[test]
    fn hamiltonian_single_modes() {
        let g = grid();
        let a = WaveState::new(SpectralField::zeros(&g), SpectralField::from_real_fn(&g, f64::cos), 0.0).unwrap();
        let b = WaveState::new(SpectralField::from_real_fn(&g, f64::cos), SpectralField::zeros(&g), 0.0).unwrap();
        assert!((hamiltonian(&a, &DnMethod::Taylor3).unwrap() - PI / 2.0).abs() < 1e-13);
        assert!((hamiltonian(&b, &DnMethod::Taylor3).unwrap() - PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn linear_flow_is_exact_with_integrating_factor() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| (3.0 * x).cos() + 0.2 * x.sin());
        let st = WaveState::new(h.clone(), SpectralField::zeros(&g), 0.0).unwrap();
        let cfg = SolverConfig { linear_only: true, krasny_floor: None, ..Default::default() };
        // One period of mode 1 is 2π; mode 3 then has gone round sqrt(3) times.
        let mut s = st.clone();
        let dt = 2.0 * PI / 100.0;
        for _ in 0..100 {
            s = step(&s, dt, &cfg).unwrap();
        }
        let (he, pe) = linear_propagate(&h, &SpectralField::zeros(&g), 2.0 * PI);
        assert!(s.h.sub(&he).unwrap().l2_norm() < 1e-10);
        assert!(s.psi.sub(&pe).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn time_reversal() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.01 * x.cos());
        let psi = SpectralField::from_real_fn(&g, |x| 0.01 * (2.0 * x).sin());
        let st = WaveState::new(h, psi, 0.0).unwrap();
        let cfg = SolverConfig { krasny_floor: None, ..Default::default() };
        let fwd = step(&st, 0.05, &cfg).unwrap();
        let back = step(&fwd, -0.05, &cfg).unwrap();
        assert!(back.h.sub(&st.h).unwrap().l2_norm() < 1e-9);
        assert!(back.psi.sub(&st.psi).unwrap().l2_norm() < 1e-9);
    }

    #[test]
    fn cfl_guard_without_integrating_factor() {
        let cfg = SolverConfig { dt: 1.0, integrating_factor: false, ..Default::default() };
        assert!(cfg.validate(32.0).is_err());
        let cfg = SolverConfig { dt: -1.0, ..Default::default() };
        assert!(matches!(cfg.validate(32.0), Err(EvolutionError::Config(m)) if m.contains("dt")));
    }

    #[test]
    fn mass_is_conserved_exactly() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.02 * x.cos() + 0.01 * (2.0 * x).sin() + 0.003);
        let psi = SpectralField::from_real_fn(&g, |x| 0.01 * (3.0 * x).sin());
        let st = WaveState::new(h, psi, 0.0).unwrap();
        let cfg = SolverConfig { dt: 0.05, t_final: 1.0, ..Default::default() };
        let traj = run(&cfg, &st).unwrap();
        let m0 = st.h.mean().re;
        let m1 = traj.snapshots.last().unwrap().h.mean().re;
        assert!((m0 - m1).abs() < 1e-15);
    }
}
