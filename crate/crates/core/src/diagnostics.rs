//! Weighted norms, modified energy, scaling-field norms, decay fits and the
//! modified-scattering phase accumulator.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dirichlet_neumann::{DnError, DnMethod, WaveState};
use crate::evolution::{dispersive_variable, hamiltonian, outer_mass_fraction, rhs, Trajectory};
use crate::spectral_core::{
    abs_deriv_pow, deriv, lp_project, lp_project_geq, lp_project_leq, psi_geq, psi_k, psi_leq, SpectralError,
    SpectralField,
};
use crate::transforms::{
    apply_normal_form, good_unknowns, normal_form_at_slots, normal_form_corrections, profile, profile_factor,
    profile_of, GoodUnknowns, SymbolTable, TransformError, CACHE_MAX_N,
};

/// Largest outer-region mass fraction for which x∂_x is meaningful.
pub const LOCALIZATION_TOL: f64 = 1e-8;

/// Largest relative change of the phase integrand between two samples.
pub const PHASE_STRIDE_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("state at t={t} is not localized: outer mass fraction {fraction:e} exceeds {LOCALIZATION_TOL:e}")]
    NotLocalized { t: f64, fraction: f64 },
    #[error("decay fit needs positive values; got {value} at t={t}")]
    NonPositive { t: f64, value: f64 },
    #[error("decay fit needs at least 3 samples in the window, got {0}")]
    TooFewPoints(usize),
    #[error("snapshot index {index} out of range ({len} snapshots)")]
    NoSnapshot { index: usize, len: usize },
    #[error(transparent)]
    Dn(#[from] DnError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Regularity indices of the monitored norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormParams {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub p: f64,
    pub p0: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { n0: 8.0, n1: 1.0, n2: 61.0 / 20.0, p: 0.2, p0: 1e-3 }
    }
}

impl NormParams {
    pub fn beta(&self) -> f64 {
        0.75 - self.p0
    }

    pub fn gamma(&self) -> f64 {
        self.n2 + 2.0 * self.p0
    }
}

/// Per-band pieces of a field: resolvable bands plus the two leftovers
/// below and above the band range, tagged with the band index whose weight
/// they receive.
fn pieces(f: &SpectralField) -> Vec<(i32, SpectralField)> {
    let (lo, hi) = f.grid().band_range();
    let mut out: Vec<(i32, SpectralField)> = (lo..=hi)
        .into_par_iter()
        .map(|k| (k, lp_project(f, k).expect("band in range")))
        .collect();
    out.push((lo - 1, lp_project_leq(f, lo - 1)));
    out.push((hi + 1, lp_project_geq(f, hi + 1)));
    out
}

fn pow2(x: f64) -> f64 {
    x.exp2()
}

/// ‖P f‖₂ by Parseval for the multiplier `m`, so empty bands give exact zeros.
fn band_l2(f: &SpectralField, m: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid();
    let s: f64 = f.coeffs().iter().enumerate().map(|(j, c)| (m(grid.wavenumber(j)) * c.norm()).powi(2)).sum();
    (s / grid.length()).sqrt()
}

fn band_l2_norms(f: &SpectralField) -> Vec<(i32, f64)> {
    let (lo, hi) = f.grid().band_range();
    let mut out: Vec<(i32, f64)> = (lo..=hi).map(|k| (k, band_l2(f, |xi| psi_k(xi, k)))).collect();
    out.push((lo - 1, band_l2(f, |xi| psi_leq(xi, lo - 1))));
    out.push((hi + 1, band_l2(f, |xi| psi_geq(xi, hi + 1))));
    out
}

/// [Σ_k (2^{Nk} + 2^{pk})² ‖P_k f‖²₂]^{1/2}.
pub fn sobolev_norm(f: &SpectralField, n: f64, p: f64) -> f64 {
    band_l2_norms(f)
        .iter()
        .map(|&(k, l2)| {
            let w = pow2(n * k as f64) + pow2(p * k as f64);
            (w * l2).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// L² mass left outside the resolvable band range: (below, above).
pub fn boundary_mass(f: &SpectralField) -> (f64, f64) {
    let (lo, hi) = f.grid().band_range();
    (band_l2(f, |xi| psi_leq(xi, lo - 1)), band_l2(f, |xi| psi_geq(xi, hi + 1)))
}

/// Euclidean combination of the componentwise Sobolev norms.
pub fn pair_sobolev_norm(a: &SpectralField, b: &SpectralField, n: f64, p: f64) -> f64 {
    sobolev_norm(a, n, p).hypot(sobolev_norm(b, n, p))
}

/// Σ_k (2^{γk₊} + 2^{bk₋})‖P_k f‖_∞; with `b = None` the weight is 2^{γk} + 1.
pub fn w_norm(f: &SpectralField, gamma: f64, b: Option<f64>) -> f64 {
    pieces(f)
        .iter()
        .map(|(k, g)| {
            let k = *k as f64;
            let w = match b {
                Some(b) => pow2(gamma * k.max(0.0)) + pow2(b * k.min(0.0)),
                None => pow2(gamma * k) + 1.0,
            };
            w * g.sup_norm()
        })
        .sum()
}

/// sup_ξ |ξ|^β (1 + |ξ|^γ) |f̂(ξ)|.
pub fn z_norm(f: &SpectralField, np: &NormParams) -> f64 {
    weighted_sup(f, |xi| xi.powf(np.beta()) * (1.0 + xi.powf(np.gamma())))
}

/// sup_ξ |ξ|^{1/4} (1 + |ξ|)^{N₂} |f̂(ξ)|, the other weight in circulation.
pub fn z_norm_alt(f: &SpectralField, np: &NormParams) -> f64 {
    weighted_sup(f, |xi| xi.powf(0.25) * (1.0 + xi).powf(np.n2))
}

fn weighted_sup(f: &SpectralField, w: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid();
    f.coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| w(grid.wavenumber(j).abs()) * c.norm())
        .fold(0.0, f64::max)
}

fn times_x(f: &SpectralField) -> SpectralField {
    let grid = f.grid();
    let v: Vec<f64> = f.values().iter().enumerate().map(|(m, c)| 2.0 * grid.x(m) * c.re).collect();
    SpectralField::from_real(grid, &v).expect("same grid")
}

/// (Sh, Sψ) from given time derivatives: S = t∂_t + 2x∂_x.
pub fn scaling_field_from(
    state: &WaveState,
    dt_h: &SpectralField,
    dt_psi: &SpectralField,
) -> Result<(SpectralField, SpectralField), DiagnosticsError> {
    let fraction = outer_mass_fraction(state);
    if fraction > LOCALIZATION_TOL {
        return Err(DiagnosticsError::NotLocalized { t: state.t, fraction });
    }
    let sh = dt_h.scale(state.t).add(&times_x(&deriv(&state.h)))?;
    let sp = dt_psi.scale(state.t).add(&times_x(&deriv(&state.psi)))?;
    Ok((sh, sp))
}

/// (Sh, Sψ) with ∂_t taken from the evolution equations.
pub fn scaling_field(state: &WaveState, method: &DnMethod) -> Result<(SpectralField, SpectralField), DiagnosticsError> {
    let (dh, dp) = rhs(state, method, true)?;
    scaling_field_from(state, &dh, &dp)
}

/// Same, for snapshot `index` of a trajectory.
pub fn trajectory_scaling_field(
    traj: &Trajectory,
    index: usize,
    method: &DnMethod,
) -> Result<(SpectralField, SpectralField), DiagnosticsError> {
    let s = traj
        .snapshots
        .get(index)
        .ok_or(DiagnosticsError::NoSnapshot { index, len: traj.snapshots.len() })?;
    scaling_field(s, method)
}

/// S applied to (h, |∇|^{1/2}ψ), using S|∇|^{1/2} = |∇|^{1/2}S − ½·2|∇|^{1/2}.
pub fn scaled_dispersive_pair(sh: &SpectralField, sp: &SpectralField, psi: &SpectralField) -> (SpectralField, SpectralField) {
    let second = abs_deriv_pow(sp, 0.5).sub(&abs_deriv_pow(psi, 0.5)).expect("same grid");
    (sh.clone(), second)
}

/// p-level modified energy and its parts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ModifiedEnergy {
    /// ½∫|∂ᵖU¹|² + |∂ᵖU²|².
    pub quadratic: f64,
    /// ∫∂ᵖU¹ ∂ᵖ[A₁(U¹,U¹) + A₂(U²,U²)] + ∫∂ᵖU² ∂ᵖB(U¹,U²).
    pub cubic: f64,
    /// quadratic + cubic.
    pub total: f64,
    /// ½∫|∂^{N₀}U¹|² + |∂^{N₀}U²|², left uncorrected.
    pub top_uncorrected: f64,
}

pub fn modified_energy(gu: &GoodUnknowns, st: &SymbolTable, np: &NormParams) -> Result<ModifiedEnergy, DiagnosticsError> {
    let d = |f: &SpectralField, s: f64| abs_deriv_pow(f, s);
    let (p1, p2) = (d(&gu.u1, np.p), d(&gu.u2, np.p));
    let quadratic = 0.5 * (p1.inner(&p1)? + p2.inner(&p2)?);
    st.prepare(gu.u1.grid());
    let (a, b) = normal_form_corrections(gu, st)?;
    let cubic = p1.inner(&d(&a, np.p))? + p2.inner(&d(&b, np.p))?;
    let (t1, t2) = (d(&gu.u1, np.n0), d(&gu.u2, np.n0));
    let top_uncorrected = 0.5 * (t1.inner(&t1)? + t2.inner(&t2)?);
    Ok(ModifiedEnergy { quadratic, cubic, total: quadratic + cubic, top_uncorrected })
}

/// G(t, ξ) = (|ξ|⁴/π) ∫₀ᵗ |f̂(s,ξ)|² ds/(s+1) at a few monitored frequencies,
/// accumulated by the trapezoid rule as samples arrive.
#[derive(Clone, Debug)]
pub struct ScatteringPhase {
    xi: Vec<f64>,
    phase: Vec<f64>,
    last: Option<(f64, Vec<f64>)>,
    worst_variation: f64,
    worst_xi: f64,
}

impl ScatteringPhase {
    pub fn new(xi: Vec<f64>) -> Self {
        let m = xi.len();
        Self { xi, phase: vec![0.0; m], last: None, worst_variation: 0.0, worst_xi: 0.0 }
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.xi
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    /// Feeds f̂(t, ξ) at the monitored frequencies. Samples must arrive in
    /// increasing time.
    pub fn update(&mut self, t: f64, fhat: &[Complex64]) {
        let cur: Vec<f64> = fhat.iter().map(|c| c.norm_sqr()).collect();
        if let Some((t0, prev)) = &self.last {
            let dt = t - t0;
            for (m, &xi) in self.xi.iter().enumerate() {
                let scale = xi.powi(4) / std::f64::consts::PI;
                self.phase[m] += scale * 0.5 * (prev[m] / (t0 + 1.0) + cur[m] / (t + 1.0)) * dt;
                let top = prev[m].max(cur[m]);
                if top > 0.0 {
                    let var = (cur[m] - prev[m]).abs() / top;
                    if var > self.worst_variation {
                        self.worst_variation = var;
                        self.worst_xi = xi;
                    }
                }
            }
        }
        self.last = Some((t, cur));
    }

    /// g = e^{iG} f̂ at the monitored frequencies.
    pub fn modified(&self, fhat: &[Complex64]) -> Vec<Complex64> {
        fhat.iter().zip(&self.phase).map(|(f, g)| f * Complex64::from_polar(1.0, *g)).collect()
    }

    /// Restores the accumulator from a stored sample (resume).
    pub fn restore(xi: Vec<f64>, phase: Vec<f64>, t: f64, fhat: &[Complex64]) -> Self {
        let last = Some((t, fhat.iter().map(|c| c.norm_sqr()).collect()));
        Self { xi, phase, last, worst_variation: 0.0, worst_xi: 0.0 }
    }

    pub fn worst_variation(&self) -> f64 {
        self.worst_variation
    }

    /// Warning text when the stride was too coarse for the trapezoid rule.
    pub fn stride_warning(&self) -> Option<String> {
        (self.worst_variation > PHASE_STRIDE_TOL).then(|| {
            format!(
                "phase integrand varied by {:.1}% between samples at xi={}; refine the output stride",
                100.0 * self.worst_variation,
                self.worst_xi
            )
        })
    }
}

/// sup over monitored frequencies and over t₁, t₂ ∈ [t, 2t] of |v(t₂) − v(t₁)|.
pub fn dyadic_variation(times: &[f64], series: &[Vec<Complex64>], t: f64) -> f64 {
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t && times[i] <= 2.0 * t).collect();
    let mut worst: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            for (x, y) in series[i].iter().zip(&series[j]) {
                worst = worst.max((x - y).norm());
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Least-squares slope of log value against log(1+t).
    pub exponent: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub points: usize,
    /// The window spans less than a decade in 1+t.
    pub short_window: bool,
}

/// Fits value ~ (1+t)^exponent over `window`.
pub fn decay_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit, DiagnosticsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(DiagnosticsError::NonPositive { t, value: v });
        }
        xs.push((1.0 + t).ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 3 {
        return Err(DiagnosticsError::TooFewPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - exponent * (x - mx)).powi(2)).sum();
    let stderr = (sse / (n as f64 - 2.0) / sxx).sqrt();
    let span = (xs[n - 1] - xs[0]) / std::f64::consts::LN_10;
    Ok(DecayFit { exponent, stderr, points: n, short_window: span < 1.0 })
}

/// Stationary-phase prediction of |e^{−itΛ}f(x)| for a profile given by its
/// coefficients: ξ_s = sgn(x) t²/(4x²), amplitude |f̂(ξ_s)| / √(2πt|Λ''(ξ_s)|).
/// `None` when ξ_s falls outside the resolved lattice.
pub fn stationary_phase_amplitude(fhat: &SpectralField, t: f64, x: f64) -> Option<f64> {
    if t <= 0.0 || x == 0.0 {
        return None;
    }
    let grid = fhat.grid();
    let xi = x.signum() * t * t / (4.0 * x * x);
    let dk = grid.dk();
    if xi.abs() < dk || xi.abs() >= grid.max_wavenumber() - dk {
        return None;
    }
    let s = xi / dk;
    let (i0, w) = (s.floor(), s - s.floor());
    let at = |i: f64| fhat.coeffs()[grid.slot(i as i64)].norm();
    let amp = (1.0 - w) * at(i0) + w * at(i0 + 1.0);
    let lam2 = 0.25 * xi.abs().powf(-1.5);
    Some(amp / (2.0 * std::f64::consts::PI * t * lam2).sqrt())
}

/// What the per-snapshot monitor computes.
#[derive(Clone, Debug)]
pub struct DiagnosticsConfig {
    pub params: NormParams,
    /// Frequencies whose profile and phase are tracked (snapped to the lattice).
    pub monitored_xi: Vec<f64>,
    pub modified_energy: bool,
    /// Try S-norms; snapshots that are not localized record zeros and `s_valid = false`.
    pub scaling: bool,
    pub dn_method: DnMethod,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            params: NormParams::default(),
            monitored_xi: Vec::new(),
            modified_energy: true,
            scaling: true,
            dn_method: DnMethod::Taylor3,
        }
    }
}

/// One row of diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub hamiltonian: f64,
    pub mass: f64,
    pub steepness: f64,
    pub u_h_n0p: f64,
    pub u_h_n1p: f64,
    pub su_h_n0p: f64,
    pub su_h_n1p: f64,
    pub s_valid: bool,
    pub w_n2: f64,
    /// sup_x |U¹ + iU²|.
    pub sup_u: f64,
    /// sup_x |h + i|∇|^{1/2}ψ|.
    pub sup_linear: f64,
    pub z_norm: f64,
    pub z_norm_alt: f64,
    /// The profile came from the normal-formed V (else from U, for large grids).
    pub z_from_v: bool,
    pub e_quadratic: f64,
    pub e_modi: f64,
    pub e_top_uncorrected: f64,
    /// Lattice pairs on the singular set of the normal form, dropped from every application.
    pub excluded_pairs: u64,
    pub monitored_xi: Vec<f64>,
    pub fhat: Vec<Complex64>,
    pub phase: Vec<f64>,
    pub g: Vec<Complex64>,
}

impl DiagnosticsRecord {
    pub fn csv_header(monitored: usize) -> String {
        let mut cols: Vec<String> = [
            "t",
            "hamiltonian",
            "mass",
            "steepness",
            "u_h_n0p",
            "u_h_n1p",
            "su_h_n0p",
            "su_h_n1p",
            "s_valid",
            "w_n2",
            "sup_u",
            "sup_linear",
            "z_norm",
            "z_norm_alt",
            "z_from_v",
            "e_quadratic",
            "e_modi",
            "e_top_uncorrected",
            "excluded_pairs",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for m in 0..monitored {
            for c in ["xi", "fhat_re", "fhat_im", "phase", "g_re", "g_im"] {
                cols.push(format!("{c}_{m}"));
            }
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let b = |x: bool| if x { "1".to_string() } else { "0".to_string() };
        let mut cols = vec![
            f(self.t),
            f(self.hamiltonian),
            f(self.mass),
            f(self.steepness),
            f(self.u_h_n0p),
            f(self.u_h_n1p),
            f(self.su_h_n0p),
            f(self.su_h_n1p),
            b(self.s_valid),
            f(self.w_n2),
            f(self.sup_u),
            f(self.sup_linear),
            f(self.z_norm),
            f(self.z_norm_alt),
            b(self.z_from_v),
            f(self.e_quadratic),
            f(self.e_modi),
            f(self.e_top_uncorrected),
            self.excluded_pairs.to_string(),
        ];
        for m in 0..self.monitored_xi.len() {
            cols.extend([
                f(self.monitored_xi[m]),
                f(self.fhat[m].re),
                f(self.fhat[m].im),
                f(self.phase[m]),
                f(self.g[m].re),
                f(self.g[m].im),
            ]);
        }
        cols.join(",")
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.t,
            self.hamiltonian,
            self.mass,
            self.steepness,
            self.u_h_n0p,
            self.u_h_n1p,
            self.su_h_n0p,
            self.su_h_n1p,
            self.w_n2,
            self.sup_u,
            self.sup_linear,
            self.z_norm,
            self.z_norm_alt,
            self.e_quadratic,
            self.e_modi,
            self.e_top_uncorrected,
        ];
        scalars.iter().all(|x| x.is_finite())
            && self.phase.iter().all(|x| x.is_finite())
            && self.fhat.iter().chain(&self.g).all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Writes records as CSV with 17 significant digits.
pub fn write_csv(records: &[DiagnosticsRecord], monitored: usize, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", DiagnosticsRecord::csv_header(monitored))?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Stateful per-snapshot consumer: owns the symbol table and the phase
/// accumulator, so it must see snapshots in time order.
pub struct Monitor {
    cfg: DiagnosticsConfig,
    symbols: SymbolTable,
    phase: ScatteringPhase,
    slots: Option<Vec<usize>>,
    last_t: Option<f64>,
    singular_pairs: Option<u64>,
}

impl Monitor {
    pub fn new(cfg: DiagnosticsConfig) -> Self {
        let phase = ScatteringPhase::new(Vec::new());
        Self { cfg, symbols: SymbolTable::default(), phase, slots: None, last_t: None, singular_pairs: None }
    }

    /// Continues an interrupted run whose last record was taken at `t` with
    /// accumulated `phase` and profile values `fhat` at the monitored slots.
    pub fn resume(&mut self, state: &WaveState, t: f64, phase: Vec<f64>, fhat: &[Complex64]) {
        self.slots_for(state);
        let xi = self.phase.frequencies().to_vec();
        self.phase = ScatteringPhase::restore(xi, phase, t, fhat);
        self.last_t = Some(t);
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn phase(&self) -> &ScatteringPhase {
        &self.phase
    }

    fn slots_for(&mut self, state: &WaveState) -> Vec<usize> {
        if let Some(s) = &self.slots {
            return s.clone();
        }
        let grid = state.grid();
        let slots: Vec<usize> =
            self.cfg.monitored_xi.iter().map(|&xi| grid.slot((xi / grid.dk()).round() as i64)).collect();
        let xi = slots.iter().map(|&j| grid.wavenumber(j)).collect();
        self.phase = ScatteringPhase::new(xi);
        self.slots = Some(slots.clone());
        slots
    }

    pub fn observe(&mut self, state: &WaveState) -> Result<DiagnosticsRecord, DiagnosticsError> {
        let np = self.cfg.params;
        let slots = self.slots_for(state);
        let singular_pairs =
            *self.singular_pairs.get_or_insert_with(|| self.symbols.singular_lattice_pairs(state.grid()) as u64);
        let method = &self.cfg.dn_method;
        let dn = method.result(state)?;
        let gu = good_unknowns(state, &dn)?;
        let grid = state.grid();
        let small = grid.n() <= CACHE_MAX_N;

        let (su_h_n0p, su_h_n1p, s_valid) = if self.cfg.scaling {
            match scaling_field(state, method) {
                Ok((sh, sp)) => {
                    let (a, b) = scaled_dispersive_pair(&sh, &sp, &state.psi);
                    (pair_sobolev_norm(&a, &b, np.n0, np.p), pair_sobolev_norm(&a, &b, np.n1, np.p), true)
                }
                Err(DiagnosticsError::NotLocalized { .. }) => (0.0, 0.0, false),
                Err(e) => return Err(e),
            }
        } else {
            (0.0, 0.0, false)
        };

        let (z_norm, z_norm_alt) = if small {
            let nf = apply_normal_form(&gu, &self.symbols)?;
            let f = profile(&nf, state.t);
            (self::z_norm(&f, &np), self::z_norm_alt(&f, &np))
        } else {
            let f = profile_of(&gu.complex(), state.t);
            (self::z_norm(&f, &np), self::z_norm_alt(&f, &np))
        };

        let energy = if self.cfg.modified_energy {
            modified_energy(&gu, &self.symbols, &np)?
        } else {
            ModifiedEnergy::default()
        };

        let fhat: Vec<Complex64> = if slots.is_empty() {
            Vec::new()
        } else {
            normal_form_at_slots(&gu, &self.symbols, &slots)?
                .iter()
                .zip(self.phase.frequencies())
                .map(|(v, &xi)| v * profile_factor(xi, state.t))
                .collect()
        };
        if self.last_t.is_none_or(|t0| state.t > t0) {
            self.phase.update(state.t, &fhat);
            self.last_t = Some(state.t);
        }
        let g = self.phase.modified(&fhat);

        Ok(DiagnosticsRecord {
            t: state.t,
            hamiltonian: hamiltonian(state, method)?,
            mass: state.h.mean().re * grid.length(),
            steepness: state.steepness(),
            u_h_n0p: pair_sobolev_norm(&gu.u1, &gu.u2, np.n0, np.p),
            u_h_n1p: pair_sobolev_norm(&gu.u1, &gu.u2, np.n1, np.p),
            su_h_n0p,
            su_h_n1p,
            s_valid,
            w_n2: w_norm(&gu.u1, np.n2, None) + w_norm(&gu.u2, np.n2, None),
            sup_u: gu.complex().sup_norm(),
            sup_linear: dispersive_variable(state).sup_norm(),
            z_norm,
            z_norm_alt,
            z_from_v: small,
            e_quadratic: energy.quadratic,
            e_modi: energy.total,
            e_top_uncorrected: energy.top_uncorrected,
            excluded_pairs: singular_pairs,
            monitored_xi: self.phase.frequencies().to_vec(),
            fhat,
            phase: self.phase.phase().to_vec(),
            g,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::linear_propagate;
    use crate::spectral_core::Grid;
    use std::f64::consts::PI;

    fn box2pi(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn sobolev_norm_of_cosine() {
        let f = SpectralField::from_real_fn(&box2pi(64), f64::cos);
        assert!((sobolev_norm(&f, 1.0, 0.2) - 2.0 * PI.sqrt()).abs() < 1e-12);
        // 2^{8k} amplifies transform roundoff in the empty high bands.
        assert!((sobolev_norm(&f, 8.0, 0.2) - 2.0 * PI.sqrt()).abs() < 1e-6);
        assert_eq!(sobolev_norm(&SpectralField::zeros(&box2pi(64)), 8.0, 0.2), 0.0);
    }

    #[test]
    fn sobolev_norm_monotone_in_n() {
        let f = SpectralField::from_real_fn(&box2pi(64), |x| (3.0 * x).sin() + 0.1 * (11.0 * x).cos() + 0.3);
        let mut last = 0.0;
        for n in [0.0, 1.0, 2.0, 8.0] {
            let v = sobolev_norm(&f, n, 0.2);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn boundary_mass_catches_mean_and_nyquist_edge() {
        let g = box2pi(16);
        let f = SpectralField::from_real_fn(&g, |_| 1.0);
        let (lo, hi) = boundary_mass(&f);
        assert!((lo - f.l2_norm()).abs() < 1e-12 && hi == 0.0);
    }

    #[test]
    fn z_norm_of_cosine_and_homogeneity() {
        let f = SpectralField::from_real_fn(&box2pi(32), f64::cos);
        let np = NormParams::default();
        assert!((z_norm(&f, &np) - 2.0 * PI).abs() < 1e-12);
        assert!((z_norm(&f.scale(-3.0), &np) - 3.0 * z_norm(&f, &np)).abs() < 1e-11);
        assert_eq!(z_norm(&SpectralField::zeros(&box2pi(32)), &np), 0.0);
    }

    #[test]
    fn w_norm_weights() {
        let f = SpectralField::from_real_fn(&box2pi(32), f64::cos);
        // Band 0 only, sup |cos| = 1, weight 2^0 + 1.
        assert!((w_norm(&f, 61.0 / 20.0, None) - 2.0).abs() < 1e-12);
        assert!((w_norm(&f, 61.0 / 20.0, Some(0.5)) - 2.0).abs() < 1e-12);
    }

    fn packet(grid: &Grid) -> WaveState {
        let h = SpectralField::from_real_fn(grid, |x| 1e-3 * (-x * x / 32.0).exp() * (2.0 * x).cos());
        WaveState::new(h, SpectralField::zeros(grid), 0.0).unwrap()
    }

    #[test]
    fn scaling_field_parity_and_zero() {
        // h even ⇒ ∂_x h odd ⇒ x∂_x h even.
        let grid = Grid::new(1024, 128.0).unwrap();
        let s = packet(&grid);
        let (sh, _) = scaling_field(&s, &DnMethod::Taylor3).unwrap();
        let v = sh.real_values();
        for m in 1..grid.n() / 2 {
            assert!((v[m] - v[grid.n() - m]).abs() < 1e-12);
        }
        let z = WaveState::zero(&grid);
        let (a, b) = scaling_field(&z, &DnMethod::Taylor3).unwrap();
        assert!(a.is_zero() && b.is_zero());
    }

    #[test]
    fn scaling_field_rejects_wrapped_mass() {
        let g = box2pi(32);
        let s = WaveState::new(SpectralField::from_real_fn(&g, f64::cos), SpectralField::zeros(&g), 0.0).unwrap();
        assert!(matches!(scaling_field(&s, &DnMethod::Taylor3), Err(DiagnosticsError::NotLocalized { .. })));
    }

    #[test]
    fn scaled_linear_solution_is_conserved() {
        // (∂_t + iΛ) commutes with S up to (∂_t + iΛ) itself, so S u solves
        // the linear equation too and its L² norm is constant.
        let grid = Grid::new(2048, 256.0).unwrap();
        let s0 = packet(&grid);
        let su_norm = |t: f64| {
            let (h, psi) = linear_propagate(&s0.h, &s0.psi, t);
            let st = WaveState::new(h, psi, t).unwrap();
            let (dh, dp) = (abs_deriv_pow(&st.psi, 1.0), st.h.scale(-1.0));
            let (sh, sp) = scaling_field_from(&st, &dh, &dp).unwrap();
            let (a, b) = scaled_dispersive_pair(&sh, &sp, &st.psi);
            a.l2_norm().hypot(b.l2_norm())
        };
        let (n1, n2) = (su_norm(10.0), su_norm(20.0));
        assert!(((n2 - n1) / n1).abs() < 1e-8, "{n1} {n2}");
    }

    #[test]
    fn modified_energy_zero_and_small_correction() {
        let st = SymbolTable::default();
        let np = NormParams::default();
        let g = box2pi(32);
        let gu_of = |eps: f64| {
            let h = SpectralField::from_real_fn(&g, |x| eps * (x.cos() + 0.3 * (2.0 * x).sin()));
            let psi = SpectralField::from_real_fn(&g, |x| eps * (0.8 * x.sin() - 0.2 * (3.0 * x).cos()));
            let s = WaveState::new(h, psi, 0.0).unwrap();
            good_unknowns(&s, &DnMethod::Taylor3.result(&s).unwrap()).unwrap()
        };
        let e0 = modified_energy(&gu_of(0.0), &st, &np).unwrap();
        assert_eq!(e0.total, 0.0);
        let rel = |eps: f64| {
            let e = modified_energy(&gu_of(eps), &st, &np).unwrap();
            e.cubic.abs() / e.quadratic
        };
        let slope = (rel(1e-2) / rel(5e-3)).log2();
        assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn phase_of_constant_integrand_is_logarithmic() {
        let xi = 1.5;
        let mut ph = ScatteringPhase::new(vec![xi]);
        let c = Complex64::new(0.3, 0.4);
        let n = 20000;
        let t_end: f64 = 10.0;
        for i in 0..=n {
            ph.update(t_end * i as f64 / n as f64, &[c]);
        }
        let exact = xi.powi(4) / PI * c.norm_sqr() * (1.0 + t_end).ln();
        assert!((ph.phase()[0] - exact).abs() < 1e-7 * exact);
        let g = ph.modified(&[c]);
        assert!((g[0].norm() - c.norm()).abs() < 1e-15);
        assert!(ph.stride_warning().is_none());
    }

    #[test]
    fn phase_of_zero_stays_zero_and_coarse_stride_warns() {
        let mut ph = ScatteringPhase::new(vec![1.0, 2.0]);
        let z = Complex64::new(0.0, 0.0);
        ph.update(0.0, &[z, z]);
        ph.update(1.0, &[z, z]);
        assert_eq!(ph.phase(), &[0.0, 0.0]);
        ph.update(2.0, &[Complex64::new(1.0, 0.0), z]);
        ph.update(3.0, &[Complex64::new(0.5, 0.0), z]);
        assert!(ph.stride_warning().is_some());
    }

    #[test]
    fn decay_fit_recovers_exponent_and_rejects_zero() {
        let ts: Vec<f64> = (0..50).map(|i| 5.0 + 3.0 * i as f64).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 2.0 * (1.0 + t).powf(-0.5)).collect();
        let fit = decay_fit(&ts, &vs, (0.0, 1e9)).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12 && fit.stderr < 1e-10);
        assert!(!fit.short_window);
        let zeros = vec![0.0; ts.len()];
        assert!(matches!(decay_fit(&ts, &zeros, (0.0, 1e9)), Err(DiagnosticsError::NonPositive { .. })));
        assert!(decay_fit(&ts[..10], &vs[..10], (0.0, 1e9)).unwrap().short_window);
    }

    #[test]
    fn linear_packet_decays_at_half_rate_and_matches_stationary_phase() {
        let grid = Grid::new(4096, 1024.0).unwrap();
        let s0 = crate::evolution::band_limited_packet(&grid, 5e-3, 0.5, 4.0).unwrap();
        let f = dispersive_variable(&s0);
        let times: Vec<f64> = (0..=12).map(|i| 40.0 * 1.2f64.powi(i)).collect();
        let at = |t: f64| {
            let (h, psi) = linear_propagate(&s0.h, &s0.psi, t);
            dispersive_variable(&WaveState::new(h, psi, t).unwrap())
        };
        let sups: Vec<f64> = times.iter().map(|&t| at(t).sup_norm()).collect();
        let fit = decay_fit(&times, &sups, (0.0, 1e9)).unwrap();
        assert!((fit.exponent + 0.5).abs() < 0.05, "{fit:?}");

        let t = 300.0;
        let u = at(t);
        // Λ'(ξ) = x/t at ξ = 2.
        let x = t / (2.0 * 2f64.sqrt());
        let m = ((x + 512.0) / grid.dx()).round() as usize;
        let pred = stationary_phase_amplitude(&f, t, grid.x(m)).unwrap();
        let got = u.values()[m].norm();
        assert!((pred - got).abs() < 0.2 * got, "{pred} {got}");
    }

    #[test]
    fn dyadic_variation_window() {
        let one = Complex64::new(1.0, 0.0);
        let times = [1.0, 2.0, 3.0, 4.0, 9.0];
        let series: Vec<Vec<Complex64>> = [0.0, 1.0, 3.0, 2.0, 100.0].iter().map(|&v| vec![one * v]).collect();
        assert_eq!(dyadic_variation(&times, &series, 2.0), 2.0);
    }

    #[test]
    fn record_csv_round_trips_precision() {
        let g = box2pi(32);
        let h = SpectralField::from_real_fn(&g, |x| 0.01 * x.cos());
        let s = WaveState::new(h, SpectralField::zeros(&g), 0.0).unwrap();
        let mut mon = Monitor::new(DiagnosticsConfig { monitored_xi: vec![1.0], scaling: false, ..Default::default() });
        let r = mon.observe(&s).unwrap();
        assert!(r.is_finite());
        let row = r.csv_row();
        let first: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(first, r.hamiltonian);
        assert_eq!(
            DiagnosticsRecord::csv_header(1).split(',').count(),
            row.split(',').count()
        );
    }
}
