//! Run configuration: TOML with sections grid, time, dn, diagnostics and
//! experiment. Every section and key is optional; unknown keys are errors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsConfig, NormParams};
use crate::dirichlet_neumann::{DnMethod, FixedPointConfig, WaveState};
use crate::evolution::{band_limited_packet, SolverConfig};
use crate::spectral_core::{Grid, SpectralField};

use super::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub dn: DnSection,
    pub diagnostics: DiagnosticsSection,
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 512, length: 2.0 * PI }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub t_final: f64,
    pub output_stride: usize,
    pub integrating_factor: bool,
    pub linear_only: bool,
    pub dealias: bool,
    /// Relative coefficient floor; 0 disables the filter.
    pub krasny_floor: f64,
    /// Outer-mass fraction that aborts the run; 0 disables the check.
    pub localization_limit: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_final: 1.0,
            output_stride: 1,
            integrating_factor: true,
            linear_only: false,
            dealias: true,
            krasny_floor: 1e-13,
            localization_limit: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DnKind {
    Taylor3,
    FixedPoint,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnSection {
    pub method: DnKind,
    pub z_max: f64,
    pub nz: usize,
    /// Base vertical resolution of the Richardson-extrapolated strip oracle.
    pub oracle_nz: usize,
}

impl Default for DnSection {
    fn default() -> Self {
        Self { method: DnKind::Taylor3, z_max: 8.0, nz: 256, oracle_nz: 128 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub p0: f64,
    pub monitored_xi: Vec<f64>,
    pub modified_energy: bool,
    pub scaling: bool,
    /// When set, simulate fails the run if the relative Hamiltonian drift exceeds it.
    pub hamiltonian_tol: Option<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { p0: 1e-3, monitored_xi: Vec::new(), modified_energy: true, scaling: true, hamiltonian_tol: None }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Flat,
    StandingWave,
    Packet,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub amplitude: f64,
    /// Wavenumber of the standing wave.
    pub mode: f64,
    pub band: [f64; 2],
    /// dn-check amplitudes, largest first.
    pub eps: Vec<f64>,
    pub fixed_point_tol: f64,
    /// symbols-verify: residual samples, S∞ lattice points per dimension,
    /// phase samples, and the grid size of the symbol dump.
    pub samples: usize,
    pub per_dim: usize,
    pub phase_samples: usize,
    pub lattice_n: usize,
    /// scatter-diag: decay-fit window, late-time start, linear control run.
    pub decay_window: [f64; 2],
    pub late_t0: f64,
    pub linear_control: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::StandingWave,
            amplitude: 0.01,
            mode: 1.0,
            band: [0.5, 4.0],
            eps: vec![1e-2, 5e-3, 2.5e-3],
            fixed_point_tol: 1e-6,
            samples: 10_000,
            per_dim: 24,
            phase_samples: 20_000,
            lattice_n: 16,
            decay_window: [5.0, 80.0],
            late_t0: 100.0,
            linear_control: true,
        }
    }
}

fn bad(key: &str, value: impl std::fmt::Display, why: &str) -> CliError {
    CliError::Config(format!("{key} = {value}: {why}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if g.n < 4 || !g.n.is_multiple_of(2) {
            return Err(bad("grid.n", g.n, "must be an even integer of at least 4"));
        }
        if !(g.length.is_finite() && g.length > 0.0) {
            return Err(bad("grid.length", g.length, "must be positive"));
        }
        let t = &self.time;
        if !(t.dt.is_finite() && t.dt > 0.0) {
            return Err(bad("time.dt", t.dt, "must be positive"));
        }
        if !(t.t_final.is_finite() && t.t_final >= 0.0) {
            return Err(bad("time.t_final", t.t_final, "must be nonnegative"));
        }
        if t.output_stride == 0 {
            return Err(bad("time.output_stride", 0, "must be at least 1"));
        }
        if !(t.krasny_floor >= 0.0 && t.krasny_floor < 1.0) {
            return Err(bad("time.krasny_floor", t.krasny_floor, "must lie in [0, 1)"));
        }
        if !(t.localization_limit >= 0.0 && t.localization_limit <= 1.0) {
            return Err(bad("time.localization_limit", t.localization_limit, "must lie in [0, 1]"));
        }
        let d = &self.dn;
        if !(d.z_max.is_finite() && d.z_max > 0.0) {
            return Err(bad("dn.z_max", d.z_max, "must be positive"));
        }
        if d.nz < 8 {
            return Err(bad("dn.nz", d.nz, "must be at least 8"));
        }
        if d.oracle_nz < 8 {
            return Err(bad("dn.oracle_nz", d.oracle_nz, "must be at least 8"));
        }
        let di = &self.diagnostics;
        if !(di.p0 > 0.0 && di.p0 < 0.75) {
            return Err(bad("diagnostics.p0", di.p0, "must lie in (0, 3/4)"));
        }
        if let Some(x) = di.monitored_xi.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(bad("diagnostics.monitored_xi", x, "entries must be positive"));
        }
        if let Some(tol) = di.hamiltonian_tol {
            if !(tol > 0.0) {
                return Err(bad("diagnostics.hamiltonian_tol", tol, "must be positive"));
            }
        }
        let e = &self.experiment;
        if !(e.amplitude.is_finite() && e.amplitude >= 0.0) {
            return Err(bad("experiment.amplitude", e.amplitude, "must be nonnegative"));
        }
        if !(e.mode.is_finite() && e.mode > 0.0) {
            return Err(bad("experiment.mode", e.mode, "must be positive"));
        }
        if !(e.band[0] > 0.0 && e.band[0] < e.band[1]) {
            return Err(bad("experiment.band", format!("{:?}", e.band), "needs 0 < lo < hi"));
        }
        if e.eps.len() < 2 || e.eps.iter().any(|x| !(*x > 0.0)) {
            return Err(bad("experiment.eps", format!("{:?}", e.eps), "needs at least two positive amplitudes"));
        }
        if e.samples == 0 || e.phase_samples == 0 || e.per_dim < 2 {
            return Err(CliError::Config(
                "experiment.samples, experiment.phase_samples must be positive and experiment.per_dim at least 2".into(),
            ));
        }
        if e.lattice_n < 4 || !e.lattice_n.is_multiple_of(2) {
            return Err(bad("experiment.lattice_n", e.lattice_n, "must be an even integer of at least 4"));
        }
        if !(e.decay_window[0] >= 0.0 && e.decay_window[0] < e.decay_window[1]) {
            return Err(bad("experiment.decay_window", format!("{:?}", e.decay_window), "needs 0 <= start < end"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.grid.n, self.grid.length).map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig { z_max: self.dn.z_max, nz: self.dn.nz, ..Default::default() }
    }

    pub fn dn_method(&self) -> DnMethod {
        match self.dn.method {
            DnKind::Taylor3 => DnMethod::Taylor3,
            DnKind::FixedPoint => DnMethod::FixedPoint(self.fixed_point()),
        }
    }

    pub fn solver(&self) -> SolverConfig {
        let t = &self.time;
        SolverConfig {
            dt: t.dt,
            t_final: t.t_final,
            dn_method: self.dn_method(),
            dealias: t.dealias,
            krasny_floor: (t.krasny_floor > 0.0).then_some(t.krasny_floor),
            output_stride: t.output_stride,
            integrating_factor: t.integrating_factor,
            linear_only: t.linear_only,
            localization_limit: (t.localization_limit > 0.0).then_some(t.localization_limit),
        }
    }

    pub fn diagnostics(&self) -> DiagnosticsConfig {
        let d = &self.diagnostics;
        DiagnosticsConfig {
            params: NormParams { p0: d.p0, ..Default::default() },
            monitored_xi: d.monitored_xi.clone(),
            modified_energy: d.modified_energy,
            scaling: d.scaling,
            dn_method: self.dn_method(),
        }
    }

    pub fn initial_state(&self) -> Result<WaveState, CliError> {
        let grid = self.grid()?;
        let e = &self.experiment;
        let state = match e.kind {
            ExperimentKind::Flat => WaveState::zero(&grid),
            ExperimentKind::StandingWave => {
                let h = SpectralField::from_real_fn(&grid, |x| e.amplitude * (e.mode * x).cos());
                WaveState::new(h, SpectralField::zeros(&grid), 0.0).map_err(|e| CliError::Config(e.to_string()))?
            }
            ExperimentKind::Packet => band_limited_packet(&grid, e.amplitude, e.band[0], e.band[1])
                .map_err(|err| bad("experiment.band", format!("{:?}", e.band), &err.to_string()))?,
        };
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.grid.n, 512);
        assert_eq!(cfg.dn.method, DnKind::Taylor3);
    }

    #[test]
    fn unknown_key_is_an_error_naming_it() {
        let err = RunConfig::parse("[time]\ndtt = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("dtt"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn negative_dt_names_the_key() {
        let err = RunConfig::parse("[time]\ndt = -0.1\n").unwrap_err().to_string();
        assert!(err.contains("time.dt"), "{err}");
    }

    #[test]
    fn method_names_parse() {
        let cfg = RunConfig::parse("[dn]\nmethod = \"fixed_point\"\n").unwrap();
        assert!(matches!(cfg.dn_method(), DnMethod::FixedPoint(_)));
        assert!(RunConfig::parse("[dn]\nmethod = \"exact\"\n").is_err());
    }
}
