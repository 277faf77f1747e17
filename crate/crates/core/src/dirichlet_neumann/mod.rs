//! Dirichlet-Neumann operator G(h)ψ and the boundary quantities B, V, a, α.

mod fixed_point;
mod taylor;
mod zgrid;

use thiserror::Error;

use crate::spectral_core::{deriv, Grid, SpectralError, SpectralField};

pub use fixed_point::{dn_fixed_point, fixed_point_g, FixedPointConfig, FixedPointStats, VerticalProfile};
pub use taylor::{dn_taylor3, taylor3_g, taylor3_orders, Taylor3Orders};
pub use zgrid::{ZGrid, DEFAULT_STRETCH};

/// Steepness above which the expansions and the Picard map are not trusted.
pub const STEEPNESS_LIMIT: f64 = 0.3;

#[derive(Debug, Error)]
pub enum DnError {
    #[error("steepness {steepness:.4} exceeds {limit}")]
    Steep { steepness: f64, limit: f64, result: Option<Box<DnResult>> },
    #[error("fixed point did not converge in {iterations} iterations; last residual {:.3e}", history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { iterations: usize, history: Vec<f64> },
    #[error("depth {z_max} too small: mode xi={mode} keeps tail {tail:.3e} above {tol:.1e}")]
    DepthTooSmall { z_max: f64, mode: f64, tail: f64, tol: f64 },
    #[error("Taylor sign condition fails: a={a:.6e} at x={x:.6}")]
    TaylorSign { x: f64, a: f64 },
    #[error("bad vertical grid: {0}")]
    BadZGrid(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("state fields must be real")]
    NotReal,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl DnError {
    /// The result carried by a warning-grade failure, if any.
    pub fn into_flagged_result(self) -> Result<DnResult, DnError> {
        match self {
            DnError::Steep { result: Some(r), .. } => Ok(*r),
            e => Err(e),
        }
    }
}

/// Surface elevation and boundary potential at time `t`.
#[derive(Clone, Debug)]
pub struct WaveState {
    pub h: SpectralField,
    pub psi: SpectralField,
    pub t: f64,
}

impl WaveState {
    pub fn new(h: SpectralField, psi: SpectralField, t: f64) -> Result<Self, DnError> {
        h.same_grid(&psi)?;
        if !(h.is_real() && psi.is_real()) {
            return Err(DnError::NotReal);
        }
        Ok(Self { h, psi, t })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self { h: SpectralField::zeros(grid), psi: SpectralField::zeros(grid), t: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    /// sup |∂_x h|.
    pub fn steepness(&self) -> f64 {
        deriv(&self.h).sup_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.h.coeffs().iter().chain(self.psi.coeffs()).all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodTag {
    Taylor3,
    FixedPoint,
    Oracle,
}

#[derive(Clone, Debug)]
pub struct DnResult {
    pub g_psi: SpectralField,
    pub b: SpectralField,
    pub v: SpectralField,
    pub a: SpectralField,
    pub alpha: SpectralField,
    pub method: MethodTag,
}

/// How G(h) is evaluated inside the solver.
#[derive(Clone, Debug, PartialEq)]
pub enum DnMethod {
    Taylor3,
    FixedPoint(FixedPointConfig),
}

impl DnMethod {
    /// G(h)ψ only, without the derived boundary quantities.
    pub fn apply(&self, h: &SpectralField, psi: &SpectralField, dealias: bool) -> Result<SpectralField, DnError> {
        match self {
            DnMethod::Taylor3 => taylor3_g(h, psi, dealias),
            DnMethod::FixedPoint(cfg) => Ok(fixed_point_g(h, psi, cfg)?.1),
        }
    }

    /// Full DN result with B, V, a, α.
    pub fn result(&self, state: &WaveState) -> Result<DnResult, DnError> {
        match self {
            DnMethod::Taylor3 => dn_taylor3(state),
            DnMethod::FixedPoint(cfg) => Ok(dn_fixed_point(state, cfg)?.1),
        }
    }
}

fn pointwise(
    a: &SpectralField,
    b: &SpectralField,
    c: &SpectralField,
    f: impl Fn(f64, f64, f64) -> f64,
) -> SpectralField {
    let v: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .zip(c.values())
        .map(|((x, y), z)| f(x.re, y.re, z.re))
        .collect();
    SpectralField::from_real(a.grid(), &v).expect("same grid")
}

/// B = (G + h_x ψ_x)/(1 + h_x²) and V = ψ_x − h_x B, pointwise on the grid.
pub fn trace_quantities(g: &SpectralField, state: &WaveState) -> Result<(SpectralField, SpectralField), DnError> {
    g.same_grid(&state.h)?;
    let hx = deriv(&state.h);
    let px = deriv(&state.psi);
    let b = pointwise(g, &hx, &px, |g, hx, px| (g + hx * px) / (1.0 + hx * hx));
    let v = pointwise(&b, &hx, &px, |b, hx, px| px - hx * b);
    Ok((b, v))
}

/// Taylor coefficient from the elliptic identity
/// `a = [2 + 2V B_x − 2B V_x − G(h)(V² + B² + 2h)] / (2(1 + h_x²))`, α = √a − 1.
pub fn taylor_coefficient(
    state: &WaveState,
    b: &SpectralField,
    v: &SpectralField,
    g_of: &dyn Fn(&SpectralField) -> Result<SpectralField, DnError>,
) -> Result<(SpectralField, SpectralField), DnError> {
    let grid = state.grid();
    let hx = deriv(&state.h);
    let bx = deriv(b);
    let vx = deriv(v);
    let quad = v.dealiased_mul(v)?.add(&b.dealiased_mul(b)?)?.axpy(2.0, &state.h)?;
    let gq = g_of(&quad)?;
    let vbx = v.dealiased_mul(&bx)?;
    let bvx = b.dealiased_mul(&vx)?;
    let mut a = Vec::with_capacity(grid.n());
    for m in 0..grid.n() {
        let hxm = hx.values()[m].re;
        let num = 2.0 + 2.0 * vbx.values()[m].re - 2.0 * bvx.values()[m].re - gq.values()[m].re;
        a.push(num / (2.0 * (1.0 + hxm * hxm)));
    }
    if let Some((m, &am)) =
        a.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).filter(|(_, &am)| !(am > 0.0))
    {
        return Err(DnError::TaylorSign { x: grid.x(m), a: am });
    }
    let alpha: Vec<f64> = a.iter().map(|&am| am.sqrt() - 1.0).collect();
    Ok((SpectralField::from_real(grid, &a)?, SpectralField::from_real(grid, &alpha)?))
}

/// Assembles B, V, a, α around an already computed G.
pub fn assemble_result(
    state: &WaveState,
    g_psi: SpectralField,
    method: MethodTag,
    g_of: &dyn Fn(&SpectralField) -> Result<SpectralField, DnError>,
) -> Result<DnResult, DnError> {
    let (b, v) = trace_quantities(&g_psi, state)?;
    let (a, alpha) = taylor_coefficient(state, &b, &v, g_of)?;
    Ok(DnResult { g_psi, b, v, a, alpha, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::abs_deriv;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(64, 2.0 * PI).unwrap()
    }

    #[test]
    fn flat_trace_quantities() {
        let g = grid();
        let psi = SpectralField::from_real_fn(&g, |x| x.cos() + 0.3 * (2.0 * x).sin());
        let state = WaveState::new(SpectralField::zeros(&g), psi.clone(), 0.0).unwrap();
        let gpsi = abs_deriv(&psi);
        let (b, v) = trace_quantities(&gpsi, &state).unwrap();
        assert!(b.sub(&gpsi).unwrap().sup_norm() < 1e-14);
        assert!(v.sub(&deriv(&psi)).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn trace_identity_random_state() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.02 * (x.sin() + 0.4 * (3.0 * x).cos()));
        let psi = SpectralField::from_real_fn(&g, |x| 0.05 * (2.0 * x).cos() - 0.01 * x.sin());
        let state = WaveState::new(h.clone(), psi.clone(), 0.0).unwrap();
        let gpsi = taylor3_g(&h, &psi, true).unwrap();
        let (b, v) = trace_quantities(&gpsi, &state).unwrap();
        let hx = deriv(&h).real_values();
        let px = deriv(&psi).real_values();
        for m in 0..g.n() {
            let (bm, vm, gm) = (b.values()[m].re, v.values()[m].re, gpsi.values()[m].re);
            assert!(((1.0 + hx[m] * hx[m]) * bm - hx[m] * px[m] - gm).abs() < 1e-12);
            assert!((vm - (px[m] - bm * hx[m])).abs() < 1e-12);
        }
    }

    #[test]
    fn still_water_has_unit_taylor_coefficient() {
        let g = grid();
        let state = WaveState::zero(&g);
        let r = dn_taylor3(&state).unwrap();
        assert!(r.a.values().iter().all(|a| (a.re - 1.0).abs() < 1e-15));
        assert!(r.alpha.sup_norm() < 1e-15);
    }

    #[test]
    fn taylor_coefficient_is_quadratic_in_flat_potential() {
        let g = grid();
        let dev = |eps: f64| {
            let psi = SpectralField::from_real_fn(&g, |x| eps * x.cos());
            let state = WaveState::new(SpectralField::zeros(&g), psi, 0.0).unwrap();
            let r = dn_taylor3(&state).unwrap();
            let one = SpectralField::from_real_fn(&g, |_| 1.0);
            r.a.sub(&one).unwrap().sup_norm()
        };
        let slope = (dev(1e-2) / dev(5e-3)).log2();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn alpha_matches_sqrt_a() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.01 * (2.0 * x).cos());
        let psi = SpectralField::from_real_fn(&g, |x| 0.03 * x.sin());
        let r = dn_taylor3(&WaveState::new(h, psi, 0.0).unwrap()).unwrap();
        for (a, al) in r.a.values().iter().zip(r.alpha.values()) {
            assert!((a.re.sqrt() - 1.0 - al.re).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_invariance() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.02 * (2.0 * x).cos());
        let psi = SpectralField::from_real_fn(&g, |x| 0.1 * x.sin());
        let g1 = taylor3_g(&h, &psi, true).unwrap();
        let g2 = taylor3_g(&h, &psi.add_constant(3.0), true).unwrap();
        let g3 = taylor3_g(&h.add_constant(0.5), &psi, true).unwrap();
        assert!(g1.sub(&g2).unwrap().l2_norm() < 1e-14);
        assert!(g1.sub(&g3).unwrap().l2_norm() < 1e-10 * g1.l2_norm());
    }
}
