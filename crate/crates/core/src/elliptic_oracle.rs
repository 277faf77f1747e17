//! Brute-force DN oracle: finite differences in z, dense spectral matrices in x,
//! one block-tridiagonal solve of the flattened Laplace problem
//!
//! ```text
//! [(1 + h_x²)∂_z² + ∂_x² − 2h_x ∂_x∂_z − h_xx ∂_z] φ = 0,   φ(0, ·) = ψ.
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::dirichlet_neumann::{
    assemble_result, DnError, DnResult, MethodTag, VerticalProfile, WaveState, ZGrid, DEFAULT_STRETCH,
    STEEPNESS_LIMIT,
};
use crate::spectral_core::{abs_deriv, deriv, deriv2, Grid, SpectralError, SpectralField};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("steepness {0:.4} exceeds {STEEPNESS_LIMIT}")]
    Steep(f64),
    #[error("singular block at level {0}")]
    Singular(usize),
    #[error("discrete residual {residual:.3e} above {tol:.1e}")]
    Residual { residual: f64, tol: f64 },
    #[error(transparent)]
    Dn(#[from] DnError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BottomBc {
    /// ∂_zφ = |∇|φ at z = −Z_max, exact for a flat surface.
    SpectralDecay,
    /// ∂_zφ = 0 at z = −Z_max.
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    /// Solve for φ itself.
    Direct,
    /// Solve for w = φ − e^{z|∇|}ψ, which carries only the h-induced part.
    FlatSplit,
}

#[derive(Clone, Debug)]
pub struct StripProblem {
    pub state: WaveState,
    pub z_max: f64,
    pub nz: usize,
    pub stretch: f64,
    pub bottom_bc: BottomBc,
    pub formulation: Formulation,
}

impl StripProblem {
    pub fn new(state: WaveState, z_max: f64, nz: usize) -> Self {
        Self {
            state,
            z_max,
            nz,
            stretch: DEFAULT_STRETCH,
            bottom_bc: BottomBc::SpectralDecay,
            formulation: Formulation::FlatSplit,
        }
    }

    fn with_nz(&self, nz: usize) -> Self {
        Self { nz, ..self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct StripSolution {
    pub profile: VerticalProfile,
    /// ∂_zφ at z = 0.
    pub dz_surface: SpectralField,
    /// Max over levels of the discrete residual, relative to the diagonal action.
    pub residual: f64,
}

const RESIDUAL_TOL: f64 = 1e-8;

/// Dense real matrix of a real-preserving spectral operator.
fn operator_matrix(grid: &Grid, op: impl Fn(&SpectralField) -> SpectralField) -> DMatrix<f64> {
    let n = grid.n();
    let mut m = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = op(&SpectralField::from_real(grid, &e).expect("grid length"));
        for r in 0..n {
            m[(r, c)] = col.values()[r].re;
        }
    }
    m
}

fn to_vec(f: &SpectralField) -> DVector<f64> {
    DVector::from_iterator(f.values().len(), f.values().iter().map(|v| v.re))
}

fn to_field(grid: &Grid, v: &DVector<f64>) -> SpectralField {
    SpectralField::from_real(grid, v.as_slice()).expect("grid length")
}

/// Three-point weights (up, centre, down) for ∂_z and ∂_z² at a node with
/// spacing `hu` to the level above and `hd` to the level below.
fn stencil(hu: f64, hd: f64) -> ([f64; 3], [f64; 3]) {
    let s = hu + hd;
    let d1 = [hd / (hu * s), (hu - hd) / (hu * hd), -hu / (hd * s)];
    let d2 = [2.0 / (hu * s), -2.0 / (hu * hd), 2.0 / (hd * s)];
    (d1, d2)
}

struct Operators {
    /// diag(1 + h_x²)
    a: DMatrix<f64>,
    /// −2 diag(h_x) D_x − diag(h_xx), acting on ∂_zφ
    c: DMatrix<f64>,
    dxx: DMatrix<f64>,
    dx: DMatrix<f64>,
    abs: DMatrix<f64>,
}

impl Operators {
    fn block(&self, d1: f64, d2: f64, centre: bool) -> DMatrix<f64> {
        let mut m = &self.a * d2 + &self.c * d1;
        if centre {
            m += &self.dxx;
        }
        m
    }
}

/// Solves the strip problem on the geometric grid with `p.nz` levels.
pub fn solve_strip(p: &StripProblem) -> Result<StripSolution, OracleError> {
    let state = &p.state;
    let grid = state.grid().clone();
    let n = grid.n();
    let steep = state.steepness();
    if steep > STEEPNESS_LIMIT {
        return Err(OracleError::Steep(steep));
    }
    let zg = ZGrid::new(p.z_max, p.nz, p.stretch)?;
    let nz = p.nz;
    let depth = |j: i64| zg.depth_at(j);

    let hx = deriv(&state.h);
    let hxx = deriv2(&state.h);
    let hxv = to_vec(&hx);
    let hxxv = to_vec(&hxx);
    let dx = operator_matrix(&grid, deriv);
    let dxx = operator_matrix(&grid, deriv2);
    let abs = operator_matrix(&grid, abs_deriv);
    let a = DMatrix::from_diagonal(&hxv.map(|v| 1.0 + v * v));
    let c = -(DMatrix::from_diagonal(&hxv) * &dx) * 2.0 - DMatrix::from_diagonal(&hxxv);
    let ops = Operators { a, c, dxx, dx, abs };

    // Forcing per surface-counted node, and the surface value.
    let split = p.formulation == Formulation::FlatSplit;
    let psi_v = to_vec(&state.psi);
    let top = if split { DVector::zeros(n) } else { psi_v.clone() };
    let flat = |z: f64, order: i32| -> SpectralField {
        crate::spectral_core::apply_multiplier(&state.psi, |k| {
            Complex64::new(k.abs().powi(order) * (z * k.abs()).exp(), 0.0)
        })
        .expect("finite multiplier")
    };
    let forcing = |j: i64| -> DVector<f64> {
        if !split {
            return DVector::zeros(n);
        }
        // −(P − P₀)φ₀ with φ₀ = e^{z|∇|}ψ.
        let z = depth(j);
        let p1 = to_vec(&flat(z, 1));
        let p2 = to_vec(&flat(z, 2));
        let dxp1 = &ops.dx * &p1;
        let mut f = DVector::zeros(n);
        for m in 0..n {
            f[m] = -(hxv[m] * hxv[m] * p2[m] - 2.0 * hxv[m] * dxp1[m] - hxxv[m] * p1[m]);
        }
        f
    };

    let spacing = |j: i64| (depth(j - 1) - depth(j), depth(j) - depth(j + 1));
    let bottom_op = match p.bottom_bc {
        BottomBc::SpectralDecay => ops.abs.clone(),
        BottomBc::Neumann => DMatrix::zeros(n, n),
    };

    // Block rows j = 1..=nz: lower[j] φ_{j−1} + diag[j] φ_j + upper[j] φ_{j+1} = rhs[j].
    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(nz + 1);
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(nz + 1);
    xs.push(DMatrix::zeros(0, 0));
    ys.push(DVector::zeros(0));
    let mut rows: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(nz + 1);
    rows.push((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DVector::zeros(0)));
    for j in 1..=nz {
        let (hu, hd) = spacing(j as i64);
        let (d1, d2) = stencil(hu, hd);
        let mut lower = ops.block(d1[0], d2[0], false);
        let mut diag = ops.block(d1[1], d2[1], true);
        let upper = ops.block(d1[2], d2[2], false);
        let mut rhs = forcing(j as i64);
        if j == nz {
            // Ghost below from d1·φ = B φ_nz: φ_{nz+1} = [(B − d1₁)φ_nz − d1₀ φ_{nz−1}]/d1₂.
            let mut b = bottom_op.clone();
            for i in 0..n {
                b[(i, i)] -= d1[1];
            }
            diag += &upper * b / d1[2];
            lower -= &upper * (d1[0] / d1[2]);
            rows.push((lower, diag, DMatrix::zeros(n, n), rhs));
            continue;
        }
        if j == 1 {
            rhs -= &lower * &top;
        }
        rows.push((lower, diag, upper, rhs));
    }
    for j in 1..=nz {
        let (lower, diag, upper, rhs) = &rows[j];
        let (s, r) = if j == 1 {
            (diag.clone(), rhs.clone())
        } else {
            (diag - lower * &xs[j - 1], rhs - lower * &ys[j - 1])
        };
        let lu = s.lu();
        let x = if j < nz { lu.solve(upper).ok_or(OracleError::Singular(j))? } else { DMatrix::zeros(n, n) };
        let y = lu.solve(&r).ok_or(OracleError::Singular(j))?;
        xs.push(x);
        ys.push(y);
    }
    let mut phi: Vec<DVector<f64>> = vec![DVector::zeros(n); nz + 1];
    phi[0] = top.clone();
    phi[nz] = ys[nz].clone();
    for j in (1..nz).rev() {
        phi[j] = &ys[j] - &xs[j] * &phi[j + 1];
    }

    let mut residual = 0.0f64;
    for j in 1..nz {
        let (lower, diag, upper, rhs) = &rows[j];
        let prev = if j == 1 { DVector::zeros(n) } else { lower * &phi[j - 1] };
        let r = prev + diag * &phi[j] + upper * &phi[j + 1] - rhs;
        let scale = (diag * &phi[j]).norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        residual = residual.max(r.norm() / scale);
    }
    if residual > RESIDUAL_TOL {
        return Err(OracleError::Residual { residual, tol: RESIDUAL_TOL });
    }

    // Ghost above the surface from the PDE at node 0, then the centred trace.
    let (hu0, hd0) = spacing(0);
    let (d1, d2) = stencil(hu0, hd0);
    let up0 = ops.block(d1[0], d2[0], false);
    let mid0 = ops.block(d1[1], d2[1], true);
    let dn0 = ops.block(d1[2], d2[2], false);
    let ghost_rhs = forcing(0) - &mid0 * &phi[0] - &dn0 * &phi[1];
    let ghost = up0.lu().solve(&ghost_rhs).ok_or(OracleError::Singular(0))?;
    let dz_top = &ghost * d1[0] + &phi[0] * d1[1] + &phi[1] * d1[2];

    // ∂_zφ at every level (surface-counted), bottom via the boundary condition.
    let mut dz: Vec<DVector<f64>> = Vec::with_capacity(nz + 1);
    dz.push(dz_top);
    for j in 1..nz {
        let (hu, hd) = spacing(j as i64);
        let (d1, _) = stencil(hu, hd);
        dz.push(&phi[j - 1] * d1[0] + &phi[j] * d1[1] + &phi[j + 1] * d1[2]);
    }
    dz.push(&bottom_op * &phi[nz]);

    let mut grad_phi = Vec::with_capacity(nz + 1);
    for j in (0..=nz).rev() {
        let mut px = &ops.dx * &phi[j];
        let mut pz = dz[j].clone();
        if split {
            let z = if j == 0 { 0.0 } else { depth(j as i64) };
            px += &ops.dx * to_vec(&flat(z, 0));
            pz += to_vec(&flat(z, 1));
        }
        grad_phi.push((to_field(&grid, &px), to_field(&grid, &pz)));
    }
    let profile = VerticalProfile { zgrid: zg, grad_phi };
    let dz_surface = profile.surface().1.clone();
    Ok(StripSolution { profile, dz_surface, residual })
}

/// G(h)ψ = (1 + h_x²)∂_zφ|₀ − h_x ψ_x, pointwise on the grid.
fn trace_to_g(state: &WaveState, dz: &SpectralField) -> SpectralField {
    let hx = deriv(&state.h).real_values();
    let px = deriv(&state.psi).real_values();
    let v: Vec<f64> = (0..hx.len()).map(|m| (1.0 + hx[m] * hx[m]) * dz.values()[m].re - hx[m] * px[m]).collect();
    SpectralField::from_real(state.grid(), &v).expect("grid length")
}

pub fn oracle_g(p: &StripProblem) -> Result<SpectralField, OracleError> {
    let sol = solve_strip(p)?;
    Ok(trace_to_g(&p.state, &sol.dz_surface))
}

/// Richardson extrapolation over `nz`, `2nz`, `4nz`, removing the Δ² and Δ⁴
/// error terms of the symmetric stencils.
pub fn oracle_g_extrapolated(p: &StripProblem) -> Result<SpectralField, OracleError> {
    let g1 = oracle_g(p)?;
    let g2 = oracle_g(&p.with_nz(2 * p.nz))?;
    let g4 = oracle_g(&p.with_nz(4 * p.nz))?;
    let r12 = g2.scale(4.0).sub(&g1)?.scale(1.0 / 3.0);
    let r24 = g4.scale(4.0).sub(&g2)?.scale(1.0 / 3.0);
    Ok(r24.scale(16.0).sub(&r12)?.scale(1.0 / 15.0))
}

/// Oracle DN result; a(·) is assembled from further oracle solves.
pub fn oracle_dn(p: &StripProblem) -> Result<DnResult, OracleError> {
    let g = oracle_g(p)?;
    let g_of = |f: &SpectralField| -> Result<SpectralField, DnError> {
        let q = StripProblem { state: WaveState { psi: f.clone(), ..p.state.clone() }, ..p.clone() };
        oracle_g(&q).map_err(|e| match e {
            OracleError::Dn(d) => d,
            other => DnError::Oracle(other.to_string()),
        })
    };
    Ok(assemble_result(&p.state, g, MethodTag::Oracle, &g_of)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(32, 2.0 * PI).unwrap()
    }

    fn flat_state(g: &Grid, f: impl Fn(f64) -> f64) -> WaveState {
        WaveState::new(SpectralField::zeros(g), SpectralField::from_real_fn(g, f), 0.0).unwrap()
    }

    #[test]
    fn flat_direct_is_second_order() {
        let g = grid();
        let st = flat_state(&g, |x| (4.0 * x).cos());
        let err = |nz: usize| {
            let mut p = StripProblem::new(st.clone(), 4.0, nz);
            p.formulation = Formulation::Direct;
            let gg = oracle_g(&p).unwrap();
            gg.sub(&abs_deriv(&st.psi)).unwrap().l2_norm() / st.psi.l2_norm()
        };
        let (a, b) = (err(64), err(128));
        assert!(a < 1e-2);
        let rate = (a / b).log2();
        assert!((rate - 2.0).abs() < 0.2, "rate {rate}");
    }

    #[test]
    fn flat_split_is_exact() {
        let g = grid();
        let st = flat_state(&g, f64::cos);
        let p = StripProblem::new(st.clone(), 6.0, 32);
        let gg = oracle_g(&p).unwrap();
        assert!(gg.sub(&st.psi).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn manufactured_flat_solution() {
        let g = grid();
        let st = flat_state(&g, |x| (2.0 * x).cos());
        let mut p = StripProblem::new(st, 5.0, 128);
        p.formulation = Formulation::Direct;
        let sol = solve_strip(&p).unwrap();
        let levels = sol.profile.zgrid.levels();
        let i = levels.len() / 2;
        let z = levels[i];
        let want = SpectralField::from_real_fn(&g, |x| 2.0 * (2.0 * z).exp() * (2.0 * x).cos());
        let got = &sol.profile.grad_phi[i].1;
        assert!(got.sub(&want).unwrap().sup_norm() < 5e-3 * (2.0 * z).exp());
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn extrapolation_matches_expansion_for_small_amplitude() {
        let g = grid();
        let eps = 1e-2;
        let h = SpectralField::from_real_fn(&g, |x| eps * (2.0 * x).cos());
        let psi = SpectralField::from_real_fn(&g, f64::sin);
        let st = WaveState::new(h.clone(), psi.clone(), 0.0).unwrap();
        let go = oracle_g_extrapolated(&StripProblem::new(st, 12.0, 64)).unwrap();
        let gt = crate::dirichlet_neumann::taylor3_g(&h, &psi, true).unwrap();
        let gap = go.sub(&gt).unwrap().l2_norm() / gt.l2_norm();
        assert!(gap < 1e-6, "gap {gap}");
    }
}
