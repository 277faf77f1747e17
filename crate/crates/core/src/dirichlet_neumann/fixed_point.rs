use num_complex::Complex64;

use crate::spectral_core::{abs_deriv, deriv, riesz, SpectralField};

use super::zgrid::DEFAULT_STRETCH;
use super::{assemble_result, DnError, DnResult, MethodTag, WaveState, ZGrid, STEEPNESS_LIMIT};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointConfig {
    pub z_max: f64,
    pub nz: usize,
    /// Total log-stretch κ of the vertical grid.
    pub stretch: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Largest admissible e^{−2 ξ_min Z_max}, the weight of the truncated
    /// region in the surface trace.
    pub tail_tol: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { z_max: 8.0, nz: 256, stretch: DEFAULT_STRETCH, max_iters: 200, tol: 1e-13, tail_tol: 1e-6 }
    }
}

/// ∇_{x,z}φ on every level, ascending in z.
#[derive(Clone, Debug)]
pub struct VerticalProfile {
    pub zgrid: ZGrid,
    /// (∂_xφ, ∂_zφ) per level.
    pub grad_phi: Vec<(SpectralField, SpectralField)>,
}

impl VerticalProfile {
    pub fn surface(&self) -> &(SpectralField, SpectralField) {
        self.grad_phi.last().expect("at least two levels")
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointStats {
    pub iterations: usize,
    /// Relative size of each Picard update.
    pub residuals: Vec<f64>,
    pub damping: f64,
}

impl FixedPointStats {
    /// Geometric mean of successive residual ratios (contraction estimate).
    pub fn contraction(&self) -> Option<f64> {
        let r: Vec<f64> = self.residuals.iter().copied().filter(|&x| x > 0.0).collect();
        if r.len() < 3 {
            return None;
        }
        let n = r.len() - 2;
        Some((r[r.len() - 2] / r[0]).powf(1.0 / n as f64))
    }
}

/// Smallest populated nonzero |ξ| of `f`.
fn lowest_mode(f: &SpectralField) -> Option<f64> {
    let grid = f.grid();
    let peak = f.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    (1..grid.n())
        .filter(|&j| f.coeffs()[j].norm() > 1e-14 * peak)
        .map(|j| grid.wavenumber(j).abs())
        .min_by(f64::total_cmp)
}

struct Levels {
    x: Vec<Vec<Complex64>>,
    z: Vec<Vec<Complex64>>,
}

/// Solves the Picard problem for ∇_{x,z}φ and returns the profile and
/// G(h)ψ = (1 + h_x²)∂_zφ|₀ − h_x ψ_x.
pub fn fixed_point_g(
    h: &SpectralField,
    psi: &SpectralField,
    cfg: &FixedPointConfig,
) -> Result<(VerticalProfile, SpectralField, FixedPointStats), DnError> {
    h.same_grid(psi)?;
    let grid = psi.grid().clone();
    let n = grid.n();
    let hx = deriv(h);
    let steepness = hx.sup_norm();
    if steepness > STEEPNESS_LIMIT {
        return Err(DnError::Steep { steepness, limit: STEEPNESS_LIMIT, result: None });
    }
    if let Some(kmin) = lowest_mode(psi) {
        let tail = (-2.0 * kmin * cfg.z_max).exp();
        if tail > cfg.tail_tol {
            return Err(DnError::DepthTooSmall { z_max: cfg.z_max, mode: kmin, tail, tol: cfg.tail_tol });
        }
    }
    let zg = ZGrid::new(cfg.z_max, cfg.nz, cfg.stretch)?;
    let zs = zg.levels().to_vec();
    let nl = zs.len();
    let w = zg.trapezoid_weights();
    // Half-cells below and above each node, for the split of the sign kernel.
    let half_below: Vec<f64> = (0..nl).map(|i| if i > 0 { 0.5 * (zs[i] - zs[i - 1]) } else { 0.0 }).collect();
    let half_above: Vec<f64> = (0..nl).map(|i| if i + 1 < nl { 0.5 * (zs[i + 1] - zs[i]) } else { 0.0 }).collect();
    let ks = grid.wavenumbers();
    let ny = grid.nyquist_slot();

    let px = deriv(psi);
    let dpsi = abs_deriv(psi);
    let mut base = Levels { x: Vec::with_capacity(nl), z: Vec::with_capacity(nl) };
    for &z in &zs {
        let e: Vec<f64> = ks.iter().map(|k| (z * k.abs()).exp()).collect();
        base.x.push(px.coeffs().iter().zip(&e).map(|(c, e)| c * e).collect());
        base.z.push(dpsi.coeffs().iter().zip(&e).map(|(c, e)| c * e).collect());
    }
    let hx2 = hx.dealiased_mul(&hx)?;

    let picard = |cur: &Levels| -> Result<Levels, DnError> {
        // M(∂_x h) applied level by level.
        let mut m1 = Vec::with_capacity(nl);
        let mut m2 = Vec::with_capacity(nl);
        for i in 0..nl {
            let xf = SpectralField::from_coeffs(&grid, cur.x[i].clone(), true)?;
            let zf = SpectralField::from_coeffs(&grid, cur.z[i].clone(), true)?;
            let hz = hx.dealiased_mul(&zf)?;
            m1.push(riesz(&hz).coeffs().to_vec());
            let hxx = hx.dealiased_mul(&xf)?;
            let h2z = hx2.dealiased_mul(&zf)?;
            m2.push(h2z.sub(&hxx)?.coeffs().to_vec());
        }
        let mut out = Levels { x: vec![vec![ZERO; n]; nl], z: vec![vec![ZERO; n]; nl] };
        let mut below1 = vec![ZERO; nl];
        let mut below2 = vec![ZERO; nl];
        let mut above1 = vec![ZERO; nl];
        let mut above2 = vec![ZERO; nl];
        for j in 0..n {
            if j == ny {
                continue;
            }
            let k = ks[j].abs();
            let ik = Complex64::new(0.0, ks[j]);
            let mut s_sum = ZERO;
            for i in 0..nl {
                s_sum += (m1[i][j] + m2[i][j]) * (w[i] * (k * zs[i]).exp());
            }
            below1[0] = ZERO;
            below2[0] = ZERO;
            for i in 1..nl {
                let decay = (-k * (zs[i] - zs[i - 1])).exp();
                below1[i] = (below1[i - 1] + m1[i - 1][j] * w[i - 1]) * decay;
                below2[i] = (below2[i - 1] + m2[i - 1][j] * w[i - 1]) * decay;
            }
            above1[nl - 1] = ZERO;
            above2[nl - 1] = ZERO;
            for i in (0..nl - 1).rev() {
                let decay = (-k * (zs[i + 1] - zs[i])).exp();
                above1[i] = (above1[i + 1] + m1[i + 1][j] * w[i + 1]) * decay;
                above2[i] = (above2[i + 1] + m2[i + 1][j] * w[i + 1]) * decay;
            }
            for i in 0..nl {
                let grow = s_sum * (k * zs[i]).exp();
                let even1 = below1[i] + above1[i] + m1[i][j] * w[i];
                let even2 = below2[i] + above2[i] + m2[i][j] * w[i];
                let odd1 = below1[i] - above1[i] + m1[i][j] * (half_below[i] - half_above[i]);
                let odd2 = below2[i] - above2[i] + m2[i][j] * (half_below[i] - half_above[i]);
                out.x[i][j] = base.x[i][j] + 0.5 * ik * (grow - even1 - odd2);
                out.z[i][j] = base.z[i][j] + 0.5 * k * (grow + odd1 + even2) - m2[i][j];
            }
        }
        Ok(out)
    };

    let level_norm = |a: &[Complex64]| a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut cur = Levels { x: base.x.clone(), z: base.z.clone() };
    let scale = (0..nl).map(|i| level_norm(&base.x[i]).max(level_norm(&base.z[i]))).fold(0.0, f64::max);
    let mut history = Vec::new();
    let mut lambda = 1.0;
    let mut converged = scale == 0.0;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let next = picard(&cur)?;
        let mut diff = 0.0f64;
        for i in 0..nl {
            let dx: Vec<Complex64> = next.x[i].iter().zip(&cur.x[i]).map(|(a, b)| a - b).collect();
            let dz: Vec<Complex64> = next.z[i].iter().zip(&cur.z[i]).map(|(a, b)| a - b).collect();
            diff = diff.max(level_norm(&dx)).max(level_norm(&dz));
        }
        let res = diff / scale;
        if let Some(&prev) = history.last() {
            if res > 0.9 * prev && lambda == 1.0 {
                lambda = 0.5;
            }
        }
        history.push(res);
        for i in 0..nl {
            for j in 0..n {
                cur.x[i][j] = cur.x[i][j] * (1.0 - lambda) + next.x[i][j] * lambda;
                cur.z[i][j] = cur.z[i][j] * (1.0 - lambda) + next.z[i][j] * lambda;
            }
        }
        if res < cfg.tol {
            converged = true;
        }
    }
    if !converged {
        return Err(DnError::NotConverged { iterations, history });
    }

    let mut grad_phi = Vec::with_capacity(nl);
    for i in 0..nl {
        grad_phi.push((
            SpectralField::from_coeffs(&grid, cur.x[i].clone(), true)?,
            SpectralField::from_coeffs(&grid, cur.z[i].clone(), true)?,
        ));
    }
    let profile = VerticalProfile { zgrid: zg, grad_phi };
    let zs0 = &profile.surface().1;
    let g = zs0.add(&hx2.dealiased_mul(zs0)?)?.sub(&hx.dealiased_mul(&px)?)?;
    Ok((profile, g, FixedPointStats { iterations, residuals: history, damping: lambda }))
}

/// Fixed-point DN result; a(·) uses the same iteration for G(h)(V² + B² + 2h).
pub fn dn_fixed_point(state: &WaveState, cfg: &FixedPointConfig) -> Result<(VerticalProfile, DnResult), DnError> {
    let (profile, g, _) = fixed_point_g(&state.h, &state.psi, cfg)?;
    let h = state.h.clone();
    let result = assemble_result(state, g, MethodTag::FixedPoint, &|f| Ok(fixed_point_g(&h, f, cfg)?.1))?;
    Ok((profile, result))
}
