//! Grid, transforms, Littlewood-Paley machinery and multiplier application.

mod cutoffs;
mod field;
mod grid;
mod multilinear;
mod sinfty;

use num_complex::Complex64;
use thiserror::Error;

pub use cutoffs::{psi_geq, psi_k, psi_leq, psi_tilde, smootherstep, theta, theta_tilde, THETA_SUPPORT};
pub use field::SpectralField;
pub use grid::Grid;
pub use multilinear::{
    bilinear_apply, bilinear_apply_at, bilinear_apply_fast, paraproduct, paraproduct_symbol, remainder_product,
    remainder_symbol, trilinear_apply, BilinearSymbol, Support, TrilinearSymbol,
};
pub use sinfty::{sinfty_proxy, SinftyLattice};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("fields live on different grids: n={}, L={} vs n={}, L={}", left.0, left.1, right.0, right.1)]
    GridMismatch { left: (usize, f64), right: (usize, f64) },
    #[error("array of length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("band k={k} is not resolvable; usable bands are {lo}..={hi}")]
    BandOutOfRange { k: i32, lo: i32, hi: i32 },
    #[error("multiplier is not finite at populated mode xi={xi}")]
    NonFiniteMultiplier { xi: f64 },
    #[error("symbol {symbol} is not finite at populated pair ({first}, {second})")]
    NonFiniteSymbol { symbol: String, first: f64, second: f64 },
}

/// Multiplies every coefficient by `m(ξ)`. The result stays real only when
/// the input is real and `m(−ξ) = conj m(ξ)` holds on the lattice.
pub fn apply_multiplier(f: &SpectralField, m: impl Fn(f64) -> Complex64) -> Result<SpectralField, SpectralError> {
    let grid = f.grid();
    let n = grid.n();
    let ms: Vec<Complex64> = (0..n).map(|j| m(grid.wavenumber(j))).collect();
    let mut coeffs = Vec::with_capacity(n);
    for (j, (&c, &mj)) in f.coeffs().iter().zip(&ms).enumerate() {
        if !(mj.re.is_finite() && mj.im.is_finite()) {
            if c != Complex64::new(0.0, 0.0) {
                return Err(SpectralError::NonFiniteMultiplier { xi: grid.wavenumber(j) });
            }
            coeffs.push(Complex64::new(0.0, 0.0));
        } else {
            coeffs.push(c * mj);
        }
    }
    let mut real = f.is_real();
    if real {
        for j in 1..n / 2 {
            let (a, b) = (ms[j], ms[n - j]);
            if a.re != b.re || a.im != -b.im {
                real = false;
                break;
            }
        }
        // The Nyquist slot has no partner; a complex multiplier there breaks reality.
        let ny = ms[n / 2];
        if ny.im != 0.0 && f.coeffs()[n / 2] != Complex64::new(0.0, 0.0) {
            real = false;
        }
        if ms[0].im != 0.0 && f.coeffs()[0] != Complex64::new(0.0, 0.0) {
            real = false;
        }
    }
    SpectralField::from_coeffs(grid, coeffs, real)
}

fn real_mult(f: &SpectralField, m: impl Fn(f64) -> f64) -> SpectralField {
    apply_multiplier(f, |xi| Complex64::new(m(xi), 0.0)).expect("finite real multiplier")
}

/// |∇| f.
pub fn abs_deriv(f: &SpectralField) -> SpectralField {
    real_mult(f, f64::abs)
}

/// |∇|^s f with the ξ = 0 mode set to zero.
pub fn abs_deriv_pow(f: &SpectralField, s: f64) -> SpectralField {
    real_mult(f, |xi| if xi == 0.0 { 0.0 } else { xi.abs().powf(s) })
}

/// ∂_x f. The Nyquist mode is dropped since iξ has no real partner there.
pub fn deriv(f: &SpectralField) -> SpectralField {
    let ny = -f.grid().max_wavenumber();
    apply_multiplier(f, |xi| if xi == ny { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, xi) })
        .expect("finite multiplier")
}

/// ∂_x² f.
pub fn deriv2(f: &SpectralField) -> SpectralField {
    real_mult(f, |xi| -xi * xi)
}

/// ∂_x |∇|^{-1} f (the Hilbert-type multiplier i·sgn ξ), zero at ξ = 0 and Nyquist.
pub fn riesz(f: &SpectralField) -> SpectralField {
    let ny = -f.grid().max_wavenumber();
    apply_multiplier(f, |xi| {
        if xi == 0.0 || xi == ny {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi.signum())
        }
    })
    .expect("finite multiplier")
}

/// P_k f with coefficients ψ_k(ξ)·f̂(ξ).
pub fn lp_project(f: &SpectralField, k: i32) -> Result<SpectralField, SpectralError> {
    let (lo, hi) = f.grid().band_range();
    if k > hi {
        return Err(SpectralError::BandOutOfRange { k, lo, hi });
    }
    Ok(real_mult(f, |xi| psi_k(xi, k)))
}

/// P_{≤k} f.
pub fn lp_project_leq(f: &SpectralField, k: i32) -> SpectralField {
    real_mult(f, |xi| psi_leq(xi, k))
}

/// P_{≥k} f.
pub fn lp_project_geq(f: &SpectralField, k: i32) -> SpectralField {
    real_mult(f, |xi| psi_geq(xi, k))
}
