use num_complex::Complex64;

use super::{Grid, SpectralError};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Periodic field held in both representations.
///
/// Real fields keep exactly zero imaginary parts in `values` and Hermitian
/// coefficients (the Nyquist coefficient is real).
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    values: Vec<Complex64>,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.n();
        Self { grid: grid.clone(), values: vec![ZERO; n], coeffs: vec![ZERO; n], real: true }
    }

    pub fn from_real(grid: &Grid, values: &[f64]) -> Result<Self, SpectralError> {
        check_len(grid, values.len())?;
        let values: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let coeffs = grid.forward(&values);
        Ok(Self { grid: grid.clone(), values, coeffs, real: true })
    }

    pub fn from_real_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let v: Vec<f64> = grid.xs().into_iter().map(f).collect();
        Self::from_real(grid, &v).expect("length matches grid")
    }

    pub fn from_complex(grid: &Grid, values: &[Complex64]) -> Result<Self, SpectralError> {
        check_len(grid, values.len())?;
        let coeffs = grid.forward(values);
        Ok(Self { grid: grid.clone(), values: values.to_vec(), coeffs, real: false })
    }

    /// Builds a field from coefficients. With `real = true` the coefficients
    /// are projected onto the Hermitian subspace first.
    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>, real: bool) -> Result<Self, SpectralError> {
        check_len(grid, coeffs.len())?;
        let mut coeffs = coeffs;
        if real {
            hermitian_project(grid, &mut coeffs);
        }
        let mut values = grid.inverse(&coeffs);
        if real {
            for v in values.iter_mut() {
                v.im = 0.0;
            }
        }
        Ok(Self { grid: grid.clone(), values, coeffs, real })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    pub fn same_grid(&self, other: &Self) -> Result<(), SpectralError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch {
                left: (self.grid.n(), self.grid.length()),
                right: (other.grid.n(), other.grid.length()),
            })
        }
    }

    fn combine(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self, SpectralError> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| op(a, b)).collect();
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), values, coeffs, real: self.real && other.real })
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
            real: self.real,
        }
    }

    pub fn scale_complex(&self, c: Complex64) -> Self {
        let mut out = Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
            real: false,
        };
        if self.real && c.im == 0.0 {
            out.real = true;
        }
        out
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self, SpectralError> {
        self.combine(other, |a, b| a + b * c)
    }

    /// Adds a constant to the physical samples.
    pub fn add_constant(&self, c: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += Complex64::new(c * self.grid.length(), 0.0);
        let values = self.values.iter().map(|v| v + c).collect();
        Self { grid: self.grid.clone(), values, coeffs, real: self.real }
    }

    /// Pointwise product on the grid (aliased).
    pub fn mul(&self, other: &Self) -> Result<Self, SpectralError> {
        self.same_grid(other)?;
        let values: Vec<Complex64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        let coeffs = self.grid.forward(&values);
        let real = self.real && other.real;
        Ok(Self { grid: self.grid.clone(), values, coeffs, real })
    }

    /// Product with 3/2 zero padding; the result carries no aliased modes.
    pub fn dealiased_mul(&self, other: &Self) -> Result<Self, SpectralError> {
        self.same_grid(other)?;
        let coeffs = self.grid.dealiased_product(&self.coeffs, &other.coeffs);
        Self::from_coeffs(&self.grid, coeffs, self.real && other.real)
    }

    /// Product selected by the dealiasing switch used across the solver.
    pub fn product(&self, other: &Self, dealias: bool) -> Result<Self, SpectralError> {
        if dealias {
            self.dealiased_mul(other)
        } else {
            self.mul(other)
        }
    }

    pub fn map_values(&self, f: impl Fn(Complex64) -> Complex64, real: bool) -> Self {
        let mut values: Vec<Complex64> = self.values.iter().map(|&v| f(v)).collect();
        if real {
            for v in values.iter_mut() {
                v.im = 0.0;
            }
        }
        let coeffs = self.grid.forward(&values);
        Self { grid: self.grid.clone(), values, coeffs, real }
    }

    /// Zeroes coefficients with magnitude below `floor * max|coeff|`.
    pub fn krasny_filter(&self, floor: f64) -> Self {
        let peak = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return self.clone();
        }
        let cut = floor * peak;
        let coeffs = self.coeffs.iter().map(|&c| if c.norm() < cut { ZERO } else { c }).collect();
        Self::from_coeffs(&self.grid, coeffs, self.real).expect("same grid")
    }

    /// Discrete L² norm `sqrt(dx Σ |f|²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> Complex64 {
        self.coeffs[0] / self.grid.length()
    }

    /// Real part of `∫ f conj(g) dx`.
    pub fn inner(&self, other: &Self) -> Result<f64, SpectralError> {
        self.same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a * b.conj()).re).sum();
        Ok(s * self.grid.dx())
    }

    /// Largest violation of Hermitian symmetry relative to the peak coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n();
        let peak = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        (1..n)
            .filter(|&j| j != n / 2)
            .map(|j| (self.coeffs[j] - self.coeffs[n - j].conj()).norm())
            .fold(0.0, f64::max)
            / peak
    }

    /// Forgets the realness flag (used when complex arithmetic follows).
    pub fn into_complex(mut self) -> Self {
        self.real = false;
        self
    }

    /// Real part as a real field.
    pub fn re(&self) -> Self {
        let v: Vec<f64> = self.real_values();
        Self::from_real(&self.grid, &v).expect("same grid")
    }

    pub fn im(&self) -> Self {
        let v: Vec<f64> = self.values.iter().map(|v| v.im).collect();
        Self::from_real(&self.grid, &v).expect("same grid")
    }
}

fn check_len(grid: &Grid, len: usize) -> Result<(), SpectralError> {
    if len == grid.n() {
        Ok(())
    } else {
        Err(SpectralError::LengthMismatch { expected: grid.n(), got: len })
    }
}

fn hermitian_project(grid: &Grid, c: &mut [Complex64]) {
    let n = grid.n();
    c[0].im = 0.0;
    c[n / 2].im = 0.0;
    for j in 1..n / 2 {
        let avg = 0.5 * (c[j] + c[n - j].conj());
        c[j] = avg;
        c[n - j] = avg.conj();
    }
}
