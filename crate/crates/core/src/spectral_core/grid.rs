use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SpectralError;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    padded_forward: Arc<dyn Fft<f64>>,
    padded_inverse: Arc<dyn Fft<f64>>,
}

/// Uniform grid on the centered torus `[-L/2, L/2)`.
///
/// Coefficients are stored in FFT index order: slot `j` holds frequency
/// `2*pi*j/L` for `j < n/2` and `2*pi*(j-n)/L` otherwise. Slot `n/2` is the
/// Nyquist mode `-pi*n/L`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    length: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("length", &self.length).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length.to_bits() == other.length.to_bits()
    }
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self, SpectralError> {
        if n < 4 || !n.is_power_of_two() {
            return Err(SpectralError::BadGrid(format!("n = {n} must be a power of two >= 4")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::BadGrid(format!("length = {length} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let padded = 3 * n / 2;
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            padded_forward: planner.plan_fft_forward(padded),
            padded_inverse: planner.plan_fft_inverse(padded),
        };
        Ok(Self { n, length, plans: Arc::new(plans) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Physical coordinate of sample `m`.
    pub fn x(&self, m: usize) -> f64 {
        -0.5 * self.length + m as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.x(m)).collect()
    }

    /// Signed integer frequency index of FFT slot `j`.
    pub fn signed_index(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// FFT slot holding signed frequency index `s` (taken modulo n).
    pub fn slot(&self, s: i64) -> usize {
        s.rem_euclid(self.n as i64) as usize
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn wavenumber(&self, j: usize) -> f64 {
        self.dk() * self.signed_index(j) as f64
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.wavenumber(j)).collect()
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n / 2
    }

    /// Largest resolved |ξ| (the Nyquist magnitude).
    pub fn max_wavenumber(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Inclusive range of Littlewood-Paley bands whose support meets the
    /// nonzero lattice and fits strictly below the Nyquist magnitude.
    pub fn band_range(&self) -> (i32, i32) {
        let k_hi = (self.max_wavenumber() / 1.5).log2().ceil() as i32 - 1;
        let k_lo = (self.dk() / 1.5).log2().floor() as i32 + 1;
        (k_lo, k_hi)
    }

    /// `dx * (-1)^j * FFT(values)`, i.e. the samples of `∫ e^{-ixξ} f dx`.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.plans.forward.process(&mut buf);
        let dx = self.dx();
        for (j, c) in buf.iter_mut().enumerate() {
            *c *= if j % 2 == 0 { dx } else { -dx };
        }
        buf
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let scale = 1.0 / self.length;
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * if j % 2 == 0 { scale } else { -scale })
            .collect();
        self.plans.inverse.process(&mut buf);
        buf
    }

    /// Product of two coefficient arrays evaluated on a 3n/2 grid and
    /// truncated back, so quadratic interactions do not alias. The Nyquist
    /// slot is dropped on input and output.
    pub fn dealiased_product(&self, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let m = 3 * n / 2;
        let sign = |s: i64| if s % 2 == 0 { 1.0 } else { -1.0 };
        let pad = |c: &[Complex64]| {
            let mut out = vec![Complex64::new(0.0, 0.0); m];
            for (j, &cj) in c.iter().enumerate() {
                if j == n / 2 {
                    continue;
                }
                let s = self.signed_index(j);
                out[s.rem_euclid(m as i64) as usize] = cj * sign(s);
            }
            self.plans.padded_inverse.process(&mut out);
            out
        };
        let pa = pad(a);
        let pb = pad(b);
        let mut prod: Vec<Complex64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        self.plans.padded_forward.process(&mut prod);
        let scale = 1.0 / (self.length * m as f64);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (j, o) in out.iter_mut().enumerate() {
            if j == n / 2 {
                continue;
            }
            let s = self.signed_index(j);
            *o = prod[s.rem_euclid(m as i64) as usize] * (scale * sign(s));
        }
        out
    }
}
