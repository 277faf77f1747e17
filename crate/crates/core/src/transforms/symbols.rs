//! Quadratic symbols of the good-unknown system and the normal-form symbols
//! that cancel them. Every symbol takes (ξ−η, η), first leg first.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral_core::{theta, theta_tilde, BilinearSymbol, Grid, Support, THETA_SUPPORT};

/// Relative size of D below which a pair is treated as singular.
pub const DELTA_SING: f64 = 1e-8;

fn lam(x: f64) -> f64 {
    x.abs().sqrt()
}

/// x|x|^{−1/2}, continuous with value 0 at 0.
fn sgn_sqrt(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().sqrt()
    }
}

pub fn q1_1(a: f64, b: f64) -> f64 {
    (a * sgn_sqrt(b) + 0.5 * b.abs().powf(1.5)) * theta(b, a)
}

pub fn q1_2(a: f64, b: f64) -> f64 {
    -0.5 * a.abs() * lam(b) * theta(a, b)
}

pub fn q1_3(a: f64, b: f64) -> f64 {
    let xi = a + b;
    (-xi.abs() * lam(b) + xi * sgn_sqrt(b)) * theta_tilde(b, a)
}

pub fn q1(a: f64, b: f64) -> f64 {
    q1_1(a, b) + q1_2(a, b) + q1_3(a, b)
}

pub fn q2(a: f64, b: f64) -> f64 {
    0.5 * lam(a + b) * b.abs() * theta(b, a)
}

pub fn q3(a: f64, b: f64) -> f64 {
    lam(a + b) * sgn_sqrt(a) * sgn_sqrt(b) * theta(b, a)
}

/// The driver combination A(ξ−η, η).
pub fn cap_a(a: f64, b: f64) -> f64 {
    lam(a + b) * q1(a, b) - (q2(a, b) + q2(b, a)) * lam(b) + (q3(a, b) + q3(b, a)) * lam(a)
}

/// Normal-form symbols at one pair, together with b at the swapped pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalFormPoint {
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
    pub b_swapped: f64,
}

impl NormalFormPoint {
    const ZERO: Self = Self { a1: 0.0, a2: 0.0, b: 0.0, b_swapped: 0.0 };
}

/// Denominator −(|ξ−η|+|η|−|ξ|)² + 4|ξ−η||η|.
pub fn denominator(a: f64, b: f64) -> f64 {
    let s = a.abs() + b.abs() - (a + b).abs();
    -s * s + 4.0 * a.abs() * b.abs()
}

/// True when the pair sits on the guarded singular set: ξ = 0 with both
/// legs nonzero, or |D| < δ·|ξ−η||η|.
pub fn is_singular(a: f64, b: f64, delta: f64) -> bool {
    if a == 0.0 || b == 0.0 {
        return false;
    }
    a + b == 0.0 || denominator(a, b).abs() < delta * a.abs() * b.abs()
}

/// Solves the three-equation cancellation system in closed form. `None` on
/// the singular set. A zero leg gives the zero solution, which satisfies the
/// system because every quadratic symbol vanishes there.
pub fn normal_form_at(a: f64, b: f64, delta: f64) -> Option<NormalFormPoint> {
    if a == 0.0 || b == 0.0 {
        return Some(NormalFormPoint::ZERO);
    }
    if is_singular(a, b, delta) {
        return None;
    }
    let xi = a + b;
    let (la, lb, lx) = (lam(a), lam(b), lam(xi));
    let s = a.abs() + b.abs() - xi.abs();
    let r = la * lb;
    let d = denominator(a, b);
    let (q2ab, q2ba, q3ab, q3ba) = (q2(a, b), q2(b, a), q3(a, b), q3(b, a));
    let big_ab = lx * q1(a, b) - (q2ab + q2ba) * lb + (q3ab + q3ba) * la;
    let big_ba = lx * q1(b, a) - (q2ab + q2ba) * la + (q3ab + q3ba) * lb;
    let bab = (s * big_ab - 2.0 * big_ba * r) / d;
    let bba = (s * big_ba - 2.0 * big_ab * r) / d;
    let a1 = (bab * lb - q2ab + bba * la - q2ba) / (2.0 * lx);
    let a2 = -(bab * la + q3ab + bba * lb + q3ba) / (2.0 * lx);
    Some(NormalFormPoint { a1, a2, b: bab, b_swapped: bba })
}

/// Residuals of the three cancellation equations at (a, b), each divided by
/// max(1, largest term magnitude in that equation).
pub fn system_residuals(a: f64, b: f64, delta: f64) -> Option<[f64; 3]> {
    let p = normal_form_at(a, b, delta)?;
    let (la, lb, lx) = (lam(a), lam(b), lam(a + b));
    let rel = |terms: &[f64]| {
        let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        terms.iter().sum::<f64>().abs() / scale
    };
    let e1 = [q1(a, b), 2.0 * lb * p.a1, -2.0 * la * p.a2, -lx * p.b];
    let e2 = [q2(a, b), -p.b * lb, q2(b, a), -p.b_swapped * la, 2.0 * lx * p.a1];
    let e3 = [q3(a, b), q3(b, a), p.b * la, p.b_swapped * lb, 2.0 * lx * p.a2];
    Some([rel(&e1), rel(&e2), rel(&e3)])
}

#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub checked: usize,
    pub skipped_singular: usize,
    pub max_relative: [f64; 3],
}

impl ResidualReport {
    pub fn worst(&self) -> f64 {
        self.max_relative.iter().copied().fold(0.0, f64::max)
    }
}

/// Residuals at `samples` random admissible pairs with magnitudes
/// log-uniform in [2^−10, 2^10] and random signs.
pub fn residual_check(samples: usize, seed: u64) -> ResidualReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ResidualReport { checked: 0, skipped_singular: 0, max_relative: [0.0; 3] };
    let draw = |rng: &mut ChaCha8Rng| {
        let m = 2f64.powf(rng.random_range(-10.0..10.0));
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    while report.checked < samples {
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        match system_residuals(a, b, DELTA_SING) {
            Some(r) => {
                for i in 0..3 {
                    report.max_relative[i] = report.max_relative[i].max(r[i]);
                }
                report.checked += 1;
            }
            None => report.skipped_singular += 1,
        }
    }
    report
}

/// All bilinear symbols of the transformation, immutable once built.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    pub q1_1: BilinearSymbol,
    pub q1_2: BilinearSymbol,
    pub q1_3: BilinearSymbol,
    pub q1: BilinearSymbol,
    pub q2: BilinearSymbol,
    pub q3: BilinearSymbol,
    pub a1: BilinearSymbol,
    pub a2: BilinearSymbol,
    pub b: BilinearSymbol,
    pub delta: f64,
    exclusions: Arc<AtomicU64>,
}

/// Symbols whose lattice tables are cached when the grid is small enough.
pub const CACHE_MAX_N: usize = 1024;

impl SymbolTable {
    pub fn new(delta: f64) -> Self {
        let low2 = Support::SecondLegLow(THETA_SUPPORT);
        let q1_1 = BilinearSymbol::real_even("q1_1", q1_1).with_support(low2);
        let q1_2 = BilinearSymbol::real_even("q1_2", q1_2).with_support(Support::FirstLegLow(THETA_SUPPORT));
        let q1_3 = BilinearSymbol::real_even("q1_3", q1_3);
        let q1 = BilinearSymbol::real_even("q1", q1);
        let q2 = BilinearSymbol::real_even("q2", q2).with_support(low2);
        let q3 = BilinearSymbol::real_even("q3", q3).with_support(low2);
        let exclusions = Arc::new(AtomicU64::new(0));
        let nf = |name: &str, pick: fn(&NormalFormPoint) -> f64| {
            let counter = exclusions.clone();
            BilinearSymbol::real_even(name, move |a, b| match normal_form_at(a, b, delta) {
                Some(p) => pick(&p),
                None => {
                    counter.fetch_add(1, Ordering::Relaxed);
                    0.0
                }
            })
        };
        let a1 = nf("a1", |p| p.a1);
        let a2 = nf("a2", |p| p.a2);
        let b = nf("b", |p| p.b);
        Self { q1_1, q1_2, q1_3, q1, q2, q3, a1, a2, b, delta, exclusions }
    }

    /// Number of evaluations that landed on the singular set so far.
    pub fn exclusion_count(&self) -> u64 {
        self.exclusions.load(Ordering::Relaxed)
    }

    /// Fills lattice tables on grids up to [`CACHE_MAX_N`].
    pub fn prepare(&self, grid: &Grid) {
        if grid.n() <= CACHE_MAX_N {
            for s in [&self.q1, &self.q2, &self.q3, &self.a1, &self.a2, &self.b] {
                s.cache_on(grid);
            }
        }
    }

    /// Lattice pairs (ξ_k, ξ_l) of `grid` on the singular set.
    pub fn singular_lattice_pairs(&self, grid: &Grid) -> usize {
        let ks = grid.wavenumbers();
        ks.iter().map(|&a| ks.iter().filter(|&&b| is_singular(a, b, self.delta)).count()).sum()
    }

    /// CSV dump on the grid lattice: `xi_minus_eta,eta` then re/im columns
    /// per symbol.
    pub fn write_lattice_csv(&self, grid: &Grid, mut out: impl Write) -> std::io::Result<()> {
        let syms = [&self.q1_1, &self.q1_2, &self.q1_3, &self.q2, &self.q3, &self.a1, &self.a2, &self.b];
        write!(out, "xi_minus_eta,eta")?;
        for s in syms {
            write!(out, ",{0}_re,{0}_im", s.name())?;
        }
        writeln!(out)?;
        let ks = grid.wavenumbers();
        for (k, &a) in ks.iter().enumerate() {
            for (l, &b) in ks.iter().enumerate() {
                write!(out, "{a:.17e},{b:.17e}")?;
                for s in syms {
                    let v: Complex64 = s.lattice_value(grid, k, l);
                    write!(out, ",{:.17e},{:.17e}", v.re, v.im)?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new(DELTA_SING)
    }
}

pub fn build_normal_form_symbols() -> SymbolTable {
    SymbolTable::default()
}
