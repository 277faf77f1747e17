//! Cubic phases Φ and Monte-Carlo checks of their lower bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lam(x: f64) -> f64 {
    x.abs().sqrt()
}

/// Φ(ξ, η, σ) = Λ(ξ) − ι₁Λ(ξ−η) − ι₂Λ(η−σ) − ι₃Λ(σ) with Λ = |·|^{1/2}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseFunction {
    pub signs: [i8; 3],
}

impl PhaseFunction {
    /// The four sign patterns that occur in the cubic profile equation.
    pub const ADMISSIBLE: [[i8; 3]; 4] = [[1, 1, 1], [1, 1, -1], [1, -1, -1], [-1, -1, -1]];

    pub fn new(signs: [i8; 3]) -> Self {
        Self { signs }
    }

    pub fn eval(&self, xi: f64, eta: f64, sigma: f64) -> f64 {
        let [i1, i2, i3] = self.signs.map(f64::from);
        lam(xi) - i1 * lam(xi - eta) - i2 * lam(eta - sigma) - i3 * lam(sigma)
    }

    /// Same phase written on the three legs ξ₁ + ξ₂ + ξ₃ = ξ.
    pub fn eval_legs(&self, x1: f64, x2: f64, x3: f64) -> f64 {
        let xi = x1 + x2 + x3;
        self.eval(xi, xi - x1, x3)
    }
}

#[derive(Clone, Debug)]
pub struct PhaseBoundEstimate {
    pub name: &'static str,
    pub samples: usize,
    pub min_ratio: f64,
    /// Minimum over four times as many samples (a superset of the first run).
    pub min_ratio_refined: f64,
}

impl PhaseBoundEstimate {
    pub fn relative_change(&self) -> f64 {
        (self.min_ratio - self.min_ratio_refined).abs() / self.min_ratio_refined
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.min_ratio > 0.0 && self.min_ratio_refined > 0.0 && self.relative_change() <= tol
    }
}

#[derive(Clone, Debug)]
pub struct PhaseBoundReport {
    pub estimates: Vec<PhaseBoundEstimate>,
}

impl PhaseBoundReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.estimates.iter().all(|e| e.passed(tol))
    }
}

fn signed_log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = 2f64.powf(rng.random_range(lo..hi));
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

/// Four-sign phase with the smallest leg ξ−η separated by 2^10 from ξ, η−σ
/// and σ (all cutoffs equal 1). Ratio |Φ| / min{|ξ|, |η−σ|, |σ|}^{1/2},
/// minimized over the sixteen sign choices.
fn sample_low_leg(rng: &mut ChaCha8Rng) -> Option<f64> {
    let x2 = signed_log_uniform(rng, -10.0, 10.0);
    let x3 = signed_log_uniform(rng, -10.0, 10.0);
    let base = x2 + x3;
    let m = x2.abs().min(x3.abs()).min(base.abs());
    if m == 0.0 {
        return None;
    }
    let x1 = signed_log_uniform(rng, -20.0, -11.0) * m;
    let xi = x1 + base;
    let floor = xi.abs().min(x2.abs()).min(x3.abs());
    if x1.abs() > floor / 1024.0 {
        return None;
    }
    let mut best = f64::INFINITY;
    for bits in 0..16u8 {
        let s = |i: u8| if bits >> i & 1 == 0 { 1.0 } else { -1.0 };
        let phi = s(0) * lam(xi) - s(1) * lam(x1) - s(2) * lam(x2) - s(3) * lam(x3);
        best = best.min(phi.abs());
    }
    Some(best / floor.sqrt())
}

/// Φ^{+,+,−} with one leg at least 2^10 below both the median leg and ξ.
/// Ratio |Φ| / min{|ξ|, med}^{1/2}.
fn sample_separated(rng: &mut ChaCha8Rng) -> Option<f64> {
    let u = signed_log_uniform(rng, -10.0, 10.0);
    let v = signed_log_uniform(rng, -10.0, 10.0);
    let m = u.abs().min(v.abs()).min((u + v).abs());
    if m == 0.0 {
        return None;
    }
    let w = signed_log_uniform(rng, -20.0, -10.0) * m;
    let mut legs = [u, v, w];
    let slot = rng.random_range(0..3usize);
    legs.swap(2, slot);
    let xi: f64 = legs.iter().sum();
    let med = median3(legs.map(f64::abs));
    let low = w.abs();
    if low > med / 1024.0 || low > xi.abs() / 1024.0 {
        return None;
    }
    let phi = PhaseFunction::new([1, 1, -1]).eval_legs(legs[0], legs[1], legs[2]);
    Some(phi.abs() / xi.abs().min(med).sqrt())
}

/// Σ over (+,+,+), (+,−,−), (−,−,−) of |Φ| against the median leg.
fn sample_weak_ellipticity(rng: &mut ChaCha8Rng) -> Option<f64> {
    let legs = [0; 3].map(|_| signed_log_uniform(rng, -10.0, 10.0));
    let med = median3(legs.map(f64::abs));
    let total: f64 = [[1, 1, 1], [1, -1, -1], [-1, -1, -1]]
        .iter()
        .map(|&s| PhaseFunction::new(s).eval_legs(legs[0], legs[1], legs[2]).abs())
        .sum();
    Some(total / med.sqrt())
}

fn minimum(sampler: fn(&mut ChaCha8Rng) -> Option<f64>, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut first, mut all) = (f64::INFINITY, f64::INFINITY);
    let mut taken = 0;
    while taken < 4 * samples {
        if let Some(r) = sampler(&mut rng) {
            all = all.min(r);
            taken += 1;
            if taken == samples {
                first = all;
            }
        }
    }
    (first, all)
}

/// Minimum observed |Φ|/bound for the three lower-bound estimates at
/// `samples` and `4·samples` draws.
pub fn phase_bound_check(samples: usize, seed: u64) -> PhaseBoundReport {
    let cases: [(&'static str, fn(&mut ChaCha8Rng) -> Option<f64>); 3] = [
        ("low_leg_four_phase", sample_low_leg),
        ("separated_plus_plus_minus", sample_separated),
        ("weak_ellipticity", sample_weak_ellipticity),
    ];
    let estimates = cases
        .iter()
        .enumerate()
        .map(|(i, &(name, f))| {
            let (min_ratio, min_ratio_refined) = minimum(f, samples.max(1), seed.wrapping_add(i as u64));
            PhaseBoundEstimate { name, samples, min_ratio, min_ratio_refined }
        })
        .collect();
    PhaseBoundReport { estimates }
}
