//! Empirical constants for the dyadic symbol bounds, via the S∞ proxy.

use crate::spectral_core::{sinfty_proxy, BilinearSymbol, SinftyLattice};

use super::symbols::{q1_1, q1_2, q2, q3, SymbolTable};

/// Dyadic range sampled for both legs.
pub const BAND_MIN: i32 = -10;
pub const BAND_MAX: i32 = 10;

/// Sup of the normalized proxies over every sampled block.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymbolConstants {
    /// Σ_i proxy(q_i) / 2^{min/2+max}, |k1−k2| ≥ 5.
    pub separated: f64,
    /// Σ_i proxy(q_i) / 2^{k+k1/2}, |k1−k2| ≤ 5.
    pub comparable: f64,
    /// Swap-combination proxies / 2^{3 min/2}, |k1−k2| ≥ 5.
    pub cancellation: f64,
    /// Smallest observed ratio of the raw bound to the combination proxy,
    /// divided by 2^{(max−min)/2}: how much of the predicted gain shows up.
    pub cancellation_gain: f64,
    /// Σ proxy(a1, a2, b) / 2^{max}, |k1−k2| ≥ 5.
    pub normal_form: f64,
}

impl SymbolConstants {
    fn fields(&self) -> [f64; 5] {
        [self.separated, self.comparable, self.cancellation, self.cancellation_gain, self.normal_form]
    }

    pub const NAMES: [&'static str; 5] = ["separated", "comparable", "cancellation", "cancellation_gain", "normal_form"];
}

/// The three swap combinations whose bound improves to 2^{3 min/2}.
pub fn cancellation_symbols() -> [BilinearSymbol; 3] {
    [
        BilinearSymbol::real_even("q1_1+q1_1(-xi,eta)", |a, b| q1_1(a, b) + q1_1(-(a + b), b)),
        BilinearSymbol::real_even("q2(eta,xi-eta)+q1_2(eta-xi,xi)", |a, b| q2(b, a) + q1_2(-a, a + b)),
        BilinearSymbol::real_even("q3+q3(-xi,eta)", |a, b| q3(a, b) + q3(-(a + b), b)),
    ]
}

fn output_bands(k1: i32, k2: i32) -> std::ops::RangeInclusive<i32> {
    let hi = k1.max(k2) + 1;
    if (k1 - k2).abs() >= 5 {
        hi - 2..=hi
    } else {
        BAND_MIN.min(k1.min(k2) - 1)..=hi
    }
}

pub fn symbol_constants(st: &SymbolTable, lattice: SinftyLattice) -> SymbolConstants {
    let combos = cancellation_symbols();
    let mut c = SymbolConstants { cancellation_gain: f64::INFINITY, ..Default::default() };
    for k1 in BAND_MIN..=BAND_MAX {
        for k2 in BAND_MIN..=BAND_MAX {
            let (lo, hi) = (k1.min(k2) as f64, k1.max(k2) as f64);
            let separated = (k1 - k2).abs() >= 5;
            for k in output_bands(k1, k2) {
                let qs: f64 =
                    [&st.q1, &st.q2, &st.q3].iter().map(|q| sinfty_proxy(q, k, k1, k2, lattice)).sum();
                if separated {
                    c.separated = c.separated.max(qs / 2f64.powf(lo / 2.0 + hi));
                    let comb: f64 = combos.iter().map(|q| sinfty_proxy(q, k, k1, k2, lattice)).sum();
                    c.cancellation = c.cancellation.max(comb / 2f64.powf(1.5 * lo));
                    if comb > 0.0 {
                        let gain = 2f64.powf(lo / 2.0 + hi) / comb / 2f64.powf((hi - lo) / 2.0);
                        c.cancellation_gain = c.cancellation_gain.min(gain);
                    }
                    let nf: f64 =
                        [&st.a1, &st.a2, &st.b].iter().map(|q| sinfty_proxy(q, k, k1, k2, lattice)).sum();
                    c.normal_form = c.normal_form.max(nf / 2f64.powf(hi));
                }
                if (k1 - k2).abs() <= 5 {
                    c.comparable = c.comparable.max(qs / 2f64.powf(k as f64 + k1 as f64 / 2.0));
                }
            }
        }
    }
    if !c.cancellation_gain.is_finite() {
        c.cancellation_gain = 0.0;
    }
    c
}

#[derive(Clone, Debug)]
pub struct SymbolConstantsReport {
    pub coarse: SymbolConstants,
    /// Four times as many lattice points per block.
    pub refined: SymbolConstants,
    pub per_dim: usize,
}

impl SymbolConstantsReport {
    /// Relative change of each constant under refinement, in `NAMES` order.
    pub fn relative_changes(&self) -> [f64; 5] {
        let (a, b) = (self.coarse.fields(), self.refined.fields());
        std::array::from_fn(|i| if b[i] == 0.0 { (a[i] - b[i]).abs() } else { (a[i] - b[i]).abs() / b[i].abs() })
    }

    pub fn stable(&self, tol: f64) -> bool {
        self.relative_changes().iter().all(|&r| r <= tol)
    }
}

pub fn symbol_constants_report(st: &SymbolTable, per_dim: usize) -> SymbolConstantsReport {
    SymbolConstantsReport {
        coarse: symbol_constants(st, SinftyLattice { per_dim }),
        refined: symbol_constants(st, SinftyLattice { per_dim: 2 * per_dim }),
        per_dim,
    }
}
