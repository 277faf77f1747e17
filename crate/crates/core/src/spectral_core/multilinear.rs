use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;

use super::cutoffs::{theta, theta_tilde, THETA_SUPPORT};
use super::{Grid, SpectralError, SpectralField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type Eval2 = dyn Fn(f64, f64) -> Complex64 + Send + Sync;
type Eval3 = dyn Fn(f64, f64, f64) -> Complex64 + Send + Sync;

/// Where a symbol may be nonzero, used to skip work without changing results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    Full,
    /// Nonzero only if |first leg| < r·|second leg|.
    FirstLegLow(f64),
    /// Nonzero only if |second leg| < r·|first leg|.
    SecondLegLow(f64),
}

struct LatticeCache {
    n: usize,
    length_bits: u64,
    table: Vec<Complex64>,
}

/// Multiplier q(ξ−η, η) of a bilinear operator. The first argument is always
/// the frequency of the first input.
#[derive(Clone)]
pub struct BilinearSymbol {
    name: String,
    eval: Arc<Eval2>,
    support: Support,
    hermitian: bool,
    cache: Arc<OnceLock<LatticeCache>>,
}

impl fmt::Debug for BilinearSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BilinearSymbol")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("hermitian", &self.hermitian)
            .finish()
    }
}

impl BilinearSymbol {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(f),
            support: Support::Full,
            hermitian: false,
            cache: Arc::new(OnceLock::new()),
        }
    }

    /// Real-valued symbol even under (a, b) → (−a, −b); preserves reality.
    pub fn real_even(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, move |a, b| Complex64::new(f(a, b), 0.0)).hermitian()
    }

    /// Declares q(−a, −b) = conj q(a, b), so real inputs give real output.
    pub fn hermitian(mut self) -> Self {
        self.hermitian = true;
        self
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn eval(&self, a: f64, b: f64) -> Complex64 {
        (self.eval)(a, b)
    }

    /// ½(q(a,b) + q(b,a)).
    pub fn symmetrized(&self) -> Self {
        let inner = self.eval.clone();
        let mut out = Self::new(format!("sym({})", self.name), move |a, b| 0.5 * (inner(a, b) + inner(b, a)));
        out.hermitian = self.hermitian;
        out
    }

    /// Pointwise sum of symbols; the support becomes `Full` unless both agree.
    pub fn sum(name: impl Into<String>, parts: &[BilinearSymbol]) -> Self {
        let evals: Vec<Arc<Eval2>> = parts.iter().map(|p| p.eval.clone()).collect();
        let hermitian = parts.iter().all(|p| p.hermitian);
        let support = match parts.first() {
            Some(p) if parts.iter().all(|q| q.support == p.support) => p.support,
            _ => Support::Full,
        };
        let mut out = Self::new(name, move |a, b| evals.iter().map(|e| e(a, b)).sum());
        out.hermitian = hermitian;
        out.support = support;
        out
    }

    /// Fills the lattice table for `grid` (n² samples). Later applications on
    /// that grid read the table instead of calling the evaluator.
    pub fn cache_on(&self, grid: &Grid) {
        let n = grid.n();
        self.cache.get_or_init(|| {
            let ks = grid.wavenumbers();
            let table: Vec<Complex64> = (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (k, l) = (idx / n, idx % n);
                    (self.eval)(ks[k], ks[l])
                })
                .collect();
            LatticeCache { n, length_bits: grid.length().to_bits(), table }
        });
    }

    fn cached_table(&self, grid: &Grid) -> Option<&[Complex64]> {
        self.cache
            .get()
            .filter(|c| c.n == grid.n() && c.length_bits == grid.length().to_bits())
            .map(|c| c.table.as_slice())
    }

    /// Lattice value q(ξ_k, ξ_l) by FFT slots, from the cache when present.
    pub fn lattice_value(&self, grid: &Grid, k: usize, l: usize) -> Complex64 {
        match self.cached_table(grid) {
            Some(t) => t[k * grid.n() + l],
            None => (self.eval)(grid.wavenumber(k), grid.wavenumber(l)),
        }
    }
}

/// Multiplier c(ξ−η, η−σ, σ) of a trilinear operator.
#[derive(Clone)]
pub struct TrilinearSymbol {
    name: String,
    eval: Arc<Eval3>,
    hermitian: bool,
}

impl fmt::Debug for TrilinearSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrilinearSymbol").field("name", &self.name).finish()
    }
}

impl TrilinearSymbol {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64, f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), eval: Arc::new(f), hermitian: false }
    }

    pub fn hermitian(mut self) -> Self {
        self.hermitian = true;
        self
    }

    pub fn eval(&self, a: f64, b: f64, c: f64) -> Complex64 {
        (self.eval)(a, b, c)
    }
}

fn output_is_real(q_hermitian: bool, inputs: &[&SpectralField]) -> bool {
    q_hermitian && inputs.iter().all(|f| f.is_real())
}

/// One output coefficient of the dense rule, summing over the second leg in
/// ascending slot order. Terms whose symbol value is exactly zero are skipped.
fn dense_entry(
    q: &BilinearSymbol,
    grid: &Grid,
    fc: &[Complex64],
    gc: &[Complex64],
    j: usize,
    table: Option<&[Complex64]>,
    slots: Option<&[usize]>,
) -> Result<Complex64, SpectralError> {
    let n = grid.n();
    let mut acc = ZERO;
    let mut visit = |l: usize| -> Result<(), SpectralError> {
        let k = (j + n - l) % n;
        let qv = match table {
            Some(t) => t[k * n + l],
            None => (q.eval)(grid.wavenumber(k), grid.wavenumber(l)),
        };
        if qv == ZERO {
            return Ok(());
        }
        let populated = fc[k] != ZERO && gc[l] != ZERO;
        if !(qv.re.is_finite() && qv.im.is_finite()) {
            if populated {
                return Err(SpectralError::NonFiniteSymbol {
                    symbol: q.name.clone(),
                    first: grid.wavenumber(k),
                    second: grid.wavenumber(l),
                });
            }
            return Ok(());
        }
        acc += qv * fc[k] * gc[l];
        Ok(())
    };
    match slots {
        None => {
            for l in 0..n {
                visit(l)?;
            }
        }
        Some(ls) => {
            for &l in ls {
                visit(l)?;
            }
        }
    }
    Ok(acc / grid.length())
}

/// Slots l (ascending) that can carry a nonzero term for output slot j.
fn support_slots(grid: &Grid, support: Support, j: usize, low: &[usize]) -> Option<Vec<usize>> {
    let n = grid.n();
    match support {
        Support::Full => None,
        Support::SecondLegLow(_) => Some(low.to_vec()),
        Support::FirstLegLow(_) => {
            let mut ls: Vec<usize> = low.iter().map(|&k| (j + n - k) % n).collect();
            ls.sort_unstable();
            Some(ls)
        }
    }
}

/// Slots whose |ξ| is below ratio·max|ξ|, i.e. the only candidates for the low leg.
fn low_slots(grid: &Grid, support: Support) -> Vec<usize> {
    let r = match support {
        Support::Full => return Vec::new(),
        Support::FirstLegLow(r) | Support::SecondLegLow(r) => r,
    };
    let cap = r * grid.max_wavenumber();
    (0..grid.n()).filter(|&k| grid.wavenumber(k).abs() < cap).collect()
}

fn apply_impl(
    q: &BilinearSymbol,
    f: &SpectralField,
    g: &SpectralField,
    use_support: bool,
) -> Result<SpectralField, SpectralError> {
    f.same_grid(g)?;
    let grid = f.grid();
    let n = grid.n();
    let table = q.cached_table(grid);
    let support = if use_support { q.support } else { Support::Full };
    let low = low_slots(grid, support);
    let out: Result<Vec<Complex64>, SpectralError> = (0..n)
        .into_par_iter()
        .map(|j| {
            let slots = support_slots(grid, support, j, &low);
            dense_entry(q, grid, f.coeffs(), g.coeffs(), j, table, slots.as_deref())
        })
        .collect();
    SpectralField::from_coeffs(grid, out?, output_is_real(q.hermitian, &[f, g]))
}

/// Reference dense application:
/// `out(ξ_j) = (1/L) Σ_l q(ξ_{j−l}, ξ_l) f̂(ξ_{j−l}) ĝ(ξ_l)` with indices mod n.
/// Legs are evaluated at their lattice frequencies, so q ≡ 1 gives the exact
/// (aliased) pointwise product.
pub fn bilinear_apply(q: &BilinearSymbol, f: &SpectralField, g: &SpectralField) -> Result<SpectralField, SpectralError> {
    apply_impl(q, f, g, false)
}

/// Same sum as [`bilinear_apply`], visiting only pairs allowed by the
/// symbol's declared support. Bit-identical to the dense rule whenever the
/// declared support contains every nonzero lattice value.
pub fn bilinear_apply_fast(
    q: &BilinearSymbol,
    f: &SpectralField,
    g: &SpectralField,
) -> Result<SpectralField, SpectralError> {
    apply_impl(q, f, g, true)
}

/// Selected output coefficients of the dense rule, O(n) each.
pub fn bilinear_apply_at(
    q: &BilinearSymbol,
    f: &SpectralField,
    g: &SpectralField,
    slots: &[usize],
) -> Result<Vec<Complex64>, SpectralError> {
    f.same_grid(g)?;
    let grid = f.grid();
    let table = q.cached_table(grid);
    slots
        .iter()
        .map(|&j| dense_entry(q, grid, f.coeffs(), g.coeffs(), j, table, None))
        .collect()
}

/// Symbol of the paraproduct T_a f: θ(ξ−η, η).
pub fn paraproduct_symbol() -> BilinearSymbol {
    BilinearSymbol::real_even("theta", theta).with_support(Support::FirstLegLow(THETA_SUPPORT))
}

/// Symbol of the high-high remainder R_B(a, b): θ̃(ξ−η, η).
pub fn remainder_symbol() -> BilinearSymbol {
    BilinearSymbol::real_even("theta_tilde", theta_tilde)
}

/// T_a f, low frequencies of `a` multiplying high frequencies of `f`.
pub fn paraproduct(a: &SpectralField, f: &SpectralField) -> Result<SpectralField, SpectralError> {
    bilinear_apply_fast(&paraproduct_symbol(), a, f)
}

pub fn remainder_product(a: &SpectralField, b: &SpectralField) -> Result<SpectralField, SpectralError> {
    bilinear_apply(&remainder_symbol(), a, b)
}

/// Dense trilinear rule `(1/L²) Σ c(ξ−η, η−σ, σ) f̂ ĝ ĥ` with lattice legs.
pub fn trilinear_apply(
    c: &TrilinearSymbol,
    f: &SpectralField,
    g: &SpectralField,
    h: &SpectralField,
) -> Result<SpectralField, SpectralError> {
    f.same_grid(g)?;
    f.same_grid(h)?;
    let grid = f.grid();
    let n = grid.n();
    let (fc, gc, hc) = (f.coeffs(), g.coeffs(), h.coeffs());
    let scale = 1.0 / (grid.length() * grid.length());
    let out: Result<Vec<Complex64>, SpectralError> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = ZERO;
            for l in 0..n {
                let k1 = (j + n - l) % n;
                for m in 0..n {
                    let k2 = (l + n - m) % n;
                    let cv = (c.eval)(grid.wavenumber(k1), grid.wavenumber(k2), grid.wavenumber(m));
                    if cv == ZERO {
                        continue;
                    }
                    let populated = fc[k1] != ZERO && gc[k2] != ZERO && hc[m] != ZERO;
                    if !(cv.re.is_finite() && cv.im.is_finite()) {
                        if populated {
                            return Err(SpectralError::NonFiniteSymbol {
                                symbol: c.name.clone(),
                                first: grid.wavenumber(k1),
                                second: grid.wavenumber(k2),
                            });
                        }
                        continue;
                    }
                    acc += cv * fc[k1] * gc[k2] * hc[m];
                }
            }
            Ok(acc * scale)
        })
        .collect();
    SpectralField::from_coeffs(grid, out?, output_is_real(c.hermitian, &[f, g, h]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm().max(1e-300)
    }

    #[test]
    fn unit_symbol_is_pointwise_product() {
        let g = grid(32);
        let f = SpectralField::from_real_fn(&g, |x| x.sin().exp());
        let h = SpectralField::from_real_fn(&g, |x| (2.0 * x).cos() + 0.3);
        let one = BilinearSymbol::real_even("one", |_, _| 1.0);
        let got = bilinear_apply(&one, &f, &h).unwrap();
        assert!(rel(&got, &f.mul(&h).unwrap()) < 1e-13);
        assert!(got.is_real());
    }

    #[test]
    fn derivative_symbol() {
        let g = grid(32);
        let f = SpectralField::from_real_fn(&g, |x| x.cos());
        let h = SpectralField::from_real_fn(&g, |x| (3.0 * x).sin());
        let q = BilinearSymbol::new("i eta", |_, b| Complex64::new(0.0, b)).hermitian();
        let want = SpectralField::from_real_fn(&g, |x| x.cos() * 3.0 * (3.0 * x).cos());
        assert!(rel(&bilinear_apply(&q, &f, &h).unwrap(), &want) < 1e-13);
    }

    #[test]
    fn paraproduct_examples() {
        let g = grid(128);
        let c = SpectralField::from_real_fn(&g, |_| 2.5);
        let f = SpectralField::from_real_fn(&g, |x| x.sin() + (7.0 * x).cos());
        assert!(rel(&paraproduct(&c, &f).unwrap(), &f.scale(2.5)) < 1e-14);
        let a = SpectralField::from_real_fn(&g, |x| (32.0 * x).cos());
        let b = SpectralField::from_real_fn(&g, |x| x.cos());
        assert!(paraproduct(&a, &b).unwrap().l2_norm() < 1e-14);
        // Frequencies 32 and 1 are comparable under the θ transition, so the
        // whole product lands in the remainder.
        assert!(rel(&remainder_product(&a, &b).unwrap(), &a.mul(&b).unwrap()) < 1e-13);
        let rb = remainder_product(&b, &b).unwrap();
        let want = SpectralField::from_real_fn(&g, |x| 0.5 * (1.0 + (2.0 * x).cos()));
        assert!(rel(&rb, &want) < 1e-13);
    }

    #[test]
    fn fast_path_bit_matches_dense() {
        let g = Grid::new(2048, 2048.0).unwrap();
        let f = SpectralField::from_real_fn(&g, |x| (-(x / 40.0).powi(2)).exp() * (0.01 * x).cos());
        let h = SpectralField::from_real_fn(&g, |x| (-(x / 30.0).powi(2)).exp() * (2.0 * x).sin());
        let q = paraproduct_symbol();
        let dense = bilinear_apply(&q, &f, &h).unwrap();
        let fast = bilinear_apply_fast(&q, &f, &h).unwrap();
        for (a, b) in dense.coeffs().iter().zip(fast.coeffs()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let flipped = BilinearSymbol::real_even("theta swapped", |a, b| theta(b, a))
            .with_support(Support::SecondLegLow(THETA_SUPPORT));
        let dense = bilinear_apply(&flipped, &h, &f).unwrap();
        let fast = bilinear_apply_fast(&flipped, &h, &f).unwrap();
        assert!(dense.coeffs().iter().zip(fast.coeffs()).all(|(a, b)| a == b));
    }

    #[test]
    fn cache_matches_fresh_evaluation() {
        let g = grid(16);
        let q = BilinearSymbol::real_even("mix", |a, b| (a * b).cos() + a.abs().sqrt());
        q.cache_on(&g);
        for k in 0..16 {
            for l in 0..16 {
                let fresh = q.eval(g.wavenumber(k), g.wavenumber(l));
                assert_eq!(q.lattice_value(&g, k, l), fresh);
            }
        }
    }

    #[test]
    fn partial_evaluation_matches_full() {
        let g = grid(64);
        let f = SpectralField::from_real_fn(&g, |x| x.sin().exp());
        let h = SpectralField::from_real_fn(&g, |x| x.cos().powi(3));
        let q = BilinearSymbol::real_even("w", |a, b| (a - b).abs().sqrt());
        let full = bilinear_apply(&q, &f, &h).unwrap();
        let part = bilinear_apply_at(&q, &f, &h, &[1, 5, 60]).unwrap();
        // The full result is projected onto Hermitian coefficients, so only
        // roundoff separates the two.
        for (p, j) in part.iter().zip([1, 5, 60]) {
            assert!((p - full.coeffs()[j]).norm() < 1e-13 * full.coeffs()[j].norm().max(1.0));
        }
    }

    #[test]
    fn trilinear_unit_symbol() {
        let g = grid(16);
        let f = SpectralField::from_real_fn(&g, |x| x.sin());
        let h = SpectralField::from_real_fn(&g, |x| (2.0 * x).cos());
        let k = SpectralField::from_real_fn(&g, |x| 1.0 + x.cos());
        let one = TrilinearSymbol::new("one", |_, _, _| Complex64::new(1.0, 0.0)).hermitian();
        let want = f.mul(&h).unwrap().mul(&k).unwrap();
        assert!(rel(&trilinear_apply(&one, &f, &h, &k).unwrap(), &want) < 1e-13);
        let z = SpectralField::zeros(&g);
        assert!(trilinear_apply(&one, &f, &z, &k).unwrap().is_zero());
    }

    #[test]
    fn non_finite_symbol_on_populated_pair() {
        let g = grid(16);
        let f = SpectralField::from_real_fn(&g, |x| 1.0 + x.cos());
        let q = BilinearSymbol::real_even("inv", |a, _| 1.0 / a);
        assert!(matches!(bilinear_apply(&q, &f, &f), Err(SpectralError::NonFiniteSymbol { .. })));
    }
}
