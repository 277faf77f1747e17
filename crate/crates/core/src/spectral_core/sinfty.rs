use rayon::prelude::*;

use super::cutoffs::psi_k;
use super::BilinearSymbol;

/// Sampling density for [`sinfty_proxy`]: `per_dim` magnitudes per leg and sign.
#[derive(Clone, Copy, Debug)]
pub struct SinftyLattice {
    pub per_dim: usize,
}

impl Default for SinftyLattice {
    fn default() -> Self {
        Self { per_dim: 48 }
    }
}

/// Upper-bound proxy for the S∞ norm of q on the dyadic block (k; k1, k2):
/// `sup|q| + Σ_j Σ_{m=1,2} 2^{m k_j} sup|Δ^m_j q|` over a lattice covering
/// supp ψ_k(ξ)ψ_{k1}(ξ−η)ψ_{k2}(η), with centered finite differences Δ.
/// The cutoffs only select the region; they are not multiplied in.
///
/// The underlying kernel estimate holds in any two of the three frequencies
/// ξ, ξ−η, η (the change of variables is unimodular), so the proxy is
/// evaluated in all three coordinate pairs and the smallest is returned.
/// Without this, a block whose output band sits far below both legs is
/// charged 2^{k1} for derivatives of |ξ|.
pub fn sinfty_proxy(q: &BilinearSymbol, k: i32, k1: i32, k2: i32, lattice: SinftyLattice) -> f64 {
    let m = lattice.per_dim.max(1);
    let s1 = 2f64.powi(k1);
    let s2 = 2f64.powi(k2);
    let sk = 2f64.powi(k);
    let mags = |scale: f64| -> Vec<f64> {
        (0..m).map(|i| scale * (0.625 + 0.875 * (i as f64 + 0.5) / m as f64)).collect()
    };
    let (m1, m2) = (mags(s1), mags(s2));
    let mut points = Vec::new();
    for &sa in &[1.0, -1.0] {
        for &sb in &[1.0, -1.0] {
            for &a in &m1 {
                for &b in &m2 {
                    let (x, y) = (sa * a, sb * b);
                    if psi_k(x, k1) > 0.0 && psi_k(y, k2) > 0.0 && psi_k(x + y, k) > 0.0 {
                        points.push((x, y));
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return 0.0;
    }
    // Directions in (ξ−η, η) coordinates. Moving along one changes two of
    // the three frequencies; the step stays a small fraction of both so the
    // stencil never crosses zero.
    let step = |p: f64, r: f64| 0.25 * 0.875 * p.min(r) / m as f64;
    let dirs: [((f64, f64), f64); 3] = [
        ((1.0, 0.0), step(s1, sk)),  // ξ−η with η fixed, i.e. ξ with η fixed
        ((0.0, 1.0), step(s2, sk)),  // η with ξ−η fixed, i.e. ξ with ξ−η fixed
        ((-1.0, 1.0), step(s1, s2)), // η with ξ fixed
    ];
    // Charts: (ξ−η, η), (ξ, η), (ξ, ξ−η), as (direction, band scale) pairs.
    let charts: [[(usize, f64); 2]; 3] = [[(0, s1), (1, s2)], [(0, sk), (2, s2)], [(1, sk), (2, s1)]];
    let sups = points
        .par_iter()
        .map(|&(x, y)| {
            let c = q.eval(x, y);
            let mut out = [0.0; 7];
            out[0] = c.norm();
            for (d, &((dx, dy), h)) in dirs.iter().enumerate() {
                let plus = q.eval(x + h * dx, y + h * dy);
                let minus = q.eval(x - h * dx, y - h * dy);
                out[1 + 2 * d] = (plus - minus).norm() / (2.0 * h);
                out[2 + 2 * d] = (plus - 2.0 * c + minus).norm() / (h * h);
            }
            out
        })
        .reduce(|| [0.0; 7], |a, b| std::array::from_fn(|i| a[i].max(b[i])));
    charts
        .iter()
        .map(|chart| {
            sups[0]
                + chart.iter().map(|&(d, s)| s * sups[1 + 2 * d] + s * s * sups[2 + 2 * d]).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn constant_symbols() {
        let one = BilinearSymbol::new("one", |_, _| Complex64::new(1.0, 0.0));
        let zero = BilinearSymbol::new("zero", |_, _| Complex64::new(0.0, 0.0));
        let lat = SinftyLattice { per_dim: 16 };
        assert!((sinfty_proxy(&one, 1, 0, 0, lat) - 1.0).abs() < 1e-12);
        assert_eq!(sinfty_proxy(&zero, 1, 0, 0, lat), 0.0);
    }

    #[test]
    fn empty_block_is_zero() {
        let one = BilinearSymbol::new("one", |_, _| Complex64::new(1.0, 0.0));
        // Two legs near 2^0 cannot sum to 2^6.
        assert_eq!(sinfty_proxy(&one, 6, 0, 0, SinftyLattice { per_dim: 8 }), 0.0);
    }
}
