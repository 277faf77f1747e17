//! Smooth Littlewood-Paley cutoffs and the frequency-comparison weights θ, θ̃.

/// Quintic smootherstep on [0, 1], clamped outside.
pub fn smootherstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    }
}

/// Even bump equal to 1 on |x| ≤ 5/4 and 0 on |x| ≥ 3/2.
pub fn psi_tilde(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.25 {
        1.0
    } else if a >= 1.5 {
        0.0
    } else {
        1.0 - smootherstep((a - 1.25) * 4.0)
    }
}

fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// ψ_{≤k}(ξ) = ψ̃(ξ / 2^k).
pub fn psi_leq(xi: f64, k: i32) -> f64 {
    psi_tilde(xi / pow2(k))
}

/// ψ_k(ξ) = ψ̃(ξ/2^k) − ψ̃(ξ/2^{k−1}); supported in 0.625·2^k < |ξ| < 1.5·2^k.
pub fn psi_k(xi: f64, k: i32) -> f64 {
    psi_tilde(xi / pow2(k)) - psi_tilde(xi / pow2(k - 1))
}

/// ψ_{≥k}(ξ) = 1 − ψ_{≤k−1}(ξ).
pub fn psi_geq(xi: f64, k: i32) -> f64 {
    1.0 - psi_leq(xi, k - 1)
}

/// Transition profile of θ in the variable u = log₂(|a|/|b|).
fn theta_profile(u: f64) -> f64 {
    if u <= -10.0 {
        1.0
    } else if u >= -9.0 {
        0.0
    } else {
        1.0 - smootherstep(u + 10.0)
    }
}

/// θ(a, b): 1 when |a| ≤ 2^{-10}|b|, 0 when |a| ≥ 2^{-9}|b|.
pub fn theta(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    if b == 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return 1.0;
    }
    theta_profile((a / b).log2())
}

/// θ̃(a, b) = 1 − θ(a, b) − θ(b, a), the comparable-frequency weight.
pub fn theta_tilde(a: f64, b: f64) -> f64 {
    1.0 - theta(a, b) - theta(b, a)
}

/// Ratio below which θ(a, b) can be nonzero: |a| < THETA_SUPPORT·|b|.
pub const THETA_SUPPORT: f64 = 1.0 / 512.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_plateau_and_support() {
        assert_eq!(psi_tilde(1.25), 1.0);
        assert_eq!(psi_tilde(-1.0), 1.0);
        assert_eq!(psi_tilde(1.5), 0.0);
        let mid = psi_tilde(1.375);
        assert!((mid - 0.5).abs() < 1e-15);
    }

    #[test]
    fn band_zero_at_one() {
        assert_eq!(psi_k(1.0, 0), 1.0);
        assert_eq!(psi_k(1.0, 5), 0.0);
        assert_eq!(psi_k(-1.0, 1), 0.0);
    }

    #[test]
    fn partition_of_unity_dense() {
        for i in 1..20000 {
            let xi = 1e-3 * i as f64 * 1.37;
            let s: f64 = (-20..=20).map(|k| psi_k(xi, k)).sum();
            assert!((s - 1.0).abs() < 1e-12, "xi = {xi}: {s}");
        }
    }

    #[test]
    fn theta_limits() {
        assert_eq!(theta(0.0, 1.0), 1.0);
        assert_eq!(theta(1.0, 0.0), 0.0);
        assert_eq!(theta(0.0, 0.0), 0.0);
        assert_eq!(theta(2f64.powi(-10), 1.0), 1.0);
        assert_eq!(theta(2f64.powi(-9), 1.0), 0.0);
        assert_eq!(theta(32.0, 1.0), 0.0);
        assert_eq!(theta_tilde(1.0, 1.0), 1.0);
        assert_eq!(theta_tilde(32.0, 1.0), 1.0);
        assert_eq!(theta_tilde(2048.0, 1.0), 0.0);
    }

    #[test]
    fn theta_supports_disjoint() {
        for i in 0..4000 {
            let r = 2f64.powf(-12.0 + 24.0 * i as f64 / 4000.0);
            assert!(theta(r, 1.0) * theta(1.0, r) == 0.0);
            let t = theta_tilde(r, 1.0);
            assert!((0.0..=1.0).contains(&t));
            assert!((theta(r, 1.0) + theta(1.0, r) + t - 1.0).abs() < 1e-15);
        }
    }
}
