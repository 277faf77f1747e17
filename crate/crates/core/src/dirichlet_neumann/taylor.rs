use crate::spectral_core::{abs_deriv, deriv, deriv2, SpectralField};

use super::{assemble_result, DnError, DnResult, MethodTag, WaveState, STEEPNESS_LIMIT};

/// The three homogeneous pieces of the cubic expansion of G(h)ψ.
#[derive(Clone, Debug)]
pub struct Taylor3Orders {
    /// |∇|ψ
    pub linear: SpectralField,
    /// −|∇|(h|∇|ψ) − ∂_x(h ∂_xψ)
    pub quadratic: SpectralField,
    /// |∇|(h|∇|(h|∇|ψ)) + ½[|∇|(h² ∂_x²ψ) + ∂_x²(h² |∇|ψ)]
    pub cubic: SpectralField,
}

impl Taylor3Orders {
    pub fn total(&self) -> SpectralField {
        self.linear.add(&self.quadratic).and_then(|s| s.add(&self.cubic)).expect("same grid")
    }
}

/// Each order of the expansion, with every product formed pairwise.
pub fn taylor3_orders(h: &SpectralField, psi: &SpectralField, dealias: bool) -> Result<Taylor3Orders, DnError> {
    h.same_grid(psi)?;
    let dpsi = abs_deriv(psi);
    let h_dpsi = h.product(&dpsi, dealias)?;
    let h_psix = h.product(&deriv(psi), dealias)?;
    let quadratic = abs_deriv(&h_dpsi).scale(-1.0).sub(&deriv(&h_psix))?;

    let h2 = h.product(h, dealias)?;
    let nested = abs_deriv(&h.product(&abs_deriv(&h_dpsi), dealias)?);
    let half = abs_deriv(&h2.product(&deriv2(psi), dealias)?).add(&deriv2(&h2.product(&dpsi, dealias)?))?;
    let cubic = nested.axpy(0.5, &half)?;
    Ok(Taylor3Orders { linear: dpsi, quadratic, cubic })
}

/// G(h)ψ truncated at cubic order.
pub fn taylor3_g(h: &SpectralField, psi: &SpectralField, dealias: bool) -> Result<SpectralField, DnError> {
    Ok(taylor3_orders(h, psi, dealias)?.total())
}

/// Cubic expansion with B, V, a, α. Steep states still produce a result, but
/// it comes back inside [`DnError::Steep`].
pub fn dn_taylor3(state: &WaveState) -> Result<DnResult, DnError> {
    let g = taylor3_g(&state.h, &state.psi, true)?;
    let h = state.h.clone();
    let result = assemble_result(state, g, MethodTag::Taylor3, &|f| taylor3_g(&h, f, true))?;
    let steepness = state.steepness();
    if steepness > STEEPNESS_LIMIT {
        return Err(DnError::Steep { steepness, limit: STEEPNESS_LIMIT, result: Some(Box::new(result)) });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::Grid;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(64, 2.0 * PI).unwrap()
    }

    #[test]
    fn flat_surface_is_exact() {
        let g = grid();
        let psi = SpectralField::from_real_fn(&g, f64::cos);
        let got = taylor3_g(&SpectralField::zeros(&g), &psi, true).unwrap();
        assert!(got.sub(&psi).unwrap().l2_norm() < 1e-14);
    }

    #[test]
    fn quadratic_cancels_for_matching_modes() {
        let g = grid();
        let eps = 0.01;
        let h = SpectralField::from_real_fn(&g, |x| eps * x.cos());
        let psi = SpectralField::from_real_fn(&g, f64::sin);
        let o = taylor3_orders(&h, &psi, true).unwrap();
        assert!(o.quadratic.l2_norm() < 1e-15);
    }

    #[test]
    fn quadratic_second_harmonic_example() {
        let g = grid();
        let eps = 0.01;
        let h = SpectralField::from_real_fn(&g, |x| eps * (2.0 * x).cos());
        let psi = SpectralField::from_real_fn(&g, f64::sin);
        let o = taylor3_orders(&h, &psi, true).unwrap();
        let want = SpectralField::from_real_fn(&g, |x| eps * x.sin());
        assert!(o.quadratic.sub(&want).unwrap().l2_norm() < 1e-15);
    }

    #[test]
    fn steep_state_is_flagged_with_result() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.5 * x.cos());
        let psi = SpectralField::from_real_fn(&g, f64::sin);
        let err = dn_taylor3(&WaveState::new(h, psi, 0.0).unwrap()).unwrap_err();
        assert!(matches!(err, DnError::Steep { result: Some(_), .. }));
        assert!(err.into_flagged_result().is_ok());
    }

    #[test]
    fn mean_of_g_vanishes() {
        let g = grid();
        let h = SpectralField::from_real_fn(&g, |x| 0.05 * (x.cos() + (3.0 * x).sin()));
        let psi = SpectralField::from_real_fn(&g, |x| 0.1 * (2.0 * x).cos() + x.sin());
        let gp = taylor3_g(&h, &psi, true).unwrap();
        assert_eq!(gp.coeffs()[0].norm(), 0.0);
    }
}
