use super::DnError;

/// Geometrically clustered vertical levels on [−Z_max, 0].
///
/// Level `j` counted down from the surface sits at
/// `z_j = −Z_max (σ^j − 1)/(σ^{Nz} − 1)` with `σ = exp(κ/Nz)`. Fixing the
/// total stretch κ instead of σ keeps refinements nested: doubling Nz
/// inserts one level between each existing pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ZGrid {
    z_max: f64,
    stretch: f64,
    /// Ascending; the last entry is exactly 0.
    levels: Vec<f64>,
}

/// κ = 32 ln 1.15, i.e. σ = 1.15 at Nz = 32.
pub const DEFAULT_STRETCH: f64 = 4.472_382_156_005_076;

impl ZGrid {
    pub fn new(z_max: f64, nz: usize, stretch: f64) -> Result<Self, DnError> {
        if !(z_max.is_finite() && z_max > 0.0) {
            return Err(DnError::BadZGrid(format!("z_max = {z_max} must be positive")));
        }
        if nz < 2 {
            return Err(DnError::BadZGrid(format!("nz = {nz} must be at least 2")));
        }
        if !(stretch.is_finite() && stretch >= 0.0) {
            return Err(DnError::BadZGrid(format!("stretch = {stretch} must be nonnegative")));
        }
        let levels = (0..=nz).rev().map(|j| Self::map(z_max, nz, stretch, j as f64)).collect();
        Ok(Self { z_max, stretch, levels })
    }

    /// Depth of (possibly fractional or out-of-range) level index `j`,
    /// counted down from the surface.
    fn map(z_max: f64, nz: usize, stretch: f64, j: f64) -> f64 {
        let s = j / nz as f64;
        if stretch == 0.0 {
            return -z_max * s;
        }
        if j == 0.0 {
            return 0.0;
        }
        -z_max * (stretch * s).exp_m1() / stretch.exp_m1()
    }

    /// Depth of surface-counted level `j`, valid also for ghost indices −1 and Nz+1.
    pub fn depth_at(&self, j: i64) -> f64 {
        Self::map(self.z_max, self.nz(), self.stretch, j as f64)
    }

    pub fn nz(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn stretch(&self) -> f64 {
        self.stretch
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Composite trapezoid weights on the ascending levels.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let z = &self.levels;
        let n = z.len();
        (0..n)
            .map(|i| {
                let below = if i > 0 { z[i] - z[i - 1] } else { 0.0 };
                let above = if i + 1 < n { z[i + 1] - z[i] } else { 0.0 };
                0.5 * (below + above)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_ordering() {
        let g = ZGrid::new(8.0, 64, DEFAULT_STRETCH).unwrap();
        let z = g.levels();
        assert_eq!(z.len(), 65);
        assert_eq!(z[64], 0.0);
        assert!((z[0] + 8.0).abs() < 1e-12);
        assert!(z.windows(2).all(|w| w[1] > w[0]));
        // Finest spacing at the surface.
        assert!(z[64] - z[63] < z[1] - z[0]);
        assert!((DEFAULT_STRETCH - 32.0 * 1.15f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn refinement_is_nested() {
        let c = ZGrid::new(5.0, 32, DEFAULT_STRETCH).unwrap();
        let f = ZGrid::new(5.0, 64, DEFAULT_STRETCH).unwrap();
        for (i, z) in c.levels().iter().enumerate() {
            assert!((f.levels()[2 * i] - z).abs() < 1e-13);
        }
    }

    #[test]
    fn weights_integrate_constants() {
        let g = ZGrid::new(3.0, 40, DEFAULT_STRETCH).unwrap();
        let s: f64 = g.trapezoid_weights().iter().sum();
        assert!((s - 3.0).abs() < 1e-12);
    }
}
