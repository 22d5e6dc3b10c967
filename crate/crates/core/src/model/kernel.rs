/// A uniform law on `[center − half_width, center + half_width]` pushed
/// through `clamp(·, lo, hi)`: two boundary atoms plus a flat density on the
/// part of the support inside the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedUniform {
    pub center: f64,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ClippedUniform {
    pub fn new(center: f64, half_width: f64, lo: f64, hi: f64) -> Self {
        debug_assert!(half_width > 0.0 && lo < hi);
        ClippedUniform {
            center,
            half_width,
            lo,
            hi,
        }
    }

    fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    /// Mass of the atom at `lo`.
    pub fn atom_lo(&self) -> f64 {
        ((self.lo - (self.center - self.half_width)) / self.width()).clamp(0.0, 1.0)
    }

    /// Mass of the atom at `hi`.
    pub fn atom_hi(&self) -> f64 {
        ((self.center + self.half_width - self.hi) / self.width()).clamp(0.0, 1.0)
    }

    /// Interior support `(start, end)`; empty when `start >= end`.
    pub fn interior(&self) -> (f64, f64) {
        (
            (self.center - self.half_width).max(self.lo),
            (self.center + self.half_width).min(self.hi),
        )
    }

    pub fn density(&self) -> f64 {
        1.0 / self.width()
    }

    pub fn interior_mass(&self) -> f64 {
        let (a, b) = self.interior();
        (b - a).max(0.0) * self.density()
    }

    /// Inverse-CDF draw from the unclipped uniform followed by clipping.
    pub fn sample(&self, u01: f64) -> f64 {
        (self.center + (2.0 * u01 - 1.0) * self.half_width).clamp(self.lo, self.hi)
    }

    /// Exact total variation distance, atoms included.
    pub fn tv(&self, other: &ClippedUniform) -> f64 {
        let (a1, b1) = self.interior();
        let (a2, b2) = other.interior();
        let len1 = (b1 - a1).max(0.0);
        let len2 = (b2 - a2).max(0.0);
        let overlap = (b1.min(b2) - a1.max(a2)).max(0.0);
        let (c1, c2) = (self.density(), other.density());
        let continuous = c1 * len1 + c2 * len2 - 2.0 * c1.min(c2) * overlap;
        let atoms = (self.atom_lo() - other.atom_lo()).abs() + (self.atom_hi() - other.atom_hi()).abs();
        (0.5 * (atoms + continuous.max(0.0))).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masses_sum_to_one() {
        for &c in &[-30.0, -4.0, 0.0, 3.0, 10.0, 17.5, 21.0, 60.0] {
            let k = ClippedUniform::new(c, 5.0, 0.0, 20.0);
            let total = k.atom_lo() + k.atom_hi() + k.interior_mass();
            assert!((total - 1.0).abs() < 1e-12, "center {c}: {total}");
            assert!(k.atom_lo() >= 0.0 && k.atom_hi() >= 0.0);
        }
    }

    #[test]
    fn wide_kernel_has_both_atoms() {
        let k = ClippedUniform::new(10.0, 20.0, 0.0, 20.0);
        assert!((k.atom_lo() - 0.25).abs() < 1e-12);
        assert!((k.atom_hi() - 0.25).abs() < 1e-12);
        assert!((k.interior_mass() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_in_bounds() {
        let k = ClippedUniform::new(19.0, 5.0, 0.0, 20.0);
        for i in 0..=100 {
            let x = k.sample(i as f64 / 100.0);
            assert!((0.0..=20.0).contains(&x));
        }
    }

    #[test]
    fn boundary_atom_tv() {
        // Atom 0.4 at zero plus density on (0, 6] against atom 0.6 plus (0, 4].
        let a = ClippedUniform::new(1.0, 5.0, 0.0, 20.0);
        let b = ClippedUniform::new(-1.0, 5.0, 0.0, 20.0);
        assert!((a.tv(&b) - 0.2).abs() < 1e-12);
    }
}
