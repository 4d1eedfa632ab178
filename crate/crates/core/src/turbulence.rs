//! Kolmogorov weak-turbulence model.
//!
//! SI units throughout: lengths in meters, `cn2` in m^{-2/3}, wavenumbers in
//! rad/m. The phase spectrum takes spatial frequency in cycles per meter.

use crate::{Error, Result};

/// Coefficient of the Fried parameter, `r0 = (0.16·C_n²·k²·L)^{-3/5}`.
pub const FRIED_COEFFICIENT: f64 = 0.16;

/// Kolmogorov phase structure function constant, `D_φ(r) = 6.88·(r/r0)^{5/3}`.
pub const STRUCTURE_CONSTANT: f64 = 6.88;

/// Phase power spectrum constant, `Φ_φ(f) = 0.023·r0^{-5/3}·f^{-11/3}`.
pub const SPECTRUM_CONSTANT: f64 = 0.023;

const FIVE_THIRDS: f64 = 5.0 / 3.0;
const ELEVEN_THIRDS: f64 = 11.0 / 3.0;

/// Path parameters the Fried parameter was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParameters {
    pub cn2: f64,
    pub k: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceModel {
    r0: f64,
    path: Option<PathParameters>,
}

impl TurbulenceModel {
    pub fn from_fried(r0: f64) -> Result<Self> {
        if !(r0 > 0.0) || r0.is_nan() {
            return Err(Error::domain(format!("Fried parameter must be positive, got {r0}")));
        }
        Ok(Self { r0, path: None })
    }

    pub fn from_path(cn2: f64, k: f64, distance: f64) -> Result<Self> {
        let r0 = fried_parameter(cn2, k, distance)?;
        Ok(Self {
            r0,
            path: Some(PathParameters { cn2, k, distance }),
        })
    }

    /// Same as [`from_path`](Self::from_path) with the wavenumber given as a wavelength.
    pub fn from_wavelength(cn2: f64, wavelength: f64, distance: f64) -> Result<Self> {
        Self::from_path(cn2, wavenumber(wavelength)?, distance)
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn path(&self) -> Option<PathParameters> {
        self.path
    }

    /// The same model with the Fried parameter multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::from_fried(self.r0 * s)
    }

    pub fn structure_function(&self, r: f64) -> Result<f64> {
        phase_structure_function(r, self)
    }

    pub fn spectrum(&self, f: f64) -> Result<f64> {
        phase_spectrum(f, self)
    }
}

/// `k = 2π/λ`.
pub fn wavenumber(wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength}")));
    }
    Ok(2.0 * std::f64::consts::PI / wavelength)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Fried parameter `r0 = (0.16·C_n²·k²·L)^{-3/5}`.
pub fn fried_parameter(cn2: f64, k: f64, distance: f64) -> Result<f64> {
    check_positive("cn2", cn2)?;
    check_positive("k", k)?;
    check_positive("distance", distance)?;
    Ok((FRIED_COEFFICIENT * cn2 * k * k * distance).powf(-0.6))
}

/// Propagation distance at which the Fried parameter equals `r0`.
pub fn distance_for_r0(cn2: f64, k: f64, r0: f64) -> Result<f64> {
    check_positive("cn2", cn2)?;
    check_positive("k", k)?;
    check_positive("r0", r0)?;
    Ok(r0.powf(-FIVE_THIRDS) / (FRIED_COEFFICIENT * cn2 * k * k))
}

/// `D_φ(r) = 6.88·(r/r0)^{5/3}`, in rad².
pub fn phase_structure_function(r: f64, model: &TurbulenceModel) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("separation must be non-negative, got {r}")));
    }
    Ok(STRUCTURE_CONSTANT * (r / model.r0).powf(FIVE_THIRDS))
}

/// Kolmogorov phase power spectrum `Φ_φ(f) = 0.023·r0^{-5/3}·f^{-11/3}`.
///
/// `f` is a spatial frequency in cycles per unit length; with this
/// convention `2∫d²f Φ_φ(f)(1 − cos 2πf·r)` reproduces `D_φ(r)`.
pub fn phase_spectrum(f: f64, model: &TurbulenceModel) -> Result<f64> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::domain(format!("spatial frequency must be positive, got {f}")));
    }
    Ok(SPECTRUM_CONSTANT * model.r0.powf(-FIVE_THIRDS) * f.powf(-ELEVEN_THIRDS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn fried_parameter_reference_path() {
        // 800 nm, C_n² = 1e-15, 1 km
        let k = wavenumber(800e-9).unwrap();
        let r0 = fried_parameter(1e-15, k, 1000.0).unwrap();
        assert_relative_eq!(r0, 0.253174611818338429, max_relative = 1e-12);
        let model = TurbulenceModel::from_wavelength(1e-15, 800e-9, 1000.0).unwrap();
        assert_relative_eq!(model.r0(), r0, max_relative = 1e-12);
        assert_eq!(model.path().unwrap().distance, 1000.0);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(fried_parameter(0.0, 1.0, 1.0).is_err());
        assert!(fried_parameter(1.0, -1.0, 1.0).is_err());
        assert!(fried_parameter(1.0, 1.0, 0.0).is_err());
        assert!(distance_for_r0(1.0, 1.0, 0.0).is_err());
        assert!(TurbulenceModel::from_fried(0.0).is_err());
        assert!(TurbulenceModel::from_fried(f64::NAN).is_err());
        let m = TurbulenceModel::from_fried(1.0).unwrap();
        assert!(phase_structure_function(-1.0, &m).is_err());
        assert!(phase_spectrum(0.0, &m).is_err());
        assert!(phase_spectrum(-2.0, &m).is_err());
    }

    #[test]
    fn distance_matches_bisection_root() {
        let (cn2, k, r0) = (3e-14, wavenumber(1550e-9).unwrap(), 0.07);
        let direct = distance_for_r0(cn2, k, r0).unwrap();
        // bisect ln L so that fried_parameter(L) = r0
        let (mut lo, mut hi) = (-10.0f64, 30.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fried_parameter(cn2, k, mid.exp()).unwrap() > r0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(direct, (0.5 * (lo + hi)).exp(), max_relative = 1e-10);
    }

    #[test]
    fn halving_r0_scales_distance() {
        let k = 1e7;
        let l1 = distance_for_r0(1e-15, k, 0.2).unwrap();
        let l2 = distance_for_r0(1e-15, k, 0.1).unwrap();
        assert_relative_eq!(l2 / l1, 2f64.powf(5.0 / 3.0), max_relative = 1e-13);
    }

    #[test]
    fn structure_function_values() {
        let m = TurbulenceModel::from_fried(0.3).unwrap();
        assert_eq!(m.structure_function(0.0).unwrap(), 0.0);
        assert_relative_eq!(m.structure_function(0.3).unwrap(), 6.88, max_relative = 1e-15);
        assert_relative_eq!(
            m.structure_function(0.6).unwrap(),
            21.8426384750824244,
            max_relative = 1e-14
        );
    }

    #[test]
    fn spectrum_power_laws() {
        let m = TurbulenceModel::from_fried(0.1).unwrap();
        let m2 = TurbulenceModel::from_fried(0.2).unwrap();
        let f = 3.7;
        assert_relative_eq!(
            m.spectrum(2.0 * f).unwrap() / m.spectrum(f).unwrap(),
            2f64.powf(-11.0 / 3.0),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            m2.spectrum(f).unwrap() / m.spectrum(f).unwrap(),
            2f64.powf(-5.0 / 3.0),
            max_relative = 1e-13
        );
    }

    proptest! {
        #[test]
        fn fried_round_trip(cn2 in 1e-17f64..1e-12, lambda in 4e-7f64..2e-6, dist in 10.0f64..1e5) {
            let k = wavenumber(lambda).unwrap();
            let r0 = fried_parameter(cn2, k, dist).unwrap();
            let back = distance_for_r0(cn2, k, r0).unwrap();
            prop_assert!(((back - dist) / dist).abs() < 1e-12);
            let r0_far = fried_parameter(cn2, k, 3.0 * dist).unwrap();
            prop_assert!(((r0_far / r0) - 3f64.powf(-0.6)).abs() < 1e-12);
            prop_assert!(fried_parameter(2.0 * cn2, k, dist).unwrap() < r0);
            prop_assert!(fried_parameter(cn2, 2.0 * k, dist).unwrap() < r0);
        }

        #[test]
        fn structure_function_scaling(r in 0.0f64..10.0, r0 in 1e-3f64..10.0, s in 0.01f64..100.0) {
            let m = TurbulenceModel::from_fried(r0).unwrap();
            let ms = TurbulenceModel::from_fried(s * r0).unwrap();
            let d = m.structure_function(r).unwrap();
            let ds = ms.structure_function(s * r).unwrap();
            prop_assert!((d - ds).abs() <= 1e-12 * d.max(1e-300));
            let d_scaled = m.structure_function(s * r).unwrap();
            prop_assert!((d_scaled - s.powf(5.0 / 3.0) * d).abs() <= 1e-12 * d_scaled.max(1e-300));
        }
    }
}
