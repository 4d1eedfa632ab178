//! Laguerre-Gaussian modes with radial index p = 0 at the source plane.
//!
//! The radial profile is normalised so that `∫₀^∞ R(r)² r dr = 1`; the
//! azimuthal factor `e^{ilθ}/√(2π)` is kept separate. With this convention a
//! channel without turbulence has a survival amplitude of exactly one.

use std::f64::consts::{FRAC_PI_2, LN_2, SQRT_2};

use statrs::function::gamma::ln_gamma;

use crate::quadrature::{self, QuadratureSpec};
use crate::{Error, Result};

/// Above this |l| the profile is evaluated entirely in log space.
const LOG_SPACE_THRESHOLD: u32 = 20;

/// A p = 0 Laguerre-Gaussian mode with azimuthal index `l` and waist `w0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LGMode {
    l: i64,
    w0: f64,
}

impl LGMode {
    pub fn new(l: i64, w0: f64) -> Result<Self> {
        if !(w0 > 0.0 && w0.is_finite()) {
            return Err(Error::domain(format!("beam waist must be positive, got {w0}")));
        }
        Ok(Self { l, w0 })
    }

    /// Constructor taking an explicit radial index; only `p = 0` is supported.
    pub fn with_radial_index(l: i64, p: u32, w0: f64) -> Result<Self> {
        if p != 0 {
            return Err(Error::domain(format!(
                "only radial index p = 0 is supported, got p = {p}"
            )));
        }
        Self::new(l, w0)
    }

    pub fn l(&self) -> i64 {
        self.l
    }

    pub fn p(&self) -> u32 {
        0
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn abs_l(&self) -> u32 {
        self.l.unsigned_abs() as u32
    }

    /// Radius of maximum intensity, `√(|l|/2)·w0`.
    pub fn peak_radius(&self) -> f64 {
        (self.abs_l() as f64 / 2.0).sqrt() * self.w0
    }

    /// Upper end of the radial integration domain, `w0·(√(|l|/2) + 8)`.
    ///
    /// Past this point `R² r` is below `e^{-128}` of its peak.
    pub fn r_max(&self) -> f64 {
        self.w0 * ((self.abs_l() as f64 / 2.0).sqrt() + 8.0)
    }

    /// `ln R(r)`; `-∞` where the profile vanishes.
    pub fn ln_radial_profile(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        let l = self.abs_l();
        if r == 0.0 {
            return Ok(if l == 0 {
                LN_2 - self.w0.ln()
            } else {
                f64::NEG_INFINITY
            });
        }
        let lf = l as f64;
        let rho = r / self.w0;
        Ok(LN_2 - self.w0.ln() - 0.5 * ln_gamma(lf + 1.0) + lf * (SQRT_2 * rho).ln()
            - rho * rho)
    }

    /// Radial amplitude `R_{0l}(r) = (2/w0)·(|l|!)^{-1/2}·(√2 r/w0)^{|l|}·e^{-r²/w0²}`.
    ///
    /// For |l| ≥ 20 the value is assembled in log space. Where even that
    /// underflows the exact result 0 is returned.
    pub fn radial_profile(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        let l = self.abs_l();
        if l >= LOG_SPACE_THRESHOLD {
            return Ok(self.ln_radial_profile(r)?.exp());
        }
        if r == 0.0 && l > 0 {
            return Ok(0.0);
        }
        let rho = r / self.w0;
        let norm = 2.0 / self.w0 / factorial(l).sqrt();
        Ok(norm * (SQRT_2 * rho).powi(l as i32) * (-rho * rho).exp())
    }

    /// Intensity-weighted mean radius `⟨r⟩ = ∫ R² r·r dr = (w0/√2)·Γ(|l|+3/2)/Γ(|l|+1)`.
    pub fn mean_radius(&self) -> f64 {
        let lf = self.abs_l() as f64;
        self.w0 / SQRT_2 * (ln_gamma(lf + 1.5) - ln_gamma(lf + 1.0)).exp()
    }

    /// Angle between wavefront points whose phases differ by π/2.
    fn quarter_phase_angle(&self) -> Result<f64> {
        if self.l == 0 {
            return Err(Error::domain(
                "phase correlation length is undefined for l = 0 (no azimuthal phase)",
            ));
        }
        Ok(FRAC_PI_2 / self.abs_l() as f64)
    }

    /// Phase correlation length `ξ(l) = sin(π/(2|l|))·⟨r⟩`.
    pub fn phase_correlation_length(&self) -> Result<f64> {
        Ok(self.quarter_phase_angle()?.sin() * self.mean_radius())
    }

    /// ξ(l) by direct quadrature of `∫ R(r)² Δs(r) r dr` with `Δs(r) = r·sin(π/(2|l|))`.
    ///
    /// Independent of the Gamma-function closed form; used as its oracle.
    pub fn phase_correlation_length_numeric(&self, spec: &QuadratureSpec) -> Result<f64> {
        let s = self.quarter_phase_angle()?.sin();
        let est = quadrature::radial_quadrature(self, |r| r * s, spec)?;
        Ok(est.value)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("radius must be finite and non-negative, got {r}")))
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
