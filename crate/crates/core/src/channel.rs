//! The ensemble-averaged single-photon turbulence map restricted to the
//! post-selected qubit subspace `{|−l0⟩, |l0⟩}`.
//!
//! After tracing over the radial output index, an element of the map is
//!
//! ```text
//! Λ_{l,l'}^{l0,l0'} = δ_{l0−l0', l−l'} ∫ r dr R_{l0}(r) R_{l0'}(r) · c_{l−l0}(r)
//! c_m(r) = (1/2π) ∫ dθ e^{−imθ} exp(−½ D_φ(2r|sin(θ/2)|))
//! ```
//!
//! The angular phase index `l − l0` equals `(l + l' − l0 − l0')/2`: the
//! angle conjugate to the summed azimuthal indices is the half-difference of
//! the two screen angles. Within the qubit subspace only two values occur:
//! the survival amplitude `a` (m = 0) and the crosstalk amplitude `b`
//! (m = ±2·l0).

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::Serialize;

use crate::lgmode::LGMode;
use crate::quadrature::{self, Cusp, CuspTerm, EvenKernel, QuadratureSpec, MAX_ANGULAR_SAMPLES};
use crate::turbulence::{TurbulenceModel, STRUCTURE_CONSTANT};
use crate::{Error, Result};

/// `exp(−x)` is exactly zero in f64 beyond this argument.
const EXP_UNDERFLOW: f64 = 746.0;
/// Terms of the singular expansion handed to the angular quadrature.
const CUSP_TERMS: usize = 12;

/// Slack allowed on the amplitude invariants `a ≤ 1`, `|b| ≤ a`.
pub const AMPLITUDE_SLACK: f64 = 1e-9;

/// The angular turbulence kernel `θ ↦ exp(−½ D_φ(2r|sin(θ/2)|))` at fixed radius.
#[derive(Debug, Clone, Copy)]
pub struct TurbulenceKernel {
    /// `½·6.88·(2r/r0)^{5/3}`
    strength: f64,
}

impl TurbulenceKernel {
    pub fn new(r: f64, model: &TurbulenceModel) -> Self {
        let strength = 0.5 * STRUCTURE_CONSTANT * (2.0 * r / model.r0()).powf(5.0 / 3.0);
        Self { strength }
    }

    /// Kernel `exp(−s|sin(θ/2)|^{5/3})` for a given strength `s`.
    pub fn with_strength(strength: f64) -> Self {
        Self { strength }
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

impl EvenKernel for TurbulenceKernel {
    fn value(&self, theta: f64) -> f64 {
        (-self.strength * (0.5 * theta).sin().abs().powf(5.0 / 3.0)).exp()
    }

    fn support(&self) -> f64 {
        if self.strength <= EXP_UNDERFLOW {
            return PI;
        }
        2.0 * (EXP_UNDERFLOW / self.strength).powf(0.6).asin()
    }

    /// `exp(−s|sin(θ/2)|^{5/3}) = Σ_j (−σ)^j/j!·|θ|^{5j/3}·sinc(θ/2)^{5j/3}`, `σ = s/2^{5/3}`
    fn cusp(&self) -> Option<Cusp> {
        let sigma = self.strength * 2f64.powf(-5.0 / 3.0);
        // ln sinc(θ/2) in powers of θ²
        const LN_SINC: [f64; 5] = [0.0, -1.0 / 24.0, -1.0 / 2880.0, -1.0 / 181440.0, -1.0 / 9676800.0];
        let mut coefficient = 1.0;
        let terms = (1..=CUSP_TERMS)
            .map(|j| {
                coefficient *= -sigma / j as f64;
                let nu = 5.0 * j as f64 / 3.0;
                let mut series = vec![1.0; LN_SINC.len()];
                for n in 1..LN_SINC.len() {
                    series[n] = (1..=n)
                        .map(|k| k as f64 * nu * LN_SINC[k] * series[n - k])
                        .sum::<f64>()
                        / n as f64;
                }
                CuspTerm { coefficient, exponent: nu, series }
            })
            .collect();
        Some(Cusp { terms, width: 0.5 * sigma.powf(-0.6) })
    }
}

/// Which of the two element families of the traced map a query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `l' = +l`
    Same,
    /// `l' = −l`
    Opposite,
}

/// Indices of a map element `Λ_{l,l'}^{l0,l0'}` with `l' = ±l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapElementQuery {
    pub l0: i64,
    pub l0p: i64,
    pub l: i64,
    pub lp: i64,
}

impl MapElementQuery {
    pub fn new(l0: i64, l0p: i64, l: i64, lp: i64) -> Result<Self> {
        if lp != l && lp != -l {
            return Err(Error::domain(format!(
                "destination pair must satisfy l' = ±l, got l = {l}, l' = {lp}"
            )));
        }
        Ok(Self { l0, l0p, l, lp })
    }

    pub fn branch(&self) -> Branch {
        if self.lp == self.l {
            Branch::Same
        } else {
            Branch::Opposite
        }
    }

    /// The inversion partner `Λ_{−l,−l'}^{−l0,−l0'}`.
    pub fn mirrored(&self) -> Self {
        Self {
            l0: -self.l0,
            l0p: -self.l0p,
            l: -self.l,
            lp: -self.lp,
        }
    }

    /// Whether `δ_{l0−l0', l−l'}` is non-zero.
    pub fn selection_allowed(&self) -> bool {
        self.l0 - self.l0p == self.l - self.lp
    }

    /// Angular Fourier index `(l + l' − l0 − l0')/2`, or `None` when the
    /// selection rule forbids the element.
    pub fn fourier_index(&self) -> Option<i64> {
        self.selection_allowed().then(|| self.l - self.l0)
    }
}

/// Where the amplitudes were evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelContext {
    pub l0: i64,
    pub w0: f64,
    pub r0: f64,
}

/// Survival (`a`) and crosstalk (`b`) amplitudes of the traced map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelAmplitudes {
    pub a: f64,
    pub b: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub context: Option<ChannelContext>,
    /// Set when part of the kernel support was narrower than the finest
    /// angular grid and its contribution was taken as zero.
    pub cutoff: bool,
}

impl ChannelAmplitudes {
    /// Amplitudes given directly, checked against `0 < a ≤ 1` and `|b| ≤ a`.
    pub fn from_values(a: f64, b: f64) -> Result<Self> {
        let amps = Self {
            a,
            b,
            a_err: 0.0,
            b_err: 0.0,
            context: None,
            cutoff: false,
        };
        amps.check()?;
        Ok(amps)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0 + AMPLITUDE_SLACK) {
            return Err(Error::domain(format!(
                "survival amplitude must lie in (0, 1], got {}",
                self.a
            )));
        }
        if !(self.b.abs() <= self.a + AMPLITUDE_SLACK) {
            return Err(Error::domain(format!(
                "crosstalk amplitude must satisfy |b| ≤ a, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// `ã = b/a`. A negative `b` within its error estimate is roundoff and
    /// maps to 0.
    pub fn ratio(&self) -> Result<f64> {
        if self.cutoff || !(self.a > f64::MIN_POSITIVE) {
            return Err(Error::numeric(
                format!(
                    "survival amplitude underflowed (a = {:e}); turbulence is too strong for \
                     this beam, rescale to a larger r0/w0",
                    self.a
                ),
                self.a,
            ));
        }
        if self.b < 0.0 && -self.b <= self.b_err + 1e-14 * self.a {
            return Ok(0.0);
        }
        Ok(self.b / self.a)
    }

    /// Element of the truncated map between qubit basis states `±l0`.
    pub fn qubit_element(&self, l0: i64, q: &MapElementQuery) -> Result<f64> {
        if l0 == 0 {
            return Err(Error::domain("qubit modes need l0 ≠ 0"));
        }
        for v in [q.l0, q.l0p, q.l, q.lp] {
            if v.abs() != l0.abs() {
                return Err(Error::domain(format!(
                    "index {v} lies outside the qubit basis {{±{}}}",
                    l0.abs()
                )));
            }
        }
        Ok(match q.fourier_index() {
            Some(0) => self.a,
            Some(m) if m.abs() == 2 * l0.abs() => self.b,
            _ => 0.0,
        })
    }
}

fn angular_spec(spec: &QuadratureSpec, ms: &[i64]) -> QuadratureSpec {
    let m_max = ms.iter().map(|m| m.abs()).max().unwrap_or(0);
    spec.for_fourier_index(m_max)
        .with_target(0.25 * spec.target_rel_err)
}

/// Angular coefficients at radius `r`, or zeros (and a raised flag) when the
/// kernel is narrower than the finest admissible grid spacing.
fn kernel_coefficients(
    r: f64,
    model: &TurbulenceModel,
    ms: &[i64],
    spec: &QuadratureSpec,
    cutoff: &AtomicBool,
) -> Result<Vec<f64>> {
    let kernel = TurbulenceKernel::new(r, model);
    if kernel.support() < 4.0 * 2.0 * PI / MAX_ANGULAR_SAMPLES as f64 {
        cutoff.store(true, Ordering::Relaxed);
        return Ok(vec![0.0; ms.len()]);
    }
    Ok(quadrature::angular_fourier_coefficients(&kernel, ms, spec)?.values)
}

/// One element `Λ_{l,l'}^{l0,l0'}` of the traced map; exactly zero when the
/// selection rule fails.
pub fn map_element(
    q: &MapElementQuery,
    w0: f64,
    model: &TurbulenceModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    let Some(m) = q.fourier_index() else {
        return Ok(0.0);
    };
    let src = LGMode::new(q.l0, w0)?;
    let src_p = LGMode::new(q.l0p, w0)?;
    let ms = [m];
    let ang = angular_spec(spec, &ms);
    let cutoff = AtomicBool::new(false);
    let integrand = |r: f64| -> Result<[f64; 1]> {
        let weight = (src.ln_radial_profile(r)? + src_p.ln_radial_profile(r)?).exp() * r;
        if weight == 0.0 {
            return Ok([0.0]);
        }
        let c = kernel_coefficients(r, model, &ms, &ang, &cutoff)?;
        Ok([weight * c[0]])
    };
    let (v, _, _) = quadrature::gauss_legendre_converged(
        0.0,
        src.r_max().max(src_p.r_max()),
        spec.radial_nodes,
        spec.target_rel_err,
        integrand,
        |v| v[0].abs(),
    )?;
    Ok(v[0])
}

/// Survival and crosstalk amplitudes in one radial pass.
///
/// Convergence of both is measured relative to `a`; `|b| ≤ a` always.
pub fn amplitudes(
    l0: i64,
    w0: f64,
    model: &TurbulenceModel,
    spec: &QuadratureSpec,
) -> Result<ChannelAmplitudes> {
    spec.validate()?;
    if l0 == 0 {
        return Err(Error::domain("qubit modes need l0 ≠ 0"));
    }
    let mode = LGMode::new(l0, w0)?;
    let ms = [0, 2 * l0.abs()];
    let ang = angular_spec(spec, &ms);
    let cutoff = AtomicBool::new(false);
    let integrand = |r: f64| -> Result<[f64; 2]> {
        let weight = (2.0 * mode.ln_radial_profile(r)?).exp() * r;
        if weight == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let c = kernel_coefficients(r, model, &ms, &ang, &cutoff)?;
        Ok([weight * c[0], weight * c[1]])
    };
    let (v, err, _) = quadrature::gauss_legendre_converged(
        0.0,
        mode.r_max(),
        spec.radial_nodes,
        spec.target_rel_err,
        integrand,
        |v| v[0].abs(),
    )?;
    Ok(ChannelAmplitudes {
        a: v[0],
        b: v[1],
        a_err: err[0],
        b_err: err[1],
        context: Some(ChannelContext {
            l0,
            w0,
            r0: model.r0(),
        }),
        cutoff: cutoff.into_inner(),
    })
}

pub fn survival_amplitude(
    l0: i64,
    w0: f64,
    model: &TurbulenceModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(amplitudes(l0, w0, model, spec)?.a)
}

pub fn crosstalk_amplitude(
    l0: i64,
    w0: f64,
    model: &TurbulenceModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(amplitudes(l0, w0, model, spec)?.b)
}

/// `ã = b/a`.
pub fn amplitude_ratio(
    l0: i64,
    w0: f64,
    model: &TurbulenceModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    amplitudes(l0, w0, model, spec)?.ratio()
}

/// `|Λ_{l,l'}^{l0,l0'} − Λ_{−l,−l'}^{−l0,−l0'}|`, both sides evaluated independently.
pub fn verify_inversion_symmetry(
    q: &MapElementQuery,
    w0: f64,
    model: &TurbulenceModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let direct = map_element(q, w0, model, spec)?;
    let mirrored = map_element(&q.mirrored(), w0, model, spec)?;
    Ok((direct - mirrored).abs())
}
