//! Radial Gauss-Legendre integration over LG intensity support, and
//! extraction of Fourier coefficients of even periodic kernels by uniform
//! sampling.
//!
//! Both routines refine by doubling until two successive estimates agree to
//! `target_rel_err`, falling back to an absolute tolerance of 1e-14 when the
//! value itself is near zero.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use statrs::function::gamma::gamma;

use crate::lgmode::LGMode;
use crate::{Error, Result};

pub const MAX_RADIAL_NODES: usize = 1 << 16;
pub const MAX_ANGULAR_SAMPLES: usize = 1 << 48;
pub const MIN_RADIAL_NODES: usize = 32;
pub const MIN_ANGULAR_SAMPLES: usize = 256;
pub const ABS_TOL: f64 = 1e-14;
/// Bound on the imaginary residue accepted for an even kernel.
pub const IMAG_RESIDUE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Starting Gauss-Legendre node count.
    pub radial_nodes: usize,
    /// Starting number of uniform angular samples; a power of two.
    pub angular_samples: usize,
    pub target_rel_err: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_nodes: 64,
            angular_samples: MIN_ANGULAR_SAMPLES,
            target_rel_err: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn with_target(mut self, target_rel_err: f64) -> Self {
        self.target_rel_err = target_rel_err;
        self
    }

    /// Raise `angular_samples` so that Fourier index `m` passes the aliasing guard.
    pub fn for_fourier_index(mut self, m: i64) -> Self {
        self.angular_samples = self.angular_samples.max(min_angular_samples(m));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < MIN_RADIAL_NODES || self.radial_nodes > MAX_RADIAL_NODES {
            return Err(Error::config(format!(
                "radial_nodes must lie in [{MIN_RADIAL_NODES}, {MAX_RADIAL_NODES}], got {}",
                self.radial_nodes
            )));
        }
        if !self.angular_samples.is_power_of_two()
            || self.angular_samples < MIN_ANGULAR_SAMPLES
            || self.angular_samples > MAX_ANGULAR_SAMPLES
        {
            return Err(Error::config(format!(
                "angular_samples must be a power of two in [{MIN_ANGULAR_SAMPLES}, {MAX_ANGULAR_SAMPLES}], got {}",
                self.angular_samples
            )));
        }
        if !(self.target_rel_err > 0.0 && self.target_rel_err < 1.0) {
            return Err(Error::config(format!(
                "target_rel_err must lie in (0, 1), got {}",
                self.target_rel_err
            )));
        }
        Ok(())
    }
}

/// Smallest admissible angular sample count for Fourier index `m`.
pub fn min_angular_samples(m: i64) -> usize {
    let need = 8 * m.unsigned_abs() as usize;
    need.max(MIN_ANGULAR_SAMPLES).next_power_of_two()
}

/// A converged integral together with the size of its last refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub nodes: usize,
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate a vector-valued `integrand` on `[lo, hi]`, doubling the node
/// count from `start_nodes` until every component changes by at most
/// `tol·reference(value) + ABS_TOL`.
///
/// Nodes are evaluated in parallel; the weighted sum runs in node order so
/// the result does not depend on the thread count.
pub(crate) fn gauss_legendre_converged<const K: usize, F, G>(
    lo: f64,
    hi: f64,
    start_nodes: usize,
    tol: f64,
    integrand: F,
    reference: G,
) -> Result<([f64; K], [f64; K], usize)>
where
    F: Fn(f64) -> Result<[f64; K]> + Sync,
    G: Fn(&[f64; K]) -> f64,
{
    let integrate = |n: usize| -> Result<[f64; K]> {
        let (x, w) = gauss_legendre(n);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let values: Vec<[f64; K]> = x
            .par_iter()
            .map(|&t| integrand(mid + half * t))
            .collect::<Result<_>>()?;
        let mut acc = [0.0; K];
        for (v, wi) in values.iter().zip(&w) {
            for k in 0..K {
                acc[k] += wi * half * v[k];
            }
        }
        Ok(acc)
    };

    let mut n = start_nodes.max(MIN_RADIAL_NODES);
    let mut prev = integrate(n)?;
    loop {
        let next_n = 2 * n;
        let cur = integrate(next_n)?;
        let scale = tol * reference(&cur) + ABS_TOL;
        let mut diff = [0.0; K];
        for k in 0..K {
            diff[k] = (cur[k] - prev[k]).abs();
        }
        if diff.iter().all(|d| *d <= scale) {
            return Ok((cur, diff, next_n));
        }
        if 2 * next_n > MAX_RADIAL_NODES {
            let residual = diff.iter().cloned().fold(0.0, f64::max);
            return Err(Error::numeric(
                format!("radial quadrature did not converge with {next_n} nodes"),
                residual,
            ));
        }
        prev = cur;
        n = next_n;
    }
}

/// `∫₀^{r_max} f(r)·R(r)²·r dr` for the given mode, with `r_max` the mode's
/// truncation radius.
pub fn radial_quadrature<F>(mode: &LGMode, f: F, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    spec.validate()?;
    let integrand = |r: f64| -> Result<[f64; 1]> {
        let ln_r = mode.ln_radial_profile(r)?;
        Ok([f(r) * (2.0 * ln_r).exp() * r])
    };
    let (v, e, n) = gauss_legendre_converged(
        0.0,
        mode.r_max(),
        spec.radial_nodes,
        spec.target_rel_err,
        integrand,
        |v| v[0].abs(),
    )?;
    Ok(Estimate {
        value: v[0],
        error: e[0],
        nodes: n,
    })
}

/// One singular term `coefficient·|θ|^exponent·ρ(θ)` of a kernel's expansion
/// about θ = 0, with `ρ(θ) = Σ_p series[p]·θ^{2p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CuspTerm {
    pub coefficient: f64,
    pub exponent: f64,
    pub series: Vec<f64>,
}

/// Non-smooth part of a kernel at θ = 0.
///
/// The sampling error of such a term is known in closed form (a generalised
/// Euler-Maclaurin expansion in powers of the step `h`) and is removed from
/// every estimate. The expansion is trusted once `h ≤ width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cusp {
    pub terms: Vec<CuspTerm>,
    pub width: f64,
}

/// A real kernel on the circle, even about θ = 0 (and hence about θ = π).
pub trait EvenKernel: Sync {
    fn value(&self, theta: f64) -> f64;

    /// Half-width `s ≤ π` such that the kernel is exactly zero for
    /// `s < θ < 2π − s`. Samples outside the support are skipped.
    fn support(&self) -> f64 {
        PI
    }

    /// Singular expansion at θ = 0; `None` for kernels smooth on the circle.
    fn cusp(&self) -> Option<Cusp> {
        None
    }
}

/// Powers of θ kept in the correction series.
const CUSP_SERIES_ORDER: usize = 24;

const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Riemann zeta for real `s > 1`, by Euler-Maclaurin summation.
fn zeta_above_one(s: f64) -> f64 {
    const N: f64 = 10.0;
    let mut sum: f64 = (1..10).map(|n| (n as f64).powf(-s)).sum();
    sum += N.powf(1.0 - s) / (s - 1.0) + 0.5 * N.powf(-s);
    // B_{2k}/(2k)! · s(s+1)…(s+2k−2) · N^{−s−2k+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut power = N.powf(-s - 1.0);
    for (k, b) in BERNOULLI.iter().enumerate() {
        sum += b / fact * rising * power;
        let k2 = 2.0 * (k as f64 + 1.0);
        rising *= (s + k2 - 1.0) * (s + k2);
        fact *= (k2 + 1.0) * (k2 + 2.0);
        power /= N * N;
    }
    sum
}

/// `ζ(−σ)` for `σ > 0`, by the reflection formula.
fn zeta_negative(sigma: f64) -> f64 {
    if sigma.fract() == 0.0 && (sigma as u64).is_multiple_of(2) {
        return 0.0;
    }
    let s = 1.0 + sigma;
    2.0 * TAU.powf(-s) * (0.5 * PI * s).cos() * gamma(s) * zeta_above_one(s)
}

/// Sampling-error model for the singular terms of a kernel at one grid.
struct CuspCorrection {
    cusp: Cusp,
    /// `ζ(−γ − 2q)` per term and `q ≤ CUSP_SERIES_ORDER/2`.
    zetas: Vec<Vec<f64>>,
}

impl CuspCorrection {
    fn new(cusp: Cusp) -> Self {
        let zetas = cusp
            .terms
            .iter()
            .map(|t| {
                (0..=CUSP_SERIES_ORDER / 2)
                    .map(|q| zeta_negative(t.exponent + 2.0 * q as f64))
                    .collect()
            })
            .collect();
        Self { cusp, zetas }
    }

    /// `(h Σ_k g(θ_k) − ∫ g)/2π` for `g(θ) = (singular part)·cos(mθ)`.
    fn error(&self, m: i64, samples: usize) -> f64 {
        let h = TAU / samples as f64;
        let mf = m as f64;
        let mut total = 0.0;
        for (term, zetas) in self.cusp.terms.iter().zip(&self.zetas) {
            if term.coefficient == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for (q, z) in zetas.iter().enumerate() {
                if *z == 0.0 {
                    continue;
                }
                let k = 2 * q;
                // θ^k coefficient of ρ(θ)·cos(mθ)
                let mut ck = 0.0;
                for (p, rho) in term.series.iter().enumerate().take(q + 1) {
                    let d = k - 2 * p;
                    let sign = if (d / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    ck += rho * sign * mf.powi(d as i32) / factorial(d);
                }
                // coefficient·h^{γ+k+1} in logs: both factors may be extreme
                let log_scale = term.coefficient.abs().ln() + (term.exponent + k as f64 + 1.0) * h.ln();
                acc += 2.0 * z * log_scale.exp() * ck;
            }
            total += term.coefficient.signum() * acc;
        }
        total / TAU
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl<F: Fn(f64) -> f64 + Sync> EvenKernel for F {
    fn value(&self, theta: f64) -> f64 {
        self(theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularCoefficients {
    /// Real parts of `(1/2π)∫ e^{-imθ} K(θ) dθ`, in the order requested.
    pub values: Vec<f64>,
    /// Largest change seen in the final doubling step.
    pub error: f64,
    /// Sample count of the converged estimate.
    pub samples: usize,
}

/// Running sums of `K(θ_k)·e^{-imθ_k}` over a uniform grid that can be
/// refined by inserting the odd points of the doubled grid.
struct DftAccumulator<'a, K: EvenKernel + ?Sized> {
    kernel: &'a K,
    ms: &'a [i64],
    support: f64,
    re: Vec<f64>,
    im: Vec<f64>,
    samples: usize,
}

impl<'a, K: EvenKernel + ?Sized> DftAccumulator<'a, K> {
    fn new(kernel: &'a K, ms: &'a [i64], samples: usize) -> Self {
        let support = kernel.support().clamp(0.0, PI);
        let mut acc = Self {
            kernel,
            ms,
            support,
            re: vec![0.0; ms.len()],
            im: vec![0.0; ms.len()],
            samples,
        };
        let last = acc.last_index(samples);
        for k in 0..=last {
            acc.add(k, samples);
        }
        for k in (samples - last).max(last + 1)..samples {
            acc.add(k, samples);
        }
        acc
    }

    /// Largest index `k` with `θ_k ≤ support` on a grid of `samples` points.
    fn last_index(&self, samples: usize) -> usize {
        let k = (self.support / TAU * samples as f64).floor() as usize;
        k.min(samples / 2)
    }

    fn add(&mut self, k: usize, samples: usize) {
        let theta = TAU * k as f64 / samples as f64;
        let kv = self.kernel.value(theta);
        if kv == 0.0 {
            return;
        }
        for (j, &m) in self.ms.iter().enumerate() {
            // reduce m·k modulo the grid so the phase is exact
            let idx = (m as i128 * k as i128).rem_euclid(samples as i128) as f64;
            let (s, c) = (TAU * idx / samples as f64).sin_cos();
            self.re[j] += kv * c;
            self.im[j] -= kv * s;
        }
    }

    fn refine(&mut self) {
        let samples = 2 * self.samples;
        let last = self.last_index(samples);
        let mut k = 1;
        while k <= last {
            self.add(k, samples);
            k += 2;
        }
        let mut k = samples - 1;
        while k > last && k >= samples - last {
            self.add(k, samples);
            k -= 2;
        }
        self.samples = samples;
    }

    fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.samples as f64;
        (
            self.re.iter().map(|v| v / n).collect(),
            self.im.iter().map(|v| v / n).collect(),
        )
    }
}

/// Fourier coefficients `(1/2π)∫₀^{2π} e^{-imθ} K(θ) dθ` of an even kernel
/// for every `m` in `ms`, by uniform sampling and a direct DFT.
///
/// The sample count starts at `spec.angular_samples` and doubles until every
/// coefficient moves by at most `target_rel_err·|c₀| + 1e-14`, where `c₀` is
/// the mean of the kernel. For kernels with a [`Cusp`] the known sampling
/// error of the singular terms is subtracted, and convergence is only
/// accepted once both grids resolve the cusp width.
pub fn angular_fourier_coefficients<K: EvenKernel + ?Sized>(
    kernel: &K,
    ms: &[i64],
    spec: &QuadratureSpec,
) -> Result<AngularCoefficients> {
    spec.validate()?;
    let m_max = ms.iter().map(|m| m.unsigned_abs()).max().unwrap_or(0);
    if (spec.angular_samples as u64) < 8 * m_max {
        return Err(Error::config(format!(
            "aliasing guard: {} angular samples cannot resolve Fourier index {m_max} (need ≥ {})",
            spec.angular_samples,
            8 * m_max
        )));
    }

    // index 0 carries the kernel mean, the scale for the convergence test
    let mut all = Vec::with_capacity(ms.len() + 1);
    all.push(0);
    all.extend_from_slice(ms);
    let correction = kernel.cusp().map(CuspCorrection::new);
    let corrected = |acc: &DftAccumulator<K>| -> (Vec<f64>, Vec<f64>) {
        let (mut re, im) = acc.coefficients();
        if let Some(c) = &correction {
            for (v, &m) in re.iter_mut().zip(&all) {
                *v -= c.error(m, acc.samples);
            }
        }
        (re, im)
    };
    // the correction holds only on grids that resolve the cusp
    let resolved = |samples: usize| {
        correction
            .as_ref()
            .is_none_or(|c| TAU / samples as f64 <= c.cusp.width)
    };
    let mut acc = DftAccumulator::new(kernel, &all, spec.angular_samples);
    let (mut prev, _) = corrected(&acc);
    loop {
        if 2 * acc.samples > MAX_ANGULAR_SAMPLES {
            return Err(Error::numeric(
                format!("angular DFT did not converge with {} samples", acc.samples),
                f64::NAN,
            ));
        }
        let coarse_resolved = resolved(acc.samples);
        acc.refine();
        let (cur, imag) = corrected(&acc);
        let c0 = cur[0].abs();
        let scale = spec.target_rel_err * c0 + ABS_TOL;
        let err = cur
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err <= scale && coarse_resolved {
            let residue = imag.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if residue > IMAG_RESIDUE_TOL * c0.max(1.0) {
                return Err(Error::numeric(
                    "kernel is not even: imaginary Fourier residue too large",
                    residue,
                ));
            }
            return Ok(AngularCoefficients {
                values: cur[1..].to_vec(),
                error: err,
                samples: acc.samples,
            });
        }
        prev = cur;
    }
}

/// Single-index form of [`angular_fourier_coefficients`].
pub fn angular_fourier_coefficient<K: EvenKernel + ?Sized>(
    kernel: &K,
    m: i64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(angular_fourier_coefficients(kernel, &[m], spec)?.values[0])
}
