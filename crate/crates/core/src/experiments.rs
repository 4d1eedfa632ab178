//! Concurrence sweeps over the rescaled turbulence strength `x = ξ(l0)/r0`,
//! the collapse of curves for different `l0`, stretched-exponential fits,
//! the critical point and the distance scaling law.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel;
use crate::entangle::concurrence_closed_form;
use crate::lgmode::LGMode;
use crate::quadrature::QuadratureSpec;
use crate::turbulence::{distance_for_r0, TurbulenceModel};
use crate::{Error, Result};

/// Fit points must have `C` in this range.
pub const FIT_C_MIN: f64 = 1e-4;
pub const FIT_C_MAX: f64 = 0.999;
pub const MIN_FIT_POINTS: usize = 8;
const FIT_TOL: f64 = 1e-10;
const FIT_MAX_ITER: usize = 200;
/// Bracket width at which [`critical_x`] stops.
pub const CRITICAL_TOL: f64 = 1e-4;
/// Bracket width for the threshold crossing in [`distance_scaling`].
pub const SCALING_TOL: f64 = 1e-8;

/// One point of a concurrence curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseRecord {
    pub l0: i64,
    pub x: f64,
    pub r0: f64,
    pub a: f64,
    pub b: f64,
    pub atilde: f64,
    pub concurrence: f64,
    /// `ok`, or the error that prevented evaluation (values are then NaN).
    pub status: String,
}

impl CollapseRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// `x = start, start + step, …` up to and including `stop` (within rounding).
pub fn x_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop >= start && step > 0.0) || !stop.is_finite() {
        return Err(Error::domain(format!(
            "x grid needs 0 < start ≤ stop and step > 0, got {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn check_x_grid(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::domain("x grid is empty"));
    }
    if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::domain("x values must be positive and finite"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("x values must be strictly ascending"));
    }
    Ok(())
}

fn xi(l0: i64, w0: f64) -> Result<f64> {
    LGMode::new(l0, w0)?.phase_correlation_length()
}

/// Amplitudes and concurrence at `x = ξ(l0)/r0`.
pub fn evaluate(l0: i64, w0: f64, x: f64, spec: &QuadratureSpec) -> Result<CollapseRecord> {
    let r0 = xi(l0, w0)? / x;
    let amps = channel::amplitudes(l0, w0, &TurbulenceModel::from_fried(r0)?, spec)?;
    let atilde = amps.ratio()?;
    Ok(CollapseRecord {
        l0,
        x,
        r0,
        a: amps.a,
        b: amps.b,
        atilde,
        concurrence: concurrence_closed_form(atilde)?,
        status: "ok".into(),
    })
}

/// Concurrence at each `x`. A failed point is kept with its error in
/// `status` rather than aborting the sweep.
pub fn concurrence_curve(
    l0: i64,
    w0: f64,
    xs: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<CollapseRecord>> {
    check_x_grid(xs)?;
    let r0_scale = xi(l0, w0)?;
    Ok(xs
        .par_iter()
        .map(|&x| {
            evaluate(l0, w0, x, spec).unwrap_or_else(|e| CollapseRecord {
                l0,
                x,
                r0: r0_scale / x,
                a: f64::NAN,
                b: f64::NAN,
                atilde: f64::NAN,
                concurrence: f64::NAN,
                status: format!("error: {e}"),
            })
        })
        .collect())
}

/// Whether the successfully evaluated points never increase with `x`.
pub fn is_monotone_non_increasing(curve: &[CollapseRecord]) -> bool {
    let cs: Vec<f64> = curve.iter().filter(|r| r.is_ok()).map(|r| r.concurrence).collect();
    cs.windows(2).all(|w| w[1] <= w[0])
}

/// `max_x |C1(x) − C2(x)|` over shared grid points inside `range`.
pub fn sup_deviation(
    c1: &[CollapseRecord],
    c2: &[CollapseRecord],
    range: Option<(f64, f64)>,
) -> Result<f64> {
    let inside = |x: f64| range.is_none_or(|(lo, hi)| x >= lo - 1e-12 && x <= hi + 1e-12);
    let mut sup: Option<f64> = None;
    for r1 in c1.iter().filter(|r| r.is_ok() && inside(r.x)) {
        let tol = 1e-9 * r1.x.abs();
        if let Some(r2) = c2.iter().find(|r| r.is_ok() && (r.x - r1.x).abs() <= tol) {
            let d = (r1.concurrence - r2.concurrence).abs();
            sup = Some(sup.map_or(d, |s| s.max(d)));
        }
    }
    sup.ok_or_else(|| Error::domain("curves share no evaluated x values"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDeviation {
    pub l0_a: i64,
    pub l0_b: i64,
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseDataset {
    pub w0: f64,
    pub curves: Vec<Vec<CollapseRecord>>,
    /// One entry per unordered pair of curves, in list order.
    pub deviations: Vec<PairDeviation>,
}

impl CollapseDataset {
    pub fn curve(&self, l0: i64) -> Option<&[CollapseRecord]> {
        self.curves
            .iter()
            .find(|c| c.first().is_some_and(|r| r.l0 == l0))
            .map(|c| c.as_slice())
    }

    pub fn records(&self) -> impl Iterator<Item = &CollapseRecord> {
        self.curves.iter().flatten()
    }
}

/// Curves for every `l0` and their pairwise sup-deviations over the whole grid.
pub fn collapse_dataset(
    l0_list: &[i64],
    w0: f64,
    xs: &[f64],
    spec: &QuadratureSpec,
) -> Result<CollapseDataset> {
    if l0_list.is_empty() {
        return Err(Error::domain("need at least one l0"));
    }
    let curves = l0_list
        .iter()
        .map(|&l0| concurrence_curve(l0, w0, xs, spec))
        .collect::<Result<Vec<_>>>()?;
    let mut deviations = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            deviations.push(PairDeviation {
                l0_a: l0_list[i],
                l0_b: l0_list[j],
                sup_deviation: sup_deviation(&curves[i], &curves[j], None)
                    .unwrap_or(f64::NAN),
            });
        }
    }
    Ok(CollapseDataset {
        w0,
        curves,
        deviations,
    })
}

/// Result of fitting `C = exp(−α·x^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub alpha: f64,
    pub beta: f64,
    /// RMS of `C − exp(−α·x^β)` over the fitted points.
    pub residual: f64,
    /// x-window requested.
    pub domain: (f64, f64),
    pub points: usize,
    pub iterations: usize,
}

fn rms_residual(xs: &[f64], cs: &[f64], alpha: f64, beta: f64) -> f64 {
    let ss: f64 = xs
        .iter()
        .zip(cs)
        .map(|(&x, &c)| (c - (-alpha * x.powf(beta)).exp()).powi(2))
        .sum();
    (ss / xs.len() as f64).sqrt()
}

/// Fit `(x, C)` pairs; only points with `x` in `window` and `C` in
/// `[1e−4, 0.999]` are used.
///
/// The start comes from the linearisation `ln(−ln C) = ln α + β ln x`; it is
/// refined by Gauss-Newton on `C` with step halving.
pub fn fit_points(xs: &[f64], cs: &[f64], window: (f64, f64)) -> Result<FitResult> {
    if xs.len() != cs.len() {
        return Err(Error::domain("x and C lists differ in length"));
    }
    let (px, pc): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(cs)
        .filter(|(&x, &c)| {
            x >= window.0 && x <= window.1 && x > 0.0 && (FIT_C_MIN..=FIT_C_MAX).contains(&c)
        })
        .map(|(&x, &c)| (x, c))
        .unzip();
    if px.len() < MIN_FIT_POINTS {
        return Err(Error::domain(format!(
            "only {} usable points in the fit window (need {MIN_FIT_POINTS})",
            px.len()
        )));
    }

    // linear least squares in (ln x, ln(−ln C))
    let n = px.len() as f64;
    let u: Vec<f64> = px.iter().map(|x| x.ln()).collect();
    let v: Vec<f64> = pc.iter().map(|c| (-c.ln()).ln()).collect();
    let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let suu: f64 = u.iter().map(|x| (x - mu).powi(2)).sum();
    if suu == 0.0 {
        return Err(Error::domain("fit needs at least two distinct x values"));
    }
    let suv: f64 = u.iter().zip(&v).map(|(x, y)| (x - mu) * (y - mv)).sum();
    let mut beta = suv / suu;
    let mut alpha = (mv - beta * mu).exp();

    let sse = |al: f64, be: f64| -> f64 {
        px.iter()
            .zip(&pc)
            .map(|(&x, &c)| (c - (-al * x.powf(be)).exp()).powi(2))
            .sum()
    };
    let mut current = sse(alpha, beta);
    for iter in 1..=FIT_MAX_ITER {
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (&x, &c) in px.iter().zip(&pc) {
            let xb = x.powf(beta);
            let model = (-alpha * xb).exp();
            let j = Vector2::new(-xb * model, -alpha * xb * x.ln() * model);
            jtj += j * j.transpose();
            jtr += j * (c - model);
        }
        let Some(step) = jtj.lu().solve(&jtr) else {
            return Err(Error::numeric(
                format!("singular normal equations at alpha = {alpha}, beta = {beta}"),
                current.sqrt(),
            ));
        };
        let mut t = 1.0;
        let (mut na, mut nb, mut next) = (alpha, beta, current);
        while t > 1e-12 {
            na = alpha + t * step[0];
            nb = beta + t * step[1];
            next = if na > 0.0 { sse(na, nb) } else { f64::INFINITY };
            if next <= current {
                break;
            }
            t *= 0.5;
        }
        let converged = (na - alpha).abs() <= FIT_TOL * alpha.abs().max(1.0)
            && (nb - beta).abs() <= FIT_TOL * beta.abs().max(1.0);
        if next <= current {
            alpha = na;
            beta = nb;
            current = next;
        }
        if converged || t <= 1e-12 {
            return Ok(FitResult {
                alpha,
                beta,
                residual: rms_residual(&px, &pc, alpha, beta),
                domain: window,
                points: px.len(),
                iterations: iter,
            });
        }
    }
    Err(Error::numeric(
        format!("Gauss-Newton did not converge; last iterate alpha = {alpha}, beta = {beta}"),
        current.sqrt(),
    ))
}

/// Fit the evaluated points of `records` (typically one curve).
pub fn fit_stretched_exponential(
    records: &[CollapseRecord],
    window: (f64, f64),
) -> Result<FitResult> {
    let (xs, cs): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (r.x, r.concurrence))
        .unzip();
    fit_points(&xs, &cs, window)
}

/// Bisect a decreasing function `f` for `f(x) = 0` on a bracket that starts
/// at `[lo, hi]` and is widened upwards if needed. Returns `(lo, hi)` with
/// `f(lo) > 0 ≥ f(hi)`.
fn bisect_decreasing<F>(mut lo: f64, mut hi: f64, tol: f64, f: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    if f(lo)? <= 0.0 {
        return Err(Error::numeric(
            format!("no bracket: the function is already non-positive at x = {lo}"),
            lo,
        ));
    }
    let mut widen = 0;
    while f(hi)? > 0.0 {
        widen += 1;
        if widen > 6 {
            return Err(Error::numeric(format!("no bracket found up to x = {hi}"), hi));
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Smallest `x` with `C(x) = 0`, i.e. where `ã` reaches 1/2, to within
/// [`CRITICAL_TOL`]. The returned point has `C = 0`.
pub fn critical_x(l0: i64, w0: f64, spec: &QuadratureSpec) -> Result<f64> {
    if l0 == 0 {
        return Err(Error::domain("qubit modes need l0 ≠ 0"));
    }
    let (_, hi) = bisect_decreasing(0.05, 1.5, CRITICAL_TOL, |x| {
        Ok(0.5 - evaluate(l0, w0, x, spec)?.atilde)
    })?;
    Ok(hi)
}

/// `x` at which the concurrence falls to `threshold`.
pub fn threshold_x(l0: i64, w0: f64, threshold: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::domain(format!(
            "concurrence threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (lo, hi) = bisect_decreasing(0.01, 1.5, SCALING_TOL, |x| {
        Ok(evaluate(l0, w0, x, spec)?.concurrence - threshold)
    })?;
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub l0: i64,
    /// `x*` where the concurrence reaches the threshold.
    pub x: f64,
    pub r0: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    /// Least-squares slope of `ln L` against `ln |l0|`.
    pub slope: f64,
    pub intercept: f64,
    /// Slope of `ln ξ(l0)^{−5/3}` against `ln |l0|` over the same list.
    pub oracle_slope: f64,
    pub threshold: f64,
    pub points: Vec<ScalingPoint>,
}

fn ls_slope(u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = u.len() as f64;
    let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let suu: f64 = u.iter().map(|x| (x - mu).powi(2)).sum();
    let suv: f64 = u.iter().zip(v).map(|(x, y)| (x - mu) * (y - mv)).sum();
    let slope = suv / suu;
    (slope, mv - slope * mu)
}

/// Distance at which the concurrence drops to `threshold`, for each `l0`,
/// and the log-log slope of distance against `|l0|`.
pub fn distance_scaling(
    l0_list: &[i64],
    cn2: f64,
    k: f64,
    w0: f64,
    threshold: f64,
    spec: &QuadratureSpec,
) -> Result<ScalingResult> {
    let abs: Vec<f64> = l0_list.iter().map(|l| l.unsigned_abs() as f64).collect();
    if abs.contains(&0.0) {
        return Err(Error::domain("qubit modes need l0 ≠ 0"));
    }
    let lo = abs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = abs.iter().copied().fold(0.0, f64::max);
    if hi < 10.0 * lo {
        return Err(Error::domain("l0 list must span at least one decade"));
    }
    let points = l0_list
        .par_iter()
        .map(|&l0| {
            let x = threshold_x(l0, w0, threshold, spec)?;
            let r0 = xi(l0, w0)? / x;
            Ok(ScalingPoint {
                l0,
                x,
                r0,
                distance: distance_for_r0(cn2, k, r0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let u: Vec<f64> = abs.iter().map(|l| l.ln()).collect();
    let v: Vec<f64> = points.iter().map(|p| p.distance.ln()).collect();
    let (slope, intercept) = ls_slope(&u, &v);
    let oracle: Vec<f64> = l0_list
        .iter()
        .map(|&l0| Ok(-5.0 / 3.0 * xi(l0, w0)?.ln()))
        .collect::<Result<_>>()?;
    let (oracle_slope, _) = ls_slope(&u, &oracle);
    Ok(ScalingResult {
        slope,
        intercept,
        oracle_slope,
        threshold,
        points,
    })
}
