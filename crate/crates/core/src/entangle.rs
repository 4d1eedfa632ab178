//! Two-qubit OAM states: Bell input, propagation through the tensor square
//! of the truncated map, post-selection renormalisation and concurrence.
//!
//! Basis order is fixed to `(|−l0,−l0⟩, |−l0,l0⟩, |l0,−l0⟩, |l0,l0⟩)`, i.e.
//! index `2·q1 + q2` with `q = 0` for `−l0` and `q = 1` for `+l0`.

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::{ChannelAmplitudes, MapElementQuery};
use crate::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
/// Accepted deviation of the trace from one for a normalised state.
pub const NORMALIZED_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

/// Azimuthal label of qubit index `q` in units of `l0`.
fn label(q: usize) -> i64 {
    if q == 0 {
        -1
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    pub matrix: Matrix4<Complex64>,
    /// Trace before renormalisation.
    pub norm: f64,
    /// Relative phase of the Bell input.
    pub gamma: f64,
}

impl TwoQubitState {
    /// Wrap a density matrix, checking hermiticity.
    pub fn from_matrix(matrix: Matrix4<Complex64>, gamma: f64) -> Result<Self> {
        let scale = matrix.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        let dev = (matrix - matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::domain(format!("matrix is not Hermitian (deviation {dev:e})")));
        }
        let norm = matrix.trace().re;
        Ok(Self { matrix, norm, gamma })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = hermitian_part(&self.matrix);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn hermitian_part(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

/// `(|l0,−l0⟩ + e^{iγ}|−l0,l0⟩)/√2` as a density matrix.
pub fn bell_input(gamma: f64) -> TwoQubitState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = [Complex64::new(0.0, 0.0); 4];
    psi[2] = Complex64::new(s, 0.0);
    psi[1] = Complex64::from_polar(s, gamma);
    let matrix = Matrix4::from_fn(|i, j| psi[i] * psi[j].conj());
    TwoQubitState {
        matrix,
        norm: 1.0,
        gamma,
    }
}

/// The truncated single-photon map as a tensor `T[l][l'][k][k']`
/// (output indices first), filled from the selection rules.
fn truncated_map(amps: &ChannelAmplitudes) -> Result<[[[[f64; 2]; 2]; 2]; 2]> {
    let mut t = [[[[0.0; 2]; 2]; 2]; 2];
    for (l, tl) in t.iter_mut().enumerate() {
        for (lp, tlp) in tl.iter_mut().enumerate() {
            for (k, tk) in tlp.iter_mut().enumerate() {
                for (kp, v) in tk.iter_mut().enumerate() {
                    let (dl, dlp) = (label(l), label(lp));
                    if dlp != dl && dlp != -dl {
                        continue;
                    }
                    let q = MapElementQuery::new(label(k), label(kp), dl, dlp)?;
                    *v = amps.qubit_element(1, &q)?;
                }
            }
        }
    }
    Ok(t)
}

/// `(Λ ⊗ Λ) ρ` restricted to the qubit basis; the result is not renormalised.
pub fn propagate(input: &TwoQubitState, amps: &ChannelAmplitudes) -> Result<TwoQubitState> {
    amps.check()?;
    let t = truncated_map(amps)?;
    let idx = |a: usize, b: usize| 2 * a + b;
    let mut out = Matrix4::<Complex64>::zeros();
    for l1 in 0..2 {
        for l2 in 0..2 {
            for l1p in 0..2 {
                for l2p in 0..2 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k1 in 0..2 {
                        for k1p in 0..2 {
                            let t1 = t[l1][l1p][k1][k1p];
                            if t1 == 0.0 {
                                continue;
                            }
                            for k2 in 0..2 {
                                for k2p in 0..2 {
                                    let t2 = t[l2][l2p][k2][k2p];
                                    acc += input.matrix[(idx(k1, k2), idx(k1p, k2p))] * (t1 * t2);
                                }
                            }
                        }
                    }
                    out[(idx(l1, l2), idx(l1p, l2p))] = acc;
                }
            }
        }
    }
    let norm = out.trace().re;
    Ok(TwoQubitState {
        matrix: out,
        norm,
        gamma: input.gamma,
    })
}

/// Divide by the trace; `norm` keeps the original trace.
pub fn renormalize(state: &TwoQubitState) -> Result<TwoQubitState> {
    let tr = state.trace();
    if !(tr > f64::MIN_POSITIVE) {
        return Err(Error::numeric(
            "post-selected state has zero trace: the photon pair is fully lost and \
             concurrence is undefined",
            tr,
        ));
    }
    Ok(TwoQubitState {
        matrix: state.matrix.unscale(tr),
        norm: state.norm,
        gamma: state.gamma,
    })
}

/// `σ_y ⊗ σ_y` in the fixed basis order.
fn spin_flip() -> Matrix4<Complex64> {
    let mut m = Matrix4::<Complex64>::zeros();
    m[(0, 3)] = Complex64::new(-1.0, 0.0);
    m[(3, 0)] = Complex64::new(-1.0, 0.0);
    m[(1, 2)] = Complex64::new(1.0, 0.0);
    m[(2, 1)] = Complex64::new(1.0, 0.0);
    m
}

/// Wootters concurrence `max(0, λ1 − λ2 − λ3 − λ4)`, with `λi` the
/// descending square roots of the eigenvalues of `ρ·(σy⊗σy)·ρ*·(σy⊗σy)`.
///
/// With `ρ = V V†` from the eigendecomposition, the `λi` are the singular
/// values of `Vᵀ (σy⊗σy) V`. Negative eigenvalues within the PSD tolerance
/// are floored at zero.
pub fn wootters_concurrence(state: &TwoQubitState) -> Result<f64> {
    let rho = &state.matrix;
    let tr = state.trace();
    if (tr - 1.0).abs() > NORMALIZED_TOL {
        return Err(Error::domain(format!("state must be normalised, trace is {tr}")));
    }
    let dev = (rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if dev > HERMITIAN_TOL {
        return Err(Error::domain(format!("state is not Hermitian (deviation {dev:e})")));
    }
    let eig = SymmetricEigen::new(hermitian_part(rho));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(Error::domain(format!(
            "state is not positive semidefinite (eigenvalue {min:e})"
        )));
    }
    let scale = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    let factor = eig.eigenvectors * Matrix4::from_diagonal(&scale);
    let tau = factor.transpose() * spin_flip() * factor;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// `C = max[0, (1 − 2ã)/(1 + ã)²]` for the propagated Bell state.
pub fn concurrence_closed_form(a_ratio: f64) -> Result<f64> {
    if !(a_ratio >= 0.0) {
        return Err(Error::domain(format!(
            "amplitude ratio must be non-negative, got {a_ratio}"
        )));
    }
    Ok(((1.0 - 2.0 * a_ratio) / (1.0 + a_ratio).powi(2)).max(0.0))
}

/// Concurrence of the renormalised output for a Bell input, via the general
/// Wootters routine.
pub fn output_concurrence(amps: &ChannelAmplitudes, gamma: f64) -> Result<f64> {
    let out = renormalize(&propagate(&bell_input(gamma), amps)?)?;
    wootters_concurrence(&out)
}
