//! Closed-form propagator `exp(-i H t)` of the reduced model and the battery
//! amplitude, energy and power it implies.
//!
//! All times are rescaled, `t -> gamma_eff * t`.
//!
//! With `c = -i (alpha + gamma_b)` the propagator is written as
//! `M(t) = D(t) (H - c I) + S(t) I`, where `D` is the divided difference
//! `(exp(-i lambda_+ t) - exp(-i lambda_- t)) / (2 Omega)` and `S` the mean
//! `(exp(-i lambda_+ t) + exp(-i lambda_- t)) / 2`. Three evaluation paths:
//!
//! * `|Omega| < EP_SWITCH`: Jordan form `exp(-i c t) (I - i (H - c I) t)`.
//! * `|Omega t| < SERIES_TOL`: `D` and `S` from their series in `Omega t`
//!   through fourth order.
//! * otherwise: Sylvester's formula as written.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ReducedParams;
use crate::numeric::{gauss_legendre_2, sinc, I, ONE, ZERO};
use crate::spectral::{drift_matrix, eigensystem, ep_conditions, Spectrum, CLASSIFY_TOL, EP_TOL};

/// Below this `|Omega|` the Jordan (defective) form is used.
pub const EP_SWITCH: f64 = 1e-7;
/// Below this `|Omega t|` the divided difference is taken from its series.
pub const SERIES_TOL: f64 = 1e-4;
/// `|lambda_+ lambda_-|` at or below this makes the general energy formula
/// indeterminate.
pub const PI_TOL: f64 = 1e-9;
/// Below this `|lambda_+ lambda_-|` the drive integral avoids `H^{-1}`.
const PI_RESOLVENT_TOL: f64 = 1e-6;
/// With `|Pi|` small, the drive integral is done per eigenvalue when
/// `|Omega|` exceeds this, and by quadrature otherwise.
const OMEGA_SPLIT_TOL: f64 = 1e-3;
/// Below this `|K|` the symmetric formulas lose accuracy to cancellation.
const K_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("eigenvalues coalesce (|Omega| = {0:e}); use the exceptional-point form")]
    DegenerateSpectrum(f64),
    #[error("lambda_+ lambda_- = {pi:e} is singular; quadrature fallback gives E = {fallback}")]
    SingularProduct { pi: f64, fallback: f64 },
    #[error("parameters are not at an exceptional point: {0}")]
    NotAtEp(&'static str),
    #[error("symmetric formulas need alpha = 0, got alpha = {0}")]
    AsymmetricParams(f64),
    #[error("asymptotic form needs the broken phase at alpha = 0 (|Omega| > gamma)")]
    NotBroken,
}

/// Which branch evaluated the propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagatorPath {
    Jordan,
    Series,
    Sylvester,
}

/// Entries of `exp(-i H tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator2 {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
}

impl Propagator2 {
    pub fn identity() -> Self {
        Self {
            m11: ONE,
            m12: ZERO,
            m21: ZERO,
            m22: ONE,
        }
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.m11 * v[0] + self.m12 * v[1],
            self.m21 * v[0] + self.m22 * v[1],
        ]
    }

    pub fn compose(&self, rhs: &Propagator2) -> Propagator2 {
        Propagator2 {
            m11: self.m11 * rhs.m11 + self.m12 * rhs.m21,
            m12: self.m11 * rhs.m12 + self.m12 * rhs.m22,
            m21: self.m21 * rhs.m11 + self.m22 * rhs.m21,
            m22: self.m21 * rhs.m12 + self.m22 * rhs.m22,
        }
    }

    pub fn det(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn max_abs_diff(&self, other: &Propagator2) -> f64 {
        [
            self.m11 - other.m11,
            self.m12 - other.m12,
            self.m21 - other.m21,
            self.m22 - other.m22,
        ]
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
    }
}

pub fn propagator(r: &ReducedParams, tau: f64) -> Propagator2 {
    propagator_with_path(r, tau).0
}

pub fn propagator_with_path(r: &ReducedParams, tau: f64) -> (Propagator2, PropagatorPath) {
    let s = eigensystem(r);
    let (divided, mean, path) = divided_difference(&s, tau);
    // H - c I = [[delta - i alpha, i], [i, -delta + i alpha]]
    let shifted = Complex64::new(r.delta_r, -s.alpha);
    let m = Propagator2 {
        m11: divided * shifted + mean,
        m12: I * divided,
        m21: I * divided,
        m22: -divided * shifted + mean,
    };
    (m, path)
}

/// `D(tau)` and `S(tau)` of the module docs.
fn divided_difference(s: &Spectrum, tau: f64) -> (Complex64, Complex64, PropagatorPath) {
    let om = s.omega;
    if om.norm() < EP_SWITCH {
        let e0 = (-I * s.center() * tau).exp();
        return (-I * tau * e0, e0, PropagatorPath::Jordan);
    }
    let x = om * tau;
    if x.norm() < SERIES_TOL {
        let e0 = (-I * s.center() * tau).exp();
        let x2 = x * x;
        let sin_over = sinc(x, SERIES_TOL);
        let cos = ONE - x2 / 2.0 + x2 * x2 / 24.0;
        return (-I * tau * e0 * sin_over, e0 * cos, PropagatorPath::Series);
    }
    let ep = (-I * s.lambda_plus * tau).exp();
    let em = (-I * s.lambda_minus * tau).exp();
    (
        (ep - em) / (2.0 * om),
        (ep + em) / 2.0,
        PropagatorPath::Sylvester,
    )
}

/// How the drive integral was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveIntegral {
    /// `i H^{-1} (M(t) - I) C`
    Resolvent,
    /// `M = D (H - c I) + S I` with `D`, `S` integrated term by term.
    Eigen,
    /// Composite Gauss–Legendre quadrature of `M(s) C`.
    Quadrature,
}

/// `int_0^t M(s) C ds` with `C = [eps_r, 0]`.
pub fn drive_response(r: &ReducedParams, t: f64) -> ([Complex64; 2], DriveIntegral) {
    let c = Complex64::new(r.eps_r, 0.0);
    if t == 0.0 || r.eps_r == 0.0 {
        return ([ZERO; 2], DriveIntegral::Resolvent);
    }
    let s = eigensystem(r);
    if s.pi_lambda.norm() > PI_RESOLVENT_TOL {
        let m = propagator(r, t);
        let h = drift_matrix(r).entries;
        // (M - I) C = [m11 - 1, m21] eps
        let w = [(m.m11 - ONE) * c, m.m21 * c];
        // H^{-1} = adj(H) / det(H)
        let det = s.pi_lambda;
        let x = [
            (h[1][1] * w[0] - h[0][1] * w[1]) / det,
            (-h[1][0] * w[0] + h[0][0] * w[1]) / det,
        ];
        ([I * x[0], I * x[1]], DriveIntegral::Resolvent)
    } else if s.omega.norm() > OMEGA_SPLIT_TOL {
        let fp = exp_integral(s.lambda_plus, t);
        let fm = exp_integral(s.lambda_minus, t);
        let divided = (fp - fm) / (2.0 * s.omega);
        let mean = (fp + fm) / 2.0;
        let shifted = Complex64::new(r.delta_r, -s.alpha);
        (
            [(divided * shifted + mean) * c, I * divided * c],
            DriveIntegral::Eigen,
        )
    } else {
        let scale = 1.0 + s.lambda_plus.norm() + s.lambda_minus.norm();
        let panels = (2.0 * t * scale).ceil() as usize + 1;
        let v = gauss_legendre_2(
            |u| {
                let m = propagator(r, u);
                [m.m11 * c, m.m21 * c]
            },
            t,
            panels,
        );
        (v, DriveIntegral::Quadrature)
    }
}

/// `int_0^t exp(-i lambda s) ds`
fn exp_integral(lambda: Complex64, t: f64) -> Complex64 {
    let z = -I * lambda * t;
    if z.norm() < 1e-3 {
        t * (ONE + z / 2.0 + z * z / 6.0 + z * z * z / 24.0)
    } else {
        (z.exp() - ONE) / (-I * lambda)
    }
}

/// Mode amplitudes `(a(t), b(t))` from initial values `(a0, b0)`.
pub fn amplitudes(
    r: &ReducedParams,
    t: f64,
    a0: Complex64,
    b0: Complex64,
) -> (Complex64, Complex64) {
    let hom = propagator(r, t).apply([a0, b0]);
    let (drv, _) = drive_response(r, t);
    (hom[0] + drv[0], hom[1] + drv[1])
}

/// Amplitudes from the ground state.
pub fn amplitudes_from_rest(r: &ReducedParams, t: f64) -> (Complex64, Complex64) {
    let (v, _) = drive_response(r, t);
    (v[0], v[1])
}

/// `E_B(t) = eps_r^2 |(l+ e^{-i l- t} - l- e^{-i l+ t} - dl) / (Pi dl)|^2`
/// evaluated from a given eigenvalue pair.
pub fn energy_from_eigenvalues(eps_r: f64, lp: Complex64, lm: Complex64, t: f64) -> f64 {
    let dl = lp - lm;
    let pi = lp * lm;
    let num = lp * (-I * lm * t).exp() - lm * (-I * lp * t).exp() - dl;
    eps_r * eps_r * (num / (pi * dl)).norm_sqr()
}

/// General closed-form battery energy from the ground state (distinct
/// eigenvalues).
pub fn energy_general(r: &ReducedParams, t: f64) -> Result<f64, PropagatorError> {
    let s = eigensystem(r);
    if s.omega.norm() < EP_SWITCH {
        return Err(PropagatorError::DegenerateSpectrum(s.omega.norm()));
    }
    if s.pi_lambda.norm() <= PI_TOL {
        let (_, b) = amplitudes_from_rest(r, t);
        return Err(PropagatorError::SingularProduct {
            pi: s.pi_lambda.norm(),
            fallback: b.norm_sqr(),
        });
    }
    Ok(energy_from_eigenvalues(
        r.eps_r,
        s.lambda_plus,
        s.lambda_minus,
        t,
    ))
}

/// `int_0^t s exp(a s) ds`, with a power series when `|a t|` is small.
fn ramp_integral(a: Complex64, t: f64) -> Complex64 {
    let z = a * t;
    if z.norm() < 0.5 {
        // sum_k a^k t^(k+2) / (k! (k+2))
        let mut term = Complex64::new(t * t, 0.0);
        let mut sum = term / 2.0;
        for k in 1..30 {
            term *= z / k as f64;
            sum += term / (k as f64 + 2.0);
        }
        sum
    } else {
        let e = z.exp();
        t * e / a - (e - ONE) / (a * a)
    }
}

/// Battery amplitude from rest exactly at the exceptional point,
/// `b(t) = eps_r [ i e^{-i l0 t} / l0 (t - i / l0) - 1 / l0^2 ]`.
pub fn battery_amplitude_ep(r: &ReducedParams, t: f64) -> Result<Complex64, PropagatorError> {
    let diag = ep_conditions(r.gamma_a, r.gamma_b, r.delta_r, EP_TOL);
    if let Some(f) = diag.failure {
        return Err(PropagatorError::NotAtEp(f.explain()));
    }
    let lambda0 = Complex64::new(0.0, -0.5 * (r.gamma_a + r.gamma_b));
    let a = -I * lambda0;
    let b = if (a * t).norm() < 0.5 {
        r.eps_r * ramp_integral(a, t)
    } else {
        let e = (-I * lambda0 * t).exp();
        r.eps_r * (I * e / lambda0 * (t - I / lambda0) - ONE / (lambda0 * lambda0))
    };
    Ok(b)
}

pub fn energy_ep(r: &ReducedParams, t: f64) -> Result<f64, PropagatorError> {
    battery_amplitude_ep(r, t).map(|b| b.norm_sqr())
}

/// `K = delta_r^2 + gamma^2 - 1`
pub fn k_factor(gamma: f64, delta_r: f64) -> f64 {
    delta_r * delta_r + gamma * gamma - 1.0
}

/// Symmetric-damping (`alpha = 0`) battery energy from rest,
/// `(eps/K)^2 (1 - e^{-gamma t}[gamma S(t) + C(t)])^2`, with trigonometric
/// `S, C` for `|delta_r| > 1` and hyperbolic ones for `|delta_r| < 1`.
pub fn energy_symmetric(r: &ReducedParams, t: f64) -> Result<f64, PropagatorError> {
    let alpha = r.alpha();
    if alpha.abs() >= CLASSIFY_TOL {
        return Err(PropagatorError::AsymmetricParams(alpha));
    }
    let gamma = r.gamma_b;
    let d = r.delta_r;
    let k = k_factor(gamma, d);
    if k.abs() < K_TOL {
        let (_, b) = amplitudes_from_rest(r, t);
        return Ok(b.norm_sqr());
    }
    let damped = if d.abs() > 1.0 {
        let w = (d * d - 1.0).sqrt();
        let sin_over = t * sinc(Complex64::new(w * t, 0.0), SERIES_TOL).re;
        (-gamma * t).exp() * (gamma * sin_over + (w * t).cos())
    } else {
        let w = (1.0 - d * d).sqrt();
        let wt = w * t;
        if wt > 20.0 {
            let grow = ((w - gamma) * t).exp();
            let decay = (-(w + gamma) * t).exp();
            0.5 * (grow + decay) + gamma * 0.5 * (grow - decay) / w
        } else {
            let sinh_over = if wt < SERIES_TOL {
                t * (1.0 + wt * wt / 6.0 + wt.powi(4) / 120.0)
            } else {
                wt.sinh() / w
            };
            (-gamma * t).exp() * (gamma * sinh_over + wt.cosh())
        }
    };
    let bracket = 1.0 - damped;
    Ok(r.eps_r * r.eps_r * bracket * bracket / (k * k))
}

/// Large-time form of the broken-phase energy at `alpha = 0`:
/// `(eps/K)^2 ((gamma + |Omega|) / (2|Omega|))^2 e^{2(|Omega| - gamma) t}`.
///
/// Only meaningful for `t >> 1/|Omega|`; at `t = 0` it returns the prefactor.
pub fn energy_asymptotic_broken(r: &ReducedParams, t: f64) -> Result<f64, PropagatorError> {
    if r.alpha().abs() >= CLASSIFY_TOL || r.delta_r.abs() >= 1.0 {
        return Err(PropagatorError::NotBroken);
    }
    let gamma = r.gamma_b;
    let w = (1.0 - r.delta_r * r.delta_r).sqrt();
    if w <= gamma {
        return Err(PropagatorError::NotBroken);
    }
    let k = k_factor(gamma, r.delta_r);
    let pre = (gamma + w) / (2.0 * w);
    Ok(r.eps_r * r.eps_r / (k * k) * pre * pre * (2.0 * (w - gamma) * t).exp())
}

/// `db/dt = a - (gamma_b - i delta_r) b`
pub fn battery_rate(r: &ReducedParams, a: Complex64, b: Complex64) -> Complex64 {
    a - Complex64::new(r.gamma_b, -r.delta_r) * b
}

/// `P_B = dE_B/dt = 2 Re[conj(b) db/dt]`.
pub fn power_at(r: &ReducedParams, a: Complex64, b: Complex64) -> f64 {
    2.0 * (b.conj() * battery_rate(r, a, b)).re
}

/// Battery power from rest at time `t`.
pub fn power(r: &ReducedParams, t: f64) -> f64 {
    let (a, b) = amplitudes_from_rest(r, t);
    power_at(r, a, b)
}

/// One closed-form sample of the battery state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub energy: f64,
    pub power: f64,
}

pub fn energy_record(r: &ReducedParams, t: f64, a0: Complex64, b0: Complex64) -> EnergyRecord {
    let (a, b) = amplitudes(r, t, a0, b0);
    EnergyRecord {
        t,
        a,
        b,
        energy: b.norm_sqr(),
        power: power_at(r, a, b),
    }
}

/// Closed-form records on a time grid from rest; evaluated in parallel,
/// returned in grid order.
pub fn records_from_rest(r: &ReducedParams, times: &[f64]) -> Vec<EnergyRecord> {
    times
        .par_iter()
        .map(|&t| energy_record(r, t, ZERO, ZERO))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type M2 = [[Complex64; 2]; 2];

    fn mat_mul(a: &M2, b: &M2) -> M2 {
        let mut out = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    /// exp(-i H tau) by scaling and squaring of a 40-term Taylor series.
    fn expm_oracle(r: &ReducedParams, tau: f64) -> Propagator2 {
        let h = drift_matrix(r).entries;
        let norm = h.iter().flatten().map(|z| z.norm()).sum::<f64>() * tau;
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scale = tau / 2f64.powi(squarings);
        let a: M2 = [
            [-I * h[0][0] * scale, -I * h[0][1] * scale],
            [-I * h[1][0] * scale, -I * h[1][1] * scale],
        ];
        let mut sum: M2 = [[ONE, ZERO], [ZERO, ONE]];
        let mut term = sum;
        for k in 1..40 {
            term = mat_mul(&term, &a);
            for row in term.iter_mut() {
                for z in row.iter_mut() {
                    *z /= k as f64;
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            sum = mat_mul(&sum, &sum);
        }
        Propagator2 {
            m11: sum[0][0],
            m12: sum[0][1],
            m21: sum[1][0],
            m22: sum[1][1],
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn identity_at_zero() {
        for r in [
            ReducedParams::new(0.3, 0.7, 0.4, 1.0),
            ReducedParams::symmetric(0.5, 1.0, 1.0),
        ] {
            assert_eq!(
                propagator(&r, 0.0).max_abs_diff(&Propagator2::identity()),
                0.0
            );
        }
    }

    #[test]
    fn jordan_form_at_exceptional_point() {
        let r = ReducedParams::symmetric(0.5, 1.0, 1.0);
        let (m, path) = propagator_with_path(&r, 2.0);
        assert_eq!(path, PropagatorPath::Jordan);
        let expected = 2.0 * (-1f64).exp();
        assert!((m.m21 - Complex64::new(expected, 0.0)).norm() < 1e-15);
        assert!(m.max_abs_diff(&expm_oracle(&r, 2.0)) < 1e-13);
    }

    #[test]
    fn generic_matches_taylor_oracle() {
        let r = ReducedParams::new(0.3, 0.9, 0.6, 1.0);
        let (m, path) = propagator_with_path(&r, 1.0);
        assert_eq!(path, PropagatorPath::Sylvester);
        assert!(m.max_abs_diff(&expm_oracle(&r, 1.0)) < 1e-10);
    }

    #[test]
    fn series_band_matches_oracle() {
        // |Omega| ~ 1.4e-5, so |Omega t| < 1e-4 for t = 3.
        let r = ReducedParams::symmetric(0.4, 1.0 + 1e-10, 1.0);
        let (m, path) = propagator_with_path(&r, 3.0);
        assert_eq!(path, PropagatorPath::Series);
        assert!(m.max_abs_diff(&expm_oracle(&r, 3.0)) < 1e-13);
    }

    #[test]
    fn zero_drive_stays_at_rest() {
        let r = ReducedParams::new(0.2, 0.4, 0.3, 0.0);
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(amplitudes(&r, t, ZERO, ZERO), (ZERO, ZERO));
        }
    }

    #[test]
    fn initial_condition_at_zero_time() {
        let r = ReducedParams::new(0.2, 0.4, 0.3, 1.3);
        let (a0, b0) = (Complex64::new(0.3, -0.2), Complex64::new(-1.0, 0.5));
        assert_eq!(amplitudes(&r, 0.0, a0, b0), (a0, b0));
    }

    #[test]
    fn drive_paths_agree_near_the_switch() {
        // Pi small but above the resolvent threshold: both paths must agree.
        let gamma = (1.0f64 - 0.36).sqrt() + 1e-5;
        let r = ReducedParams::symmetric(gamma, 0.6, 1.0);
        let (res, path) = drive_response(&r, 4.0);
        assert_eq!(path, DriveIntegral::Resolvent);
        let quad = gauss_legendre_2(
            |u| {
                let m = propagator(&r, u);
                [m.m11, m.m21]
            },
            4.0,
            64,
        );
        assert!((res[1] - quad[1]).norm() < 1e-9 * quad[1].norm());
    }

    #[test]
    fn singular_product_uses_eigen_path() {
        // gamma^2 + delta^2 = 1: one eigenvalue is zero, Omega is not.
        let r = ReducedParams::symmetric(0.8, 0.6, 1.0);
        let (v, path) = drive_response(&r, 7.0);
        assert_eq!(path, DriveIntegral::Eigen);
        let quad = gauss_legendre_2(
            |u| {
                let m = propagator(&r, u);
                [m.m11, m.m21]
            },
            7.0,
            128,
        );
        assert!((v[0] - quad[0]).norm() < 1e-12 && (v[1] - quad[1]).norm() < 1e-12);
    }

    #[test]
    fn undamped_ep_uses_quadrature() {
        // gamma = 0, delta = 1: both eigenvalues vanish; b = eps t^2 / 2.
        let r = ReducedParams::symmetric(0.0, 1.0, 1.0);
        let (v, path) = drive_response(&r, 3.0);
        assert_eq!(path, DriveIntegral::Quadrature);
        assert!((v[1] - Complex64::new(4.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn general_energy_vanishes_at_zero_and_saturates() {
        let r = ReducedParams::new(1.8, 1.5, 0.4, 1.0);
        assert_eq!(energy_general(&r, 0.0).unwrap(), 0.0);
        let s = eigensystem(&r);
        let limit = 1.0 / s.pi_lambda.norm_sqr();
        assert!(rel(energy_general(&r, 80.0).unwrap(), limit) < 1e-12);

        let sym = ReducedParams::symmetric(1.5, 0.0, 1.0);
        let k = k_factor(1.5, 0.0);
        assert!(rel(energy_general(&sym, 60.0).unwrap(), 1.0 / (k * k)) < 1e-12);
    }

    #[test]
    fn general_energy_flags_degenerate_and_singular_cases() {
        let ep = ReducedParams::symmetric(0.5, 1.0, 1.0);
        assert!(matches!(
            energy_general(&ep, 1.0),
            Err(PropagatorError::DegenerateSpectrum(_))
        ));
        // gamma^2 + delta^2 = 1 makes an eigenvalue vanish.
        let d: f64 = 0.6;
        let r = ReducedParams::symmetric((1.0 - d * d).sqrt(), d, 1.0);
        match energy_general(&r, 3.0) {
            Err(PropagatorError::SingularProduct { fallback, .. }) => {
                // On the boundary b(t) = eps int_0^t e^{-g s} sinh(w s)/w ds with w = g.
                let g = r.gamma_b;
                let exact = (3.0 - (1.0 - (-2.0 * g * 3.0).exp()) / (2.0 * g)) / (2.0 * g);
                assert!(
                    rel(fallback.sqrt(), exact.abs()) < 1e-10,
                    "{} vs {}",
                    fallback.sqrt(),
                    exact
                );
            }
            other => panic!("expected SingularProduct, got {other:?}"),
        }
    }

    #[test]
    fn ep_energy_examples() {
        let r = ReducedParams::symmetric(0.5, 1.0, 1.0);
        assert_eq!(energy_ep(&r, 0.0).unwrap(), 0.0);
        // |1/lambda0^2|^2 with lambda0 = -0.5 i.
        assert!(rel(energy_ep(&r, 60.0).unwrap(), 16.0) < 1e-9);
        assert!(matches!(
            energy_ep(&ReducedParams::symmetric(0.5, 0.9, 1.0), 1.0),
            Err(PropagatorError::NotAtEp(_))
        ));
        // Undamped EP: b = eps t^2 / 2.
        let r0 = ReducedParams::symmetric(0.0, -1.0, 2.0);
        assert!(rel(energy_ep(&r0, 3.0).unwrap(), 81.0) < 1e-14);
    }

    #[test]
    fn ep_energy_matches_neighbouring_general_energy() {
        let r = ReducedParams::symmetric(0.5, 1.0, 1.0);
        for eps in [1e-6, -1e-6] {
            let near = r.with_delta(1.0 + eps);
            for k in 1..=100 {
                let t = 0.1 * k as f64;
                let e_ep = energy_ep(&r, t).unwrap();
                let e_near = energy_general(&near, t).unwrap();
                assert!(rel(e_near, e_ep) < 1e-4, "t={t}: {e_near} vs {e_ep}");
            }
        }
    }

    #[test]
    fn symmetric_energy_examples() {
        for d in [0.0, 0.5, 2.0] {
            assert_eq!(
                energy_symmetric(&ReducedParams::symmetric(0.5, d, 1.0), 0.0).unwrap(),
                0.0
            );
        }
        let r = ReducedParams::symmetric(1.5, 0.0, 1.0);
        assert!((energy_symmetric(&r, 50.0).unwrap() - 0.64).abs() < 1e-9);

        let br = ReducedParams::symmetric(0.5, 0.0, 1.0);
        let ts: Vec<f64> = (0..=100).map(|k| 10.0 + 0.1 * k as f64).collect();
        let es: Vec<f64> = ts
            .iter()
            .map(|&t| energy_symmetric(&br, t).unwrap())
            .collect();
        let slope = crate::numeric::log_slope_window(&ts, &es, 10.0, 20.0).unwrap();
        assert!((slope - 1.0).abs() < 0.01, "slope {slope}");

        assert!(matches!(
            energy_symmetric(&ReducedParams::new(0.6, 0.5, 0.0, 1.0), 1.0),
            Err(PropagatorError::AsymmetricParams(_))
        ));
    }

    #[test]
    fn asymptotic_broken_energy() {
        let r = ReducedParams::symmetric(0.5, 0.0, 1.0);
        // Exact E = (A - 1)^2 / K^2 with A ~ 0.75 e^{t/2}, so the asymptotic
        // form is off by ~2/A (1.8% at t = 10), not by O(e^{-2|Omega| t}).
        let exact = energy_symmetric(&r, 10.0).unwrap();
        let a = 0.75 * 5f64.exp();
        let err = rel(energy_asymptotic_broken(&r, 10.0).unwrap(), exact);
        assert!(
            (err - (2.0 * a - 1.0) / ((a - 1.0) * (a - 1.0))).abs() < 1e-4,
            "err {err}"
        );
        // Prefactor at t = 0: (1/K^2) ((g + w)/(2w))^2 with K = -0.75, w = 1.
        let pre = (1.0 / 0.5625) * 0.75f64.powi(2);
        assert!(rel(energy_asymptotic_broken(&r, 0.0).unwrap(), pre) < 1e-15);
        // Ratio tends to 1 monotonically beyond 5/|Omega|.
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let t = 5.0 + 0.5 * k as f64;
            let ratio = energy_asymptotic_broken(&r, t).unwrap() / energy_symmetric(&r, t).unwrap();
            let dev = (ratio - 1.0).abs();
            assert!(dev <= prev, "non-monotone at t={t}");
            prev = dev;
        }
        assert!(prev < 1e-4);
        assert_eq!(
            energy_asymptotic_broken(&ReducedParams::symmetric(1.5, 0.0, 1.0), 1.0),
            Err(PropagatorError::NotBroken)
        );
    }

    #[test]
    fn power_examples() {
        let r = ReducedParams::symmetric(0.5, 0.0, 1.0);
        assert_eq!(power(&r, 0.0), 0.0);
        let un = ReducedParams::symmetric(1.5, 0.0, 1.0);
        assert!(power(&un, 60.0).abs() < 1e-12);

        // Broken phase: P_B matches a finite difference of the symmetric
        // energy and grows with log-slope 2(|Omega| - gamma) = 1.
        let h = 1e-4;
        let mut logs = Vec::new();
        let mut ts = Vec::new();
        for k in 0..=20 {
            let t = 10.0 + 0.5 * k as f64;
            let fd = (energy_symmetric(&r, t + h).unwrap() - energy_symmetric(&r, t - h).unwrap())
                / (2.0 * h);
            let p = power(&r, t);
            assert!(rel(p, fd) < 1e-5, "t={t}: {p} vs {fd}");
            ts.push(t);
            logs.push(p.ln());
        }
        let slope = crate::numeric::ls_slope(&ts, &logs).unwrap();
        assert!((slope - 1.0).abs() < 0.01);
    }

    #[test]
    fn unbroken_energy_is_bounded_and_converges() {
        for (g, d) in [(1.5, 0.0), (0.5, 2.0), (1.2, 0.5)] {
            let r = ReducedParams::symmetric(g, d, 1.0);
            let k = k_factor(g, d);
            let limit = 1.0 / (k * k);
            let sup = (0..=5000)
                .map(|i| energy_symmetric(&r, 0.01 * i as f64).unwrap())
                .fold(0.0, f64::max);
            assert!(sup.is_finite() && sup < 10.0 * limit);
            assert!(rel(energy_symmetric(&r, 50.0).unwrap(), limit) < 1e-3);
        }
    }

    fn arb_any() -> impl Strategy<Value = ReducedParams> {
        (0.0..2.0f64, -0.5..2.0f64, -3.0..3.0f64, 0.1..2.0f64)
            .prop_map(|(gb, a, d, e)| ReducedParams::from_asymmetry(gb, a.max(-0.5 * gb), d, e))
    }

    proptest! {
        #[test]
        fn semigroup(r in arb_any(), t1 in 0.0..10.0f64, t2 in 0.0..10.0f64) {
            let lhs = propagator(&r, t1 + t2);
            let rhs = propagator(&r, t1).compose(&propagator(&r, t2));
            let scale = 1.0 + [lhs.m11, lhs.m12, lhs.m21, lhs.m22].iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9 * scale);
        }

        #[test]
        fn liouville_determinant(r in arb_any(), t in 0.0..10.0f64) {
            let m = propagator(&r, t);
            let s = eigensystem(&r);
            let expected = (-I * (s.lambda_plus + s.lambda_minus) * t).exp();
            let big = [m.m11, m.m12, m.m21, m.m22].iter().map(|z| z.norm()).fold(1.0, f64::max);
            prop_assert!((m.det() - expected).norm() < 1e-12 * big * big);
        }

        #[test]
        fn propagator_matches_taylor_oracle(r in arb_any(), t in 0.0..5.0f64) {
            let m = propagator(&r, t);
            let o = expm_oracle(&r, t);
            let scale = 1.0 + [o.m11, o.m12, o.m21, o.m22].iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(m.max_abs_diff(&o) < 1e-10 * scale);
        }

        #[test]
        fn eigenvalue_swap_invariance(r in arb_any(), t in 0.0..10.0f64) {
            let s = eigensystem(&r);
            prop_assume!(s.omega.norm() > EP_SWITCH && s.pi_lambda.norm() > PI_TOL);
            let e1 = energy_from_eigenvalues(r.eps_r, s.lambda_plus, s.lambda_minus, t);
            let e2 = energy_from_eigenvalues(r.eps_r, s.lambda_minus, s.lambda_plus, t);
            prop_assert!((e1 - e2).abs() <= 4.0 * f64::EPSILON * e1.abs());
        }

        #[test]
        fn regime_formulas_agree(gb in 0.0..2.0f64, d in -3.0..3.0f64, e in 0.1..2.0f64, t in 0.1..10.0f64) {
            let r = ReducedParams::symmetric(gb, d, e);
            let s = eigensystem(&r);
            prop_assume!(s.omega.norm() > 1e-3 && s.pi_lambda.norm() > 1e-3);
            let general = energy_general(&r, t).unwrap();
            let sym = energy_symmetric(&r, t).unwrap();
            let (_, b) = amplitudes_from_rest(&r, t);
            prop_assert!(rel(sym, general) < 1e-9, "sym {sym} general {general}");
            prop_assert!(rel(b.norm_sqr(), general) < 1e-9);
        }

        #[test]
        fn asymmetric_general_matches_amplitudes(r in arb_any(), t in 0.1..10.0f64) {
            let s = eigensystem(&r);
            prop_assume!(s.omega.norm() > 1e-3 && s.pi_lambda.norm() > 1e-3);
            let (_, b) = amplitudes_from_rest(&r, t);
            prop_assert!(rel(b.norm_sqr(), energy_general(&r, t).unwrap()) < 1e-9);
        }

        #[test]
        fn power_is_energy_derivative(r in arb_any(), t in 0.5..10.0f64) {
            let h = 1e-5;
            let e = |u: f64| amplitudes_from_rest(&r, u).1.norm_sqr();
            let fd = (e(t + h) - e(t - h)) / (2.0 * h);
            let p = power(&r, t);
            prop_assert!((p - fd).abs() <= 1e-4 * p.abs().max(1e-3 * e(t)).max(1e-8), "p {p} fd {fd}");
        }
    }
}
