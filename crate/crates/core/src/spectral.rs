//! Drift matrix of the reduced model, its closed-form eigensystem, and the
//! classification of the dynamical phase.
//!
//! The drift matrix is
//!
//! ```text
//! H = [ delta - i gamma_a        i           ]
//!     [       i          -delta - i gamma_b  ]
//! ```
//!
//! with eigenvalues `lambda_pm = -i (alpha + gamma_b) +- Omega` where
//! `Omega = i sqrt(1 + (alpha + i delta)^2)` (principal root) and
//! `alpha = (gamma_a - gamma_b) / 2`. A mode with eigenvalue `lambda` evolves
//! as `exp(-i lambda t)`, so its growth rate is `Re[-i lambda] = Im[lambda]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ReducedParams;
use crate::numeric::{bisect, I, ONE};

/// Growth rates within this band of zero are labelled [`PhaseTag::Boundary`].
pub const CLASSIFY_TOL: f64 = 1e-9;
/// `|Omega|` below this is an exceptional point.
pub const EP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("battery damping gamma_b = {0} must be positive")]
    NonPositiveDamping(f64),
    #[error("growth rate keeps one sign on alpha in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
}

/// 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix {
    pub entries: [[Complex64; 2]; 2],
}

impl DriftMatrix {
    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.entries;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.entries;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }
}

pub fn drift_matrix(r: &ReducedParams) -> DriftMatrix {
    DriftMatrix {
        entries: [
            [Complex64::new(r.delta_r, -r.gamma_a), I],
            [I, Complex64::new(-r.delta_r, -r.gamma_b)],
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub omega: Complex64,
    pub alpha: f64,
    pub gamma_b: f64,
    pub delta_r: f64,
    /// Unnormalized `[-alpha - i(delta +- Omega), 1]`.
    pub eigvec_plus: [Complex64; 2],
    pub eigvec_minus: [Complex64; 2],
    /// `lambda_+ lambda_-`
    pub pi_lambda: Complex64,
    /// `lambda_+ - lambda_- = 2 Omega`
    pub delta_lambda: Complex64,
}

impl Spectrum {
    /// Shared part `-i (alpha + gamma_b)` of both eigenvalues.
    pub fn center(&self) -> Complex64 {
        Complex64::new(0.0, -(self.alpha + self.gamma_b))
    }

    /// True when the eigenvalues have coalesced within [`EP_TOL`].
    pub fn is_defective(&self) -> bool {
        self.omega.norm() < EP_TOL
    }

    /// `max(Re[-i lambda_+], Re[-i lambda_-])`.
    pub fn growth_rate(&self) -> f64 {
        self.lambda_plus.im.max(self.lambda_minus.im)
    }

    /// The same spectrum with the other branch of the square root, i.e.
    /// `Omega -> -Omega`.
    pub fn branch_swapped(&self) -> Spectrum {
        Spectrum {
            lambda_plus: self.lambda_minus,
            lambda_minus: self.lambda_plus,
            omega: -self.omega,
            eigvec_plus: self.eigvec_minus,
            eigvec_minus: self.eigvec_plus,
            delta_lambda: -self.delta_lambda,
            ..*self
        }
    }
}

pub fn omega(alpha: f64, delta_r: f64) -> Complex64 {
    let w = Complex64::new(alpha, delta_r);
    I * (ONE + w * w).sqrt()
}

pub fn eigensystem(r: &ReducedParams) -> Spectrum {
    let alpha = r.alpha();
    let om = omega(alpha, r.delta_r);
    let center = Complex64::new(0.0, -(alpha + r.gamma_b));
    let lambda_plus = center + om;
    let lambda_minus = center - om;
    let vec = |s: Complex64| [-alpha - I * (r.delta_r + s), ONE];
    Spectrum {
        lambda_plus,
        lambda_minus,
        omega: om,
        alpha,
        gamma_b: r.gamma_b,
        delta_r: r.delta_r,
        eigvec_plus: vec(om),
        eigvec_minus: vec(-om),
        pi_lambda: lambda_plus * lambda_minus,
        delta_lambda: 2.0 * om,
    }
}

/// Growth rate of the dominant mode at `(gamma_b, alpha, delta_r)`.
pub fn growth_rate(gamma_b: f64, alpha: f64, delta_r: f64) -> f64 {
    eigensystem(&ReducedParams::from_asymmetry(gamma_b, alpha, delta_r, 0.0)).growth_rate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseTag {
    Unbroken,
    Broken,
    ExceptionalPoint,
    Boundary,
}

impl PhaseTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseTag::Unbroken => "unbroken",
            PhaseTag::Broken => "broken",
            PhaseTag::ExceptionalPoint => "ep",
            PhaseTag::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegime {
    pub tag: PhaseTag,
    pub growth_rate: f64,
}

pub fn classify(s: &Spectrum, tol: f64, ep_tol: f64) -> PhaseRegime {
    let growth_rate = s.growth_rate();
    let tag = if s.omega.norm() < ep_tol {
        PhaseTag::ExceptionalPoint
    } else if growth_rate < -tol {
        PhaseTag::Unbroken
    } else if growth_rate > tol {
        PhaseTag::Broken
    } else {
        PhaseTag::Boundary
    };
    PhaseRegime { tag, growth_rate }
}

/// Which exceptional-point condition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpFailure {
    /// With `delta_r = 0` the real-part condition becomes
    /// `(gamma_a - gamma_b)^2 + 4 = 0`, which has no real solution.
    NoRealSolution,
    /// The imaginary-part condition needs `gamma_a = gamma_b`.
    DampingMismatch,
    /// With balanced damping the real-part condition needs `delta_r = +-1`.
    DetuningOffResonance,
}

impl EpFailure {
    pub fn explain(&self) -> &'static str {
        match self {
            EpFailure::NoRealSolution => {
                "delta_r = 0 leaves (gamma_a - gamma_b)^2 + 4 = 0, which cannot vanish for real damping"
            }
            EpFailure::DampingMismatch => "an exceptional point needs gamma_a = gamma_b",
            EpFailure::DetuningOffResonance => {
                "with gamma_a = gamma_b an exceptional point needs delta_r = +-1"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpDiagnostics {
    /// `(gamma_a - gamma_b)^2 - 4 (delta_r^2 - 1)`
    pub real_residual: f64,
    /// `-4 delta_r (gamma_b - gamma_a)`
    pub imag_residual: f64,
    pub failure: Option<EpFailure>,
}

impl EpDiagnostics {
    pub fn is_ep(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn ep_conditions(gamma_a: f64, gamma_b: f64, delta_r: f64, tol: f64) -> EpDiagnostics {
    let dg = gamma_a - gamma_b;
    let failure = if delta_r.abs() < tol {
        Some(EpFailure::NoRealSolution)
    } else if dg.abs() >= tol {
        Some(EpFailure::DampingMismatch)
    } else if (delta_r.abs() - 1.0).abs() >= tol {
        Some(EpFailure::DetuningOffResonance)
    } else {
        None
    };
    EpDiagnostics {
        real_residual: dg * dg - 4.0 * (delta_r * delta_r - 1.0),
        imag_residual: -4.0 * delta_r * (gamma_b - gamma_a),
        failure,
    }
}

/// Coefficients `[b3, b2, b1, b0]` of the monic real quartic whose roots are
/// the growth rates `s = -i lambda` and their complex conjugates.
///
/// With `s = -i lambda` the characteristic polynomial becomes
/// `s^2 + a1 s + a0` with real `a1 = 2 (alpha + gamma_b)` and complex
/// `a0 = 2 alpha (gamma_b - i delta) + gamma_b^2 + delta^2 - 1`; multiplying by
/// its conjugate polynomial gives real coefficients with the same root real
/// parts.
pub fn routh_hurwitz_quartic(r: &ReducedParams) -> [f64; 4] {
    let alpha = r.alpha();
    let (gb, d) = (r.gamma_b, r.delta_r);
    let a1 = 2.0 * (alpha + gb);
    let u = 2.0 * alpha * gb + gb * gb + d * d - 1.0;
    let v = -2.0 * alpha * d;
    [2.0 * a1, a1 * a1 + 2.0 * u, 2.0 * a1 * u, u * u + v * v]
}

/// Routh–Hurwitz test for strict stability (all growth rates negative).
pub fn routh_hurwitz_stable(r: &ReducedParams) -> bool {
    let [b3, b2, b1, b0] = routh_hurwitz_quartic(r);
    b3 > 0.0
        && b2 > 0.0
        && b1 > 0.0
        && b0 > 0.0
        && b3 * b2 - b1 > 0.0
        && b3 * b2 * b1 - b1 * b1 - b3 * b3 * b0 > 0.0
}

const BOUNDARY_SCAN_POINTS: usize = 4096;

/// Upper edge `alpha*` of the broken region at fixed `(gamma_b, delta_r)`:
/// the largest `alpha >= -gamma_b/2` where the growth rate changes sign.
///
/// The growth rate is bounded by `sqrt(1 + alpha^2) - alpha - gamma_b`, so it
/// is negative for `alpha > 1/(2 gamma_b)`; the search interval ends just past
/// that point. Returns `None` when no sign change is found on the scan.
pub fn boundary_alpha(gamma_b: f64, delta_r: f64) -> Result<Option<f64>, SpectralError> {
    if !(gamma_b > 0.0) {
        return Err(SpectralError::NonPositiveDamping(gamma_b));
    }
    let lo = -0.5 * gamma_b;
    let hi = 0.5 / gamma_b + 1.0;
    match boundary_alpha_in(gamma_b, delta_r, lo, hi) {
        Ok(a) => Ok(Some(a)),
        Err(SpectralError::NoBracket { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Largest sign change of the growth rate on `[lo, hi]`, refined by bisection.
pub fn boundary_alpha_in(
    gamma_b: f64,
    delta_r: f64,
    lo: f64,
    hi: f64,
) -> Result<f64, SpectralError> {
    let g = |a: f64| growth_rate(gamma_b, a, delta_r);
    let step = (hi - lo) / BOUNDARY_SCAN_POINTS as f64;
    let mut right = hi;
    let mut g_right = g(right);
    for k in (0..BOUNDARY_SCAN_POINTS).rev() {
        let left = lo + k as f64 * step;
        let g_left = g(left);
        if g_left == 0.0 {
            return Ok(left);
        }
        if g_left.signum() != g_right.signum() && g_right != 0.0 {
            return bisect(g, left, right, 1e-15).map_err(|_| SpectralError::NoBracket { lo, hi });
        }
        right = left;
        g_right = g_left;
    }
    Err(SpectralError::NoBracket { lo, hi })
}
