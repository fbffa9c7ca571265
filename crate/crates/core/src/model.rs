//! Physical three-mode parameters and their reduction to the two-mode
//! charger–battery model.
//!
//! The auxiliary mode `c` is strongly damped and is eliminated adiabatically.
//! What remains is expressed in units of the effective dissipative rate
//! `gamma_eff`: dimensionless damping `gamma_a`, `gamma_b`, detuning
//! `delta_r` and drive `eps_r`. Time is rescaled as `t -> gamma_eff * t`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance on `delta_a + delta_b = 0`.
pub const DETUNING_SYMMETRY_TOL: f64 = 1e-12;

/// Computed damping this far below zero is treated as rounding and clamped.
const DAMPING_ROUNDING_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coupling weight {0} is zero; the reduction needs all p_j nonzero")]
    ZeroCoupling(&'static str),
    #[error("reduced damping {name} = {value} is negative; parameter set is unphysical")]
    NegativeDamping { name: &'static str, value: f64 },
    #[error("detunings are not antisymmetric: delta_a = {delta_a}, delta_b = {delta_b}")]
    AsymmetricDetuning { delta_a: f64, delta_b: f64 },
    #[error("auxiliary-mode detuning must be exactly zero, got {0}")]
    AuxiliaryDetuning(f64),
    #[error("rate {name} = {value} must be non-negative and finite")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("auxiliary mode has zero total damping; it cannot be eliminated")]
    UndampedAuxiliary,
    #[error("shared-reservoir rate Gamma must be positive for a nonzero effective coupling")]
    ZeroSharedRate,
}

/// Full three-mode parameter set, in physical rate units (hbar = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub delta_a: f64,
    pub delta_b: f64,
    #[serde(default)]
    pub delta_c: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_c: f64,
    /// Shared-reservoir rate.
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    pub p_a: Complex64,
    pub p_b: Complex64,
    pub p_c_a: Complex64,
    pub p_c_b: Complex64,
    pub drive_eps: f64,
}

impl PhysicalParams {
    /// `Gamma_a = Gamma |p_a|^2`
    pub fn gamma_a(&self) -> f64 {
        self.gamma * self.p_a.norm_sqr()
    }

    pub fn gamma_b(&self) -> f64 {
        self.gamma * self.p_b.norm_sqr()
    }

    /// `Gamma_c^a = Gamma |p_c^a|^2`
    pub fn gamma_c_a(&self) -> f64 {
        self.gamma * self.p_c_a.norm_sqr()
    }

    pub fn gamma_c_b(&self) -> f64 {
        self.gamma * self.p_c_b.norm_sqr()
    }

    /// `mu_ca = p_c^a conj(p_a)`
    pub fn mu_ca(&self) -> Complex64 {
        self.p_c_a * self.p_a.conj()
    }

    pub fn mu_cb(&self) -> Complex64 {
        self.p_c_b * self.p_b.conj()
    }

    /// Total damping of the auxiliary mode, `kappa_c + Gamma_c^a + Gamma_c^b`.
    pub fn aux_damping(&self) -> f64 {
        self.kappa_c + self.gamma_c_a() + self.gamma_c_b()
    }

    /// Bare effective rate `Gamma^2 / (kappa_c + Gamma_c^a + Gamma_c^b)`,
    /// before the `|mu|` normalization.
    pub fn gamma_eff_bare(&self) -> f64 {
        self.gamma * self.gamma / self.aux_damping()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let rates = [
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_c", self.kappa_c),
            ("Gamma", self.gamma),
            ("drive_eps", self.drive_eps),
        ];
        for (name, value) in rates {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        for (name, value) in [
            ("delta_a", self.delta_a),
            ("delta_b", self.delta_b),
            ("delta_c", self.delta_c),
        ] {
            if !value.is_finite() {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        Ok(())
    }
}

/// Dimensionless two-mode parameters after adiabatic elimination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub delta_r: f64,
    pub eps_r: f64,
    /// Rate used for the time rescaling; 1 when working purely dimensionless.
    #[serde(default = "unit_rate")]
    pub gamma_eff: f64,
}

fn unit_rate() -> f64 {
    1.0
}

impl ReducedParams {
    pub fn new(gamma_a: f64, gamma_b: f64, delta_r: f64, eps_r: f64) -> Self {
        Self {
            gamma_a,
            gamma_b,
            delta_r,
            eps_r,
            gamma_eff: 1.0,
        }
    }

    /// Parameters in the `(gamma_b, alpha)` coordinates used by the phase
    /// diagrams: `gamma_a = gamma_b + 2 alpha`.
    pub fn from_asymmetry(gamma_b: f64, alpha: f64, delta_r: f64, eps_r: f64) -> Self {
        Self::new(gamma_b + 2.0 * alpha, gamma_b, delta_r, eps_r)
    }

    /// Symmetric damping `gamma_a = gamma_b = gamma`.
    pub fn symmetric(gamma: f64, delta_r: f64, eps_r: f64) -> Self {
        Self::new(gamma, gamma, delta_r, eps_r)
    }

    /// Asymmetry `(gamma_a - gamma_b) / 2`.
    pub fn alpha(&self) -> f64 {
        0.5 * (self.gamma_a - self.gamma_b)
    }

    /// Common damping when symmetric; the battery damping otherwise.
    pub fn gamma(&self) -> f64 {
        self.gamma_b
    }

    pub fn with_delta(self, delta_r: f64) -> Self {
        Self { delta_r, ..self }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b)] {
            if !value.is_finite() {
                return Err(ModelError::InvalidRate { name, value });
            }
            if value < 0.0 {
                return Err(ModelError::NegativeDamping { name, value });
            }
        }
        if !self.delta_r.is_finite() {
            return Err(ModelError::InvalidRate {
                name: "delta_r",
                value: self.delta_r,
            });
        }
        if !(self.eps_r.is_finite() && self.eps_r >= 0.0) {
            return Err(ModelError::InvalidRate {
                name: "eps_r",
                value: self.eps_r,
            });
        }
        if !(self.gamma_eff.is_finite() && self.gamma_eff > 0.0) {
            return Err(ModelError::InvalidRate {
                name: "gamma_eff",
                value: self.gamma_eff,
            });
        }
        Ok(())
    }
}

/// Bookkeeping from [`reduce`] that keeps the full and reduced models
/// numerically comparable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionDiagnostics {
    /// `Gamma^2 / (kappa_c + Gamma_c^a + Gamma_c^b)`.
    pub gamma_eff_bare: f64,
    /// `|mu_ca| |mu_cb|`, absorbed into the reported `gamma_eff`.
    pub mu_factor: f64,
    /// Phase `theta` with `b_full = exp(i theta) b_reduced`; zero for real
    /// couplings.
    pub coupling_phase: f64,
    pub separation_ratio: SeparationRatio,
}

/// Adiabatically eliminate the auxiliary mode.
///
/// The reduced cross coupling is `Gamma_eff mu_ca conj(mu_cb)`; its modulus is
/// absorbed into the rate so the reduced drift matrix has unit off-diagonal
/// coupling, and its phase is removed by a gauge rotation of `b`.
pub fn reduce(p: &PhysicalParams) -> Result<ReducedParams, ModelError> {
    reduce_with_diagnostics(p).map(|(r, _)| r)
}

pub fn reduce_with_diagnostics(
    p: &PhysicalParams,
) -> Result<(ReducedParams, ReductionDiagnostics), ModelError> {
    p.validate()?;
    for (name, w) in [
        ("p_a", p.p_a),
        ("p_b", p.p_b),
        ("p_c_a", p.p_c_a),
        ("p_c_b", p.p_c_b),
    ] {
        if w == Complex64::new(0.0, 0.0) {
            return Err(ModelError::ZeroCoupling(name));
        }
    }
    if p.delta_c != 0.0 {
        return Err(ModelError::AuxiliaryDetuning(p.delta_c));
    }
    let scale = p.delta_a.abs().max(p.delta_b.abs());
    if (p.delta_a + p.delta_b).abs() > DETUNING_SYMMETRY_TOL * scale {
        return Err(ModelError::AsymmetricDetuning {
            delta_a: p.delta_a,
            delta_b: p.delta_b,
        });
    }
    if p.gamma == 0.0 {
        return Err(ModelError::ZeroSharedRate);
    }
    let aux = p.aux_damping();
    if aux <= 0.0 {
        return Err(ModelError::UndampedAuxiliary);
    }

    let gamma_eff_bare = p.gamma * p.gamma / aux;
    let (mu_a, mu_b) = (p.mu_ca(), p.mu_cb());
    let mu_factor = mu_a.norm() * mu_b.norm();
    let gamma_eff = gamma_eff_bare * mu_factor;

    let checked = |name: &'static str, g: f64| {
        if g < -DAMPING_ROUNDING_TOL {
            Err(ModelError::NegativeDamping { name, value: g })
        } else {
            Ok(g.max(0.0))
        }
    };
    let gamma_a = checked(
        "gamma_a",
        reduced_damping(
            p.kappa_a,
            p.gamma_a(),
            mu_a.norm_sqr(),
            gamma_eff_bare,
            gamma_eff,
        ),
    )?;
    let gamma_b = checked(
        "gamma_b",
        reduced_damping(
            p.kappa_b,
            p.gamma_b(),
            mu_b.norm_sqr(),
            gamma_eff_bare,
            gamma_eff,
        ),
    )?;

    let reduced = ReducedParams {
        gamma_a,
        gamma_b,
        delta_r: p.delta_a / gamma_eff,
        eps_r: p.drive_eps / gamma_eff,
        gamma_eff,
    };
    let diagnostics = ReductionDiagnostics {
        gamma_eff_bare,
        mu_factor,
        coupling_phase: -(mu_a * mu_b.conj()).arg(),
        separation_ratio: separation_ratio(p),
    };
    Ok((reduced, diagnostics))
}

/// `(kappa_j + Gamma_j - |mu_cj|^2 Gamma_eff_bare) / Gamma_eff`.
pub fn reduced_damping(
    kappa: f64,
    shared: f64,
    mu_abs_sq: f64,
    gamma_eff_bare: f64,
    gamma_eff: f64,
) -> f64 {
    (kappa + shared - mu_abs_sq * gamma_eff_bare) / gamma_eff
}

/// Time-scale separation between the auxiliary mode and the slow modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeparationRatio {
    Finite(f64),
    /// The slow-mode scale is zero; the ratio is unbounded.
    Unbounded,
}

impl SeparationRatio {
    pub fn value(&self) -> f64 {
        match *self {
            SeparationRatio::Finite(v) => v,
            SeparationRatio::Unbounded => f64::INFINITY,
        }
    }
}

/// `(kappa_c + Gamma_c^a + Gamma_c^b) / max(kappa_a + Gamma_a, kappa_b + Gamma_b, |delta_a|, |delta_b|)`.
pub fn separation_ratio(p: &PhysicalParams) -> SeparationRatio {
    let slow = (p.kappa_a + p.gamma_a())
        .max(p.kappa_b + p.gamma_b())
        .max(p.delta_a.abs())
        .max(p.delta_b.abs());
    if slow == 0.0 {
        SeparationRatio::Unbounded
    } else {
        SeparationRatio::Finite(p.aux_damping() / slow)
    }
}

/// Recipe for a one-parameter family of physical parameter sets that share a
/// fixed effective rate and reduced model while the auxiliary mode gets
/// progressively faster.
///
/// All couplings are real with `|mu_ca| = |mu_cb| = 1`. `share_a` and
/// `share_b` are the fractions of the auxiliary damping carried by the two
/// shared reservoirs (`share_a + share_b <= 1`); the remainder is `kappa_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatedFamily {
    pub gamma_eff: f64,
    pub delta: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub share_a: f64,
    pub share_b: f64,
    pub drive_eps: f64,
}

impl Default for SeparatedFamily {
    fn default() -> Self {
        Self {
            gamma_eff: 1.0,
            delta: 0.5,
            kappa_a: 0.1,
            kappa_b: 0.1,
            share_a: 0.4,
            share_b: 0.4,
            drive_eps: 1.0,
        }
    }
}

impl SeparatedFamily {
    /// Member of the family whose [`separation_ratio`] equals `ratio`.
    pub fn member(&self, ratio: f64) -> PhysicalParams {
        // With |mu_cj| = 1: Gamma_j Gamma_c^j = Gamma^2 = Gamma_eff * aux, so
        // Gamma_j = Gamma_eff / share_j independently of the auxiliary damping.
        let shared_a = self.gamma_eff / self.share_a;
        let shared_b = self.gamma_eff / self.share_b;
        let slow = (self.kappa_a + shared_a)
            .max(self.kappa_b + shared_b)
            .max(self.delta.abs());
        let aux = ratio * slow;
        let gamma = (self.gamma_eff * aux).sqrt();
        let p_a = (shared_a / gamma).sqrt();
        let p_b = (shared_b / gamma).sqrt();
        PhysicalParams {
            delta_a: self.delta,
            delta_b: -self.delta,
            delta_c: 0.0,
            kappa_a: self.kappa_a,
            kappa_b: self.kappa_b,
            kappa_c: aux * (1.0 - self.share_a - self.share_b),
            gamma,
            p_a: Complex64::new(p_a, 0.0),
            p_b: Complex64::new(p_b, 0.0),
            p_c_a: Complex64::new(1.0 / p_a, 0.0),
            p_c_b: Complex64::new(1.0 / p_b, 0.0),
            drive_eps: self.drive_eps,
        }
    }
}
