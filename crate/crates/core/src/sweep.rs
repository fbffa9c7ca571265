//! Parameter sweeps: phase diagrams, eigenvalue profiles, dynamics panels and
//! critical-time curves. Cells are evaluated in parallel; output order always
//! follows the axis order.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ReducedParams;
use crate::numeric::{bisect, log_slope_tail};
use crate::propagator::{energy_symmetric, k_factor, records_from_rest};
use crate::spectral::{
    boundary_alpha_in, classify, eigensystem, PhaseRegime, PhaseTag, SpectralError, CLASSIFY_TOL,
    EP_TOL,
};

/// Boundary points must satisfy `|growth| <` this.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Upper limit of the doubling search for the exact critical time.
pub const T_GUARD: f64 = 1e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep input: {0}")]
    InvalidInput(String),
    #[error("energy never reached E_max = {e_max} before t = {T_GUARD:e} at delta_r = {delta_r}")]
    NoThreshold { delta_r: f64, e_max: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// `n` evenly spaced points on `[lo, hi]`; a single point sits at `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|k| if k == n - 1 { hi } else { lo + k as f64 * step })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub gamma_b: f64,
    pub delta_r_axis: Vec<f64>,
    pub alpha_axis: Vec<f64>,
    /// `growth[i][j]` at `(alpha_axis[i], delta_r_axis[j])`.
    pub growth: Vec<Vec<f64>>,
    pub regime: Vec<Vec<PhaseTag>>,
    /// `(delta_r, alpha*)` pairs.
    pub boundary: Vec<(f64, f64)>,
    pub ep_points: Vec<(f64, f64)>,
}

impl PhaseGrid {
    pub fn count(&self, tag: PhaseTag) -> usize {
        self.regime.iter().flatten().filter(|&&t| t == tag).count()
    }

    /// Long format: `delta_r, alpha, growth, regime`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["delta_r", "alpha", "growth", "regime"])?;
        for (i, &a) in self.alpha_axis.iter().enumerate() {
            for (j, &d) in self.delta_r_axis.iter().enumerate() {
                out.write_record([
                    fmt(d),
                    fmt(a),
                    fmt(self.growth[i][j]),
                    self.regime[i][j].as_str().to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "phase_diagram",
            "gamma_b": self.gamma_b,
            "delta_r_range": [self.delta_r_axis.first(), self.delta_r_axis.last()],
            "alpha_range": [self.alpha_axis.first(), self.alpha_axis.last()],
            "resolution": [self.delta_r_axis.len(), self.alpha_axis.len()],
            "counts": {
                "unbroken": self.count(PhaseTag::Unbroken),
                "broken": self.count(PhaseTag::Broken),
                "ep": self.count(PhaseTag::ExceptionalPoint),
                "boundary": self.count(PhaseTag::Boundary),
            },
            "boundary": self.boundary,
            "ep_points": self.ep_points,
            "classify_tol": CLASSIFY_TOL,
            "ep_tol": EP_TOL,
        })
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_fmt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Growth rate and regime over `(delta_r, alpha)` at fixed `gamma_b`, with
/// the upper edge of the broken region traced per `delta_r` column.
pub fn phase_diagram(
    gamma_b: f64,
    delta_range: (f64, f64),
    alpha_range: (f64, f64),
    n_delta: usize,
    n_alpha: usize,
) -> Result<PhaseGrid, SweepError> {
    if !(gamma_b > 0.0) {
        return Err(SweepError::InvalidInput(format!(
            "gamma_b must be positive, got {gamma_b}"
        )));
    }
    if alpha_range.0 < -0.5 * gamma_b - 1e-12 || alpha_range.1 < alpha_range.0 {
        return Err(SweepError::InvalidInput(format!(
            "alpha range [{}, {}] must lie in [-gamma_b/2, inf)",
            alpha_range.0, alpha_range.1
        )));
    }
    if n_delta == 0 || n_alpha == 0 || delta_range.1 < delta_range.0 {
        return Err(SweepError::InvalidInput("empty grid".into()));
    }
    let deltas = linspace(delta_range.0, delta_range.1, n_delta);
    let alphas = linspace(alpha_range.0, alpha_range.1, n_alpha);

    let rows: Vec<(Vec<f64>, Vec<PhaseTag>)> = alphas
        .par_iter()
        .map(|&a| {
            deltas
                .iter()
                .map(|&d| {
                    let s = eigensystem(&ReducedParams::from_asymmetry(gamma_b, a, d, 0.0));
                    let reg = classify(&s, CLASSIFY_TOL, EP_TOL);
                    (reg.growth_rate, reg.tag)
                })
                .unzip()
        })
        .collect();
    let (growth, regime) = rows.into_iter().unzip();

    let boundary: Vec<(f64, f64)> = deltas
        .par_iter()
        .filter_map(
            |&d| match boundary_alpha_in(gamma_b, d, alpha_range.0, alpha_range.1) {
                Ok(a) => Some((d, a)),
                Err(_) => None,
            },
        )
        .collect();
    let boundary = boundary
        .into_iter()
        .filter(|&(d, a)| crate::spectral::growth_rate(gamma_b, a, d).abs() < BOUNDARY_TOL)
        .collect();

    let mut ep_points = Vec::new();
    if alpha_range.0 <= 0.0 && 0.0 <= alpha_range.1 {
        for d in [-1.0, 1.0] {
            if delta_range.0 <= d && d <= delta_range.1 {
                ep_points.push((d, 0.0));
            }
        }
    }

    Ok(PhaseGrid {
        gamma_b,
        delta_r_axis: deltas,
        alpha_axis: alphas,
        growth,
        regime,
        boundary,
        ep_points,
    })
}

/// Eigenvalues displaced by `+i gamma_b`, i.e. `-i alpha +- Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub delta_r: f64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
}

pub fn eigenvalue_profile(gamma_b: f64, alpha: f64, deltas: &[f64]) -> Vec<EigenRow> {
    let shift = Complex64::new(0.0, gamma_b);
    deltas
        .par_iter()
        .map(|&d| {
            let s = eigensystem(&ReducedParams::from_asymmetry(gamma_b, alpha, d, 0.0));
            EigenRow {
                delta_r: d,
                lambda_plus: s.lambda_plus + shift,
                lambda_minus: s.lambda_minus + shift,
            }
        })
        .collect()
}

/// `delta_r, re_lp, im_lp, re_lm, im_lm` (displaced eigenvalues).
pub fn write_eigen_csv<W: Write>(rows: &[EigenRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delta_r", "re_lp", "im_lp", "re_lm", "im_lm"])?;
    for r in rows {
        out.write_record([
            fmt(r.delta_r),
            fmt(r.lambda_plus.re),
            fmt(r.lambda_plus.im),
            fmt(r.lambda_minus.re),
            fmt(r.lambda_minus.im),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Closed-form energy and normalized power (`P_B / eps_r^2`, `eps_r = 1`)
/// from rest at one `(delta_r, alpha)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSeries {
    pub delta_r: f64,
    pub alpha: f64,
    pub regime: PhaseRegime,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub powers: Vec<f64>,
    /// `1 / |lambda_+ lambda_-|^2` for unbroken points.
    pub steady_state: Option<f64>,
}

impl DynamicsSeries {
    /// Log-slope of the energy over the last half of the window.
    pub fn tail_log_slope(&self) -> Option<f64> {
        log_slope_tail(&self.times, &self.energies)
    }
}

pub fn dynamics_panel(
    gamma_b: f64,
    points: &[(f64, f64)],
    t_end: f64,
    dt: f64,
) -> Result<Vec<DynamicsSeries>, SweepError> {
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(SweepError::InvalidInput(format!(
            "need t_end, dt > 0; got {t_end}, {dt}"
        )));
    }
    for &(_, a) in points {
        if a < -0.5 * gamma_b - 1e-12 {
            return Err(SweepError::InvalidInput(format!(
                "alpha = {a} is below -gamma_b/2 = {}",
                -0.5 * gamma_b
            )));
        }
    }
    let n = (t_end / dt).round() as usize;
    let times = linspace(0.0, t_end, n + 1);
    Ok(points
        .iter()
        .map(|&(d, a)| {
            let r = ReducedParams::from_asymmetry(gamma_b, a, d, 1.0);
            let s = eigensystem(&r);
            let regime = classify(&s, CLASSIFY_TOL, EP_TOL);
            let recs = records_from_rest(&r, &times);
            DynamicsSeries {
                delta_r: d,
                alpha: a,
                regime,
                times: times.clone(),
                energies: recs.iter().map(|x| x.energy).collect(),
                powers: recs.iter().map(|x| x.power).collect(),
                steady_state: (regime.tag == PhaseTag::Unbroken)
                    .then(|| 1.0 / s.pi_lambda.norm_sqr()),
            }
        })
        .collect())
}

/// Long format: `delta_r, alpha, regime, t, energy, power`.
pub fn write_dynamics_csv<W: Write>(series: &[DynamicsSeries], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delta_r", "alpha", "regime", "t", "energy", "power"])?;
    for s in series {
        for k in 0..s.times.len() {
            out.write_record([
                fmt(s.delta_r),
                fmt(s.alpha),
                s.regime.tag.as_str().to_string(),
                fmt(s.times[k]),
                fmt(s.energies[k]),
                fmt(s.powers[k]),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritTimeCurve {
    pub gamma_b: f64,
    /// Threshold in units of `eps_r^2`.
    pub e_max: f64,
    pub delta_r_axis: Vec<f64>,
    pub t_asymptotic: Vec<Option<f64>>,
    pub t_exact: Vec<Option<f64>>,
    /// `NaN` where `|delta_r| >= 1`.
    pub e_scale: Vec<f64>,
    pub stable_mask: Vec<bool>,
}

impl CritTimeCurve {
    /// `delta_r, t_asym, t_exact, e_scale, stable`; missing times are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["delta_r", "t_asym", "t_exact", "e_scale", "stable"])?;
        for k in 0..self.delta_r_axis.len() {
            out.write_record([
                fmt(self.delta_r_axis[k]),
                opt_fmt(self.t_asymptotic[k]),
                opt_fmt(self.t_exact[k]),
                fmt(self.e_scale[k]),
                self.stable_mask[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "tcrit",
            "gamma_b": self.gamma_b,
            "alpha": 0.0,
            "e_max": self.e_max,
            "n": self.delta_r_axis.len(),
            "delta_r_range": [self.delta_r_axis.first(), self.delta_r_axis.last()],
            "stable_edge": stable_edge(self.gamma_b),
            "t_guard": T_GUARD,
        })
    }
}

/// `|delta_r|` beyond which the symmetric model has no growing mode.
pub fn stable_edge(gamma_b: f64) -> f64 {
    if gamma_b >= 1.0 {
        0.0
    } else {
        (1.0 - gamma_b * gamma_b).sqrt()
    }
}

/// `E_scale = ((gamma + |Omega|)/|Omega|)^2 / (4 K^2)` in units of `eps_r^2`;
/// `NaN` when `|delta_r| >= 1`.
pub fn e_scale(gamma_b: f64, delta_r: f64) -> f64 {
    if delta_r.abs() >= 1.0 {
        return f64::NAN;
    }
    let w = (1.0 - delta_r * delta_r).sqrt();
    let k = k_factor(gamma_b, delta_r);
    ((gamma_b + w) / w).powi(2) / (4.0 * k * k)
}

/// `ln(E_max / E_scale) / (2(|Omega| - gamma))`, clamped at zero when
/// `E_scale >= E_max`. `None` outside the broken phase.
pub fn t_crit_asymptotic(gamma_b: f64, delta_r: f64, e_max: f64) -> Option<f64> {
    if delta_r.abs() >= stable_edge(gamma_b) {
        return None;
    }
    let w = (1.0 - delta_r * delta_r).sqrt();
    let scale = e_scale(gamma_b, delta_r);
    Some(((e_max / scale).ln() / (2.0 * (w - gamma_b))).max(0.0))
}

/// First time the exact symmetric energy (with `eps_r = 1`) reaches `e_max`.
pub fn t_crit_exact(gamma_b: f64, delta_r: f64, e_max: f64) -> Result<Option<f64>, SweepError> {
    if delta_r.abs() >= stable_edge(gamma_b) {
        return Ok(None);
    }
    let r = ReducedParams::symmetric(gamma_b, delta_r, 1.0);
    let energy = |t: f64| energy_symmetric(&r, t).unwrap_or(f64::NAN);
    let w = (1.0 - delta_r * delta_r).sqrt();
    let mut lo = 0.0;
    let mut hi = 1.0 / w;
    while !(energy(hi) >= e_max) {
        if hi > T_GUARD {
            return Err(SweepError::NoThreshold { delta_r, e_max });
        }
        lo = hi;
        hi *= 2.0;
    }
    let t = bisect(|t| energy(t) - e_max, lo, hi, 1e-12 * hi)
        .map_err(|_| SweepError::NoThreshold { delta_r, e_max })?;
    Ok(Some(t))
}

/// Critical-time curve at `alpha = 0`.
pub fn tcrit_curve(
    gamma_b: f64,
    e_max: f64,
    delta_range: (f64, f64),
    n: usize,
) -> Result<CritTimeCurve, SweepError> {
    if !(e_max > 0.0) {
        return Err(SweepError::InvalidInput(format!(
            "E_max must be positive, got {e_max}"
        )));
    }
    if !(gamma_b >= 0.0) {
        return Err(SweepError::InvalidInput(format!(
            "gamma_b must be >= 0, got {gamma_b}"
        )));
    }
    let deltas = linspace(delta_range.0, delta_range.1, n);
    let exact: Vec<Option<f64>> = deltas
        .par_iter()
        .map(|&d| t_crit_exact(gamma_b, d, e_max))
        .collect::<Result<_, _>>()?;
    Ok(CritTimeCurve {
        gamma_b,
        e_max,
        t_asymptotic: deltas
            .iter()
            .map(|&d| t_crit_asymptotic(gamma_b, d, e_max))
            .collect(),
        t_exact: exact,
        e_scale: deltas.iter().map(|&d| e_scale(gamma_b, d)).collect(),
        stable_mask: deltas
            .iter()
            .map(|&d| d.abs() >= stable_edge(gamma_b))
            .collect(),
        delta_r_axis: deltas,
    })
}
