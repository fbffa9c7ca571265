//! Fixed-step RK4 integration of the first-moment equations, used as an
//! independent check on the closed forms and to run piecewise-constant
//! quench protocols.
//!
//! Every model here is linear, `dy/dt = A y + f`. The requested `dt` is the
//! sampling interval; each interval is split into `2^m` RK4 substeps, and
//! `m` is raised until two successive levels agree (Richardson estimate
//! `|y_m - y_{m-1}| / 15`) to `REFINE_TOL` per unit time, relative to the
//! largest amplitude of the run. The relative measure keeps the chosen step
//! independent of the drive strength, so runs are exactly linear in it.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{reduce_with_diagnostics, PhysicalParams, ReducedParams};
use crate::numeric::{ls_slope, I, ZERO};
use crate::propagator::power_at;
use crate::spectral::{classify, drift_matrix, eigensystem, PhaseTag, CLASSIFY_TOL, EP_TOL};

pub const REFINE_TOL: f64 = 1e-8;
pub const MIN_STEP: f64 = 1e-12;
/// A substep never exceeds `STABILITY_FRACTION / max_row_sum(|A|)`.
const STABILITY_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step fell below {MIN_STEP:e} (dt = {dt:e}); the system is too stiff, reduce kappa_c or use the reduced model")]
    StepUnderflow { dt: f64 },
    #[error("invalid time span: {0}")]
    InvalidSpan(String),
    #[error("invalid quench schedule: {0}")]
    InvalidSchedule(String),
}

/// `dy/dt = a y + f` with constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSystem<const N: usize> {
    pub a: [[Complex64; N]; N],
    pub f: [Complex64; N],
}

impl<const N: usize> LinearSystem<N> {
    pub fn rhs(&self, y: &[Complex64; N]) -> [Complex64; N] {
        let mut out = self.f;
        for (i, row) in self.a.iter().enumerate() {
            for (aij, yj) in row.iter().zip(y) {
                out[i] += aij * yj;
            }
        }
        out
    }

    fn rate_scale(&self) -> f64 {
        self.a
            .iter()
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn rk4_step(&self, y: &[Complex64; N], h: f64) -> [Complex64; N] {
        let shift = |y: &[Complex64; N], k: &[Complex64; N], s: f64| {
            let mut out = *y;
            for (o, kk) in out.iter_mut().zip(k) {
                *o += kk * s;
            }
            out
        };
        let k1 = self.rhs(y);
        let k2 = self.rhs(&shift(y, &k1, 0.5 * h));
        let k3 = self.rhs(&shift(y, &k2, 0.5 * h));
        let k4 = self.rhs(&shift(y, &k3, h));
        let mut out = *y;
        for i in 0..N {
            out[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
        out
    }
}

/// Reduced drift `-i H_r y + (eps_r, 0)`.
pub fn reduced_system(r: &ReducedParams) -> LinearSystem<2> {
    let h = drift_matrix(r).entries;
    LinearSystem {
        a: [[-I * h[0][0], -I * h[0][1]], [-I * h[1][0], -I * h[1][1]]],
        f: [Complex64::new(r.eps_r, 0.0), ZERO],
    }
}

/// Three-mode first-moment equations in physical time:
///
/// ```text
/// da/dt = -i[delta_a - i(kappa_a + Gamma_a)] a - mu_ca Gamma c + eps
/// db/dt = -i[delta_b - i(kappa_b + Gamma_b)] b - mu_cb Gamma c
/// dc/dt = -i delta_c c - (kappa_c + Gamma_c^a + Gamma_c^b) c
///         - Gamma (conj(mu_ca) a + conj(mu_cb) b)
/// ```
pub fn full_system(p: &PhysicalParams) -> LinearSystem<3> {
    let diag = |delta: f64, damping: f64| -I * Complex64::new(delta, -damping);
    let g = p.gamma;
    LinearSystem {
        a: [
            [
                diag(p.delta_a, p.kappa_a + p.gamma_a()),
                ZERO,
                -p.mu_ca() * g,
            ],
            [
                ZERO,
                diag(p.delta_b, p.kappa_b + p.gamma_b()),
                -p.mu_cb() * g,
            ],
            [
                -p.mu_ca().conj() * g,
                -p.mu_cb().conj() * g,
                diag(p.delta_c, p.aux_damping()),
            ],
        ],
        f: [Complex64::new(p.drive_eps, 0.0), ZERO, ZERO],
    }
}

/// Mode amplitudes at one sample; `c` is present for full-model runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Option<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// Units of `1 / Gamma_eff`.
    Rescaled,
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub time_unit: TimeUnit,
    pub dt_sample: f64,
    pub dt_step: f64,
    pub refinements: u32,
    pub error_estimate: f64,
    /// `Gamma_eff` for converting between time units, when known.
    pub gamma_eff: Option<f64>,
    pub switch_times: Vec<f64>,
    /// `max post-switch E / max(E_switch, E_steady) - 1`, clamped at zero;
    /// set when the last quench segment is unbroken.
    pub overshoot: Option<f64>,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub amps: Vec<Amplitudes>,
    pub energies: Vec<f64>,
    pub powers: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn has_auxiliary(&self) -> bool {
        self.amps.first().is_some_and(|s| s.c.is_some())
    }

    /// Columns `t, re_a, im_a, re_b, im_b, [re_c, im_c,] energy, power`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let aux = self.has_auxiliary();
        let mut header = vec!["t", "re_a", "im_a", "re_b", "im_b"];
        if aux {
            header.extend(["re_c", "im_c"]);
        }
        header.extend(["energy", "power"]);
        out.write_record(&header)?;
        let fmt = |x: f64| format!("{x:.16e}");
        for (i, s) in self.amps.iter().enumerate() {
            let mut row = vec![
                fmt(self.times[i]),
                fmt(s.a.re),
                fmt(s.a.im),
                fmt(s.b.re),
                fmt(s.b.im),
            ];
            if let Some(c) = s.c {
                row.extend([fmt(c.re), fmt(c.im)]);
            }
            row.extend([fmt(self.energies[i]), fmt(self.powers[i])]);
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Least-squares slope of `ln E` for samples in `[from, to]`.
    pub fn log_slope(&self, from: f64, to: f64) -> Option<f64> {
        crate::numeric::log_slope_window(&self.times, &self.energies, from, to)
    }
}

/// One constant-coefficient stretch of a run, sampled every `dt`.
struct Piece<'a, const N: usize> {
    system: &'a LinearSystem<N>,
    duration: f64,
}

struct RawRun<const N: usize> {
    times: Vec<f64>,
    states: Vec<[Complex64; N]>,
    /// Index of the piece each sample's derivative should be taken from.
    piece_of: Vec<usize>,
    dt_step: f64,
    refinements: u32,
    error_estimate: f64,
}

fn sample_grid(duration: f64, dt: f64) -> Vec<f64> {
    let n = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    (1..=n).map(|k| (k as f64 * dt).min(duration)).collect()
}

fn sweep_pieces<const N: usize>(
    pieces: &[Piece<'_, N>],
    init: [Complex64; N],
    dt: f64,
    level: u32,
) -> Vec<[Complex64; N]> {
    let sub = 1u64 << level;
    let mut y = init;
    let mut out = vec![init];
    for piece in pieces {
        let mut prev = 0.0;
        for t in sample_grid(piece.duration, dt) {
            let h = (t - prev) / sub as f64;
            for _ in 0..sub {
                y = piece.system.rk4_step(&y, h);
            }
            out.push(y);
            prev = t;
        }
    }
    out
}

fn run<const N: usize>(
    pieces: &[Piece<'_, N>],
    init: [Complex64; N],
    dt: f64,
) -> Result<RawRun<N>, IntegratorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegratorError::InvalidSpan(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let total: f64 = pieces.iter().map(|p| p.duration).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(IntegratorError::InvalidSpan(format!(
            "duration must be positive, got {total}"
        )));
    }

    let mut times = vec![0.0];
    let mut piece_of = vec![0];
    let mut start = 0.0;
    for (k, piece) in pieces.iter().enumerate() {
        for t in sample_grid(piece.duration, dt) {
            times.push(start + t);
            piece_of.push(k);
        }
        start += piece.duration;
    }

    let scale = pieces
        .iter()
        .map(|p| p.system.rate_scale())
        .fold(0.0, f64::max);
    let mut level = 0u32;
    while scale * dt / (1u64 << level) as f64 > STABILITY_FRACTION {
        level += 1;
    }
    let tol = REFINE_TOL * total.max(1.0);
    let mut coarse = sweep_pieces(pieces, init, dt, level);
    loop {
        let step = dt / (1u64 << (level + 1)) as f64;
        if step < MIN_STEP {
            return Err(IntegratorError::StepUnderflow { dt: step });
        }
        let fine = sweep_pieces(pieces, init, dt, level + 1);
        let peak = fine
            .iter()
            .flat_map(|y| y.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let est = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| {
                c.iter()
                    .zip(f)
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max)
                    / 15.0
                    / peak
            })
            .fold(
                0.0,
                |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) },
            );
        level += 1;
        if est <= tol {
            return Ok(RawRun {
                times,
                states: fine,
                piece_of,
                dt_step: step,
                refinements: level,
                error_estimate: est,
            });
        }
        coarse = fine;
    }
}

fn check_span(t_end: f64) -> Result<(), IntegratorError> {
    if t_end > 0.0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(IntegratorError::InvalidSpan(format!(
            "t_end must be positive, got {t_end}"
        )))
    }
}

/// Full three-mode model in physical time.
pub fn integrate_full(
    p: &PhysicalParams,
    t_end: f64,
    dt: f64,
    init: [Complex64; 3],
) -> Result<Trajectory, IntegratorError> {
    check_span(t_end)?;
    let sys = full_system(p);
    let raw = run(
        &[Piece {
            system: &sys,
            duration: t_end,
        }],
        init,
        dt,
    )?;
    let mut powers = Vec::with_capacity(raw.states.len());
    let mut amps = Vec::with_capacity(raw.states.len());
    for y in &raw.states {
        let dy = sys.rhs(y);
        powers.push(2.0 * (y[1].conj() * dy[1]).re);
        amps.push(Amplitudes {
            a: y[0],
            b: y[1],
            c: Some(y[2]),
        });
    }
    let energies = raw.states.iter().map(|y| y[1].norm_sqr()).collect();
    Ok(Trajectory {
        times: raw.times,
        amps,
        energies,
        powers,
        meta: TrajectoryMeta {
            model: "full".into(),
            time_unit: TimeUnit::Physical,
            dt_sample: dt,
            dt_step: raw.dt_step,
            refinements: raw.refinements,
            error_estimate: raw.error_estimate,
            gamma_eff: reduce_with_diagnostics(p).ok().map(|(r, _)| r.gamma_eff),
            switch_times: Vec::new(),
            overshoot: None,
            params: serde_json::to_value(p).unwrap_or_default(),
        },
    })
}

/// Reduced two-mode model in rescaled time.
pub fn integrate_reduced(
    r: &ReducedParams,
    t_end: f64,
    dt: f64,
    init: [Complex64; 2],
) -> Result<Trajectory, IntegratorError> {
    check_span(t_end)?;
    let schedule = QuenchSchedule {
        segments: vec![QuenchSegment {
            duration: t_end,
            params: *r,
        }],
    };
    let mut traj = integrate_quench(&schedule, init, dt)?;
    traj.meta.model = "reduced".into();
    traj.meta.overshoot = None;
    traj.meta.params = serde_json::to_value(r).unwrap_or_default();
    Ok(traj)
}

/// Reduced model with exactly `substeps` RK4 steps per sample and no
/// refinement; runs sharing a step size compose exactly.
pub fn integrate_reduced_fixed(
    r: &ReducedParams,
    t_end: f64,
    dt: f64,
    substeps: u32,
    init: [Complex64; 2],
) -> Result<Vec<[Complex64; 2]>, IntegratorError> {
    check_span(t_end)?;
    if !(dt > 0.0 && substeps > 0) {
        return Err(IntegratorError::InvalidSpan(format!(
            "need dt > 0 and substeps > 0, got {dt} and {substeps}"
        )));
    }
    let sys = reduced_system(r);
    let h = dt / substeps as f64;
    if h < MIN_STEP {
        return Err(IntegratorError::StepUnderflow { dt: h });
    }
    let mut y = init;
    let mut out = vec![init];
    let mut prev = 0.0;
    for t in sample_grid(t_end, dt) {
        let h = (t - prev) / substeps as f64;
        for _ in 0..substeps {
            y = sys.rk4_step(&y, h);
        }
        out.push(y);
        prev = t;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSegment {
    pub duration: f64,
    pub params: ReducedParams,
}

/// Piecewise-constant reduced parameters, switched instantaneously with
/// continuous amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSchedule {
    pub segments: Vec<QuenchSegment>,
}

impl QuenchSchedule {
    /// Hold `before` for `t_switch`, then `after` for `hold`.
    pub fn single_switch(
        before: ReducedParams,
        t_switch: f64,
        after: ReducedParams,
        hold: f64,
    ) -> Self {
        Self {
            segments: vec![
                QuenchSegment {
                    duration: t_switch,
                    params: before,
                },
                QuenchSegment {
                    duration: hold,
                    params: after,
                },
            ],
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start times of every segment after the first.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.duration;
                Some(*acc)
            })
            .take(self.segments.len().saturating_sub(1))
            .collect()
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if self.segments.is_empty() {
            return Err(IntegratorError::InvalidSchedule("no segments".into()));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(IntegratorError::InvalidSchedule(format!(
                    "segment {k} has duration {}",
                    s.duration
                )));
            }
            if let Err(e) = s.params.validate() {
                return Err(IntegratorError::InvalidSchedule(format!(
                    "segment {k}: {e}"
                )));
            }
        }
        Ok(())
    }
}

pub fn integrate_quench(
    schedule: &QuenchSchedule,
    init: [Complex64; 2],
    dt: f64,
) -> Result<Trajectory, IntegratorError> {
    schedule.validate()?;
    let systems: Vec<LinearSystem<2>> = schedule
        .segments
        .iter()
        .map(|s| reduced_system(&s.params))
        .collect();
    let pieces: Vec<Piece<'_, 2>> = systems
        .iter()
        .zip(&schedule.segments)
        .map(|(system, s)| Piece {
            system,
            duration: s.duration,
        })
        .collect();
    let raw = run(&pieces, init, dt)?;

    let amps: Vec<Amplitudes> = raw
        .states
        .iter()
        .map(|y| Amplitudes {
            a: y[0],
            b: y[1],
            c: None,
        })
        .collect();
    let energies: Vec<f64> = raw.states.iter().map(|y| y[1].norm_sqr()).collect();
    // At a switch the sample belongs to the segment that ends there; the
    // reported power is the left derivative.
    let powers = raw
        .states
        .iter()
        .zip(&raw.piece_of)
        .map(|(y, &k)| power_at(&schedule.segments[k].params, y[0], y[1]))
        .collect();

    let switch_times = schedule.switch_times();
    let overshoot = match switch_times.last() {
        Some(&ts) => quench_overshoot(schedule, &raw.times, &energies, ts),
        None => None,
    };

    Ok(Trajectory {
        times: raw.times,
        amps,
        energies,
        powers,
        meta: TrajectoryMeta {
            model: "quench".into(),
            time_unit: TimeUnit::Rescaled,
            dt_sample: dt,
            dt_step: raw.dt_step,
            refinements: raw.refinements,
            error_estimate: raw.error_estimate,
            gamma_eff: schedule.segments.first().map(|s| s.params.gamma_eff),
            switch_times,
            overshoot,
            params: serde_json::to_value(schedule).unwrap_or_default(),
        },
    })
}

/// Steady-state battery energy of unbroken parameters, `|(-i H^{-1} C)_b|^2`.
pub fn steady_state_energy(r: &ReducedParams) -> f64 {
    let h = drift_matrix(r).entries;
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    // (H^{-1} C)_b = -h10 eps / det
    let b = -I * (-h[1][0] * r.eps_r / det);
    b.norm_sqr()
}

fn quench_overshoot(
    schedule: &QuenchSchedule,
    times: &[f64],
    energies: &[f64],
    ts: f64,
) -> Option<f64> {
    let last = schedule.segments.last()?.params;
    let regime = classify(&eigensystem(&last), CLASSIFY_TOL, EP_TOL);
    if regime.tag != PhaseTag::Unbroken {
        return None;
    }
    let k = times.iter().position(|&t| t >= ts - 1e-12)?;
    let bound = energies[k].max(steady_state_energy(&last));
    let peak = energies[k..].iter().copied().fold(0.0, f64::max);
    Some(if bound > 0.0 {
        (peak / bound - 1.0).max(0.0)
    } else {
        0.0
    })
}

/// Least-squares slope of `ln E` on `[t_switch, t_switch + window]`.
pub fn post_switch_log_slope(traj: &Trajectory, t_switch: f64, window: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&traj.energies)
        .filter(|(&t, &e)| t >= t_switch - 1e-12 && t <= t_switch + window + 1e-12 && e > 0.0)
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    ls_slope(&xs, &ys)
}
