//! Small numerical kernels shared by the analysis modules.

use num_complex::Complex64;
use thiserror::Error;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum BracketError {
    #[error("no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
}

/// Bisection on a sign-changing bracket. Returns the midpoint once the
/// bracket is narrower than `xtol` (or after 200 halvings).
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> Result<f64, BracketError> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(BracketError::NoBracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Slope of `ln E` over the last half of a time window, ignoring samples
/// with `E < 1e-12`.
pub fn log_slope_tail(times: &[f64], energies: &[f64]) -> Option<f64> {
    let (&t0, &t1) = (times.first()?, times.last()?);
    log_slope_window(times, energies, t0 + 0.5 * (t1 - t0), t1)
}

/// Slope of `ln E` over samples with `t in [from, to]` and `E >= 1e-12`.
pub fn log_slope_window(times: &[f64], energies: &[f64], from: f64, to: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(energies)
        .filter(|(&t, &e)| t >= from && t <= to && e >= 1e-12 && e.is_finite())
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    ls_slope(&xs, &ys)
}

/// `sin(z)/z`, with the series `1 - z^2/6 + z^4/120` for `|z| < series_tol`.
pub fn sinc(z: Complex64, series_tol: f64) -> Complex64 {
    if z.norm() < series_tol {
        let z2 = z * z;
        ONE - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Nodes and weights of 8-point Gauss–Legendre on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_361_96),
    (0.183_434_642_495_649_8, 0.362_683_783_378_361_96),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Composite 8-point Gauss–Legendre quadrature of a complex 2-vector
/// integrand over `[0, t]` with `panels` equal panels.
pub fn gauss_legendre_2<F>(f: F, t: f64, panels: usize) -> [Complex64; 2]
where
    F: Fn(f64) -> [Complex64; 2],
{
    let panels = panels.max(1);
    let h = t / panels as f64;
    let mut acc = [ZERO; 2];
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for &(x, w) in &GL8 {
            let v = f(mid + 0.5 * h * x);
            acc[0] += v[0] * (0.5 * h * w);
            acc[1] += v[1] * (0.5 * h * w);
        }
    }
    acc
}
