//! Minimum-phase augmentation and cepstral (Kolmogorov) spectral factorization.

use num_complex::Complex64 as C64;

use crate::ambiguity::autocorr_from_measurements;
use crate::error::{Error, Result};
use crate::fourier::{fft, ifft};
use crate::forward::MeasurementSet;
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CepstralConfig {
    /// Dense grid size as a multiple of the signal length.
    pub grid_factor: usize,
    /// Reject spectra whose minimum falls below `tau * max`.
    pub tau: f64,
}

impl Default for CepstralConfig {
    fn default() -> Self {
        Self { grid_factor: 32, tau: 1e-10 }
    }
}

impl CepstralConfig {
    /// Power-of-two grid size, at least `grid_factor * N` and `4 (2N - 1)`.
    pub fn grid_size(&self, n: usize) -> usize {
        (self.grid_factor * n).max(4 * (2 * n - 1)).next_power_of_two()
    }
}

/// Prepend `delta` to `x`. With `|delta| > ||x||_1` the result is minimum
/// phase; `delta = None` uses `||x||_1`, the boundary case.
pub fn augment_min_phase(x: &Signal, delta: Option<C64>) -> Result<Signal> {
    if x.is_2d() {
        return Err(Error::InvalidInput("augmentation expects a 1D signal".into()));
    }
    let l1 = x.norm1();
    if l1 == 0.0 {
        return Err(Error::InvalidInput("cannot augment the zero signal".into()));
    }
    let delta = delta.unwrap_or(C64::new(l1, 0.0));
    if delta.norm() < l1 {
        return Err(Error::DeltaTooSmall { delta: delta.norm(), l1 });
    }
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(delta);
    v.extend_from_slice(x.values());
    Signal::new(v)
}

/// Recover a minimum-phase signal from classical magnitudes (`n_tilde = K = 2N - 1`).
///
/// Evaluates `|X(e^{jw})|^2` on a dense grid from the zero-padded
/// autocorrelation, folds the real cepstrum of `log |X|` onto non-negative
/// quefrencies and exponentiates. The largest entry of the result is real
/// positive.
pub fn kolmogorov_recover(y: &MeasurementSet, cfg: &CepstralConfig) -> Result<Signal> {
    let a = autocorr_from_measurements(y)?;
    let n = a.signal_len();
    let g = cfg.grid_size(n);

    let mut spec = vec![C64::new(0.0, 0.0); g];
    for lag in -(n as isize - 1)..=(n as isize - 1) {
        spec[lag.rem_euclid(g as isize) as usize] = a.lag(lag);
    }
    fft(&mut spec);
    let power: Vec<f64> = spec.iter().map(|v| v.re.abs()).collect();
    let max = power.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::InvalidInput("all-zero magnitudes".into()));
    }
    let min = power.iter().copied().fold(f64::INFINITY, f64::min);
    if min < cfg.tau * max {
        return Err(Error::IllConditioned { ratio: min / max });
    }

    let mut cep: Vec<C64> = power.iter().map(|p| C64::new(0.5 * p.ln(), 0.0)).collect();
    ifft(&mut cep);
    for (i, c) in cep.iter_mut().enumerate() {
        if i == 0 || i == g / 2 {
            continue;
        }
        if i < g / 2 {
            *c *= 2.0;
        } else {
            *c = C64::new(0.0, 0.0);
        }
    }
    fft(&mut cep);
    let mut h: Vec<C64> = cep.iter().map(|v| v.exp()).collect();
    ifft(&mut h);
    h.truncate(n);
    Ok(Signal::new(h)?.normalize_phase_largest())
}
