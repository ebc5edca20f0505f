//! Alternating projections: error reduction / Gerchberg-Saxton, Fienup's
//! hybrid input-output, and Griffin-Lim for STFT magnitudes.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{dft2, dft2_adjoint, fft, ifft};
use crate::forward::{MeasurementSet, Model};
use crate::signal::Signal;

/// Phase of `z` with `sign(0) = 0`.
pub fn sign(z: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        C64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemporalConstraint {
    /// Known `|x[n]|` (Gerchberg-Saxton).
    KnownMagnitudes(Vec<f64>),
    Support(Vec<usize>),
    SupportNonnegative(Vec<usize>),
    KnownEntries { indices: Vec<usize>, values: Vec<C64> },
}

impl TemporalConstraint {
    fn validate(&self, n: usize) -> Result<()> {
        let bad_index = |idx: &[usize]| idx.iter().any(|&i| i >= n);
        match self {
            TemporalConstraint::KnownMagnitudes(m) => {
                if m.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: m.len() });
                }
                if m.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidInput("known magnitudes must be finite and nonnegative".into()));
                }
            }
            TemporalConstraint::Support(s) | TemporalConstraint::SupportNonnegative(s) => {
                if s.is_empty() || bad_index(s) {
                    return Err(Error::InvalidInput("support must be a non-empty subset of 0..N".into()));
                }
            }
            TemporalConstraint::KnownEntries { indices, values } => {
                if indices.len() != values.len() {
                    return Err(Error::DimensionMismatch { expected: indices.len(), got: values.len() });
                }
                if bad_index(indices) {
                    return Err(Error::InvalidInput("known entry index out of range".into()));
                }
            }
        }
        Ok(())
    }

    /// Project `z` (indexed on the signal grid) onto the constraint set.
    fn project(&self, z: &mut [C64]) {
        match self {
            TemporalConstraint::KnownMagnitudes(m) => {
                for (v, &mag) in z.iter_mut().zip(m) {
                    *v = sign(*v) * mag;
                }
            }
            TemporalConstraint::Support(s) => {
                let keep = mask(s, z.len());
                for (v, k) in z.iter_mut().zip(keep) {
                    if !k {
                        *v = C64::new(0.0, 0.0);
                    }
                }
            }
            TemporalConstraint::SupportNonnegative(s) => {
                let keep = mask(s, z.len());
                for (v, k) in z.iter_mut().zip(keep) {
                    *v = if k { C64::new(v.re.max(0.0), 0.0) } else { C64::new(0.0, 0.0) };
                }
            }
            TemporalConstraint::KnownEntries { indices, values } => {
                for (&i, &val) in indices.iter().zip(values) {
                    z[i] = val;
                }
            }
        }
    }
}

fn mask(support: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in support {
        m[i] = true;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    Tolerance,
    Stalled,
    MaxIterations,
    /// Gradient norm below tolerance (gradient methods only).
    SmallGradient,
}

/// Per-iteration spectral error trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterReport {
    /// `E_l` for `l = 1..=iterations`, measured on the iterate entering step `l`.
    pub errors: Vec<f64>,
    pub iterations: usize,
    pub halt: HaltReason,
    /// Error of the returned estimate.
    pub final_error: f64,
}

impl IterReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,error\n");
        for (i, e) in self.errors.iter().enumerate() {
            let _ = writeln!(s, "{},{:.16e}", i + 1, e);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltProjOptions {
    pub max_iter: usize,
    /// Halt once `E_l` drops below this.
    pub tol: f64,
    /// Halt once `||x_l - x_{l-1}|| <= rel_change_tol * ||x_l||`.
    pub rel_change_tol: f64,
}

impl Default for AltProjOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-10, rel_change_tol: 1e-12 }
    }
}

/// Oversampled grid on which the Fourier transform is unitary up to scale.
struct Domain {
    shape: (usize, usize),
    padded: (usize, usize),
    magnitudes: Vec<f64>,
}

impl Domain {
    fn new(y: &MeasurementSet) -> Result<Self> {
        let (shape, padded) = match *y.model() {
            Model::Classical { n, n_tilde, k } => {
                if k != n_tilde || n_tilde < n {
                    return Err(Error::ModelMismatch("alternating projections need K = n_tilde >= N".into()));
                }
                ((1, n), (1, n_tilde))
            }
            Model::TwoD { n1, n2, nt1, nt2, k1, k2 } => {
                if k1 != nt1 || k2 != nt2 || nt1 < n1 || nt2 < n2 {
                    return Err(Error::ModelMismatch("alternating projections need K = n_tilde >= N per axis".into()));
                }
                ((n1, n2), (nt1, nt2))
            }
            ref m => {
                return Err(Error::ModelMismatch(format!("expected classical or 2D data, got {}", m.kind_name())))
            }
        };
        let magnitudes = y.y().iter().map(|v| v.max(0.0).sqrt()).collect();
        Ok(Self { shape, padded, magnitudes })
    }

    fn signal_len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    fn check_signal(&self, x0: &Signal) -> Result<()> {
        let want_2d = self.shape.0 > 1 || self.padded.0 > 1;
        if want_2d && x0.shape() != Some(self.shape) {
            return Err(Error::ModelMismatch("initial grid shape does not match the 2D model".into()));
        }
        if !want_2d && x0.is_2d() {
            return Err(Error::ModelMismatch("2D initial point for a 1D model".into()));
        }
        if x0.len() != self.signal_len() {
            return Err(Error::DimensionMismatch { expected: self.signal_len(), got: x0.len() });
        }
        Ok(())
    }

    fn padded_index(&self, flat: usize) -> usize {
        let (r, c) = (flat / self.shape.1, flat % self.shape.1);
        r * self.padded.1 + c
    }

    fn embed(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.padded.0 * self.padded.1];
        for (i, v) in x.iter().enumerate() {
            out[self.padded_index(i)] = *v;
        }
        out
    }

    fn extract(&self, p: &[C64]) -> Vec<C64> {
        (0..self.signal_len()).map(|i| p[self.padded_index(i)]).collect()
    }

    fn forward(&self, p: &[C64]) -> Vec<C64> {
        if self.padded.0 == 1 {
            let mut b = p.to_vec();
            fft(&mut b);
            b
        } else {
            dft2(p, self.padded, self.padded, self.padded)
        }
    }

    fn inverse(&self, v: &[C64]) -> Vec<C64> {
        if self.padded.0 == 1 {
            let mut b = v.to_vec();
            ifft(&mut b);
            b
        } else {
            let scale = 1.0 / (self.padded.0 * self.padded.1) as f64;
            dft2_adjoint(v, self.padded, self.padded, self.padded).into_iter().map(|c| c * scale).collect()
        }
    }

    /// Returns `(E, z)`: spectral error of `p` and the magnitude-corrected
    /// back-projection.
    fn fourier_step(&self, p: &[C64]) -> (f64, Vec<C64>) {
        let spec = self.forward(p);
        let mut err = 0.0;
        let corrected: Vec<C64> = spec
            .iter()
            .zip(&self.magnitudes)
            .map(|(s, &m)| {
                let d = m - s.norm();
                err += d * d;
                sign(*s) * m
            })
            .collect();
        (err, self.inverse(&corrected))
    }

    fn spectral_error(&self, p: &[C64]) -> f64 {
        self.forward(p).iter().zip(&self.magnitudes).map(|(s, &m)| (m - s.norm()).powi(2)).sum()
    }
}

fn rel_change(a: &[C64], b: &[C64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / norm).sqrt()
    }
}

/// Error reduction (Algorithm 1) with a pluggable temporal constraint.
///
/// The iterate lives on the oversampled grid; entries outside the signal
/// grid are always zeroed before the constraint is applied. `x0` is projected
/// onto the constraint before the first step.
pub fn error_reduction(
    y: &MeasurementSet,
    constraint: &TemporalConstraint,
    x0: &Signal,
    opts: &AltProjOptions,
) -> Result<(Signal, IterReport)> {
    let dom = Domain::new(y)?;
    dom.check_signal(x0)?;
    constraint.validate(dom.signal_len())?;

    // start from a feasible point so every E_l is measured on the constraint set
    let mut x = x0.values().to_vec();
    constraint.project(&mut x);
    let mut errors = Vec::new();
    let mut halt = HaltReason::MaxIterations;
    for _ in 0..opts.max_iter {
        let (err, z) = dom.fourier_step(&dom.embed(&x));
        errors.push(err);
        if err < opts.tol {
            halt = HaltReason::Tolerance;
            break;
        }
        let mut next = dom.extract(&z);
        constraint.project(&mut next);
        let change = rel_change(&next, &x);
        x = next;
        if change <= opts.rel_change_tol {
            halt = HaltReason::Stalled;
            break;
        }
    }
    let final_error = dom.spectral_error(&dom.embed(&x));
    let iterations = errors.len();
    Ok((x0.with_values(x), IterReport { errors, iterations, halt, final_error }))
}

/// Fienup's hybrid input-output.
///
/// Off the violation set the iterate takes `z`; on it, `x_prev - beta * z`.
/// Violations are samples outside `support` (including the oversampling
/// padding) and, with `nonnegative`, samples with negative real part. The
/// returned estimate is the constraint projection of the last iterate.
pub fn hio(
    y: &MeasurementSet,
    support: &[usize],
    nonnegative: bool,
    beta: f64,
    x0: &Signal,
    opts: &AltProjOptions,
) -> Result<(Signal, IterReport)> {
    if !(beta >= 0.0 && beta <= 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in [0, 1], got {beta}")));
    }
    let dom = Domain::new(y)?;
    dom.check_signal(x0)?;
    let constraint = if nonnegative {
        TemporalConstraint::SupportNonnegative(support.to_vec())
    } else {
        TemporalConstraint::Support(support.to_vec())
    };
    constraint.validate(dom.signal_len())?;

    let mut inside = vec![false; dom.padded.0 * dom.padded.1];
    for &i in support {
        inside[dom.padded_index(i)] = true;
    }

    let mut p = dom.embed(x0.values());
    let mut errors = Vec::new();
    let mut halt = HaltReason::MaxIterations;
    for _ in 0..opts.max_iter {
        let (err, z) = dom.fourier_step(&p);
        errors.push(err);
        if err < opts.tol {
            halt = HaltReason::Tolerance;
            break;
        }
        let next: Vec<C64> = p
            .iter()
            .zip(&z)
            .zip(&inside)
            .map(|((prev, zi), &ins)| {
                let violates = !ins || (nonnegative && zi.re < 0.0);
                if violates {
                    prev - zi * beta
                } else if nonnegative {
                    C64::new(zi.re, 0.0)
                } else {
                    *zi
                }
            })
            .collect();
        let change = rel_change(&next, &p);
        p = next;
        if change <= opts.rel_change_tol {
            halt = HaltReason::Stalled;
            break;
        }
    }
    let mut x = dom.extract(&p);
    constraint.project(&mut x);
    let final_error = dom.spectral_error(&dom.embed(&x));
    let iterations = errors.len();
    Ok((x0.with_values(x), IterReport { errors, iterations, halt, final_error }))
}

/// Griffin-Lim (Algorithm 2) for STFT magnitudes with `K = n_tilde >= N`.
///
/// `E_l = sum (sqrt(y) - |STFT(x_{l-1})|)^2`.
pub fn griffin_lim(y: &MeasurementSet, x0: &Signal, opts: &AltProjOptions) -> Result<(Signal, IterReport)> {
    let Model::Stft { n, n_tilde, k, ref window } = *y.model() else {
        return Err(Error::ModelMismatch(format!("Griffin-Lim needs STFT data, got {}", y.model().kind_name())));
    };
    if k != n_tilde || n_tilde < n {
        return Err(Error::ModelMismatch("Griffin-Lim needs K = n_tilde >= N".into()));
    }
    if x0.is_2d() || x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let frames = y.model().frames().expect("STFT frames");
    let denom: Vec<f64> = (0..n)
        .map(|i| frames.multipliers.iter().map(|d| d[i].norm_sqr()).sum())
        .collect();
    if let Some(index) = denom.iter().position(|&d| d == 0.0) {
        return Err(Error::DivisionByZero { index });
    }
    let _ = window;
    let mags: Vec<f64> = y.y().iter().map(|v| v.max(0.0).sqrt()).collect();

    let step = |x: &[C64]| -> (f64, Vec<C64>) {
        let spec = frames.forward(x);
        let mut err = 0.0;
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for (m, d) in frames.multipliers.iter().enumerate() {
            let mut buf: Vec<C64> = (0..n_tilde)
                .map(|kk| {
                    let s = spec[m * k + kk];
                    let mag = mags[m * k + kk];
                    err += (mag - s.norm()).powi(2);
                    sign(s) * mag
                })
                .collect();
            ifft(&mut buf);
            for i in 0..n {
                acc[i] += buf[i] * d[i].conj();
            }
        }
        let next = acc.iter().zip(&denom).map(|(a, &dn)| a / dn).collect();
        (err, next)
    };

    let mut x = x0.values().to_vec();
    let mut errors = Vec::new();
    let mut halt = HaltReason::MaxIterations;
    for _ in 0..opts.max_iter {
        let (err, next) = step(&x);
        errors.push(err);
        if err < opts.tol {
            halt = HaltReason::Tolerance;
            break;
        }
        let change = rel_change(&next, &x);
        x = next;
        if change <= opts.rel_change_tol {
            halt = HaltReason::Stalled;
            break;
        }
    }
    let final_error = step(&x).0;
    let iterations = errors.len();
    Ok((x0.with_values(x), IterReport { errors, iterations, halt, final_error }))
}
