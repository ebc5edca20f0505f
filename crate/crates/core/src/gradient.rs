//! Intensity and amplitude least-squares losses with Armijo gradient descent.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::altproj::{sign, HaltReason, IterReport};
use crate::error::{Error, Result};
use crate::forward::{Frames, MeasurementSet};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `sum (y - |a* z|^2)^2`
    Intensity,
    /// `sum (sqrt(y) - |a* z|)^2`
    Amplitude,
}

/// A loss bound to measurements of a classical, masked or STFT model.
#[derive(Debug, Clone)]
pub struct LossSpec {
    kind: LossKind,
    frames: Frames,
    y: Vec<f64>,
    sqrt_y: Vec<f64>,
}

impl LossSpec {
    pub fn new(kind: LossKind, y: &MeasurementSet) -> Result<Self> {
        let frames = y.model().frames().ok_or_else(|| {
            Error::ModelMismatch(format!("no gradient model for {} measurements", y.model().kind_name()))
        })?;
        let sqrt_y = y.y().iter().map(|v| v.max(0.0).sqrt()).collect();
        Ok(Self { kind, frames, y: y.y().to_vec(), sqrt_y })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn signal_len(&self) -> usize {
        self.frames.signal_len()
    }

    fn check(&self, z: &[C64]) -> Result<()> {
        if z.len() != self.signal_len() {
            return Err(Error::DimensionMismatch { expected: self.signal_len(), got: z.len() });
        }
        Ok(())
    }

    fn value(&self, z: &[C64]) -> f64 {
        let u = self.frames.forward(z);
        match self.kind {
            LossKind::Intensity => u.iter().zip(&self.y).map(|(u, y)| (y - u.norm_sqr()).powi(2)).sum(),
            LossKind::Amplitude => u.iter().zip(&self.sqrt_y).map(|(u, s)| (s - u.norm()).powi(2)).sum(),
        }
    }

    /// `(loss, grad)` with `grad = df/dRe + j df/dIm`.
    fn value_and_grad(&self, z: &[C64]) -> (f64, Vec<C64>) {
        let u = self.frames.forward(z);
        let mut f = 0.0;
        let weighted: Vec<C64> = match self.kind {
            LossKind::Intensity => u
                .iter()
                .zip(&self.y)
                .map(|(u, y)| {
                    let r = u.norm_sqr() - y;
                    f += r * r;
                    u * (4.0 * r)
                })
                .collect(),
            LossKind::Amplitude => u
                .iter()
                .zip(&self.sqrt_y)
                .map(|(u, s)| {
                    let r = u.norm() - s;
                    f += r * r;
                    // subgradient 0 where |a* z| = 0
                    sign(*u) * (2.0 * r)
                })
                .collect(),
        };
        (f, self.frames.adjoint(&weighted))
    }
}

pub fn loss(z: &Signal, spec: &LossSpec) -> Result<f64> {
    spec.check(z.values())?;
    Ok(spec.value(z.values()))
}

/// Gradient of the intensity loss in real/imaginary coordinates packed as
/// `df/dRe + j df/dIm = 4 sum (|a* z|^2 - y) a a* z`.
pub fn grad_intensity(z: &Signal, spec: &LossSpec) -> Result<Vec<C64>> {
    if spec.kind != LossKind::Intensity {
        return Err(Error::InvalidInput("grad_intensity needs an intensity loss".into()));
    }
    grad(z, spec)
}

/// Gradient of either loss; the amplitude loss uses subgradient 0 where a
/// measurement vanishes.
pub fn grad(z: &Signal, spec: &LossSpec) -> Result<Vec<C64>> {
    spec.check(z.values())?;
    Ok(spec.value_and_grad(z.values()).1)
}

/// Backtracking line search along the negative gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Armijo {
    pub initial_step: f64,
    pub contraction: f64,
    pub sufficient_decrease: f64,
    pub max_halvings: usize,
    /// Start each search from twice the previously accepted step (capped at
    /// `initial_step`) instead of from `initial_step`.
    pub warm_start: bool,
}

impl Default for Armijo {
    fn default() -> Self {
        Self { initial_step: 1.0, contraction: 0.5, sufficient_decrease: 1e-4, max_halvings: 30, warm_start: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    pub max_iter: usize,
    /// Halts on `loss < tol` or `||grad|| < tol`.
    pub tol: f64,
    pub step: Armijo,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-10, step: Armijo::default() }
    }
}

/// Gradient descent with Armijo backtracking. `errors` in the report holds
/// the loss of each iterate entering a step; it never increases.
pub fn gd_minimize(spec: &LossSpec, x0: &Signal, opts: &GdOptions) -> Result<(Signal, IterReport)> {
    spec.check(x0.values())?;
    let rule = opts.step;
    let mut z = x0.values().to_vec();
    let (mut f, mut g) = spec.value_and_grad(&z);
    let mut errors = Vec::new();
    let mut halt = HaltReason::MaxIterations;
    let mut last_step = rule.initial_step;
    for _ in 0..opts.max_iter {
        errors.push(f);
        if f < opts.tol {
            halt = HaltReason::Tolerance;
            break;
        }
        let gnorm2: f64 = g.iter().map(|v| v.norm_sqr()).sum();
        if gnorm2.sqrt() < opts.tol {
            halt = HaltReason::SmallGradient;
            break;
        }
        let mut t = if rule.warm_start { (2.0 * last_step).min(rule.initial_step) } else { rule.initial_step };
        let mut accepted = None;
        for _ in 0..=rule.max_halvings {
            let trial: Vec<C64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi * t).collect();
            let ft = spec.value(&trial);
            if ft <= f - rule.sufficient_decrease * t * gnorm2 {
                accepted = Some((trial, ft));
                break;
            }
            t *= rule.contraction;
        }
        let Some((next, fnext)) = accepted else {
            halt = HaltReason::Stalled;
            break;
        };
        debug_assert!(fnext <= f);
        last_step = t;
        z = next;
        (f, g) = spec.value_and_grad(&z);
    }
    let iterations = errors.len();
    Ok((x0.with_values(z), IterReport { errors, iterations, halt, final_error: f }))
}
