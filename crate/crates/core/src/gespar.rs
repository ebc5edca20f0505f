//! Greedy sparse phase retrieval: support-swap local search around a damped
//! Gauss-Newton solver for the support-restricted intensity loss.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::MeasurementSet;
use crate::signal::{Rng, Signal};

/// Relative eigenvalue cutoff for the Gauss-Newton normal matrix. The
/// Jacobian always loses rank along the global phase direction, so steps
/// are minimum-norm least-squares solutions.
const PINV_CUTOFF: f64 = 1e-10;
const MAX_HALVINGS: usize = 20;

/// Rows `conj(a_i)` of all measurement vectors with their data.
#[derive(Debug, Clone)]
pub struct SparseProblem {
    rows: Vec<Vec<C64>>,
    y: Vec<f64>,
    n: usize,
}

impl SparseProblem {
    pub fn new(y: &MeasurementSet) -> Result<Self> {
        let frames = y.model().frames().ok_or_else(|| {
            Error::ModelMismatch(format!("no sparse solver for {} measurements", y.model().kind_name()))
        })?;
        let mut rows = Vec::with_capacity(y.y().len());
        for m in 0..y.rows() {
            for k in 0..y.cols() {
                rows.push(frames.measurement_vector(m, k).into_iter().map(|v| v.conj()).collect());
            }
        }
        Ok(Self { rows, y: y.y().to_vec(), n: frames.signal_len() })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    fn products(&self, z: &[C64], support: &[usize]) -> Vec<C64> {
        self.rows.iter().map(|r| support.iter().map(|&i| r[i] * z[i]).sum()).collect()
    }

    /// Intensity loss of `z` restricted to `support`.
    pub fn objective(&self, z: &[C64], support: &[usize]) -> f64 {
        self.products(z, support).iter().zip(&self.y).map(|(u, y)| (u.norm_sqr() - y).powi(2)).sum()
    }

    /// Full gradient `df/dRe + j df/dIm` of the loss at `z`.
    fn full_gradient(&self, z: &[C64], support: &[usize]) -> Vec<C64> {
        let u = self.products(z, support);
        let mut g = vec![C64::new(0.0, 0.0); self.n];
        for ((row, ui), y) in self.rows.iter().zip(&u).zip(&self.y) {
            let w = ui * (4.0 * (ui.norm_sqr() - y));
            for (gi, ri) in g.iter_mut().zip(row) {
                *gi += ri.conj() * w;
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_iter: usize,
    /// Halts once the objective or the gradient norm drops below this.
    pub tol: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-10 }
    }
}

/// Damped Gauss-Newton on the real/imaginary coordinates of `z` over
/// `support`. Each accepted step strictly lowers the objective; the step is
/// halved up to 20 times and the solve stops when no halving helps.
///
/// Returns the estimate, its objective and the objective after every
/// accepted step (starting with the initial value).
pub fn damped_gauss_newton(
    p: &SparseProblem,
    support: &[usize],
    z0: &[C64],
    opts: &GaussNewtonOptions,
) -> Result<(Vec<C64>, f64, Vec<f64>)> {
    if z0.len() != p.n {
        return Err(Error::DimensionMismatch { expected: p.n, got: z0.len() });
    }
    if support.is_empty() || support.iter().any(|&i| i >= p.n) {
        return Err(Error::InvalidInput("support must be a non-empty subset of 0..N".into()));
    }
    let mut z = vec![C64::new(0.0, 0.0); p.n];
    for &i in support {
        z[i] = z0[i];
    }
    let s = support.len();
    let mut f = p.objective(&z, support);
    let mut history = vec![f];
    for _ in 0..opts.max_iter {
        if f < opts.tol {
            break;
        }
        let u = p.products(&z, support);
        let mut jac = DMatrix::<f64>::zeros(p.rows.len(), 2 * s);
        let mut res = DVector::<f64>::zeros(p.rows.len());
        for (i, (row, ui)) in p.rows.iter().zip(&u).enumerate() {
            res[i] = ui.norm_sqr() - p.y[i];
            for (c, &n) in support.iter().enumerate() {
                let t = ui.conj() * row[n];
                jac[(i, c)] = 2.0 * t.re;
                jac[(i, s + c)] = -2.0 * t.im;
            }
        }
        let grad = jac.tr_mul(&res);
        if 2.0 * grad.norm() < opts.tol {
            break;
        }
        let step = min_norm_step(&jac.tr_mul(&jac), &grad)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = z.clone();
            for (c, &n) in support.iter().enumerate() {
                trial[n] -= C64::new(step[c], step[s + c]) * t;
            }
            let ft = p.objective(&trial, support);
            if ft < f {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else { break };
        z = next;
        f = fnext;
        history.push(f);
    }
    Ok((z, f, history))
}

/// Minimum-norm solution of `N d = g` through the eigendecomposition of `N`.
fn min_norm_step(normal: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(normal.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::SingularJacobian);
    }
    let proj = eig.eigenvectors.tr_mul(g);
    let scaled = DVector::from_iterator(
        proj.len(),
        proj.iter().zip(eig.eigenvalues.iter()).map(|(p, &l)| if l > PINV_CUTOFF * max { p / l } else { 0.0 }),
    );
    Ok(&eig.eigenvectors * scaled)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GesparOptions {
    pub restarts: usize,
    /// Consecutive non-improving swaps before a restart ends; `None` means `2 s`.
    pub max_swaps: Option<usize>,
    pub inner: GaussNewtonOptions,
}

impl Default for GesparOptions {
    fn default() -> Self {
        Self { restarts: 100, max_swaps: None, inner: GaussNewtonOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartTrace {
    pub initial_objective: f64,
    /// Objective after the initial solve and after each accepted swap.
    pub accepted: Vec<f64>,
    pub swaps_tried: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GesparReport {
    pub objective: f64,
    pub support: Vec<usize>,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

struct RestartOutcome {
    z: Vec<C64>,
    support: Vec<usize>,
    objective: f64,
    trace: RestartTrace,
}

fn run_restart(p: &SparseProblem, s: usize, max_swaps: usize, inner: &GaussNewtonOptions, mut rng: Rng) -> Result<RestartOutcome> {
    let n = p.n;
    let mut support = rng.subset(n, s);
    let mut z0 = vec![C64::new(0.0, 0.0); n];
    for &i in &support {
        z0[i] = rng.complex_normal();
    }
    // least-squares scaling of the random start
    let u: Vec<f64> = p.products(&z0, &support).iter().map(|v| v.norm_sqr()).collect();
    let uy: f64 = u.iter().zip(&p.y).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|a| a * a).sum();
    if uu > 0.0 && uy > 0.0 {
        let c = (uy / uu).sqrt().sqrt();
        z0.iter_mut().for_each(|v| *v *= c);
    }
    let initial_objective = p.objective(&z0, &support);
    let (mut z, mut f, _) = damped_gauss_newton(p, &support, &z0, inner)?;
    let mut accepted = vec![f];
    let mut failures = 0;
    let mut tried = 0;
    while failures < max_swaps && f >= inner.tol && s < n {
        // smallest entry on the support leaves (lowest index on ties)
        let out_pos = (0..s)
            .min_by(|&a, &b| z[support[a]].norm().total_cmp(&z[support[b]].norm()).then(support[a].cmp(&support[b])))
            .expect("non-empty support");
        let g = p.full_gradient(&z, &support);
        let mut off: Vec<usize> = (0..n).filter(|i| !support.contains(i)).collect();
        off.sort_by(|&a, &b| g[b].norm().total_cmp(&g[a].norm()).then(a.cmp(&b)));
        let Some(&incoming) = off.get(failures) else { break };
        tried += 1;
        let mut cand = support.clone();
        cand[out_pos] = incoming;
        cand.sort_unstable();
        let mut start = z.clone();
        start[support[out_pos]] = C64::new(0.0, 0.0);
        let (zc, fc, _) = damped_gauss_newton(p, &cand, &start, inner)?;
        if fc < f {
            support = cand;
            z = zc;
            f = fc;
            accepted.push(f);
            failures = 0;
        } else {
            failures += 1;
        }
    }
    Ok(RestartOutcome {
        z,
        support,
        objective: f,
        trace: RestartTrace { initial_objective, accepted, swaps_tried: tried },
    })
}

/// Best `s`-sparse estimate over independent restarts. Restart `r` draws its
/// support and start from `rng.child(r)`, so results do not depend on the
/// thread count.
pub fn gespar(y: &MeasurementSet, s: usize, opts: &GesparOptions, rng: &Rng) -> Result<(Signal, GesparReport)> {
    let p = SparseProblem::new(y)?;
    if s == 0 || s > p.n {
        return Err(Error::InvalidInput(format!("sparsity must lie in 1..={}, got {s}", p.n)));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidInput("at least one restart is required".into()));
    }
    let max_swaps = opts.max_swaps.unwrap_or(2 * s);
    let outcomes: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| run_restart(&p, s, max_swaps, &opts.inner, rng.child(r as u64)))
        .collect::<Result<_>>()?;
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let report = GesparReport {
        objective: outcomes[best].objective,
        support: outcomes[best].support.clone(),
        best_restart: best,
        restarts: outcomes.iter().map(|o| o.trace.clone()).collect(),
    };
    Ok((Signal::new(outcomes[best].z.clone())?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::has_collision;
    use crate::forward::measure_classical_full;
    use crate::signal::{dist_up_to, random_signal, SignalKind, TrivialGroup};

    fn collision_free(n: usize, s: usize, rng: &mut Rng) -> Signal {
        loop {
            let x = random_signal(n, SignalKind::Sparse(s), rng).unwrap();
            if !has_collision(&x) {
                return x;
            }
        }
    }

    #[test]
    fn truth_is_immediate() {
        let mut rng = Rng::new(1);
        let x = collision_free(16, 3, &mut rng);
        let p = SparseProblem::new(&measure_classical_full(&x).unwrap()).unwrap();
        let support: Vec<usize> = (0..16).filter(|&i| x.values()[i].norm() > 0.0).collect();
        let (_, f, hist) = damped_gauss_newton(&p, &support, x.values(), &GaussNewtonOptions::default()).unwrap();
        assert!(f < 1e-12);
        assert_eq!(hist.len(), 1);
    }

    #[test]
    fn single_coordinate_matches_scan() {
        let mut rng = Rng::new(2);
        let x = random_signal(6, SignalKind::ComplexNormal, &mut rng).unwrap();
        let y = measure_classical_full(&x).unwrap();
        let p = SparseProblem::new(&y).unwrap();
        let mut z0 = vec![C64::new(0.0, 0.0); 6];
        z0[2] = C64::new(0.3, 0.2);
        let (z, f, hist) = damped_gauss_newton(&p, &[2], &z0, &GaussNewtonOptions { max_iter: 200, tol: 1e-14 }).unwrap();
        // |a_k[2]| = 1 for every k, so f(r) = sum (r^2 - y_k)^2
        let scan = (0..=400_000)
            .map(|i| {
                let r2 = i as f64 * 1e-4;
                y.y().iter().map(|v| (r2 - v).powi(2)).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((f - scan).abs() < 1e-8 * scan.max(1.0));
        let mean = y.y().iter().sum::<f64>() / y.y().len() as f64;
        assert!((z[2].norm_sqr() - mean).abs() < 1e-8 * mean);
        assert!(hist.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_start_is_stationary() {
        let y = measure_classical_full(&Signal::from_real(&[1.0, 0.0, 2.0])).unwrap();
        let p = SparseProblem::new(&y).unwrap();
        let z0 = vec![C64::new(0.0, 0.0); 3];
        let (z, f, hist) = damped_gauss_newton(&p, &[0, 2], &z0, &GaussNewtonOptions::default()).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
        assert_eq!(hist.len(), 1);
        assert!((f - y.y().iter().map(|v| v * v).sum::<f64>()).abs() < 1e-9);
        assert!(matches!(
            min_norm_step(&DMatrix::zeros(2, 2), &DVector::from_element(2, 1.0)),
            Err(Error::SingularJacobian)
        ));
    }

    #[test]
    fn recovers_sparse_signal() {
        let mut rng = Rng::new(3);
        let x = collision_free(32, 3, &mut rng);
        let y = measure_classical_full(&x).unwrap();
        let opts = GesparOptions { restarts: 20, ..Default::default() };
        let (est, rep) = gespar(&y, 3, &opts, &Rng::new(9)).unwrap();
        assert_eq!(est.values().iter().filter(|v| v.norm() > 0.0).count(), 3);
        assert!(dist_up_to(&x, &est, TrivialGroup::FULL).unwrap() < 1e-4 * x.norm());
        for r in &rep.restarts {
            assert!(rep.objective <= r.accepted[0]);
            assert!(r.accepted.windows(2).all(|w| w[1] < w[0]));
        }
        let (again, _) = gespar(&y, 3, &opts, &Rng::new(9)).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn full_support_is_plain_descent() {
        let mut rng = Rng::new(4);
        let x = random_signal(5, SignalKind::ComplexNormal, &mut rng).unwrap();
        let y = measure_classical_full(&x).unwrap();
        let (_, rep) = gespar(&y, 5, &GesparOptions { restarts: 2, ..Default::default() }, &rng).unwrap();
        assert!(rep.restarts.iter().all(|r| r.swaps_tried == 0));
        assert!(gespar(&y, 0, &GesparOptions::default(), &rng).is_err());
    }
}
