//! Closed-form STFT phase retrieval from the diagonals of `x x*`.
//!
//! With `y~[m, l] = (1/N) sum_k y[m,k] e^{-2 pi j k l / N}`, every frame gives
//! `y~[m, l] = sum_n G_l[m, n] x[n] conj(x[n + l])` where
//! `G_l[m, n] = d_m[n] conj(d_m[n + l])` and `d_m` is the frame multiplier.
//! Solving these systems for `|l| < W` fills a band of `x x*`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fourier::fft;
use crate::forward::{MeasurementSet, Model, WindowSpec};
use crate::sdp::HermitianMatrix;
use crate::signal::Signal;

/// Relative cutoff on circulant eigenvalues.
pub const CIRCULANT_CUTOFF: f64 = 1e-10;

/// `ceil(N/L) x N` matrix with entries `d[mL - n] conj(d[mL - n - l])`
/// (indices mod `N`). Row-major `Vec` of rows.
pub fn build_g(window: &WindowSpec, l: isize, n: usize) -> Vec<Vec<C64>> {
    (0..window.frames(n))
        .map(|m| {
            let d = window.frame_multiplier(m, n);
            (0..n).map(|i| d[i] * d[(i as isize + l).rem_euclid(n as isize) as usize].conj()).collect()
        })
        .collect()
}

/// Generating column of the unit-hop circulant `G_l`: `g[t] = G_l[t, 0]`.
fn circulant_column(window: &WindowSpec, l: isize, n: usize) -> Vec<C64> {
    let w = window.with_hop(1).expect("hop 1 is valid");
    build_g(&w, l, n).into_iter().map(|row| row[0]).collect()
}

/// Transform-domain pseudoinverse solve of the circulant system with
/// generating column `g`; eigenvalues below the cutoff are dropped.
fn circulant_solve(g: &[C64], b: &[C64]) -> Vec<C64> {
    let n = g.len();
    let mut gh = g.to_vec();
    fft(&mut gh);
    let max = gh.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut bh = b.to_vec();
    fft(&mut bh);
    for (v, gv) in bh.iter_mut().zip(&gh) {
        *v = if gv.norm() > CIRCULANT_CUTOFF * max { *v / gv } else { C64::new(0.0, 0.0) };
    }
    // inverse transform via conjugation
    for v in bh.iter_mut() {
        *v = v.conj();
    }
    fft(&mut bh);
    bh.iter().map(|v| v.conj() / n as f64).collect()
}

fn circulant_invertible(g: &[C64]) -> bool {
    let mut gh = g.to_vec();
    fft(&mut gh);
    let max = gh.iter().map(|v| v.norm()).fold(0.0, f64::max);
    max > 0.0 && gh.iter().all(|v| v.norm() > CIRCULANT_CUTOFF * max)
}

/// Whether every unit-hop system `G_l`, `|l| < W`, is invertible for length
/// `n` (periodic convention, the window's own hop is ignored).
pub fn is_admissible(window: &WindowSpec, n: usize) -> bool {
    let w = window.width() as isize;
    if window.width() > n {
        return false;
    }
    (-(w - 1)..w).all(|l| circulant_invertible(&circulant_column(window, l, n)))
}

/// `y~[m, l]` for all frames, row-major `M x N`.
fn transformed_rows(y: &MeasurementSet, n: usize) -> Vec<Vec<C64>> {
    (0..y.rows())
        .map(|m| {
            let mut r: Vec<C64> = y.row(m).iter().map(|v| C64::new(*v, 0.0)).collect();
            fft(&mut r);
            r.into_iter().map(|v| v / n as f64).collect()
        })
        .collect()
}

fn stft_parts(y: &MeasurementSet) -> Result<(usize, WindowSpec)> {
    let Model::Stft { n, n_tilde, k, ref window } = *y.model() else {
        return Err(Error::ModelMismatch(format!("expected STFT data, got {}", y.model().kind_name())));
    };
    if n_tilde != n || k != n {
        return Err(Error::ModelMismatch("direct STFT recovery needs n_tilde = K = N".into()));
    }
    if !window.periodic() {
        return Err(Error::ModelMismatch("direct STFT recovery uses the periodic window convention".into()));
    }
    Ok((n, window.clone()))
}

/// Band-limited estimate of `x x*` from the solved diagonals, Hermitian by
/// construction: diagonal `-l` is the conjugate of diagonal `l`.
fn assemble(n: usize, diagonals: &[Vec<C64>]) -> HermitianMatrix {
    let mut x0 = DMatrix::<C64>::zeros(n, n);
    for (l, d) in diagonals.iter().enumerate().rev() {
        for i in 0..n {
            let j = (i + l) % n;
            if l == 0 {
                x0[(i, i)] = C64::new(d[i].re, 0.0);
            } else {
                x0[(i, j)] = d[i];
                x0[(j, i)] = d[i].conj();
            }
        }
    }
    HermitianMatrix::new(x0).expect("assembled symmetrically")
}

/// Principal eigenvector scaled by `sqrt(sum of the positive entries of the
/// l = 0 diagonal estimate)`.
fn finish(x0: &HermitianMatrix, diag0: &[C64]) -> Result<Signal> {
    let energy: f64 = diag0.iter().map(|v| v.re).filter(|v| *v > 0.0).sum();
    if energy <= 0.0 {
        return Err(Error::EmptyP);
    }
    let (_, vecs) = x0.eig();
    let v: Vec<C64> = vecs.column(0).iter().map(|c| c * energy.sqrt()).collect();
    Ok(Signal::new(v)?.normalize_phase_largest())
}

/// Least-squares recovery for unit hop and an admissible window.
pub fn stft_ls_recover(y: &MeasurementSet) -> Result<Signal> {
    let (n, window) = stft_parts(y)?;
    if window.hop() != 1 {
        return Err(Error::ModelMismatch("least-squares recovery needs L = 1; use the heuristic".into()));
    }
    if !is_admissible(&window, n) {
        return Err(Error::NotAdmissible);
    }
    let yt = transformed_rows(y, n);
    let w = window.width();
    let diagonals: Vec<Vec<C64>> = (0..w.min(n))
        .map(|l| {
            let b: Vec<C64> = yt.iter().map(|row| row[l]).collect();
            circulant_solve(&circulant_column(&window, l as isize, n), &b)
        })
        .collect();
    let x0 = assemble(n, &diagonals);
    finish(&x0, &diagonals[0])
}

/// Initialization for any hop: Tikhonov-regularized least squares on the
/// rectangular systems, `(G* G + lambda s I) x = G* y~` with `s` the largest
/// diagonal entry of `G* G`.
pub fn stft_init_heuristic(y: &MeasurementSet, lambda: f64) -> Result<Signal> {
    let (n, window) = stft_parts(y)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let yt = transformed_rows(y, n);
    let w = window.width();
    let diagonals: Vec<Vec<C64>> = (0..w.min(n))
        .map(|l| {
            let rows = build_g(&window, l as isize, n);
            let g = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
            let b = nalgebra::DVector::from_iterator(yt.len(), yt.iter().map(|row| row[l]));
            let mut normal = g.adjoint() * &g;
            let scale = (0..n).map(|i| normal[(i, i)].re).fold(0.0, f64::max);
            let reg = lambda * if scale > 0.0 { scale } else { 1.0 };
            for i in 0..n {
                normal[(i, i)] += reg;
            }
            let rhs = g.adjoint() * b;
            let sol = normal.cholesky().expect("regularized normal matrix is positive definite").solve(&rhs);
            sol.iter().copied().collect()
        })
        .collect();
    let x0 = assemble(n, &diagonals);
    finish(&x0, &diagonals[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::measure_stft;
    use crate::signal::{dist_up_to, random_signal, Rng, SignalKind, TrivialGroup};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn g_examples() {
        let delta = WindowSpec::new(vec![c(1.0)], 1, true).unwrap();
        let g0 = build_g(&delta, 0, 5);
        for (m, row) in g0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, c(if m == j { 1.0 } else { 0.0 }));
            }
        }
        assert!(build_g(&delta, 2, 5).iter().flatten().all(|v| *v == c(0.0)));
        let ones = WindowSpec::rectangular(5, 1, true).unwrap();
        assert!(build_g(&ones, 3, 5).iter().flatten().all(|v| *v == c(1.0)));
        assert_eq!(build_g(&ones.with_hop(2).unwrap(), 1, 5).len(), 3);
    }

    #[test]
    fn unit_hop_g_is_circulant() {
        let w = WindowSpec::gaussian(1.5, 6, 1, true).unwrap();
        for l in -5..=5 {
            let g = build_g(&w, l, 11);
            for m in 0..11 {
                for j in 0..11 {
                    assert_eq!(g[m][j], g[(m + 1) % 11][(j + 1) % 11]);
                }
            }
        }
    }

    #[test]
    fn admissibility() {
        for w in 2..=11 {
            assert!(is_admissible(&WindowSpec::rectangular(w, 1, true).unwrap(), 23));
        }
        assert!(!is_admissible(&WindowSpec::new(vec![c(1.0), c(0.0), c(0.0)], 1, true).unwrap(), 7));
        assert!(!is_admissible(&WindowSpec::rectangular(7, 1, true).unwrap(), 7));
    }

    #[test]
    fn diagonal_consistency() {
        let mut rng = Rng::new(1);
        let x = random_signal(13, SignalKind::ComplexNormal, &mut rng).unwrap();
        let w = WindowSpec::gaussian(1.2, 5, 1, true).unwrap();
        let y = measure_stft(&x, &w, 13, 13).unwrap();
        let yt = transformed_rows(&y, 13);
        let v = x.values();
        for l in -4isize..=4 {
            let diag: Vec<C64> = (0..13).map(|i| v[i] * v[(i as isize + l).rem_euclid(13) as usize].conj()).collect();
            for (m, row) in build_g(&w, l, 13).iter().enumerate() {
                let lhs: C64 = row.iter().zip(&diag).map(|(a, b)| a * b).sum();
                assert!((lhs - yt[m][l.rem_euclid(13) as usize]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_recovery_with_long_window() {
        let mut rng = Rng::new(2);
        let w = WindowSpec::rectangular(12, 1, true).unwrap();
        for _ in 0..5 {
            let x = random_signal(23, SignalKind::ComplexNormal, &mut rng).unwrap();
            let y = measure_stft(&x, &w, 23, 23).unwrap();
            let est = stft_ls_recover(&y).unwrap();
            assert!(dist_up_to(&x, &est, TrivialGroup::ROTATION).unwrap() < 1e-8 * x.norm());
            let est_rot = stft_ls_recover(&measure_stft(&x.rotated(0.9), &w, 23, 23).unwrap()).unwrap();
            assert!(dist_up_to(&est, &est_rot, TrivialGroup::ROTATION).unwrap() < 1e-10 * x.norm());
        }
    }

    #[test]
    fn recovers_delta() {
        let mut v = vec![c(0.0); 11];
        v[0] = c(1.0);
        let x = Signal::new(v).unwrap();
        let y = measure_stft(&x, &WindowSpec::rectangular(3, 1, true).unwrap(), 11, 11).unwrap();
        let est = stft_ls_recover(&y).unwrap();
        assert!(dist_up_to(&x, &est, TrivialGroup::ROTATION).unwrap() < 1e-12);
    }

    #[test]
    fn errors() {
        let x = Signal::from_real(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = measure_stft(&x, &WindowSpec::rectangular(7, 1, true).unwrap(), 7, 7).unwrap();
        assert!(matches!(stft_ls_recover(&y), Err(Error::NotAdmissible)));
        let y = measure_stft(&x, &WindowSpec::rectangular(3, 2, true).unwrap(), 7, 7).unwrap();
        assert!(matches!(stft_ls_recover(&y), Err(Error::ModelMismatch(_))));
        let y = measure_stft(&x, &WindowSpec::rectangular(3, 1, true).unwrap(), 9, 9).unwrap();
        assert!(matches!(stft_ls_recover(&y), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn heuristic_matches_ls_for_unit_hop() {
        let mut rng = Rng::new(3);
        let x = random_signal(17, SignalKind::ComplexNormal, &mut rng).unwrap();
        let y = measure_stft(&x, &WindowSpec::rectangular(9, 1, true).unwrap(), 17, 17).unwrap();
        let a = stft_ls_recover(&y).unwrap();
        let b = stft_init_heuristic(&y, 1e-12).unwrap();
        assert!(dist_up_to(&a, &b, TrivialGroup::ROTATION).unwrap() < 1e-8 * x.norm());
        let b = stft_init_heuristic(&y, 1e-6).unwrap();
        assert!(dist_up_to(&a, &b, TrivialGroup::ROTATION).unwrap() < 1e-3 * x.norm());
    }

    #[test]
    fn heuristic_is_finite_for_any_window() {
        let mut rng = Rng::new(4);
        let x = random_signal(16, SignalKind::ComplexNormal, &mut rng).unwrap();
        for (w, l) in [(1, 1), (4, 3), (16, 1), (5, 5)] {
            let y = measure_stft(&x, &WindowSpec::rectangular(w, l, true).unwrap(), 16, 16).unwrap();
            let est = stft_init_heuristic(&y, 1e-6).unwrap();
            assert!(est.values().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        }
    }
}
