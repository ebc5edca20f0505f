//! Discrete Fourier transforms of arbitrary length.
//!
//! Backed by `rustfft`, which switches to Bluestein's algorithm for lengths
//! with large prime factors, so prime-length transforms are exact up to
//! rounding.

use std::cell::RefCell;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::Signal;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, `X[k] = sum_n x[n] e^{-2 pi j k n / len}`.
pub fn fft(buf: &mut [C64]) {
    if buf.len() <= 1 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// In-place inverse DFT including the `1/len` normalization.
pub fn ifft(buf: &mut [C64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(buf));
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// Unnormalized inverse DFT (the adjoint of [`fft`]).
pub fn ifft_unnormalized(buf: &mut [C64]) {
    if buf.len() <= 1 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// `out[k] = sum_{n<N} x[n] e^{-2 pi j k n / n_tilde}` for `k < k_count`.
///
/// Entries with `n >= n_tilde` are folded onto `n mod n_tilde`, which is
/// exact because the kernel is `n_tilde`-periodic in `n`.
pub fn dft_slice(x: &[C64], n_tilde: usize, k_count: usize) -> Vec<C64> {
    let mut buf = vec![C64::new(0.0, 0.0); n_tilde];
    for (n, v) in x.iter().enumerate() {
        buf[n % n_tilde] += v;
    }
    fft(&mut buf);
    (0..k_count).map(|k| buf[k % n_tilde]).collect()
}

/// Adjoint of [`dft_slice`]: `out[n] = sum_k v[k] e^{+2 pi j k n / n_tilde}` for `n < len`.
pub fn dft_adjoint_slice(v: &[C64], n_tilde: usize, len: usize) -> Vec<C64> {
    let mut buf = vec![C64::new(0.0, 0.0); n_tilde];
    for (k, val) in v.iter().enumerate() {
        buf[k % n_tilde] += val;
    }
    ifft_unnormalized(&mut buf);
    (0..len).map(|n| buf[n % n_tilde]).collect()
}

/// Oversampled DFT of a 1D signal.
pub fn oversampled_dft(x: &Signal, n_tilde: usize, k_count: usize) -> Result<Vec<C64>> {
    if x.is_2d() {
        return Err(Error::InvalidInput("oversampled_dft expects a 1D signal".into()));
    }
    if n_tilde == 0 || k_count == 0 {
        return Err(Error::InvalidInput("n_tilde and K must be positive".into()));
    }
    Ok(dft_slice(x.values(), n_tilde, k_count))
}

/// Separable 2D oversampled DFT of a row-major `n1 x n2` grid; output is
/// row-major `k1 x k2`.
pub fn dft2(
    x: &[C64],
    (n1, n2): (usize, usize),
    (nt1, nt2): (usize, usize),
    (k1, k2): (usize, usize),
) -> Vec<C64> {
    // rows first: n1 x k2
    let mut tmp = Vec::with_capacity(n1 * k2);
    for r in 0..n1 {
        tmp.extend(dft_slice(&x[r * n2..(r + 1) * n2], nt2, k2));
    }
    let mut out = vec![C64::new(0.0, 0.0); k1 * k2];
    let mut col = vec![C64::new(0.0, 0.0); n1];
    for c in 0..k2 {
        for r in 0..n1 {
            col[r] = tmp[r * k2 + c];
        }
        let t = dft_slice(&col, nt1, k1);
        for (r, v) in t.into_iter().enumerate() {
            out[r * k2 + c] = v;
        }
    }
    out
}

/// Adjoint of [`dft2`].
pub fn dft2_adjoint(
    v: &[C64],
    (n1, n2): (usize, usize),
    (nt1, nt2): (usize, usize),
    (k1, k2): (usize, usize),
) -> Vec<C64> {
    let mut tmp = vec![C64::new(0.0, 0.0); n1 * k2];
    let mut col = vec![C64::new(0.0, 0.0); k1];
    for c in 0..k2 {
        for r in 0..k1 {
            col[r] = v[r * k2 + c];
        }
        let t = dft_adjoint_slice(&col, nt1, n1);
        for (r, val) in t.into_iter().enumerate() {
            tmp[r * k2 + c] = val;
        }
    }
    let mut out = Vec::with_capacity(n1 * n2);
    for r in 0..n1 {
        out.extend(dft_adjoint_slice(&tmp[r * k2..(r + 1) * k2], nt2, n2));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(x: &[C64], nt: usize, k: usize) -> Vec<C64> {
        (0..k)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(n, v)| v * C64::from_polar(1.0, -2.0 * PI * (k * n) as f64 / nt as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn identity_case() {
        let x = Signal::new(vec![C64::new(1.0, 0.0)]).unwrap();
        let y = oversampled_dft(&x, 1, 1).unwrap();
        assert!((y[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn delta_is_flat() {
        let x = Signal::from_real(&[1.0, 0.0, 0.0, 0.0]);
        for (nt, k) in [(7, 7), (3, 5), (4, 9)] {
            for v in oversampled_dft(&x, nt, k).unwrap() {
                assert!((v - C64::new(1.0, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn two_ones_three_bins() {
        let x = Signal::from_real(&[1.0, 1.0]);
        let y = oversampled_dft(&x, 3, 3).unwrap();
        let expect = [
            C64::new(2.0, 0.0),
            C64::new(1.0, 0.0) + C64::from_polar(1.0, -2.0 * PI / 3.0),
            C64::new(1.0, 0.0) + C64::from_polar(1.0, -4.0 * PI / 3.0),
        ];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn folding_and_prime_lengths_match_naive() {
        let x: Vec<C64> = (0..13).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        for (nt, k) in [(13, 13), (25, 25), (7, 11), (29, 3)] {
            let fast = dft_slice(&x, nt, k);
            let slow = naive(&x, nt, k);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let x: Vec<C64> = (0..6).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let v: Vec<C64> = (0..11).map(|i| C64::new((i as f64).cos(), 0.5)).collect();
        let ax = dft_slice(&x, 11, 11);
        let atv = dft_adjoint_slice(&v, 11, 6);
        let lhs: C64 = ax.iter().zip(&v).map(|(a, b)| b.conj() * a).sum();
        let rhs: C64 = x.iter().zip(&atv).map(|(a, b)| b.conj() * a).sum();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn dft2_adjoint_identity() {
        let dims = (3, 4);
        let nt = (5, 7);
        let k = (5, 7);
        let x: Vec<C64> = (0..12).map(|i| C64::new((i as f64).sin(), (i as f64).cos())).collect();
        let v: Vec<C64> = (0..35).map(|i| C64::new(i as f64 * 0.1, -0.2)).collect();
        let ax = dft2(&x, dims, nt, k);
        let atv = dft2_adjoint(&v, dims, nt, k);
        let lhs: C64 = ax.iter().zip(&v).map(|(a, b)| b.conj() * a).sum();
        let rhs: C64 = x.iter().zip(&atv).map(|(a, b)| b.conj() * a).sum();
        assert!((lhs - rhs).norm() < 1e-10);
    }
}
