//! Complex polynomial utilities. Coefficient vectors are ascending:
//! `p[i]` multiplies `z^i`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

const ABERTH_MAX_ITER: usize = 500;

/// Horner evaluation of `p` and its derivative at `z`.
pub fn eval_with_derivative(p: &[C64], z: C64) -> (C64, C64) {
    let mut val = C64::new(0.0, 0.0);
    let mut der = C64::new(0.0, 0.0);
    for c in p.iter().rev() {
        der = der * z + val;
        val = val * z + c;
    }
    (val, der)
}

pub fn eval(p: &[C64], z: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// Monic expansion of `prod (z - r_i)`.
pub fn from_roots(roots: &[C64]) -> Vec<C64> {
    let mut p = vec![C64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![C64::new(0.0, 0.0); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        p = next;
    }
    p
}

/// `|p(z)| / sum |p_i| |z|^i`, the backward-error style residual.
pub fn relative_residual(p: &[C64], z: C64) -> f64 {
    let scale: f64 = p.iter().rev().fold(0.0, |acc, c| acc * z.norm() + c.norm());
    if scale == 0.0 {
        0.0
    } else {
        eval(p, z).norm() / scale
    }
}

/// All roots of `p`, with multiplicity.
///
/// Trailing zero coefficients above the leading term are dropped; leading
/// zero coefficients (`p[0] = 0`) produce exact roots at the origin. The
/// remaining roots come from Aberth-Ehrlich simultaneous iteration, with a
/// companion-matrix eigenvalue fallback when it does not converge.
pub fn roots(p: &[C64]) -> Vec<C64> {
    let scale = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let cut = 1e-300_f64.max(scale * 1e-300);
    let top = p.iter().rposition(|c| c.norm() > cut).unwrap_or(0);
    let bottom = p.iter().position(|c| c.norm() > cut).unwrap_or(0);
    let mut out = vec![C64::new(0.0, 0.0); bottom];
    let core: Vec<C64> = p[bottom..=top].to_vec();
    if core.len() <= 1 {
        return out;
    }
    let found = aberth(&core).unwrap_or_else(|| companion_roots(&core));
    out.extend(found);
    out
}

fn initial_radius(p: &[C64]) -> f64 {
    let deg = p.len() - 1;
    let r = (p[0].norm() / p[deg].norm()).powf(1.0 / deg as f64);
    if r.is_finite() && r > 0.0 {
        r
    } else {
        1.0
    }
}

fn aberth(p: &[C64]) -> Option<Vec<C64>> {
    let deg = p.len() - 1;
    let r0 = initial_radius(p);
    let mut z: Vec<C64> = (0..deg)
        .map(|i| C64::from_polar(r0, 2.0 * std::f64::consts::PI * i as f64 / deg as f64 + 0.4))
        .collect();
    let mut done = vec![false; deg];
    for _ in 0..ABERTH_MAX_ITER {
        let mut all_done = true;
        for i in 0..deg {
            if done[i] {
                continue;
            }
            let (v, d) = eval_with_derivative(p, z[i]);
            if v.norm() == 0.0 {
                done[i] = true;
                continue;
            }
            let ratio = v / d;
            let repulsion: C64 = (0..deg).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                return None;
            }
            z[i] -= step;
            if step.norm() <= 1e-15 * z[i].norm().max(1e-300) {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    // multiple roots stall short of machine precision; accept anything with a small residual
    if z.iter().all(|r| relative_residual(p, *r) < 1e-10) {
        Some(z)
    } else {
        None
    }
}

/// Eigenvalues of the companion matrix of `p`.
pub fn companion_roots(p: &[C64]) -> Vec<C64> {
    let deg = p.len() - 1;
    let lead = p[deg];
    let mut m = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -p[i] / lead;
    }
    m.schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn factors_small_quadratics() {
        // 2 + 5z + 2z^2 = (2z + 1)(z + 2)
        let r = sorted(roots(&[c(2.0, 0.0), c(5.0, 0.0), c(2.0, 0.0)]));
        assert!((r[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - c(-0.5, 0.0)).norm() < 1e-12);
        // (z + 1)^2, a double root
        let r = roots(&[c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|z| (z - c(-1.0, 0.0)).norm() < 1e-7));
    }

    #[test]
    fn zero_roots_and_degenerate_inputs() {
        let r = roots(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(r.iter().filter(|z| z.norm() == 0.0).count(), 2);
        assert!(r.iter().any(|z| (z - c(-1.0, 0.0)).norm() < 1e-12));
        assert!(roots(&[c(3.0, 0.0)]).is_empty());
        assert_eq!(roots(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).len(), 1);
    }

    #[test]
    fn round_trip_through_expansion() {
        let truth = vec![c(0.3, 0.1), c(-1.5, 0.7), c(2.2, -0.4), c(0.0, 1.0), c(-0.2, -0.9)];
        let p = from_roots(&truth);
        let found = roots(&p);
        for t in &truth {
            let best = found.iter().map(|f| (f - t).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10, "{t} not found");
        }
        let comp = companion_roots(&p);
        for t in &truth {
            let best = comp.iter().map(|f| (f - t).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
    }

    #[test]
    fn derivative_matches_expansion() {
        let p = [c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0), c(2.0, 0.0)];
        let z = c(0.7, -0.2);
        let (_, d) = eval_with_derivative(&p, z);
        let expect = p[1] + p[2] * z * 2.0 + p[3] * z * z * 3.0;
        assert!((d - expect).norm() < 1e-12);
    }
}
