//! Classical phase retrieval ambiguities via autocorrelation root pairing.
//!
//! Every signal sharing the oversampled Fourier magnitudes of `x` has the
//! polynomial `c * prod (z - beta_i)` with `beta_i` drawn from the reflected
//! zero pairs `(gamma, 1/conj(gamma))` of the autocorrelation polynomial.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{MeasurementSet, Model};
use crate::fourier::ifft;
use crate::poly;
use crate::signal::{autocorrelation, rel_dist_up_to, Signal, TrivialGroup};

/// Band around the unit circle inside which a root counts as unimodular.
pub const UNIMODULAR_BAND: f64 = 1e-6;
/// Roots closer than this are merged into one root with multiplicity.
pub const MERGE_DISTANCE: f64 = 1e-7;
/// Relative distance under which two enumerated solutions are identified.
const DEDUP_TOL: f64 = 1e-6;

/// `A(z) = sum_n coeffs[n] z^n` with `coeffs[n] = a[n - N + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrPoly {
    coeffs: Vec<C64>,
}

impl AutocorrPoly {
    /// Wrap an autocorrelation sequence of odd length `2N - 1`, checking
    /// the symmetry `coeffs[n] = conj(coeffs[2N-2-n])`.
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::InvalidInput("autocorrelation length must be odd".into()));
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        let last = coeffs.len() - 1;
        let asym = (0..coeffs.len())
            .map(|i| (coeffs[i] - coeffs[last - i].conj()).norm())
            .fold(0.0, f64::max);
        if asym > 1e-8 * scale {
            return Err(Error::InvalidInput(format!("autocorrelation is not conjugate symmetric ({asym:.2e})")));
        }
        Ok(Self { coeffs })
    }

    pub fn from_signal(x: &Signal) -> Result<Self> {
        Self::new(autocorrelation(x)?)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Length `N` of the underlying signals.
    pub fn signal_len(&self) -> usize {
        self.coeffs.len().div_ceil(2)
    }

    /// `a[lag]` for `|lag| < N`.
    pub fn lag(&self, lag: isize) -> C64 {
        self.coeffs[(lag + self.signal_len() as isize - 1) as usize]
    }
}

/// Recover `A(z)` from classical magnitudes with `n_tilde = K = 2N - 1`.
pub fn autocorr_from_measurements(y: &MeasurementSet) -> Result<AutocorrPoly> {
    let Model::Classical { n, n_tilde, k } = *y.model() else {
        return Err(Error::ModelMismatch(format!(
            "autocorrelation needs classical data, got {}",
            y.model().kind_name()
        )));
    };
    if n_tilde != 2 * n - 1 || k != n_tilde {
        return Err(Error::ModelMismatch("autocorrelation needs n_tilde = K = 2N - 1".into()));
    }
    let mut buf: Vec<C64> = y.y().iter().map(|&v| C64::new(v, 0.0)).collect();
    ifft(&mut buf);
    // buf[t] = a[t] for t < N and a[t - n_tilde] for t >= N
    let coeffs = (0..n_tilde)
        .map(|i| {
            let lag = i as isize - (n as isize - 1);
            buf[lag.rem_euclid(n_tilde as isize) as usize]
        })
        .collect::<Vec<_>>();
    let sym: Vec<C64> = (0..n_tilde).map(|i| (coeffs[i] + coeffs[n_tilde - 1 - i].conj()) * 0.5).collect();
    AutocorrPoly::new(sym)
}

/// One reflected zero pair (or a unimodular double zero) with multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootPair {
    /// The member with `|gamma| <= 1`.
    #[serde(serialize_with = "ser_c64")]
    pub root: C64,
    pub multiplicity: usize,
    pub unimodular: bool,
}

impl RootPair {
    pub fn reflected(&self) -> C64 {
        self.root.conj().inv()
    }
}

fn ser_c64<S: serde::Serializer>(c: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [c.re, c.im].serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootPairing {
    pub pairs: Vec<RootPair>,
    /// `a[N-1]`, the leading coefficient of `A(z)`.
    #[serde(serialize_with = "ser_c64")]
    pub leading: C64,
    /// Worst reflected-pair mismatch observed while pairing.
    pub residual: f64,
}

impl RootPairing {
    pub fn total_multiplicity(&self) -> usize {
        // each pair stands for two roots of A(z)
        self.pairs.iter().map(|p| 2 * p.multiplicity).sum()
    }

    /// Roots of `X(z)` forced by unimodular pairs, with multiplicity.
    fn fixed_roots(&self) -> Vec<C64> {
        self.pairs
            .iter()
            .filter(|p| p.unimodular)
            .flat_map(|p| std::iter::repeat_n(p.root, p.multiplicity))
            .collect()
    }

    /// Non-unimodular pairs expanded by multiplicity: one entry per binary choice.
    fn choice_slots(&self) -> Vec<RootPair> {
        self.pairs
            .iter()
            .filter(|p| !p.unimodular)
            .flat_map(|p| std::iter::repeat_n(*p, p.multiplicity))
            .collect()
    }
}

/// Default pairing tolerance `1e-6 * max|root|`.
pub fn default_pairing_tol(roots: &[C64]) -> f64 {
    1e-6 * roots.iter().map(|r| r.norm()).fold(1.0, f64::max)
}

/// Compute the `2N - 2` roots of `A(z)` and match them into reflected pairs.
///
/// `tol = None` selects [`default_pairing_tol`].
pub fn find_and_pair_roots(p: &AutocorrPoly, tol: Option<f64>) -> Result<RootPairing> {
    let c = p.coeffs();
    let n = p.signal_len();
    let leading = c[c.len() - 1];
    if n == 1 {
        return Ok(RootPairing { pairs: Vec::new(), leading, residual: 0.0 });
    }
    let scale = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if c[0].norm() <= 1e-14 * scale {
        return Err(Error::InvalidInput("A(z) needs x[0] != 0 and x[N-1] != 0".into()));
    }
    let roots = poly::roots(c);
    let tol = tol.unwrap_or_else(|| default_pairing_tol(&roots));

    let (mut unimodular, rest): (Vec<C64>, Vec<C64>) =
        roots.into_iter().partition(|r| (r.norm() - 1.0).abs() < UNIMODULAR_BAND);
    let (inside, mut outside): (Vec<C64>, Vec<C64>) = rest.into_iter().partition(|r| r.norm() < 1.0);
    if inside.len() != outside.len() || unimodular.len() % 2 == 1 {
        return Err(Error::PairingFailed { residual: f64::INFINITY, tol });
    }

    let mut residual: f64 = 0.0;
    let mut raw: Vec<(C64, bool)> = Vec::with_capacity(n - 1);

    // greedy global matching: repeatedly take the closest (gamma, 1/conj(gamma)) candidate
    let mut inside_left: Vec<C64> = inside;
    while !inside_left.is_empty() {
        let mut best = (f64::INFINITY, 0, 0);
        for (i, g) in inside_left.iter().enumerate() {
            let target = g.conj().inv();
            for (j, o) in outside.iter().enumerate() {
                let d = (o - target).norm();
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (d, i, j) = best;
        residual = residual.max(d);
        let g = inside_left.swap_remove(i);
        let o = outside.swap_remove(j);
        // average the two estimates of the inside member
        raw.push(((g + o.conj().inv()) * 0.5, false));
    }

    while let Some(u) = unimodular.pop() {
        let (j, d) = unimodular
            .iter()
            .enumerate()
            .map(|(j, v)| (j, (v - u).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("even count");
        let v = unimodular.swap_remove(j);
        // paired unimodular roots are two copies of one zero; their spread
        // reflects the conditioning of a double root, not pairing error
        let _ = d;
        let m = (u + v) * 0.5;
        raw.push((m / m.norm(), true));
    }

    if residual > tol {
        return Err(Error::PairingFailed { residual, tol });
    }

    let mut pairs: Vec<RootPair> = Vec::new();
    for (r, uni) in raw {
        match pairs.iter_mut().find(|p| p.unimodular == uni && (p.root - r).norm() < MERGE_DISTANCE) {
            Some(p) => p.multiplicity += 1,
            None => pairs.push(RootPair { root: r, multiplicity: 1, unimodular: uni }),
        }
    }
    Ok(RootPairing { pairs, leading, residual })
}

/// Number of non-trivially different solutions, `ceil(prod (m_l + 1) / 2)`
/// over the non-unimodular pairs.
pub fn count_nontrivial(rp: &RootPairing) -> u64 {
    let prod: u64 = rp.pairs.iter().filter(|p| !p.unimodular).map(|p| p.multiplicity as u64 + 1).product();
    prod.div_ceil(2)
}

/// All solutions modulo rotation and conjugate reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub solutions: Vec<Signal>,
    /// Bit `i` set means the outside member of choice slot `i` was selected.
    pub provenance: Vec<u64>,
    pub pairing: RootPairing,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

fn build_candidate(beta: &[C64], leading: C64, n: usize, a0: f64) -> Result<Signal> {
    if beta.is_empty() {
        return Signal::new(vec![C64::new(a0.sqrt(), 0.0)]);
    }
    let p = poly::from_roots(beta);
    debug_assert_eq!(p.len(), n);
    // |x'[0] x'[N-1]| = |a[N-1]| fixes |c|^2 = |a[N-1]| / prod |beta|
    let prod: f64 = beta.iter().map(|b| b.norm()).product();
    let c = (leading.norm() / prod).sqrt();
    Ok(Signal::new(p.into_iter().map(|v| v * c).collect())?.normalize_phase_first())
}

/// Enumerate every selection from the reflected pairs and return the distinct
/// solutions, each normalized so its first non-zero entry is real positive.
pub fn enumerate_solutions(p: &AutocorrPoly, tol: Option<f64>) -> Result<SolutionSet> {
    let pairing = find_and_pair_roots(p, tol)?;
    let n = p.signal_len();
    let a0 = p.lag(0).re;
    let fixed = pairing.fixed_roots();
    let slots = pairing.choice_slots();
    if slots.len() > 40 {
        return Err(Error::InvalidInput(format!("{} free pairs are too many to enumerate", slots.len())));
    }
    // flipping every slot is the conjugate reflection, so slot 0 stays on the inside member
    let free = slots.len().saturating_sub(1);
    let mut solutions: Vec<Signal> = Vec::new();
    let mut provenance = Vec::new();
    for mask in 0u64..(1u64 << free) {
        let bits = mask << 1;
        let mut beta = fixed.clone();
        beta.extend(slots.iter().enumerate().map(|(i, s)| {
            if bits >> i & 1 == 1 {
                s.reflected()
            } else {
                s.root
            }
        }));
        let cand = build_candidate(&beta, pairing.leading, n, a0)?;
        let dup = solutions
            .iter()
            .any(|s| rel_dist_up_to(s, &cand, TrivialGroup::ROTATION_REFLECTION).map_or(false, |d| d < DEDUP_TOL));
        if !dup {
            solutions.push(cand);
            provenance.push(bits);
        }
    }
    Ok(SolutionSet { solutions, provenance, pairing })
}

/// Whether the support has two distinct index pairs with the same non-zero difference.
pub fn has_collision(x: &Signal) -> bool {
    let max = x.norm_inf();
    if max == 0.0 {
        return false;
    }
    let support: Vec<usize> =
        x.values().iter().enumerate().filter(|(_, v)| v.norm() > 1e-12 * max).map(|(i, _)| i).collect();
    let mut seen = vec![false; x.len()];
    for (a, &i) in support.iter().enumerate() {
        for &j in &support[a + 1..] {
            let d = j - i;
            if seen[d] {
                return true;
            }
            seen[d] = true;
        }
    }
    false
}

/// True iff every zero of `Q(z) = sum_n x[n] z^{N-1-n}` lies strictly inside the unit circle.
pub fn is_minimum_phase(x: &Signal) -> bool {
    let v = x.values();
    let max = x.norm_inf();
    if max == 0.0 || v[0].norm() <= 1e-14 * max {
        return false;
    }
    let q: Vec<C64> = v.iter().rev().copied().collect();
    poly::roots(&q).iter().all(|r| r.norm() < 1.0 - 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::measure_classical_full;
    use crate::signal::{dist_up_to, random_signal, Rng, SignalKind};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn autocorr_from_two_ones() {
        let y = measure_classical_full(&Signal::from_real(&[1.0, 1.0])).unwrap();
        let p = autocorr_from_measurements(&y).unwrap();
        for (a, b) in p.coeffs().iter().zip([1.0, 2.0, 1.0]) {
            assert!((a - c(b)).norm() < 1e-12);
        }
    }

    #[test]
    fn autocorr_of_delta_is_unit_vector() {
        let y = measure_classical_full(&Signal::from_real(&[1.0, 0.0, 0.0])).unwrap();
        let p = autocorr_from_measurements(&y).unwrap();
        for (i, a) in p.coeffs().iter().enumerate() {
            assert!((a - c(if i == 2 { 1.0 } else { 0.0 })).norm() < 1e-12);
        }
    }

    #[test]
    fn autocorr_rejects_other_models() {
        let x = Signal::from_real(&[1.0, 2.0, 3.0]);
        let y = crate::forward::measure_classical(&x, 4, 4).unwrap();
        assert!(matches!(autocorr_from_measurements(&y), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn autocorr_round_trip_random() {
        let x = random_signal(9, SignalKind::ComplexNormal, &mut Rng::new(4)).unwrap();
        let p = autocorr_from_measurements(&measure_classical_full(&x).unwrap()).unwrap();
        let a = autocorrelation(&x).unwrap();
        for (u, v) in p.coeffs().iter().zip(&a) {
            assert!((u - v).norm() < 1e-10 * x.norm_sqr());
        }
    }

    #[test]
    fn pairing_small_cases() {
        let rp = find_and_pair_roots(&AutocorrPoly::from_signal(&Signal::from_real(&[1.0, 1.0])).unwrap(), None)
            .unwrap();
        assert_eq!(rp.pairs.len(), 1);
        assert!(rp.pairs[0].unimodular);
        assert!((rp.pairs[0].root - c(-1.0)).norm() < 1e-6);
        assert_eq!(rp.total_multiplicity(), 2);

        let rp = find_and_pair_roots(&AutocorrPoly::from_signal(&Signal::from_real(&[2.0, 1.0])).unwrap(), None)
            .unwrap();
        assert_eq!(rp.pairs.len(), 1);
        assert!(!rp.pairs[0].unimodular);
        assert!((rp.pairs[0].root - c(-0.5)).norm() < 1e-12);
        assert!((rp.pairs[0].reflected() - c(-2.0)).norm() < 1e-12);

        let rp = find_and_pair_roots(&AutocorrPoly::from_signal(&Signal::from_real(&[3.0])).unwrap(), None)
            .unwrap();
        assert!(rp.pairs.is_empty());
    }

    #[test]
    fn pairing_rejects_invalid_magnitudes() {
        // not an autocorrelation: the roots do not come in reflected pairs
        let bad = AutocorrPoly { coeffs: vec![c(1.0), c(3.0), c(1.0), c(7.0), c(2.0)] };
        assert!(matches!(find_and_pair_roots(&bad, None), Err(Error::PairingFailed { .. })));
        assert!(AutocorrPoly::new(vec![c(1.0), c(3.0), c(2.0)]).is_err());
    }

    #[test]
    fn count_formula() {
        let pair = |m, u| RootPair { root: c(0.5), multiplicity: m, unimodular: u };
        let rp = |pairs| RootPairing { pairs, leading: c(1.0), residual: 0.0 };
        assert_eq!(count_nontrivial(&rp(vec![pair(2, true), pair(1, true)])), 1);
        assert_eq!(count_nontrivial(&rp(vec![pair(1, false)])), 1);
        assert_eq!(count_nontrivial(&rp(vec![pair(1, false), pair(1, false)])), 2);
        assert_eq!(count_nontrivial(&rp(vec![pair(2, false)])), 2);
        assert_eq!(count_nontrivial(&rp(vec![pair(2, false), pair(2, false)])), 5);
    }

    #[test]
    fn enumerate_two_ones_is_unique() {
        let x = Signal::from_real(&[1.0, 1.0]);
        let set = enumerate_solutions(&AutocorrPoly::from_signal(&x).unwrap(), None).unwrap();
        assert_eq!(set.len(), 1);
        assert!(dist_up_to(&x, &set.solutions[0], TrivialGroup::ROTATION).unwrap() < 1e-7);
    }

    #[test]
    fn enumerate_length_two_is_unique() {
        let mut rng = Rng::new(8);
        for _ in 0..10 {
            let x = random_signal(2, SignalKind::ComplexNormal, &mut rng).unwrap();
            let set = enumerate_solutions(&AutocorrPoly::from_signal(&x).unwrap(), None).unwrap();
            assert_eq!(set.len(), 1);
            assert!(rel_dist_up_to(&x, &set.solutions[0], TrivialGroup::ROTATION_REFLECTION).unwrap() < 1e-9);
        }
    }

    #[test]
    fn enumerate_finds_the_known_ambiguous_pair() {
        let s3 = 3f64.sqrt();
        let x1 = Signal::from_real(&[1.0, 0.0, -2.0, 0.0, -2.0]);
        let x2 = Signal::from_real(&[1.0 - s3, 0.0, 1.0, 0.0, 1.0 + s3]);
        let set = enumerate_solutions(&AutocorrPoly::from_signal(&x1).unwrap(), None).unwrap();
        for target in [&x1, &x2] {
            let best = set
                .solutions
                .iter()
                .map(|s| dist_up_to(target, s, TrivialGroup::FULL).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "best {best}");
        }
        assert!(dist_up_to(&x1, &x2, TrivialGroup::FULL).unwrap() > 0.5);
    }

    #[test]
    fn collisions() {
        let x = Signal::from_real(&[0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        assert!(has_collision(&x));
        assert!(!has_collision(&Signal::from_real(&[1.0, 0.0, 1.0, 1.0])));
        assert!(!has_collision(&Signal::from_real(&[0.0, 1.0, 0.0])));
        assert!(has_collision(&Signal::from_real(&[1.0, 0.0, 1.0, 0.0, 1.0])));
    }

    #[test]
    fn minimum_phase_predicate() {
        assert!(is_minimum_phase(&Signal::from_real(&[2.0, 1.0])));
        assert!(!is_minimum_phase(&Signal::from_real(&[1.0, 2.0])));
        assert!(is_minimum_phase(&Signal::from_real(&[1.0, 0.0, 0.0])));
        assert!(!is_minimum_phase(&Signal::from_real(&[0.0, 1.0])));
        // root exactly on the circle is not strictly inside
        assert!(!is_minimum_phase(&Signal::from_real(&[2.0, 1.0, -1.0])));
    }
}
