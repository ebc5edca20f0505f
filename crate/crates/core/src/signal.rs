//! Complex signal container, trivial-ambiguity-aware distances and seeded
//! random generation.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite complex signal, either 1D or a row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<C64>,
    shape: Option<(usize, usize)>,
}

impl Signal {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("signal must have at least one entry".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("signal entries must be finite".into()));
        }
        Ok(Self { values, shape: None })
    }

    pub fn new_2d(values: Vec<C64>, n1: usize, n2: usize) -> Result<Self> {
        if n1 * n2 != values.len() {
            return Err(Error::DimensionMismatch { expected: n1 * n2, got: values.len() });
        }
        let mut s = Self::new(values)?;
        s.shape = Some((n1, n2));
        Ok(s)
    }

    /// Real-valued signal. Panics on non-finite input or an empty slice.
    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| C64::new(v, 0.0)).collect())
            .expect("real signal must be non-empty and finite")
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); n.max(1)], shape: None }
    }

    /// Same shape as `self`, new values. Used internally by iterative solvers.
    pub(crate) fn with_values(&self, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, shape: self.shape }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn is_2d(&self) -> bool {
        self.shape.is_some()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Inner product `<self, other> = sum conj(self[n]) other[n]`.
    pub fn inner(&self, other: &Signal) -> C64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, c: C64) -> Signal {
        self.with_values(self.values.iter().map(|v| v * c).collect())
    }

    /// Multiply by `e^{j phi}`.
    pub fn rotated(&self, phi: f64) -> Signal {
        self.scaled(C64::from_polar(1.0, phi))
    }

    /// Conjugate reflection `x'[n] = conj(x[N-1-n])`; for 2D grids both axes are reversed.
    pub fn conj_reflected(&self) -> Signal {
        self.with_values(self.values.iter().rev().map(|v| v.conj()).collect())
    }

    /// Circular shift `x'[n] = x[n - s mod N]` (per axis for 2D grids).
    pub fn circ_shifted(&self, s: usize) -> Signal {
        match self.shape {
            None => {
                let n = self.len();
                self.with_values((0..n).map(|i| self.values[(i + n - s % n) % n]).collect())
            }
            Some((n1, n2)) => self.circ_shifted_2d(s / n2 % n1, s % n2),
        }
    }

    fn circ_shifted_2d(&self, s1: usize, s2: usize) -> Signal {
        let (n1, n2) = self.shape.expect("2D shift on 1D signal");
        let mut out = vec![C64::new(0.0, 0.0); n1 * n2];
        for r in 0..n1 {
            for c in 0..n2 {
                out[((r + s1) % n1) * n2 + (c + s2) % n2] = self.values[r * n2 + c];
            }
        }
        self.with_values(out)
    }

    /// Rotate so the first entry with magnitude above `1e-12 * max` is real positive.
    pub fn normalize_phase_first(&self) -> Signal {
        let max = self.norm_inf();
        match self.values.iter().find(|v| v.norm() > 1e-12 * max) {
            Some(v) => self.rotated(-v.arg()),
            None => self.clone(),
        }
    }

    /// Rotate so the largest-magnitude entry is real positive.
    pub fn normalize_phase_largest(&self) -> Signal {
        let idx = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.rotated(-self.values[idx].arg())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,re,im\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{:.16e},{:.16e}", i, v.re, v.im);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Signal> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected index,re,im", lineno + 1)));
            }
            let idx: usize = cols[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index", lineno + 1)))?;
            if idx != values.len() {
                return Err(Error::Parse(format!("line {}: indices must be consecutive", lineno + 1)));
            }
            let re: f64 = cols[1].parse().map_err(|_| Error::Parse(format!("line {}: bad re", lineno + 1)))?;
            let im: f64 = cols[2].parse().map_err(|_| Error::Parse(format!("line {}: bad im", lineno + 1)))?;
            values.push(C64::new(re, im));
        }
        Signal::new(values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SignalJson::from(self)).expect("signal serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Signal> {
        let raw: SignalJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct SignalJson {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<(usize, usize)>,
}

impl From<&Signal> for SignalJson {
    fn from(s: &Signal) -> Self {
        Self {
            n: s.len(),
            re: s.values.iter().map(|v| v.re).collect(),
            im: s.values.iter().map(|v| v.im).collect(),
            shape: s.shape,
        }
    }
}

impl TryFrom<SignalJson> for Signal {
    type Error = Error;

    fn try_from(raw: SignalJson) -> Result<Signal> {
        if raw.re.len() != raw.n || raw.im.len() != raw.n {
            return Err(Error::Parse(format!(
                "n = {} but re/im have {}/{} entries",
                raw.n,
                raw.re.len(),
                raw.im.len()
            )));
        }
        let values = raw.re.iter().zip(&raw.im).map(|(&r, &i)| C64::new(r, i)).collect();
        match raw.shape {
            Some((n1, n2)) => Signal::new_2d(values, n1, n2),
            None => Signal::new(values),
        }
    }
}

/// Which trivial ambiguities a comparison should quotient out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrivialGroup {
    pub rotation: bool,
    pub reflection: bool,
    pub shift: bool,
}

impl TrivialGroup {
    pub const ROTATION: TrivialGroup = TrivialGroup { rotation: true, reflection: false, shift: false };
    pub const ROTATION_REFLECTION: TrivialGroup =
        TrivialGroup { rotation: true, reflection: true, shift: false };
    pub const FULL: TrivialGroup = TrivialGroup { rotation: true, reflection: true, shift: true };
    pub const NONE: TrivialGroup = TrivialGroup { rotation: false, reflection: false, shift: false };
}

/// Minimum of `||x - T(z)||` over the group elements enabled in `g`.
///
/// Rotations are minimized in closed form (optimal phase `arg <z,x>`); shifts and
/// conjugate reflections are searched exhaustively.
pub fn dist_up_to(x: &Signal, z: &Signal, g: TrivialGroup) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: z.len() });
    }
    // The optimal phase aligns t with x; evaluating the residual at that phase
    // avoids the cancellation in sqrt(|x|^2 + |t|^2 - 2|<x,t>|) near zero.
    let dist = |t: &Signal| -> f64 {
        let u = if g.rotation {
            let c = t.inner(x);
            if c.norm() > 0.0 { c / c.norm() } else { C64::new(1.0, 0.0) }
        } else {
            C64::new(1.0, 0.0)
        };
        x.values.iter().zip(&t.values).map(|(a, b)| (a - u * b).norm_sqr()).sum::<f64>().sqrt()
    };
    let mut bases = vec![z.clone()];
    if g.reflection {
        bases.push(z.conj_reflected());
    }
    let mut best = f64::INFINITY;
    for base in &bases {
        if g.shift {
            for s in 0..z.len() {
                best = best.min(dist(&base.circ_shifted(s)));
            }
        } else {
            best = best.min(dist(base));
        }
    }
    Ok(best)
}

/// Relative distance `dist_up_to(x, z, g) / ||x||` (absolute when `x = 0`).
pub fn rel_dist_up_to(x: &Signal, z: &Signal, g: TrivialGroup) -> Result<f64> {
    let d = dist_up_to(x, z, g)?;
    let n = x.norm();
    Ok(if n > 0.0 { d / n } else { d })
}

/// Autocorrelation `a[n] = sum_m conj(x[m]) x[m+n]` for lags `-N+1..=N-1`,
/// stored at index `n + N - 1`.
pub fn autocorrelation(x: &Signal) -> Result<Vec<C64>> {
    if x.is_2d() {
        return Err(Error::InvalidInput("autocorrelation expects a 1D signal".into()));
    }
    let v = x.values();
    let n = v.len();
    let mut a = vec![C64::new(0.0, 0.0); 2 * n - 1];
    for lag in 0..n {
        let s: C64 = (0..n - lag).map(|m| v[m].conj() * v[m + lag]).sum();
        a[n - 1 + lag] = s;
        a[n - 1 - lag] = s.conj();
    }
    a[n - 1] = C64::new(a[n - 1].re, 0.0);
    Ok(a)
}

/// Seeded random stream. Identical seeds give identical sequences.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; depends only on the parent seed and `index`.
    pub fn child(&self, index: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(index.wrapping_add(1));
        Rng { seed: self.seed, inner }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn complex_normal(&mut self) -> C64 {
        let re = self.normal();
        C64::new(re, self.normal())
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `k` distinct indices from `0..n`, sorted ascending.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        idx.sort_unstable();
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// Independent standard normal real and imaginary parts.
    ComplexNormal,
    RealNormal,
    /// Complex normal values on a uniformly random support of the given size.
    Sparse(usize),
}

pub fn random_signal(n: usize, kind: SignalKind, rng: &mut Rng) -> Result<Signal> {
    if n == 0 {
        return Err(Error::InvalidInput("signal length must be positive".into()));
    }
    let values = match kind {
        SignalKind::ComplexNormal => (0..n).map(|_| rng.complex_normal()).collect(),
        SignalKind::RealNormal => (0..n).map(|_| C64::new(rng.normal(), 0.0)).collect(),
        SignalKind::Sparse(s) => {
            if s > n {
                return Err(Error::InvalidInput(format!("sparsity {s} exceeds length {n}")));
            }
            let mut v = vec![C64::new(0.0, 0.0); n];
            for i in rng.subset(n, s) {
                v[i] = rng.complex_normal();
            }
            v
        }
    };
    Signal::new(values)
}
