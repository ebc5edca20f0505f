//! Phaseless measurement operators and deterministic mask constructions.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{dft2, dft_adjoint_slice, dft_slice};
use crate::signal::{Rng, Signal};

pub(crate) mod complex_vec {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Parts {
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        Parts { re: v.iter().map(|c| c.re).collect(), im: v.iter().map(|c| c.im).collect() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let p = Parts::deserialize(d)?;
        if p.re.len() != p.im.len() {
            return Err(serde::de::Error::custom("re/im length mismatch"));
        }
        Ok(p.re.into_iter().zip(p.im).map(|(r, i)| C64::new(r, i)).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct MaskJson(#[serde(with = "complex_vec")] Vec<C64>);

/// `M >= 1` known diagonal masks of a common length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MaskJson>", into = "Vec<MaskJson>")]
pub struct MaskSet {
    masks: Vec<Vec<C64>>,
}

impl TryFrom<Vec<MaskJson>> for MaskSet {
    type Error = Error;
    fn try_from(v: Vec<MaskJson>) -> Result<Self> {
        MaskSet::new(v.into_iter().map(|m| m.0).collect())
    }
}

impl From<MaskSet> for Vec<MaskJson> {
    fn from(m: MaskSet) -> Self {
        m.masks.into_iter().map(MaskJson).collect()
    }
}

impl MaskSet {
    pub fn new(masks: Vec<Vec<C64>>) -> Result<Self> {
        let Some(first) = masks.first() else {
            return Err(Error::InvalidInput("a mask set needs at least one mask".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidInput("masks must be non-empty".into()));
        }
        if let Some(bad) = masks.iter().find(|m| m.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
        }
        Ok(Self { masks })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Common mask length.
    pub fn signal_len(&self) -> usize {
        self.masks[0].len()
    }

    pub fn masks(&self) -> &[Vec<C64>] {
        &self.masks
    }

    pub fn mask(&self, m: usize) -> &[C64] {
        &self.masks[m]
    }
}

fn real_mask(f: impl Fn(usize) -> f64, n: usize) -> Vec<C64> {
    (0..n).map(|i| C64::new(f(i), 0.0)).collect()
}

/// The two masks `d_1 = 1` and `d_2 = (0, 1, ..., 1)`.
pub fn masks_fixed(n: usize) -> Result<MaskSet> {
    MaskSet::new(vec![real_mask(|_| 1.0, n), real_mask(|i| if i == 0 { 0.0 } else { 1.0 }, n)])
}

/// All-ones mask followed by the left block `0..L` and the right block `L..N`.
pub fn masks_block(n: usize, l: usize) -> Result<MaskSet> {
    if l < 1 || l + 2 > n {
        return Err(Error::InvalidInput(format!("block split needs 1 <= L <= N-2, got L={l}, N={n}")));
    }
    MaskSet::new(vec![
        real_mask(|_| 1.0, n),
        real_mask(|i| if i < l { 1.0 } else { 0.0 }, n),
        real_mask(|i| if i >= l { 1.0 } else { 0.0 }, n),
    ])
}

/// `d_0 = 1`, `d_1[n] = 1 + e^{2 pi j s n / N}`, `d_2[n] = 1 + e^{2 pi j (s n / N - 1/4)}`.
pub fn masks_modulated(n: usize, s: usize) -> Result<MaskSet> {
    let one = C64::new(1.0, 0.0);
    let d1 = (0..n).map(|i| one + C64::from_polar(1.0, 2.0 * PI * (s * i) as f64 / n as f64)).collect();
    let d2 = (0..n)
        .map(|i| one + C64::from_polar(1.0, 2.0 * PI * ((s * i) as f64 / n as f64 - 0.25)))
        .collect();
    MaskSet::new(vec![vec![one; n], d1, d2])
}

/// STFT window: `taps` holds `d[0..W]`, `d[n] = 0` for `n >= W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    #[serde(with = "complex_vec")]
    taps: Vec<C64>,
    hop: usize,
    periodic: bool,
}

impl WindowSpec {
    pub fn new(taps: Vec<C64>, hop: usize, periodic: bool) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidInput("window length W must be at least 1".into()));
        }
        if hop == 0 {
            return Err(Error::InvalidInput("hop L must be at least 1".into()));
        }
        Ok(Self { taps, hop, periodic })
    }

    pub fn rectangular(w: usize, hop: usize, periodic: bool) -> Result<Self> {
        Self::new(vec![C64::new(1.0, 0.0); w], hop, periodic)
    }

    /// Gaussian taps `exp(-(n - c)^2 / (2 sigma^2))` centred at `c = (W-1)/2`.
    pub fn gaussian(sigma: f64, w: usize, hop: usize, periodic: bool) -> Result<Self> {
        let c = (w as f64 - 1.0) / 2.0;
        let taps = (0..w)
            .map(|i| {
                let t = i as f64 - c;
                C64::new((-t * t / (2.0 * sigma * sigma)).exp(), 0.0)
            })
            .collect();
        Self::new(taps, hop, periodic)
    }

    pub fn width(&self) -> usize {
        self.taps.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn with_hop(&self, hop: usize) -> Result<Self> {
        Self::new(self.taps.clone(), hop, self.periodic)
    }

    /// `d[i]` for a signal of length `n`, wrapping mod `n` when periodic.
    pub fn tap(&self, i: isize, n: usize) -> C64 {
        let idx = if self.periodic { i.rem_euclid(n as isize) } else { i };
        if idx >= 0 && (idx as usize) < self.taps.len() {
            self.taps[idx as usize]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// Number of frames `ceil(N / L)`.
    pub fn frames(&self, n: usize) -> usize {
        n.div_ceil(self.hop)
    }

    /// The frame-`m` multiplier `n -> d[mL - n]`.
    pub fn frame_multiplier(&self, m: usize, n: usize) -> Vec<C64> {
        (0..n).map(|i| self.tap((m * self.hop) as isize - i as isize, n)).collect()
    }
}

/// Measurement model descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Classical { n: usize, n_tilde: usize, k: usize },
    Masked { n: usize, n_tilde: usize, k: usize, masks: MaskSet },
    Stft { n: usize, n_tilde: usize, k: usize, window: WindowSpec },
    Frog { n: usize, hop: usize },
    #[serde(rename = "2d")]
    TwoD { n1: usize, n2: usize, nt1: usize, nt2: usize, k1: usize, k2: usize },
}

impl Model {
    /// Number of unknowns.
    pub fn signal_len(&self) -> usize {
        match self {
            Model::Classical { n, .. }
            | Model::Masked { n, .. }
            | Model::Stft { n, .. }
            | Model::Frog { n, .. } => *n,
            Model::TwoD { n1, n2, .. } => n1 * n2,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Classical { .. } => "classical",
            Model::Masked { .. } => "masked",
            Model::Stft { .. } => "stft",
            Model::Frog { .. } => "frog",
            Model::TwoD { .. } => "2d",
        }
    }

    /// Output dimensions `(rows, cols)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Model::Classical { k, .. } => (1, *k),
            Model::Masked { k, masks, .. } => (masks.len(), *k),
            Model::Stft { n, k, window, .. } => (window.frames(*n), *k),
            Model::Frog { n, hop } => (n.div_ceil(*hop), *n),
            Model::TwoD { k1, k2, .. } => (*k1, *k2),
        }
    }

    /// The linear frame operator for classical, masked and STFT models.
    pub fn frames(&self) -> Option<Frames> {
        match self {
            Model::Classical { n, n_tilde, k } => Some(Frames {
                multipliers: vec![vec![C64::new(1.0, 0.0); *n]],
                n_tilde: *n_tilde,
                k: *k,
            }),
            Model::Masked { n_tilde, k, masks, .. } => {
                Some(Frames { multipliers: masks.masks().to_vec(), n_tilde: *n_tilde, k: *k })
            }
            Model::Stft { n, n_tilde, k, window } => Some(Frames {
                multipliers: (0..window.frames(*n)).map(|m| window.frame_multiplier(m, *n)).collect(),
                n_tilde: *n_tilde,
                k: *k,
            }),
            Model::Frog { .. } | Model::TwoD { .. } => None,
        }
    }
}

/// Linear part of a masked-family model: `z -> { DFT(d_m .* z) }_m`.
///
/// Measurement `(m, k)` is `|<a_{m,k}, z>|^2` with
/// `a_{m,k}[n] = conj(d_m[n]) e^{2 pi j k n / n_tilde}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub multipliers: Vec<Vec<C64>>,
    pub n_tilde: usize,
    pub k: usize,
}

impl Frames {
    pub fn signal_len(&self) -> usize {
        self.multipliers[0].len()
    }

    pub fn rows(&self) -> usize {
        self.multipliers.len()
    }

    /// Row-major `M x K` complex transform.
    pub fn forward(&self, z: &[C64]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.k);
        let mut buf = vec![C64::new(0.0, 0.0); z.len()];
        for d in &self.multipliers {
            for ((b, zi), di) in buf.iter_mut().zip(z).zip(d) {
                *b = zi * di;
            }
            out.extend(dft_slice(&buf, self.n_tilde, self.k));
        }
        out
    }

    /// Adjoint of [`Frames::forward`].
    pub fn adjoint(&self, v: &[C64]) -> Vec<C64> {
        let n = self.signal_len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (m, d) in self.multipliers.iter().enumerate() {
            let back = dft_adjoint_slice(&v[m * self.k..(m + 1) * self.k], self.n_tilde, n);
            for ((o, b), di) in out.iter_mut().zip(back).zip(d) {
                *o += b * di.conj();
            }
        }
        out
    }

    pub fn intensities(&self, z: &[C64]) -> Vec<f64> {
        self.forward(z).iter().map(|v| v.norm_sqr()).collect()
    }

    /// The measurement vector `a_{m,k}`.
    pub fn measurement_vector(&self, m: usize, k: usize) -> Vec<C64> {
        self.multipliers[m]
            .iter()
            .enumerate()
            .map(|(n, d)| {
                let e = C64::from_polar(1.0, 2.0 * PI * ((k * n) % self.n_tilde) as f64 / self.n_tilde as f64);
                d.conj() * e
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub sigma: f64,
    pub seed: u64,
}

/// Nonnegative intensity data plus the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    y: Vec<f64>,
    rows: usize,
    cols: usize,
    model: Model,
    noise: Option<NoiseRecord>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    model: Model,
    rows: usize,
    cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseRecord>,
}

impl MeasurementSet {
    pub fn new(y: Vec<f64>, model: Model) -> Result<Self> {
        let (rows, cols) = model.dims();
        if y.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("measurements must be finite".into()));
        }
        Ok(Self { y, rows, cols, model, noise: None })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.y[m * self.cols..(m + 1) * self.cols]
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.y[m * self.cols + k]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn noise(&self) -> Option<NoiseRecord> {
        self.noise
    }

    pub fn signal_len(&self) -> usize {
        self.model.signal_len()
    }

    /// Same model, intensities multiplied by `c`.
    pub fn scaled(&self, c: f64) -> MeasurementSet {
        MeasurementSet { y: self.y.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Additive i.i.d. Gaussian noise of standard deviation `sigma` on every
    /// intensity, clamped at zero. Reproducible from `seed`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> MeasurementSet {
        let mut rng = Rng::new(seed);
        let y = self.y.iter().map(|v| (v + sigma * rng.normal()).max(0.0)).collect();
        MeasurementSet { y, noise: Some(NoiseRecord { sigma, seed }), ..self.clone() }
    }

    pub fn descriptor_json(&self) -> String {
        let d = Descriptor { model: self.model.clone(), rows: self.rows, cols: self.cols, noise: self.noise };
        serde_json::to_string_pretty(&d).expect("descriptor serialization cannot fail")
    }

    /// One CSV line per row `m`, columns `k`.
    pub fn matrix_csv(&self) -> String {
        let mut s = String::new();
        for m in 0..self.rows {
            let line: Vec<String> = self.row(m).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn from_parts(descriptor_json: &str, matrix_csv: &str) -> Result<MeasurementSet> {
        let d: Descriptor = serde_json::from_str(descriptor_json)?;
        let mut y = Vec::with_capacity(d.rows * d.cols);
        let mut rows = 0;
        for (i, line) in matrix_csv.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let before = y.len();
            for tok in line.split(',') {
                y.push(
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("line {}: bad value {tok:?}", i + 1)))?,
                );
            }
            if y.len() - before != d.cols {
                return Err(Error::Parse(format!("line {}: expected {} columns", i + 1, d.cols)));
            }
            rows += 1;
        }
        if rows != d.rows {
            return Err(Error::DimensionMismatch { expected: d.rows, got: rows });
        }
        let mut set = MeasurementSet::new(y, d.model)?;
        if (set.rows, set.cols) != (d.rows, d.cols) {
            return Err(Error::Parse("descriptor dimensions disagree with the model".into()));
        }
        set.noise = d.noise;
        Ok(set)
    }
}

fn require_1d(x: &Signal) -> Result<()> {
    if x.is_2d() {
        Err(Error::InvalidInput("expected a 1D signal".into()))
    } else {
        Ok(())
    }
}

fn check_oversampling(n_tilde: usize, k: usize) -> Result<()> {
    if n_tilde == 0 || k == 0 {
        Err(Error::InvalidInput("n_tilde and K must be positive".into()))
    } else {
        Ok(())
    }
}

/// Apply the model to `x` (FROG uses `x` for both pulses).
pub fn measure(x: &Signal, model: &Model) -> Result<MeasurementSet> {
    if let Model::TwoD { n1, n2, nt1, nt2, k1, k2 } = *model {
        if x.shape() != Some((n1, n2)) {
            return Err(Error::ModelMismatch("2D model needs a grid of matching shape".into()));
        }
        let v = dft2(x.values(), (n1, n2), (nt1, nt2), (k1, k2));
        return MeasurementSet::new(v.iter().map(|c| c.norm_sqr()).collect(), model.clone());
    }
    require_1d(x)?;
    if x.len() != model.signal_len() {
        return Err(Error::DimensionMismatch { expected: model.signal_len(), got: x.len() });
    }
    if let Model::Frog { hop, .. } = *model {
        return measure_frog(x, x, hop);
    }
    let frames = model.frames().expect("masked-family model");
    MeasurementSet::new(frames.intensities(x.values()), model.clone())
}

/// `y[k] = |sum_n x[n] e^{-2 pi j k n / n_tilde}|^2`.
pub fn measure_classical(x: &Signal, n_tilde: usize, k: usize) -> Result<MeasurementSet> {
    require_1d(x)?;
    check_oversampling(n_tilde, k)?;
    measure(x, &Model::Classical { n: x.len(), n_tilde, k })
}

/// Classical measurements with the default `n_tilde = K = 2N - 1`.
pub fn measure_classical_full(x: &Signal) -> Result<MeasurementSet> {
    let m = 2 * x.len() - 1;
    measure_classical(x, m, m)
}

pub fn measure_masked(x: &Signal, masks: &MaskSet, n_tilde: usize, k: usize) -> Result<MeasurementSet> {
    require_1d(x)?;
    check_oversampling(n_tilde, k)?;
    if masks.signal_len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: masks.signal_len() });
    }
    measure(x, &Model::Masked { n: x.len(), n_tilde, k, masks: masks.clone() })
}

/// `y[m,k] = |sum_n x[n] d[mL - n] e^{-2 pi j k n / n_tilde}|^2`, `m < ceil(N/L)`.
pub fn measure_stft(x: &Signal, window: &WindowSpec, n_tilde: usize, k: usize) -> Result<MeasurementSet> {
    require_1d(x)?;
    check_oversampling(n_tilde, k)?;
    if window.width() > x.len() {
        return Err(Error::InvalidInput(format!(
            "window length {} exceeds signal length {}",
            window.width(),
            x.len()
        )));
    }
    measure(x, &Model::Stft { n: x.len(), n_tilde, k, window: window.clone() })
}

/// FROG product frames `x_m[n] = x1[n] x2[(n + mL) mod N]`.
pub fn frog_frames(x1: &Signal, x2: &Signal, hop: usize) -> Result<Vec<Vec<C64>>> {
    require_1d(x1)?;
    require_1d(x2)?;
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch { expected: x1.len(), got: x2.len() });
    }
    if hop == 0 {
        return Err(Error::InvalidInput("hop L must be at least 1".into()));
    }
    let n = x1.len();
    let (a, b) = (x1.values(), x2.values());
    Ok((0..n.div_ceil(hop))
        .map(|m| (0..n).map(|i| a[i] * b[(i + m * hop) % n]).collect())
        .collect())
}

/// Power spectra `|DFT_N(frame)|^2` of a stack of frames, row-major.
pub fn frame_spectrogram(frames: &[Vec<C64>]) -> Vec<f64> {
    frames
        .iter()
        .flat_map(|f| dft_slice(f, f.len(), f.len()).into_iter().map(|v| v.norm_sqr()))
        .collect()
}

pub fn measure_frog(x1: &Signal, x2: &Signal, hop: usize) -> Result<MeasurementSet> {
    let frames = frog_frames(x1, x2, hop)?;
    MeasurementSet::new(frame_spectrogram(&frames), Model::Frog { n: x1.len(), hop })
}

/// Squared magnitude of the separable 2D oversampled DFT.
pub fn measure_2d(x: &Signal, nt1: usize, nt2: usize, k1: usize, k2: usize) -> Result<MeasurementSet> {
    let Some((n1, n2)) = x.shape() else {
        return Err(Error::InvalidInput("measure_2d expects a 2D signal".into()));
    };
    check_oversampling(nt1, k1)?;
    check_oversampling(nt2, k2)?;
    measure(x, &Model::TwoD { n1, n2, nt1, nt2, k1, k2 })
}

pub fn measure_2d_full(x: &Signal) -> Result<MeasurementSet> {
    let (n1, n2) = x.shape().ok_or_else(|| Error::InvalidInput("measure_2d expects a 2D signal".into()))?;
    measure_2d(x, 2 * n1 - 1, 2 * n2 - 1, 2 * n1 - 1, 2 * n2 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{random_signal, SignalKind};

    fn rand_x(n: usize, seed: u64) -> Signal {
        random_signal(n, SignalKind::ComplexNormal, &mut Rng::new(seed)).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn classical_of_delta_is_flat() {
        let y = measure_classical_full(&Signal::from_real(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(y.y().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn masked_with_unit_mask_matches_classical() {
        let x = rand_x(6, 1);
        let ones = MaskSet::new(vec![vec![C64::new(1.0, 0.0); 6]]).unwrap();
        let a = measure_masked(&x, &ones, 11, 11).unwrap();
        let b = measure_classical_full(&x).unwrap();
        assert_eq!(a.y(), b.y());
    }

    #[test]
    fn point_mask_isolates_one_sample() {
        let x = rand_x(5, 2);
        let mut e = vec![C64::new(0.0, 0.0); 5];
        e[3] = C64::new(1.0, 0.0);
        let y = measure_masked(&x, &MaskSet::new(vec![e]).unwrap(), 9, 9).unwrap();
        let expect = x.values()[3].norm_sqr();
        assert!(y.y().iter().all(|v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn fixed_masks_give_classical_of_truncated_signal() {
        let x = rand_x(7, 3);
        let masks = masks_fixed(7).unwrap();
        let y = measure_masked(&x, &masks, 13, 13).unwrap();
        let mut tail = x.values().to_vec();
        tail[0] = C64::new(0.0, 0.0);
        let y_tail = measure_classical_full(&Signal::new(tail).unwrap()).unwrap();
        assert!(max_diff(y.row(0), measure_classical_full(&x).unwrap().y()) < 1e-10);
        assert!(max_diff(y.row(1), y_tail.y()) < 1e-10);
        assert!(measure_masked(&x, &masks_fixed(6).unwrap(), 13, 13).is_err());
    }

    #[test]
    fn mask_constructors() {
        let f = masks_fixed(5).unwrap();
        assert_eq!(f.mask(1)[0], C64::new(0.0, 0.0));
        assert!(f.mask(0).iter().all(|v| *v == C64::new(1.0, 0.0)));
        assert!(f.masks().iter().all(|m| m.len() == 5));

        let b = masks_block(4, 1).unwrap();
        assert_eq!(b.len(), 3);
        let d1: Vec<f64> = b.mask(1).iter().map(|v| v.re).collect();
        assert_eq!(d1, vec![1.0, 0.0, 0.0, 0.0]);
        let b = masks_block(9, 4).unwrap();
        for i in 0..9 {
            assert_eq!(b.mask(1)[i] + b.mask(2)[i], C64::new(1.0, 0.0));
            assert_eq!(b.mask(1)[i] * b.mask(2)[i], C64::new(0.0, 0.0));
        }
        assert!(masks_block(4, 3).is_err());
        assert!(masks_block(4, 0).is_err());

        let m = masks_modulated(8, 0).unwrap();
        assert!(m.mask(1).iter().all(|v| (v - C64::new(2.0, 0.0)).norm() < 1e-15));
        let m = masks_modulated(8, 3).unwrap();
        assert!(m.mask(1).iter().all(|v| v.norm() <= 2.0 + 1e-15));
        assert!((m.mask(2)[0] - C64::new(1.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn stft_point_window_reads_temporal_magnitudes() {
        let x = rand_x(6, 4);
        let w = WindowSpec::new(vec![C64::new(1.0, 0.0)], 1, true).unwrap();
        let y = measure_stft(&x, &w, 6, 6).unwrap();
        for m in 0..6 {
            for k in 0..6 {
                assert!((y.get(m, k) - x.values()[m].norm_sqr()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stft_full_window_single_frame() {
        let x = rand_x(5, 5);
        let w = WindowSpec::rectangular(5, 5, true).unwrap();
        let y = measure_stft(&x, &w, 5, 5).unwrap();
        assert_eq!(y.rows(), 1);
        let c = measure_classical(&x, 5, 5).unwrap();
        assert!(max_diff(y.y(), c.y()) < 1e-10);
        assert!(measure_stft(&x, &WindowSpec::rectangular(6, 1, true).unwrap(), 5, 5).is_err());
        assert!(WindowSpec::rectangular(2, 0, true).is_err());
    }

    #[test]
    fn frog_with_flat_gate_is_spectrum() {
        let x1 = rand_x(6, 6);
        let ones = Signal::new(vec![C64::new(1.0, 0.0); 6]).unwrap();
        let y = measure_frog(&x1, &ones, 2).unwrap();
        let c = measure_classical(&x1, 6, 6).unwrap();
        for m in 0..y.rows() {
            assert!(max_diff(y.row(m), c.y()) < 1e-10);
        }
    }

    #[test]
    fn frog_of_delta() {
        let e = Signal::from_real(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        let y = measure_frog(&e, &e, 1).unwrap();
        for m in 0..5 {
            for k in 0..5 {
                assert_eq!(y.get(m, k), if m == 0 { 1.0 } else { 0.0 });
            }
        }
        assert!(measure_frog(&e, &rand_x(4, 0), 1).is_err());
    }

    #[test]
    fn two_d_delta_and_separability() {
        let mut v = vec![C64::new(0.0, 0.0); 6];
        v[0] = C64::new(1.0, 0.0);
        let y = measure_2d_full(&Signal::new_2d(v, 2, 3).unwrap()).unwrap();
        assert!(y.y().iter().all(|v| (v - 1.0).abs() < 1e-14));

        let u = rand_x(3, 7);
        let w = rand_x(4, 8);
        let grid: Vec<C64> = u.values().iter().flat_map(|a| w.values().iter().map(move |b| a * b)).collect();
        let y = measure_2d_full(&Signal::new_2d(grid, 3, 4).unwrap()).unwrap();
        let yu = measure_classical_full(&u).unwrap();
        let yw = measure_classical_full(&w).unwrap();
        for r in 0..5 {
            for c in 0..7 {
                let expect = yu.y()[r] * yw.y()[c];
                assert!((y.get(r, c) - expect).abs() < 1e-9 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn two_d_conj_reflection_invariance() {
        let x = Signal::new_2d(rand_x(12, 9).into_values(), 3, 4).unwrap();
        let a = measure_2d_full(&x).unwrap();
        let b = measure_2d_full(&x.conj_reflected()).unwrap();
        assert!(max_diff(a.y(), b.y()) < 1e-9);
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let y = measure_classical_full(&rand_x(5, 10)).unwrap();
        let a = y.with_noise(5.0, 3);
        let b = y.with_noise(5.0, 3);
        assert_eq!(a, b);
        assert!(a.y().iter().all(|v| *v >= 0.0));
        assert_eq!(a.noise(), Some(NoiseRecord { sigma: 5.0, seed: 3 }));
        assert_ne!(a, y.with_noise(5.0, 4));
    }

    #[test]
    fn measurement_serialization_round_trip() {
        let x = rand_x(6, 11);
        let w = WindowSpec::gaussian(1.0, 3, 2, true).unwrap();
        for set in [
            measure_classical_full(&x).unwrap(),
            measure_masked(&x, &masks_modulated(6, 1).unwrap(), 6, 6).unwrap(),
            measure_stft(&x, &w, 6, 6).unwrap().with_noise(0.1, 1),
            measure_frog(&x, &x, 2).unwrap(),
        ] {
            let back = MeasurementSet::from_parts(&set.descriptor_json(), &set.matrix_csv()).unwrap();
            assert_eq!(back, set);
        }
        let g = Signal::new_2d(x.into_values(), 2, 3).unwrap();
        let set = measure_2d_full(&g).unwrap();
        assert!(set.descriptor_json().contains("\"2d\""));
        assert_eq!(MeasurementSet::from_parts(&set.descriptor_json(), &set.matrix_csv()).unwrap(), set);
    }

    #[test]
    fn frames_adjoint_and_vectors_consistent() {
        let x = rand_x(5, 12);
        let model = Model::Stft { n: 5, n_tilde: 7, k: 7, window: WindowSpec::rectangular(3, 2, true).unwrap() };
        let f = model.frames().unwrap();
        let fx = f.forward(x.values());
        for m in 0..f.rows() {
            for k in 0..f.k {
                let a = f.measurement_vector(m, k);
                let ip: C64 = a.iter().zip(x.values()).map(|(ai, xi)| ai.conj() * xi).sum();
                assert!((ip - fx[m * f.k + k]).norm() < 1e-10);
            }
        }
        let v: Vec<C64> = (0..fx.len()).map(|i| C64::new(i as f64, 1.0)).collect();
        let lhs: C64 = fx.iter().zip(&v).map(|(a, b)| b.conj() * a).sum();
        let back = f.adjoint(&v);
        let rhs: C64 = x.values().iter().zip(&back).map(|(a, b)| b.conj() * a).sum();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm());
    }
}
