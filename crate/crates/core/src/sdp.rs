//! Hermitian PSD machinery, an ADMM solver for trace-type semidefinite
//! programs, and the lifted phase retrieval relaxations.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{MeasurementSet, Model};
use crate::signal::Signal;

const HERMITIAN_TOL: f64 = 1e-10;

/// `N x N` complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: DMatrix<C64>,
}

fn asymmetry(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint()).norm()
}

impl HermitianMatrix {
    /// Checks `||M - M*||_F <= 1e-10 ||M||_F`, then symmetrizes.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let asym = asymmetry(&m);
        if asym > HERMITIAN_TOL * m.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(m: DMatrix<C64>) -> Self {
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Self { m: h }
    }

    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n) }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = DMatrix::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        Self { m }
    }

    /// `x x*`.
    pub fn outer(x: &[C64]) -> Self {
        let v = DVector::from_column_slice(x);
        Self { m: &v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    /// `tr(A B)`, real for Hermitian arguments.
    pub fn dot(&self, other: &HermitianMatrix) -> f64 {
        self.m.iter().zip(other.m.iter()).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn scaled(&self, c: f64) -> HermitianMatrix {
        Self { m: &self.m * C64::new(c, 0.0) }
    }

    /// Eigenvalues in descending order with matching eigenvector columns.
    pub fn eig(&self) -> (Vec<f64>, DMatrix<C64>) {
        eig_unchecked(&self.m)
    }

    /// Isometric real coordinates: the diagonal, then `sqrt(2) Re` and
    /// `sqrt(2) Im` of each strictly upper entry in row-major order.
    fn to_real(&self) -> Vec<f64> {
        let n = self.dim();
        let mut v = Vec::with_capacity(n * n);
        v.extend((0..n).map(|i| self.m[(i, i)].re));
        for i in 0..n {
            for j in i + 1..n {
                let e = self.m[(i, j)] * std::f64::consts::SQRT_2;
                v.push(e.re);
                v.push(e.im);
            }
        }
        v
    }

    fn from_real(v: &[f64], n: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(v[i], 0.0);
        }
        let mut p = n;
        for i in 0..n {
            for j in i + 1..n {
                let e = C64::new(v[p], v[p + 1]) * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = e;
                m[(j, i)] = e.conj();
                p += 2;
            }
        }
        Self { m }
    }
}

fn pair_offset(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j);
    n + 2 * (i * n - i * (i + 1) / 2 + (j - i - 1))
}

fn eig_unchecked(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues descending and
/// orthonormal eigenvector columns.
pub fn hermitian_eig(h: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let herm = HermitianMatrix::new(h.clone())?;
    Ok(herm.eig())
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn project_psd(h: &HermitianMatrix) -> HermitianMatrix {
    let (vals, vecs) = h.eig();
    let n = h.dim();
    let mut out = DMatrix::<C64>::zeros(n, n);
    for (c, &lam) in vals.iter().enumerate() {
        if lam <= 0.0 {
            break;
        }
        let v = vecs.column(c);
        out += (v * v.adjoint()) * C64::new(lam, 0.0);
    }
    HermitianMatrix::symmetrized(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relation {
    Equals(f64),
    /// `|A . X - center| <= eps`
    Within { center: f64, eps: f64 },
}

impl Relation {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Relation::Equals(b) => (b, b),
            Relation::Within { center, eps } => (center - eps, center + eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `a* X a` (the rank-one operator `A = a a*`).
    Quadratic { a: Vec<C64>, rel: Relation },
    /// `tr(A X)` for explicit Hermitian `A`.
    Matrix { a: HermitianMatrix, rel: Relation },
    /// `sum w X[i, j] = value` with complex weights; one real row for each of
    /// the real and imaginary parts that is not identically zero.
    Entries { terms: Vec<(usize, usize, C64)>, value: C64 },
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    n: usize,
    objective: HermitianMatrix,
    sense: Sense,
    constraints: Vec<Constraint>,
}

struct Row {
    coeffs: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl SdpProblem {
    pub fn new(objective: HermitianMatrix, sense: Sense) -> Self {
        Self { n: objective.dim(), objective, sense, constraints: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &HermitianMatrix {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn push(&mut self, c: Constraint) -> Result<()> {
        let n = self.n;
        match &c {
            Constraint::Quadratic { a, .. } if a.len() != n => {
                return Err(Error::DimensionMismatch { expected: n, got: a.len() })
            }
            Constraint::Matrix { a, .. } if a.dim() != n => {
                return Err(Error::DimensionMismatch { expected: n, got: a.dim() })
            }
            Constraint::Entries { terms, .. } if terms.iter().any(|&(i, j, _)| i >= n || j >= n) => {
                return Err(Error::InvalidInput("constraint entry out of range".into()))
            }
            _ => {}
        }
        if let Constraint::Quadratic { rel: Relation::Within { eps, .. }, .. }
        | Constraint::Matrix { rel: Relation::Within { eps, .. }, .. } = c
        {
            if !(eps >= 0.0) {
                return Err(Error::InvalidInput("interval half-width must be nonnegative".into()));
            }
        }
        self.constraints.push(c);
        Ok(())
    }

    pub fn objective_value(&self, x: &HermitianMatrix) -> f64 {
        self.objective.dot(x)
    }

    /// Largest violation of any constraint row at `x`, in the original scale.
    pub fn max_violation(&self, x: &HermitianMatrix) -> f64 {
        let v = x.to_real();
        self.rows()
            .map(|rows| {
                rows.iter()
                    .map(|r| {
                        let val: f64 = r.coeffs.iter().zip(&v).map(|(a, b)| a * b).sum();
                        (r.lo - val).max(val - r.hi).max(0.0)
                    })
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY)
    }

    fn rows(&self) -> Result<Vec<Row>> {
        let n = self.n;
        let mut rows = Vec::new();
        for c in &self.constraints {
            match c {
                Constraint::Quadratic { a, rel } => {
                    let (lo, hi) = rel.bounds();
                    rows.push(Row { coeffs: HermitianMatrix::outer(a).to_real(), lo, hi });
                }
                Constraint::Matrix { a, rel } => {
                    let (lo, hi) = rel.bounds();
                    rows.push(Row { coeffs: a.to_real(), lo, hi });
                }
                Constraint::Entries { terms, value } => {
                    let mut re = vec![0.0; n * n];
                    let mut im = vec![0.0; n * n];
                    let h = std::f64::consts::FRAC_1_SQRT_2;
                    for &(i, j, w) in terms {
                        if i == j {
                            re[i] += w.re;
                            im[i] += w.im;
                        } else {
                            // X[i,j] = (p + jq)/sqrt2 above the diagonal, its conjugate below
                            let (p, s) = if i < j { (pair_offset(i, j, n), 1.0) } else { (pair_offset(j, i, n), -1.0) };
                            re[p] += h * w.re;
                            re[p + 1] -= s * h * w.im;
                            im[p] += h * w.im;
                            im[p + 1] += s * h * w.re;
                        }
                    }
                    for (coeffs, target) in [(re, value.re), (im, value.im)] {
                        if coeffs.iter().all(|v| *v == 0.0) {
                            if target != 0.0 {
                                return Err(Error::InvalidInput("entry constraint has no support".into()));
                            }
                            continue;
                        }
                        rows.push(Row { coeffs, lo: target, hi: target });
                    }
                }
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

#[derive(Clone, Default, PartialEq, Serialize)]
pub struct SdpReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    /// Spectrum of the returned matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl std::fmt::Debug for SdpReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdpReport")
            .field("iterations", &self.iterations)
            .field("primal_residual", &self.primal_residual)
            .field("dual_residual", &self.dual_residual)
            .field("objective", &self.objective)
            .field("converged", &self.converged)
            .field("trace_rows", &self.trace.len())
            .finish_non_exhaustive()
    }
}

impl SdpReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,primal,dual,objective\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{:.10e},{:.10e},{:.16e}", r.iteration, r.primal, r.dual, r.objective);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Every `adapt_every` iterations, rescale `rho` by 2 when one residual
    /// exceeds the other tenfold.
    pub adaptive: bool,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    pub adapt_every: usize,
    pub record_trace: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { rho: 1.0, tol: 1e-7, max_iter: 20000, adaptive: true, relaxation: 1.6, adapt_every: 100, record_trace: true }
    }
}

/// Factorization of `I + A^T A`, or of `I + A A^T` when that is smaller
/// (Woodbury).
enum XSolver {
    Direct(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Woodbury(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

impl XSolver {
    fn new(a: &DMatrix<f64>) -> Self {
        let (m, d) = a.shape();
        if m < d {
            let k = DMatrix::identity(m, m) + a * a.transpose();
            XSolver::Woodbury(k.cholesky().expect("I + A A^T is positive definite"))
        } else {
            let k = DMatrix::identity(d, d) + a.tr_mul(a);
            XSolver::Direct(k.cholesky().expect("I + A^T A is positive definite"))
        }
    }

    fn solve(&self, a: &DMatrix<f64>, r: DVector<f64>) -> DVector<f64> {
        match self {
            XSolver::Direct(ch) => ch.solve(&r),
            XSolver::Woodbury(ch) => {
                let t = ch.solve(&(a * &r));
                r - a.tr_mul(&t)
            }
        }
    }
}

/// ADMM returning the final iterate whether or not it converged; check
/// `report.converged`.
pub fn admm_run(p: &SdpProblem, opts: &AdmmOptions) -> Result<(HermitianMatrix, SdpReport)> {
    if !(opts.rho > 0.0) || !(opts.relaxation > 0.0 && opts.relaxation < 2.0) {
        return Err(Error::InvalidInput("rho must be positive and relaxation in (0, 2)".into()));
    }
    let n = p.n;
    let d = n * n;
    let rows = p.rows()?;
    let m = rows.len();

    // row-normalized constraint matrix and box
    let mut a = DMatrix::<f64>::zeros(m, d);
    let mut lo = DVector::<f64>::zeros(m);
    let mut hi = DVector::<f64>::zeros(m);
    for (i, r) in rows.iter().enumerate() {
        let norm = r.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("zero constraint operator".into()));
        }
        for (j, v) in r.coeffs.iter().enumerate() {
            a[(i, j)] = v / norm;
        }
        lo[i] = r.lo / norm;
        hi[i] = r.hi / norm;
    }
    let sign = if p.sense == Sense::Minimize { 1.0 } else { -1.0 };
    let c = DVector::from_vec(p.objective.to_real()) * sign;
    let solver = XSolver::new(&a);

    let clamp = |v: &DVector<f64>| DVector::from_iterator(m, (0..m).map(|i| v[i].clamp(lo[i], hi[i])));
    let alpha = opts.relaxation;
    let mut rho = opts.rho;
    let mut z = DVector::<f64>::zeros(d);
    let mut u = DVector::<f64>::zeros(d);
    let mut s = clamp(&DVector::zeros(m));
    let mut v = DVector::<f64>::zeros(m);
    let mut report = SdpReport { rho, ..Default::default() };

    for it in 1..=opts.max_iter {
        let rhs = a.tr_mul(&(&s - &v)) + (&z - &u) - &c / rho;
        let x = solver.solve(&a, rhs);
        let ax = &a * &x;
        let xh = &x * alpha + &z * (1.0 - alpha);
        let sh = &ax * alpha + &s * (1.0 - alpha);

        let z_old = std::mem::replace(&mut z, DVector::from_vec(project_psd(&HermitianMatrix::from_real((&xh + &u).as_slice(), n)).to_real()));
        let s_old = std::mem::replace(&mut s, clamp(&(&sh + &v)));
        v += &sh - &s;
        u += &xh - &z;

        let primal = (&ax - &s).norm().max((&x - &z).norm());
        let dual = rho * (&z - &z_old).norm().max(a.tr_mul(&(&s - &s_old)).norm());
        let objective = sign * c.dot(&z);
        if opts.record_trace {
            report.trace.push(TraceRow { iteration: it, primal, dual, objective });
        }
        report.iterations = it;
        report.primal_residual = primal;
        report.dual_residual = dual;
        report.objective = objective;
        if primal.max(dual) < opts.tol {
            report.converged = true;
            break;
        }
        if opts.adaptive && opts.adapt_every > 0 && it % opts.adapt_every == 0 {
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
                v /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
                v *= 2.0;
            }
        }
    }
    report.rho = rho;
    let x = HermitianMatrix::from_real(z.as_slice(), n);
    report.eigenvalues = x.eig().0;
    Ok((x, report))
}

/// Solve `p` by ADMM; the returned matrix is the PSD iterate.
pub fn admm_solve(p: &SdpProblem, opts: &AdmmOptions) -> Result<(HermitianMatrix, SdpReport)> {
    let (x, report) = admm_run(p, opts)?;
    if report.converged {
        Ok((x, report))
    } else {
        Err(Error::NotConverged(Box::new(report)))
    }
}

fn frame_constraints(y: &MeasurementSet, eps: Option<f64>) -> Result<SdpProblem> {
    let frames = y.model().frames().ok_or_else(|| Error::ModelMismatch("model has no lifted form".into()))?;
    let n = frames.signal_len();
    let mut p = SdpProblem::new(HermitianMatrix::identity(n), Sense::Minimize);
    for m in 0..y.rows() {
        for k in 0..y.cols() {
            let b = y.get(m, k);
            let rel = match eps {
                None => Relation::Equals(b),
                Some(eps) => Relation::Within { center: b, eps },
            };
            p.push(Constraint::Quadratic { a: frames.measurement_vector(m, k), rel })?;
        }
    }
    Ok(p)
}

/// Trace minimization subject to `a_{m,k}* X a_{m,k} = y[m,k]` for masked data.
pub fn build_masked_trace(y: &MeasurementSet) -> Result<SdpProblem> {
    if !matches!(y.model(), Model::Masked { .. } | Model::Classical { .. }) {
        return Err(Error::ModelMismatch(format!("expected masked data, got {}", y.model().kind_name())));
    }
    frame_constraints(y, None)
}

/// Trace minimization subject to `|a_{m,k}* X a_{m,k} - y[m,k]| <= eps`.
pub fn build_masked_noisy(y: &MeasurementSet, eps: f64) -> Result<SdpProblem> {
    if !matches!(y.model(), Model::Masked { .. } | Model::Classical { .. }) {
        return Err(Error::ModelMismatch(format!("expected masked data, got {}", y.model().kind_name())));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput("eps must be nonnegative".into()));
    }
    frame_constraints(y, Some(eps))
}

/// Maximize `X[0,0]` subject to `sum_n X[n+k, n] = a[k]` for `k = 0..N`.
///
/// `a[k] = sum_n conj(x[n]) x[n+k]` holds the nonnegative lags.
pub fn build_minphase(a: &[C64]) -> Result<SdpProblem> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty autocorrelation".into()));
    }
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let mut p = SdpProblem::new(HermitianMatrix::from_diagonal(&e0), Sense::Maximize);
    for (k, &ak) in a.iter().enumerate() {
        let terms = (0..n - k).map(|i| (i + k, i, C64::new(1.0, 0.0))).collect();
        let value = if k == 0 { C64::new(ak.re, 0.0) } else { ak };
        p.push(Constraint::Entries { terms, value })?;
    }
    Ok(p)
}

/// Trace minimization over the STFT constraint set (`n_tilde = N`), with
/// optional known leading samples fixing the corresponding block of `X`.
pub fn build_stft_sdp(y: &MeasurementSet, known_prefix: Option<&[C64]>) -> Result<SdpProblem> {
    let Model::Stft { n, n_tilde, .. } = *y.model() else {
        return Err(Error::ModelMismatch(format!("expected STFT data, got {}", y.model().kind_name())));
    };
    if n_tilde != n {
        return Err(Error::ModelMismatch("STFT lifting expects n_tilde = N".into()));
    }
    let mut p = frame_constraints(y, None)?;
    if let Some(prefix) = known_prefix {
        if prefix.len() > n {
            return Err(Error::DimensionMismatch { expected: n, got: prefix.len() });
        }
        for i in 0..prefix.len() {
            for j in i..prefix.len() {
                p.push(Constraint::Entries {
                    terms: vec![(i, j, C64::new(1.0, 0.0))],
                    value: prefix[i] * prefix[j].conj(),
                })?;
            }
        }
    }
    Ok(p)
}

/// `sqrt(lambda_1) v_1` and `lambda_2 / lambda_1`.
pub fn extract_rank_one(x: &HermitianMatrix) -> Result<(Signal, f64)> {
    let (vals, vecs) = x.eig();
    let l1 = vals[0].max(0.0);
    let quality = match vals.get(1) {
        None => 0.0,
        Some(_) if l1 == 0.0 => 1.0,
        Some(&l2) => l2.max(0.0) / l1,
    };
    let v: Vec<C64> = vecs.column(0).iter().map(|c| c * l1.sqrt()).collect();
    Ok((Signal::new(v)?.normalize_phase_largest(), quality))
}
