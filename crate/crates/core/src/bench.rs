//! Seeded figure experiments: success rates of GD/Griffin-Lim (Fig. 4
//! analogue), of the STFT SDP over a (W, L) grid (Fig. 5 analogue), and the
//! initialization / noisy refinement errors (Fig. 6 analogue).
//!
//! Trial `t` of grid cell `c` draws everything from
//! `Rng::new(seed).child((c << 32) | t)`, so tables are identical for any
//! worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::altproj::{griffin_lim, AltProjOptions};
use crate::error::{Error, Result};
use crate::forward::{measure_stft, WindowSpec};
use crate::gradient::{gd_minimize, GdOptions, LossKind, LossSpec};
use crate::sdp::{admm_run, build_stft_sdp, extract_rank_one, AdmmOptions};
use crate::signal::{random_signal, rel_dist_up_to, Rng, Signal, SignalKind, TrivialGroup};
use crate::stft_direct::stft_init_heuristic;

/// Flat `key = value` configuration; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fail on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("bad value for `{key}`: `{v}`"))))
            .transpose()
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("bad list item for `{key}`: `{s}`"))))
                    .collect()
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean for `{key}`: `{v}`"))),
            })
            .transpose()
    }
}

/// `complex`, `real` or `sparse:<s>`.
pub fn parse_signal_kind(s: &str) -> Result<SignalKind> {
    match s {
        "complex" => Ok(SignalKind::ComplexNormal),
        "real" => Ok(SignalKind::RealNormal),
        _ => s
            .strip_prefix("sparse:")
            .and_then(|v| v.parse().ok())
            .map(SignalKind::Sparse)
            .ok_or_else(|| Error::Config(format!("unknown signal kind `{s}`"))),
    }
}

fn signal_kind_name(k: SignalKind) -> String {
    match k {
        SignalKind::ComplexNormal => "complex".into(),
        SignalKind::RealNormal => "real".into(),
        SignalKind::Sparse(s) => format!("sparse:{s}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig4,
    Fig5,
    Fig6,
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig4" => Ok(Experiment::Fig4),
            "fig5" => Ok(Experiment::Fig5),
            "fig6" => Ok(Experiment::Fig6),
            _ => Err(Error::Config(format!("unknown experiment `{s}` (expected fig4, fig5 or fig6)"))),
        }
    }
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6 => "fig6",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    pub windows: Vec<usize>,
    pub hops: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Success threshold on the objective (Fig. 4) or relative error (Fig. 5).
    pub threshold: f64,
    pub methods: Vec<String>,
    pub signal: SignalKind,
    /// Iteration cap for GD / Griffin-Lim.
    pub max_iter: usize,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
    /// Fig. 6 right panel: noise std as a fraction of the rms intensity.
    pub noise_levels: Vec<f64>,
    pub refine_n: usize,
    pub refine_window: usize,
    pub refine_hop: usize,
    pub refine_trials: usize,
    pub full_scale: bool,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Keys accepted by [`ExperimentConfig::from_kv`].
pub const EXPERIMENT_KEYS: &[&str] = &[
    "experiment",
    "n",
    "windows",
    "hops",
    "trials",
    "seed",
    "threshold",
    "methods",
    "signal",
    "max_iter",
    "sdp_tol",
    "sdp_max_iter",
    "noise_levels",
    "refine_n",
    "refine_window",
    "refine_hop",
    "refine_trials",
    "full_scale",
    "jobs",
    "out",
];

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            n: 23,
            windows: vec![8, 12, 16, 20],
            hops: vec![1],
            trials: 100,
            seed: 1,
            threshold: 1e-4,
            methods: vec!["gd".into(), "gla".into()],
            signal: SignalKind::RealNormal,
            max_iter: 1000,
            sdp_tol: 1e-7,
            sdp_max_iter: 20000,
            noise_levels: vec![0.0, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            refine_n: 53,
            refine_window: 19,
            refine_hop: 2,
            refine_trials: 20,
            full_scale: false,
            jobs: None,
            out: None,
        };
        match experiment {
            Experiment::Fig4 => base,
            Experiment::Fig5 => Self {
                n: 20,
                windows: (2..=10).collect(),
                hops: (1..=4).collect(),
                trials: 20,
                methods: vec!["sdp".into()],
                signal: SignalKind::ComplexNormal,
                ..base
            },
            Experiment::Fig6 => Self {
                n: 101,
                windows: vec![9, 15, 21, 27, 33],
                hops: vec![1, 2, 4, 6, 8],
                trials: 50,
                signal: SignalKind::ComplexNormal,
                ..base
            },
        }
    }

    /// Defaults for `experiment`, overridden by `kv`. `full_scale = true`
    /// restores the larger Fig. 5 size (N = 40).
    pub fn from_kv(experiment: Experiment, kv: &KvConfig) -> Result<Self> {
        kv.check_keys(EXPERIMENT_KEYS)?;
        if let Some(e) = kv.parsed::<Experiment>("experiment")? {
            if e != experiment {
                return Err(Error::Config(format!("config is for {}, not {}", e.name(), experiment.name())));
            }
        }
        let mut c = Self::defaults(experiment);
        if let Some(true) = kv.flag("full_scale")? {
            c.full_scale = true;
            if experiment == Experiment::Fig5 {
                c.n = 40;
            }
        }
        macro_rules! set {
            ($field:ident, $key:literal, parsed) => {
                if let Some(v) = kv.parsed($key)? {
                    c.$field = v;
                }
            };
            ($field:ident, $key:literal, list) => {
                if let Some(v) = kv.list($key)? {
                    c.$field = v;
                }
            };
        }
        set!(n, "n", parsed);
        set!(windows, "windows", list);
        set!(hops, "hops", list);
        set!(trials, "trials", parsed);
        set!(seed, "seed", parsed);
        set!(threshold, "threshold", parsed);
        set!(methods, "methods", list);
        set!(max_iter, "max_iter", parsed);
        set!(sdp_tol, "sdp_tol", parsed);
        set!(sdp_max_iter, "sdp_max_iter", parsed);
        set!(noise_levels, "noise_levels", list);
        set!(refine_n, "refine_n", parsed);
        set!(refine_window, "refine_window", parsed);
        set!(refine_hop, "refine_hop", parsed);
        set!(refine_trials, "refine_trials", parsed);
        if let Some(s) = kv.get("signal") {
            c.signal = parse_signal_kind(s)?;
        }
        if let Some(j) = kv.parsed("jobs")? {
            c.jobs = Some(j);
        }
        if let Some(o) = kv.get("out") {
            c.out = Some(PathBuf::from(o));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 || self.refine_trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.windows.is_empty() || self.hops.is_empty() || self.methods.is_empty() {
            return bad("grids and method list must be non-empty".into());
        }
        if self.windows.iter().chain(&self.hops).any(|&v| v == 0) {
            return bad("window lengths and hops must be positive".into());
        }
        if let Some(&w) = self.windows.iter().find(|&&w| w > self.n) {
            return bad(format!("window length {w} exceeds N = {}", self.n));
        }
        if self.refine_window > self.refine_n || self.refine_window == 0 || self.refine_hop == 0 {
            return bad("refinement window must satisfy 1 <= W <= N and L >= 1".into());
        }
        if !(self.threshold > 0.0) || !(self.sdp_tol > 0.0) {
            return bad("thresholds must be positive".into());
        }
        if self.noise_levels.iter().any(|v| !(*v >= 0.0)) {
            return bad("noise levels must be nonnegative".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        let allowed: &[&str] = match self.experiment {
            Experiment::Fig4 | Experiment::Fig6 => &["gd", "gla"],
            Experiment::Fig5 => &["sdp"],
        };
        if let Some(m) = self.methods.iter().find(|m| !allowed.contains(&m.as_str())) {
            return bad(format!("method `{m}` is not available for {}", self.experiment.name()));
        }
        Ok(())
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut m = vec![
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("experiment".to_string(), self.experiment.name().to_string()),
            ("n".into(), self.n.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("trials".into(), self.trials.to_string()),
            ("signal".into(), signal_kind_name(self.signal)),
            ("windows".into(), join(&self.windows)),
            ("hops".into(), join(&self.hops)),
        ];
        match self.experiment {
            Experiment::Fig4 => {
                m.push(("success".into(), format!("final objective < {:e}", self.threshold)));
                m.push(("max_iter".into(), self.max_iter.to_string()));
                m.push(("window".into(), "rectangular, periodic".into()));
            }
            Experiment::Fig5 => {
                m.push(("success".into(), format!("relative error up to phase < {:e}", self.threshold)));
                m.push(("sdp_tol".into(), format!("{:e}", self.sdp_tol)));
                m.push(("sdp_max_iter".into(), self.sdp_max_iter.to_string()));
                m.push(("window".into(), "rectangular, periodic".into()));
            }
            Experiment::Fig6 => {
                m.push(("window".into(), "gaussian sigma = W/3 (init panel); rectangular (refine panel)".into()));
                m.push(("max_iter".into(), self.max_iter.to_string()));
                m.push(("refine".into(), format!(
                    "N={} W={} L={} trials={}",
                    self.refine_n, self.refine_window, self.refine_hop, self.refine_trials
                )));
                m.push(("noise".into(), "std = level * rms(y)".into()));
                m.push(("error".into(), "relative error up to phase, mean over trials".into()));
            }
        }
        m
    }
}

/// Success rate for one grid cell and method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub w: usize,
    pub l: usize,
    pub method: String,
    pub rate: f64,
}

/// Mean error for one Fig. 6 setting and method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub panel: String,
    pub w: usize,
    pub l: usize,
    pub noise: f64,
    pub method: String,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable<R> {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<R>,
}

impl<R> BenchTable<R> {
    fn header(&self) -> String {
        self.metadata.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }
}

impl BenchTable<RateRow> {
    /// Fig. 4 layout `W,method,success_rate`.
    pub fn fig4_csv(&self) -> String {
        let mut s = self.header();
        s.push_str("W,method,success_rate\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.w, r.method, r.rate);
        }
        s
    }

    /// Fig. 5 layout `W,L,success_rate`.
    pub fn fig5_csv(&self) -> String {
        let mut s = self.header();
        s.push_str("W,L,success_rate\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.w, r.l, r.rate);
        }
        s
    }

    pub fn rate(&self, w: usize, l: usize, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.w == w && r.l == l && r.method == method).map(|r| r.rate)
    }
}

impl BenchTable<ErrorRow> {
    pub fn csv(&self) -> String {
        let mut s = self.header();
        s.push_str("panel,W,L,noise,method,mean_error\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{:.6e}", r.panel, r.w, r.l, r.noise, r.method, r.mean_error);
        }
        s
    }
}

/// Run `count` trials on a pool of `jobs` workers, results in trial order.
fn run_trials<T, F>(jobs: Option<usize>, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let work = || (0..count).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match jobs {
        None => work(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {j} workers: {e}")))?
            .install(work),
    }
}

fn trial_rng(seed: u64, cell: usize, trial: usize) -> Rng {
    Rng::new(seed).child(((cell as u64) << 32) | trial as u64)
}

/// GD and Griffin-Lim from random starts on unit-hop rectangular STFT data;
/// a trial succeeds when the method's own final objective is below the
/// threshold.
pub fn run_fig4(cfg: &ExperimentConfig) -> Result<BenchTable<RateRow>> {
    cfg.validate()?;
    let n = cfg.n;
    let cells: Vec<(usize, usize)> =
        cfg.windows.iter().flat_map(|&w| cfg.hops.iter().map(move |&l| (w, l))).collect();
    let per_cell = cfg.methods.len();
    let mut rows = Vec::new();
    for (ci, &(w, l)) in cells.iter().enumerate() {
        let window = WindowSpec::rectangular(w, l, true)?;
        let outcomes = run_trials(cfg.jobs, cfg.trials, |t| {
            let mut rng = trial_rng(cfg.seed, ci, t);
            let x = random_signal(n, cfg.signal, &mut rng)?;
            let x0 = random_signal(n, cfg.signal, &mut rng)?;
            let y = measure_stft(&x, &window, n, n)?;
            cfg.methods
                .iter()
                .map(|m| {
                    let objective = match m.as_str() {
                        "gd" => {
                            let spec = LossSpec::new(LossKind::Intensity, &y)?;
                            let opts = GdOptions { max_iter: cfg.max_iter, ..GdOptions::default() };
                            gd_minimize(&spec, &x0, &opts)?.1.final_error
                        }
                        _ => {
                            let opts = AltProjOptions { max_iter: cfg.max_iter, ..AltProjOptions::default() };
                            griffin_lim(&y, &x0, &opts)?.1.final_error
                        }
                    };
                    Ok(objective < cfg.threshold)
                })
                .collect::<Result<Vec<bool>>>()
        })?;
        for (mi, m) in cfg.methods.iter().enumerate() {
            let hits = outcomes.iter().filter(|o| o[mi]).count();
            rows.push(RateRow { w, l, method: m.clone(), rate: hits as f64 / cfg.trials as f64 });
        }
        debug_assert_eq!(rows.len(), (ci + 1) * per_cell);
    }
    Ok(BenchTable { metadata: cfg.metadata(), rows })
}

/// STFT trace-minimization SDP over the `(W, L)` grid. Unconverged solves
/// count as whatever their final iterate achieves.
pub fn run_fig5(cfg: &ExperimentConfig) -> Result<BenchTable<RateRow>> {
    cfg.validate()?;
    let n = cfg.n;
    let opts = AdmmOptions { tol: cfg.sdp_tol, max_iter: cfg.sdp_max_iter, record_trace: false, ..AdmmOptions::default() };
    let mut rows = Vec::new();
    let mut ci = 0;
    for &w in &cfg.windows {
        for &l in &cfg.hops {
            let window = WindowSpec::rectangular(w, l, true)?;
            let hits = run_trials(cfg.jobs, cfg.trials, |t| {
                let mut rng = trial_rng(cfg.seed, ci, t);
                let x = random_signal(n, cfg.signal, &mut rng)?;
                let y = measure_stft(&x, &window, n, n)?;
                let (xm, _) = admm_run(&build_stft_sdp(&y, None)?, &opts)?;
                let (est, _) = extract_rank_one(&xm)?;
                Ok(rel_dist_up_to(&x, &est, TrivialGroup::ROTATION)? < cfg.threshold)
            })?;
            let rate = hits.iter().filter(|h| **h).count() as f64 / cfg.trials as f64;
            rows.push(RateRow { w, l, method: "sdp".into(), rate });
            ci += 1;
        }
    }
    Ok(BenchTable { metadata: cfg.metadata(), rows })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Left panel: initialization error for Gaussian windows (`sigma = W/3`)
/// over the `(W, L)` grid. Right panel: GD and Griffin-Lim refinement of
/// that initialization on noisy rectangular-window data.
pub fn run_fig6(cfg: &ExperimentConfig) -> Result<BenchTable<ErrorRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut ci = 0;
    for &w in &cfg.windows {
        for &l in &cfg.hops {
            let window = WindowSpec::gaussian(w as f64 / 3.0, w, l, true)?;
            let errs = run_trials(cfg.jobs, cfg.trials, |t| {
                let mut rng = trial_rng(cfg.seed, ci, t);
                let x = random_signal(cfg.n, cfg.signal, &mut rng)?;
                let y = measure_stft(&x, &window, cfg.n, cfg.n)?;
                rel_dist_up_to(&x, &stft_init_heuristic(&y, 1e-6)?, TrivialGroup::ROTATION)
            })?;
            rows.push(ErrorRow { panel: "init".into(), w, l, noise: 0.0, method: "init".into(), mean_error: mean(&errs) });
            ci += 1;
        }
    }

    let (n, w, l) = (cfg.refine_n, cfg.refine_window, cfg.refine_hop);
    let window = WindowSpec::rectangular(w, l, true)?;
    // Every noise level reuses the same signals and noise draws.
    let refine_cell = ci;
    for &level in &cfg.noise_levels {
        let errs = run_trials(cfg.jobs, cfg.refine_trials, |t| {
            let mut rng = trial_rng(cfg.seed, refine_cell, t);
            let x = random_signal(n, cfg.signal, &mut rng)?;
            let clean = measure_stft(&x, &window, n, n)?;
            let rms = (clean.y().iter().map(|v| v * v).sum::<f64>() / clean.y().len() as f64).sqrt();
            let y = clean.with_noise(level * rms, rng.next_u64());
            let x0 = stft_init_heuristic(&y, 1e-6)?;
            cfg.methods
                .iter()
                .map(|m| {
                    let est: Signal = match m.as_str() {
                        "gd" => {
                            let spec = LossSpec::new(LossKind::Intensity, &y)?;
                            let opts = GdOptions { max_iter: cfg.max_iter, ..GdOptions::default() };
                            gd_minimize(&spec, &x0, &opts)?.0
                        }
                        _ => {
                            let opts = AltProjOptions { max_iter: cfg.max_iter, ..AltProjOptions::default() };
                            griffin_lim(&y, &x0, &opts)?.0
                        }
                    };
                    rel_dist_up_to(&x, &est, TrivialGroup::ROTATION)
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        for (mi, m) in cfg.methods.iter().enumerate() {
            let v: Vec<f64> = errs.iter().map(|e| e[mi]).collect();
            rows.push(ErrorRow { panel: "refine".into(), w, l, noise: level, method: m.clone(), mean_error: mean(&v) });
        }
    }
    Ok(BenchTable { metadata: cfg.metadata(), rows })
}
