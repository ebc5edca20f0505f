use std::path::Path;

use serde_json::{json, Value};

use phaseless::altproj::{error_reduction, griffin_lim, hio, AltProjOptions, IterReport, TemporalConstraint};
use phaseless::ambiguity::{autocorr_from_measurements, count_nontrivial, enumerate_solutions, AutocorrPoly};
use phaseless::bench::{parse_signal_kind, run_fig4, run_fig5, run_fig6, Experiment, ExperimentConfig};
use phaseless::forward::{
    masks_block, masks_fixed, masks_modulated, measure, MaskSet, MeasurementSet, Model, WindowSpec,
};
use phaseless::gespar::{gespar, GesparOptions};
use phaseless::gradient::{gd_minimize, GdOptions, LossKind, LossSpec};
use phaseless::minphase::{augment_min_phase, kolmogorov_recover, CepstralConfig};
use phaseless::sdp::{
    admm_run, build_masked_noisy, build_masked_trace, build_minphase, build_stft_sdp, extract_rank_one,
    AdmmOptions, SdpProblem,
};
use phaseless::signal::{random_signal, rel_dist_up_to, Rng, Signal, SignalKind, TrivialGroup};
use phaseless::stft_direct::{stft_init_heuristic, stft_ls_recover};
use phaseless::C64;

use crate::settings::{read, write, CliError, CliResult, Settings};
use crate::Common;

const SIMULATE_KEYS: &[&str] = &[
    "model", "n", "n_tilde", "k", "n1", "n2", "signal", "seed", "window", "w", "hop", "periodic", "sigma",
    "masks", "mask_block", "mask_shift", "noise", "min_phase", "delta", "out", "jobs",
];

fn window_from(s: &Settings) -> CliResult<WindowSpec> {
    let w: usize = s.or("w", 4)?;
    let hop = s.or("hop", 1)?;
    let periodic = s.flag("periodic", true)?;
    Ok(match s.str_or("window", "rectangular") {
        "rectangular" | "rect" => WindowSpec::rectangular(w, hop, periodic)?,
        "gaussian" => WindowSpec::gaussian(s.or("sigma", w as f64 / 3.0)?, w, hop, periodic)?,
        other => return Err(CliError::config(format!("unknown window `{other}`"))),
    })
}

fn masks_from(s: &Settings, n: usize) -> CliResult<MaskSet> {
    Ok(match s.str_or("masks", "fixed") {
        "fixed" => masks_fixed(n)?,
        "block" => masks_block(n, s.or("mask_block", n / 2)?)?,
        "modulated" => masks_modulated(n, s.or("mask_shift", 1)?)?,
        other => return Err(CliError::config(format!("unknown mask family `{other}`"))),
    })
}

fn model_from(s: &Settings, n: usize) -> CliResult<Model> {
    let kind = s.str_or("model", "classical");
    let default_nt = if kind == "stft" { n } else { 2 * n - 1 };
    let n_tilde = s.or("n_tilde", default_nt)?;
    let k = s.or("k", n_tilde)?;
    if n_tilde < n {
        return Err(CliError::config(format!("n_tilde = {n_tilde} is smaller than N = {n}")));
    }
    Ok(match kind {
        "classical" => Model::Classical { n, n_tilde, k },
        "masked" => Model::Masked { n, n_tilde, k, masks: masks_from(s, n)? },
        "stft" => {
            let window = window_from(s)?;
            if window.width() > n {
                return Err(CliError::config(format!("window length {} exceeds N = {n}", window.width())));
            }
            Model::Stft { n, n_tilde, k, window }
        }
        "frog" => Model::Frog { n, hop: s.or("hop", 1)? },
        other => return Err(CliError::config(format!("unknown model `{other}`"))),
    })
}

pub fn simulate(c: &Common) -> CliResult<()> {
    let s = Settings::load(c, SIMULATE_KEYS)?;
    let seed: u64 = s.or("seed", 0)?;
    let kind = parse_signal_kind(s.str_or("signal", "complex"))?;
    let mut rng = Rng::new(seed);

    let (x, y) = if s.str_or("model", "classical") == "2d" {
        let n1: usize = s.or("n1", 4)?;
        let n2: usize = s.or("n2", 4)?;
        if n1 == 0 || n2 == 0 {
            return Err(CliError::config("n1 and n2 must be positive"));
        }
        let flat = random_signal(n1 * n2, kind, &mut rng)?;
        let x = Signal::new_2d(flat.into_values(), n1, n2)?;
        let (nt1, nt2) = (2 * n1 - 1, 2 * n2 - 1);
        let model = Model::TwoD { n1, n2, nt1, nt2, k1: nt1, k2: nt2 };
        let y = measure(&x, &model)?;
        (x, y)
    } else {
        let n: usize = s.or("n", 8)?;
        if n == 0 {
            return Err(CliError::config("n must be positive"));
        }
        let mut x = random_signal(n, kind, &mut rng)?;
        if s.flag("min_phase", false)? {
            let delta: f64 = s.or("delta", 1.01 * x.norm1())?;
            x = augment_min_phase(&x, Some(C64::new(delta, 0.0)))?;
        }
        let model = model_from(&s, x.len())?;
        let y = measure(&x, &model)?;
        (x, y)
    };
    let noise: f64 = s.or("noise", 0.0)?;
    if !(noise >= 0.0) {
        return Err(CliError::config("noise must be nonnegative"));
    }
    let y = if noise > 0.0 { y.with_noise(noise, rng.next_u64()) } else { y };

    let out = s.create_out()?;
    write(out, "signal.json", &x.to_json())?;
    write(out, "signal.csv", &x.to_csv())?;
    write(out, "measurements.json", &y.descriptor_json())?;
    write(out, "measurements.csv", &y.matrix_csv())?;
    println!("wrote {} ({} model, {} x {})", out.display(), y.model().kind_name(), y.rows(), y.cols());
    Ok(())
}

const RECOVER_KEYS: &[&str] = &[
    "method", "input", "truth", "seed", "jobs", "out", "max_iter", "tol", "init", "constraint", "support",
    "nonnegative", "beta", "loss", "lambda", "eps", "sdp_tol", "sdp_max_iter", "rho", "sparsity", "restarts",
    "max_swaps", "grid_factor", "tau",
];

/// Comparison group matching what a model cannot distinguish.
fn group_for(model: &Model) -> (TrivialGroup, &'static str) {
    match model {
        Model::Classical { .. } | Model::Frog { .. } | Model::TwoD { .. } => (TrivialGroup::FULL, "full"),
        Model::Masked { .. } | Model::Stft { .. } => (TrivialGroup::ROTATION, "rotation"),
    }
}

fn load_measurements(s: &Settings) -> CliResult<MeasurementSet> {
    let input = s.path("input").unwrap_or_else(|| s.out.clone());
    let (desc, matrix) = if input.is_dir() {
        (input.join("measurements.json"), input.join("measurements.csv"))
    } else {
        (input.with_extension("json"), input.with_extension("csv"))
    };
    Ok(MeasurementSet::from_parts(&read(&desc)?, &read(&matrix)?)?)
}

fn load_signal(path: &Path) -> CliResult<Signal> {
    let text = read(path)?;
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Signal::from_csv(&text)?,
        _ => Signal::from_json(&text)?,
    })
}

fn initial_guess(s: &Settings, y: &MeasurementSet, rng: &mut Rng) -> CliResult<Signal> {
    let n = y.signal_len();
    Ok(match s.str_or("init", "random") {
        "random" => random_signal(n, SignalKind::ComplexNormal, rng)?,
        "real" => random_signal(n, SignalKind::RealNormal, rng)?,
        "stft" => stft_init_heuristic(y, s.or("lambda", 1e-6)?)?,
        "zeros" => Signal::zeros(n),
        path => load_signal(Path::new(path))?,
    })
}

fn alt_opts(s: &Settings) -> CliResult<AltProjOptions> {
    let d = AltProjOptions::default();
    Ok(AltProjOptions { max_iter: s.or("max_iter", d.max_iter)?, tol: s.or("tol", d.tol)?, ..d })
}

fn admm_opts(s: &Settings) -> CliResult<AdmmOptions> {
    let d = AdmmOptions::default();
    Ok(AdmmOptions {
        tol: s.or("sdp_tol", d.tol)?,
        max_iter: s.or("sdp_max_iter", d.max_iter)?,
        rho: s.or("rho", d.rho)?,
        ..d
    })
}

fn iter_json(r: &IterReport) -> Value {
    json!({ "iterations": r.iterations, "halt": r.halt, "final_error": r.final_error })
}

struct Outcome {
    estimate: Signal,
    details: Value,
    files: Vec<(&'static str, String)>,
    failure: Option<String>,
}

fn iterative(estimate: Signal, r: IterReport) -> Outcome {
    Outcome { estimate, details: iter_json(&r), files: vec![("trace.csv", r.to_csv())], failure: None }
}

fn sdp(problem: SdpProblem, s: &Settings) -> CliResult<Outcome> {
    let (x, report) = admm_run(&problem, &admm_opts(s)?)?;
    let (estimate, quality) = extract_rank_one(&x)?;
    let failure = (!report.converged).then(|| format!("ADMM did not converge after {} iterations", report.iterations));
    Ok(Outcome {
        estimate,
        details: json!({ "sdp": report, "rank_one_quality": quality }),
        files: vec![("sdp_trace.csv", report.trace_csv())],
        failure,
    })
}

fn dispatch(method: &str, s: &Settings, y: &MeasurementSet, rng: &mut Rng) -> CliResult<Outcome> {
    let n = y.signal_len();
    Ok(match method {
        "er" | "gs" => {
            let support = s.indices("support")?.unwrap_or_else(|| (0..n).collect());
            let constraint = match s.str_or("constraint", "support") {
                "support" => TemporalConstraint::Support(support),
                "support-nonneg" => TemporalConstraint::SupportNonnegative(support),
                "magnitudes" => {
                    let truth = s.path("truth").ok_or_else(|| CliError::config("magnitudes constraint needs `truth`"))?;
                    TemporalConstraint::KnownMagnitudes(load_signal(&truth)?.values().iter().map(|v| v.norm()).collect())
                }
                other => return Err(CliError::config(format!("unknown constraint `{other}`"))),
            };
            let (est, r) = error_reduction(y, &constraint, &initial_guess(s, y, rng)?, &alt_opts(s)?)?;
            iterative(est, r)
        }
        "hio" => {
            let support = s.indices("support")?.unwrap_or_else(|| (0..n).collect());
            let x0 = initial_guess(s, y, rng)?;
            let (est, r) = hio(y, &support, s.flag("nonnegative", false)?, s.or("beta", 0.9)?, &x0, &alt_opts(s)?)?;
            iterative(est, r)
        }
        "gla" => {
            let (est, r) = griffin_lim(y, &initial_guess(s, y, rng)?, &alt_opts(s)?)?;
            iterative(est, r)
        }
        "gd" => {
            let kind = match s.str_or("loss", "intensity") {
                "intensity" => LossKind::Intensity,
                "amplitude" => LossKind::Amplitude,
                other => return Err(CliError::config(format!("unknown loss `{other}`"))),
            };
            let spec = LossSpec::new(kind, y)?;
            let d = GdOptions::default();
            let opts = GdOptions { max_iter: s.or("max_iter", d.max_iter)?, tol: s.or("tol", d.tol)?, ..d };
            let (est, r) = gd_minimize(&spec, &initial_guess(s, y, rng)?, &opts)?;
            iterative(est, r)
        }
        "sdp-masked" => {
            let problem = match s.opt::<f64>("eps")? {
                Some(eps) => build_masked_noisy(y, eps)?,
                None => build_masked_trace(y)?,
            };
            sdp(problem, s)?
        }
        "sdp-stft" => sdp(build_stft_sdp(y, None)?, s)?,
        "sdp-minphase" => {
            let a = autocorr_from_measurements(y)?;
            let lags: Vec<C64> = (0..n as isize).map(|k| a.lag(k)).collect();
            sdp(build_minphase(&lags)?, s)?
        }
        "stft-ls" => Outcome { estimate: stft_ls_recover(y)?, details: json!({}), files: vec![], failure: None },
        "kolmogorov" => {
            let d = CepstralConfig::default();
            let cfg = CepstralConfig { grid_factor: s.or("grid_factor", d.grid_factor)?, tau: s.or("tau", d.tau)? };
            Outcome { estimate: kolmogorov_recover(y, &cfg)?, details: json!({}), files: vec![], failure: None }
        }
        "gespar" => {
            let sparsity: usize =
                s.opt("sparsity")?.ok_or_else(|| CliError::config("gespar needs `sparsity`"))?;
            let d = GesparOptions::default();
            let opts = GesparOptions {
                restarts: s.or("restarts", d.restarts)?,
                max_swaps: s.opt("max_swaps")?,
                ..d
            };
            let (est, report) = gespar(y, sparsity, &opts, rng)?;
            Outcome {
                estimate: est,
                details: json!({
                    "gespar": { "objective": report.objective, "support": report.support, "best_restart": report.best_restart }
                }),
                files: vec![],
                failure: None,
            }
        }
        other => return Err(CliError::config(format!("unknown method `{other}`"))),
    })
}

pub fn recover(c: &Common) -> CliResult<()> {
    let s = Settings::load(c, RECOVER_KEYS)?;
    let method = s.str("method").ok_or_else(|| CliError::config("`method` is required"))?.to_string();
    let y = load_measurements(&s)?;
    let truth = s.path("truth").map(|p| load_signal(&p)).transpose()?;
    let mut rng = Rng::new(s.or("seed", 0)?);

    let jobs: Option<usize> = s.opt("jobs")?;
    let outcome = match jobs {
        Some(j) => rayon_pool(j)?.install(|| dispatch(&method, &s, &y, &mut rng))?,
        None => dispatch(&method, &s, &y, &mut rng)?,
    };

    let mut report = json!({
        "method": method,
        "model": y.model().kind_name(),
        "signal_len": y.signal_len(),
        "converged": outcome.failure.is_none(),
    });
    if let Value::Object(extra) = outcome.details {
        report.as_object_mut().expect("object").extend(extra);
    }
    if let Some(t) = &truth {
        let (g, name) = group_for(y.model());
        let d = rel_dist_up_to(t, &outcome.estimate, g)?;
        report["relative_error"] = json!(d);
        report["error_group"] = json!(name);
    }

    let out = s.create_out()?;
    write(out, "recovered.json", &outcome.estimate.to_json())?;
    write(out, "recovered.csv", &outcome.estimate.to_csv())?;
    for (name, contents) in &outcome.files {
        write(out, name, contents)?;
    }
    write(out, "report.json", &serde_json::to_string_pretty(&report).expect("json"))?;
    println!("{}", serde_json::to_string(&report).expect("json"));
    match outcome.failure {
        Some(msg) => Err(CliError::solver(msg)),
        None => Ok(()),
    }
}

fn rayon_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(CliError::config("jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {jobs} workers: {e}")))
}

const AMBIGUITY_KEYS: &[&str] = &["input", "signal", "tol", "out", "seed", "jobs"];

pub fn ambiguities(c: &Common) -> CliResult<()> {
    let s = Settings::load(c, AMBIGUITY_KEYS)?;
    let poly = match s.path("signal") {
        Some(p) => AutocorrPoly::from_signal(&load_signal(&p)?)?,
        None => autocorr_from_measurements(&load_measurements(&s)?)?,
    };
    let set = enumerate_solutions(&poly, s.opt("tol")?)?;
    let report = json!({
        "signal_len": poly.signal_len(),
        "count": set.len(),
        "predicted_count": count_nontrivial(&set.pairing),
        "pairing": set.pairing,
        "solutions": set.solutions.iter().map(|x| {
            x.values().iter().map(|v| [v.re, v.im]).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "provenance": set.provenance,
    });
    let out = s.create_out()?;
    write(out, "ambiguities.json", &serde_json::to_string_pretty(&report).expect("json"))?;
    println!("{} solutions modulo rotation and conjugate reflection", set.len());
    Ok(())
}

pub fn bench(experiment: Experiment, c: &Common, full_scale: bool) -> CliResult<()> {
    let mut c = c.clone();
    if full_scale {
        c.set.push("full_scale=true".into());
    }
    let s = Settings::load(&c, phaseless::bench::EXPERIMENT_KEYS)?;
    let cfg = ExperimentConfig::from_kv(experiment, s.kv())?;
    let csv = match experiment {
        Experiment::Fig4 => run_fig4(&cfg)?.fig4_csv(),
        Experiment::Fig5 => run_fig5(&cfg)?.fig5_csv(),
        Experiment::Fig6 => run_fig6(&cfg)?.csv(),
    };
    let out = s.create_out()?;
    let name = format!("{}.csv", experiment.name());
    write(out, &name, &csv)?;
    println!("wrote {}", out.join(name).display());
    Ok(())
}
