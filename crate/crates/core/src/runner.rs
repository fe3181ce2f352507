//! Command execution behind the CLI: resolves a configuration, runs the
//! requested engine and writes the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, Engine, Observable, RunConfig, Violation};
use crate::dynamics::{effective_coupling, DynamicsError, Pump};
use crate::fock::{DensityMatrix, FockError};
use crate::observables::{self, ObservablesError, WignerGrid};
use crate::polarization::{self, FourModeDims, PolarizationError};
use crate::semiclassical::{self, SemiclassicalError};
use crate::trajectories::{
    self, rate_scale, EnsembleOptions, EvolutionSchedule, QsdModel, TrajectoryError, ORACLE_MAX_DIM,
};

/// Periods used by the deterministic threshold bisection.
pub const BISECTION_PERIODS: usize = 40;
pub const BISECTION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Oracle,
    Semiclassical,
    Threshold,
    Wigner,
    Triplet,
    Coupling,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Oracle => "oracle",
            Command::Semiclassical => "semiclassical",
            Command::Threshold => "threshold",
            Command::Wigner => "wigner",
            Command::Triplet => "triplet",
            Command::Coupling => "coupling",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Semiclassical(#[from] SemiclassicalError),
    #[error(transparent)]
    Observables(#[from] ObservablesError),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Trajectory(e) => match e.root() {
                TrajectoryError::TruncationOverflow { .. } => 3,
                TrajectoryError::OracleTooLarge { .. } => 4,
                TrajectoryError::NumericalCollapse { .. } => 5,
                TrajectoryError::InvalidSchedule(_) | TrajectoryError::TooFewTrajectories(_) => 2,
                _ => 1,
            },
            RunError::Semiclassical(SemiclassicalError::UnsupportedAsymmetricDecay { .. })
            | RunError::Semiclassical(SemiclassicalError::Invalid(_)) => 2,
            RunError::Observables(ObservablesError::GridTooSmall { .. })
            | RunError::Observables(ObservablesError::InvalidGrid(_)) => 2,
            RunError::Dynamics(_) => 2,
            _ => 1,
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Files written, relative to the output directory, in write order.
    pub files: Vec<String>,
    /// Human-readable result lines.
    pub lines: Vec<String>,
}

struct Output {
    dir: PathBuf,
    outcome: Outcome,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outcome: Outcome::default(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.outcome.files.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, &text)
    }

    fn line(&mut self, s: String) {
        self.outcome.lines.push(s);
    }

    fn finish(mut self, command: Command, config: Value, seed: Option<u64>) -> Result<Outcome, RunError> {
        let manifest = json!({
            "code_version": crate::VERSION,
            "command": command.name(),
            "seed": seed,
            "config": config,
            "files": self.outcome.files.clone(),
        });
        self.write_json("manifest.json", &manifest)?;
        Ok(self.outcome)
    }
}

/// Runs `command`. `config` is required for every command except `triplet`.
pub fn execute(
    command: Command,
    config: Option<&Path>,
    out_dir: &Path,
    overrides: Overrides,
) -> Result<Outcome, RunError> {
    match command {
        Command::Triplet => run_triplet(config, out_dir),
        Command::Coupling => {
            let path = config.ok_or_else(|| missing_config(command))?;
            run_coupling(path, out_dir)
        }
        _ => {
            let path = config.ok_or_else(|| missing_config(command))?;
            let mut cfg = RunConfig::from_path(path)?;
            apply_overrides(&mut cfg, overrides);
            execute_config(command, &cfg, out_dir)
        }
    }
}

fn missing_config(command: Command) -> RunError {
    RunError::Config(ConfigError::Invalid(vec![Violation {
        path: "--config".into(),
        message: format!("`{}` needs a configuration file", command.name()),
    }]))
}

pub fn apply_overrides(cfg: &mut RunConfig, overrides: Overrides) {
    if let Some(s) = overrides.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = overrides.workers {
        cfg.run.workers = w;
    }
}

/// Runs a configuration-driven command on an already parsed configuration.
pub fn execute_config(command: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, RunError> {
    let mut out = Output::new(out_dir)?;
    let seed = cfg.run.seed;
    match command {
        Command::Simulate => match cfg.run.engine {
            Engine::Semiclassical => semiclassical_run(cfg, &mut out)?,
            engine => quantum_run(cfg, engine, false, &mut out)?,
        },
        Command::Oracle => quantum_run(cfg, Engine::Oracle, false, &mut out)?,
        Command::Semiclassical => semiclassical_run(cfg, &mut out)?,
        Command::Wigner => {
            let engine = match cfg.run.engine {
                Engine::Semiclassical => Engine::Qsd,
                e => e,
            };
            quantum_run(cfg, engine, true, &mut out)?
        }
        Command::Threshold => threshold_run(cfg, &mut out)?,
        Command::Triplet | Command::Coupling => unreachable!("handled by execute"),
    }
    out.finish(command, manifest_config(cfg), Some(seed))
}

/// Resolved configuration as recorded in the manifest. The worker count is an
/// execution setting and is left out so that outputs do not depend on it.
fn manifest_config(cfg: &RunConfig) -> Value {
    let mut c = cfg.clone();
    c.run.workers = 0;
    json!({
        "toml": c.to_toml(),
        "resolved": {
            "params": cfg.params(),
            "pump": cfg.pump(),
            "cutoffs": [cfg.system.cutoff1, cfg.system.cutoff2],
            "engine": cfg.run.engine.name(),
            "schedule": run_schedule(cfg),
        },
    })
}

/// Sample grid including the `P(n)` and Wigner instants.
pub fn run_schedule(cfg: &RunConfig) -> EvolutionSchedule {
    let mut times = cfg.sample_times();
    times.extend(pn_times(cfg));
    times.extend(wigner_times(cfg));
    times.sort_by(f64::total_cmp);
    let tol = 1e-9 * cfg.run.dt;
    times.dedup_by(|a, b| (*a - *b).abs() <= tol);
    EvolutionSchedule::new(cfg.run.t_start, cfg.run.t_end, cfg.run.dt, times)
}

fn pn_times(cfg: &RunConfig) -> Vec<f64> {
    match (cfg.wants(Observable::Pn), cfg.run.pn_times.is_empty()) {
        (false, _) => vec![],
        (true, true) => vec![cfg.run.t_end],
        (true, false) => cfg.run.pn_times.clone(),
    }
}

fn wigner_times(cfg: &RunConfig) -> Vec<f64> {
    match cfg.run.wigner_times.is_empty() {
        true => vec![cfg.run.t_end],
        false => cfg.run.wigner_times.clone(),
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(i, _)| i)
        .expect("non-empty sample grid")
}

/// Ensemble-level results shared by the QSD and oracle engines.
struct QuantumSeries {
    csv: String,
    times: Vec<f64>,
    n1: Vec<f64>,
    g3: Vec<Option<f64>>,
    se_g3: Vec<Option<f64>>,
    /// Reduced mode-1 states with per-entry standard errors, keyed by sample index.
    rho1: Vec<(usize, DensityMatrix, Option<Vec<f64>>)>,
    max_top_population: f64,
}

fn quantum_series(cfg: &RunConfig, engine: Engine, rho_at: Vec<usize>) -> Result<QuantumSeries, RunError> {
    let params = cfg.params();
    let pump = cfg.pump();
    let dims = cfg.dims();
    let schedule = run_schedule(cfg);
    let model = QsdModel::new(&params, &pump, &dims);
    let initial = cfg.run.initial.build(&dims)?;
    match engine {
        Engine::Oracle => {
            if dims.total() > ORACLE_MAX_DIM {
                return Err(TrajectoryError::OracleTooLarge { dim: dims.total() }.into());
            }
            let s = trajectories::master_equation_oracle(&model, &schedule, &initial, false, cfg.run.leakage_tolerance)?;
            let g3: Vec<Option<f64>> = (0..s.times.len()).map(|i| s.g3(i)).collect();
            let rho1 = rho_at.iter().map(|&i| (i, s.rho1[i].clone(), None)).collect();
            Ok(QuantumSeries {
                csv: s.to_csv(),
                se_g3: g3.iter().map(|g| g.map(|_| 0.0)).collect(),
                g3,
                times: s.times,
                n1: s.n1,
                rho1,
                max_top_population: s.max_top_population,
            })
        }
        _ => {
            schedule.validate(rate_scale(&params, &pump))?;
            let options = EnsembleOptions {
                workers: cfg.run.workers,
                record_rho1: !rho_at.is_empty(),
                rho1_samples: Some(rho_at),
                leakage_tolerance: cfg.run.leakage_tolerance,
            };
            let r = trajectories::ensemble_average(&model, &schedule, &initial, cfg.run.trajectories, cfg.run.seed, &options)?;
            let rho1 = match (r.rho1.clone(), r.rho1_se.clone()) {
                (Some(rho), Some(se)) => r
                    .rho1_indices
                    .iter()
                    .zip(rho)
                    .zip(se)
                    .map(|((&i, m), s)| (i, m, Some(s)))
                    .collect(),
                _ => vec![],
            };
            Ok(QuantumSeries {
                csv: r.to_csv(),
                times: r.times,
                n1: r.n1,
                g3: r.g3,
                se_g3: r.se_g3,
                rho1,
                max_top_population: r.max_top_population,
            })
        }
    }
}

fn quantum_run(cfg: &RunConfig, engine: Engine, wigner_only: bool, out: &mut Output) -> Result<(), RunError> {
    let schedule = run_schedule(cfg);
    let pn_idx: Vec<usize> = pn_times(cfg).iter().map(|&t| nearest(&schedule.sample_times, t)).collect();
    let want_wigner = wigner_only || cfg.wants(Observable::Wigner);
    let wig_idx: Vec<usize> = match want_wigner {
        true => wigner_times(cfg).iter().map(|&t| nearest(&schedule.sample_times, t)).collect(),
        false => vec![],
    };
    let mut rho_at: Vec<usize> = pn_idx.iter().chain(&wig_idx).copied().collect();
    rho_at.sort_unstable();
    rho_at.dedup();
    let series = quantum_series(cfg, engine, rho_at)?;
    let rho_for = |i: usize| {
        series
            .rho1
            .iter()
            .find(|(k, _, _)| *k == i)
            .expect("requested sample recorded")
    };

    if !wigner_only {
        out.write("timeseries.csv", &series.csv)?;
    }
    if !wigner_only && !pn_idx.is_empty() {
        let mut csv = String::from("t,n,p,se_p\n");
        for &i in &pn_idx {
            let (_, rho, se) = rho_for(i);
            let d = rho.dim();
            for (n, p) in rho.diagonal().into_iter().enumerate() {
                let s = se.as_ref().map_or(0.0, |s| s[n * d + n]);
                writeln!(csv, "{},{},{},{}", series.times[i], n, p, s).unwrap();
            }
        }
        out.write("pn.csv", &csv)?;
    }
    let mut wigner_summary = vec![];
    for (k, &i) in wig_idx.iter().enumerate() {
        let (_, rho, _) = rho_for(i);
        let grid = observables::wigner(rho, &cfg.run.wigner)?;
        out.write(&format!("wigner_{k}.csv"), &wigner_csv(&grid))?;
        let mut meta = observables::wigner_metadata(&grid);
        let extra = json!({
            "t": series.times[i],
            "engine": engine.name(),
            "mean_photon_number": observables::mean_photon_number(rho),
            "threefold_defect": grid.threefold_defect(),
        });
        merge(&mut meta, extra);
        out.line(format!(
            "wigner t={} min={:.6e} negativity={:.6e}",
            series.times[i],
            grid.min(),
            observables::wigner_negativity(&grid)
        ));
        wigner_summary.push(json!({ "t": series.times[i], "file": format!("wigner_{k}.csv"), "min": grid.min() }));
        out.write_json(&format!("wigner_{k}.json"), &meta)?;
    }
    if wigner_only {
        return Ok(());
    }

    let mut summary = json!({
        "engine": engine.name(),
        "samples": series.times.len(),
        "max_top_population": series.max_top_population,
        "final_n1": series.n1.last(),
        "wigner": wigner_summary,
    });
    if let Some([a, b]) = cfg.run.summary_window {
        merge(&mut summary, json!({ "window": window_summary(cfg, &series, a, b) }));
    }
    out.line(format!(
        "{} samples, final n1={:.6e}, max top population={:.3e}",
        series.times.len(),
        series.n1.last().copied().unwrap_or(f64::NAN),
        series.max_top_population
    ));
    out.write_json("summary.json", &summary)
}

fn merge(target: &mut Value, extra: Value) {
    if let (Value::Object(t), Value::Object(e)) = (target, extra) {
        t.extend(e);
    }
}

/// Rows `rho,theta,w` on the polar grid.
pub fn wigner_csv(grid: &WignerGrid) -> String {
    let mut out = String::from("rho,theta,w\n");
    for (j, r) in grid.radii.iter().enumerate() {
        for (k, th) in grid.angles.iter().enumerate() {
            writeln!(out, "{},{},{}", r, th, grid.at(j, k)).unwrap();
        }
    }
    out
}

/// Photon-number and `g3` peaks inside `[a, b]`, overall and per pump period.
fn window_summary(cfg: &RunConfig, s: &QuantumSeries, a: f64, b: f64) -> Value {
    let period = match cfg.pump() {
        Pump::Pulsed(p) => p.separation,
        Pump::Continuous => b - a,
    };
    let inside: Vec<usize> = (0..s.times.len()).filter(|&i| s.times[i] >= a && s.times[i] <= b).collect();
    let peaks = |idx: &[usize]| {
        let max_n = idx.iter().copied().max_by(|&i, &j| s.n1[i].total_cmp(&s.n1[j]));
        let max_g = idx
            .iter()
            .copied()
            .filter(|&i| s.g3[i].is_some())
            .max_by(|&i, &j| s.g3[i].unwrap().total_cmp(&s.g3[j].unwrap()));
        json!({
            "max_n1": max_n.map(|i| s.n1[i]),
            "t_max_n1": max_n.map(|i| s.times[i]),
            "g3_at_max_n1": max_n.and_then(|i| s.g3[i]),
            "peak_g3": max_g.and_then(|i| s.g3[i]),
            "se_peak_g3": max_g.and_then(|i| s.se_g3[i]),
            "t_peak_g3": max_g.map(|i| s.times[i]),
            "n1_at_peak_g3": max_g.map(|i| s.n1[i]),
        })
    };
    let mut periods = vec![];
    let mut start = a;
    while start < b && period > 0.0 {
        let end = (start + period).min(b);
        let idx: Vec<usize> = inside
            .iter()
            .copied()
            .filter(|&i| s.times[i] >= start && (s.times[i] < end || (end == b && s.times[i] <= b)))
            .collect();
        if !idx.is_empty() {
            let mut p = peaks(&idx);
            merge(&mut p, json!({ "start": start, "end": end }));
            periods.push(p);
        }
        start = end;
    }
    let mut overall = peaks(&inside);
    merge(&mut overall, json!({ "start": a, "end": b, "periods": periods }));
    overall
}

fn semiclassical_run(cfg: &RunConfig, out: &mut Output) -> Result<(), RunError> {
    let schedule = cfg.schedule();
    let r = semiclassical::sde_run(
        &cfg.params(),
        &cfg.pump(),
        &schedule,
        cfg.run.trajectories,
        cfg.run.seed,
        cfg.run.drift_variant,
        cfg.run.workers,
    )?;
    out.write("semiclassical.csv", &r.to_csv())?;
    out.line(format!(
        "{} paths kept, {} discarded, final n1={:.6e}",
        r.kept,
        r.discarded,
        r.n1.last().copied().unwrap_or(f64::NAN)
    ));
    out.write_json(
        "summary.json",
        &json!({
            "engine": "semiclassical",
            "drift_variant": cfg.run.drift_variant,
            "kept": r.kept,
            "discarded": r.discarded,
            "discard_fraction": r.discard_fraction,
            "final_n1": r.n1.last(),
            "final_n2": r.n2.last(),
        }),
    )
}

fn threshold_run(cfg: &RunConfig, out: &mut Output) -> Result<(), RunError> {
    let params = cfg.params();
    let pump = cfg.pump();
    let report = semiclassical::stability_report(&params, &pump)?;
    let bisected =
        semiclassical::bisect_threshold(&params, &pump, cfg.run.drift_variant, BISECTION_PERIODS, BISECTION_TOLERANCE);
    let rel = (bisected - report.threshold_drive).abs() / report.threshold_drive;
    out.line(format!("threshold drive (closed form) = {:.9e}", report.threshold_drive));
    out.line(format!("threshold drive (bisection)   = {bisected:.9e}  rel. diff {rel:.3e}"));
    out.line(format!(
        "drive ratio {:.6}  lambda+ {:.9e}  lambda- {:.9e}  {:?}",
        report.drive_ratio, report.lambda_plus, report.lambda_minus, report.verdict
    ));
    out.write_json(
        "threshold.json",
        &json!({
            "report": report,
            "bisected_drive": bisected,
            "bisection_periods": BISECTION_PERIODS,
            "relative_difference": rel,
        }),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripletFile {
    #[serde(default)]
    triplet: TripletSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TripletSection {
    chi: f64,
    k: f64,
    e0: f64,
    cutoff: usize,
}

impl Default for TripletSection {
    fn default() -> Self {
        Self {
            chi: 1.0,
            k: 1.0,
            e0: 1.0,
            cutoff: polarization::DEFAULT_CUTOFF,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingFile {
    coupling: CouplingSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingSection {
    #[serde(default)]
    delta_k: f64,
    /// `[length, chi]` pairs.
    segments: Vec<[f64; 2]>,
}

fn read_small<T: for<'de> Deserialize<'de>>(path: &Path, section: &str) -> Result<T, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| {
        RunError::Config(ConfigError::Invalid(vec![Violation {
            path: section.into(),
            message: e.message().to_string(),
        }]))
    })
}

fn run_triplet(config: Option<&Path>, out_dir: &Path) -> Result<Outcome, RunError> {
    let t = match config {
        Some(p) => read_small::<TripletFile>(p, "triplet")?.triplet,
        None => TripletSection::default(),
    };
    let dims = FourModeDims::uniform(t.cutoff);
    let state = polarization::triplet_state(t.chi, t.k, t.e0, &dims)?;
    let normalized = state.normalized.clone().ok_or(PolarizationError::ZeroState)?;
    let purity = polarization::nonproduct_check(&normalized)?;
    let basis = dims.basis();
    let mut csv = String::from("n1v,n1h,n2v,n2h,re,im,re_normalized,im_normalized\n");
    for (i, (a, b)) in state
        .unnormalized
        .amplitudes()
        .iter()
        .zip(normalized.amplitudes())
        .enumerate()
    {
        if a.norm_sqr() > 0.0 {
            let o = basis.occupations(i);
            writeln!(csv, "{},{},{},{},{},{},{},{}", o[0], o[1], o[2], o[3], a.re, a.im, b.re, b.im).unwrap();
        }
    }
    let mut out = Output::new(out_dir)?;
    out.write("triplet.csv", &csv)?;
    let amp = |s: &crate::fock::StateVector, occ: [usize; 4]| -> Result<C64, RunError> { Ok(s.amplitude(&occ)?) };
    let a30 = amp(&normalized, [3, 0, 0, 0])?;
    let a03 = amp(&normalized, [0, 3, 0, 0])?;
    out.line(format!("amplitude |3,0> = {a30}, |0,3> = {a03}"));
    out.line(format!("reduced purity = {purity:.15}"));
    out.write_json(
        "triplet.json",
        &json!({
            "chi": t.chi,
            "k": t.k,
            "e0": t.e0,
            "cutoff": t.cutoff,
            "unnormalized_norm": state.unnormalized.norm_sqr().sqrt(),
            "amplitude_30": [a30.re, a30.im],
            "amplitude_03": [a03.re, a03.im],
            "reduced_purity": purity,
            "form": "(-i)^2 H2 H1 |vac>; 1/2! and time ordering omitted",
        }),
    )?;
    let cfg = json!({ "triplet": { "chi": t.chi, "k": t.k, "e0": t.e0, "cutoff": t.cutoff } });
    out.finish(Command::Triplet, cfg, None)
}

fn run_coupling(path: &Path, out_dir: &Path) -> Result<Outcome, RunError> {
    let c = read_small::<CouplingFile>(path, "coupling")?.coupling;
    let profile: Vec<(f64, f64)> = c.segments.iter().map(|s| (s[0], s[1])).collect();
    let k = effective_coupling(&profile, c.delta_k)?;
    let mut out = Output::new(out_dir)?;
    out.line(format!("effective coupling = {:.12e} {:+.12e}i (|k| = {:.12e})", k.re, k.im, k.norm()));
    out.write_json("coupling.json", &json!({ "re": k.re, "im": k.im, "abs": k.norm() }))?;
    let cfg = json!({ "coupling": { "delta_k": c.delta_k, "segments": c.segments } });
    out.finish(Command::Coupling, cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> RunConfig {
        RunConfig::parse(&format!(
            "[system]\nchi2 = 0.3\ndrive = 0.4\ncutoff1 = 8\ncutoff2 = 5\n[run]\nt_end = 1.0\ndt = 0.01\nsample_every = 0.25\ntrajectories = 40\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn schedule_includes_requested_instants() {
        let c = cfg("observables = [\"n\", \"pn\", \"wigner\"]\npn_times = [0.33]\nwigner_times = [0.5, 0.9]");
        let s = run_schedule(&c);
        assert_eq!(s.sample_times, vec![0.0, 0.25, 0.33, 0.5, 0.75, 0.9, 1.0]);
        assert_eq!(nearest(&s.sample_times, 0.9), 5);
    }

    #[test]
    fn exit_codes() {
        let overflow = TrajectoryError::Trajectory {
            index: 3,
            source: Box::new(TrajectoryError::TruncationOverflow {
                t: 0.0,
                population: 1.0,
                tolerance: 1e-4,
            }),
        };
        assert_eq!(RunError::from(overflow).exit_code(), 3);
        assert_eq!(RunError::from(TrajectoryError::OracleTooLarge { dim: 5000 }).exit_code(), 4);
        assert_eq!(
            RunError::from(TrajectoryError::NumericalCollapse { t: 0.0, norm: 0.0 }).exit_code(),
            5
        );
        assert_eq!(RunError::Config(ConfigError::Syntax("x".into())).exit_code(), 2);
        let io = RunError::Io {
            path: "x".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(io.exit_code(), 1);
    }

    #[test]
    fn oracle_outputs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("engine = \"oracle\"\nobservables = [\"n\", \"g3\", \"pn\", \"wigner\"]\nwigner_radius = 4.0\nwigner_radial = 8\nwigner_angular = 12");
        let o = execute_config(Command::Simulate, &c, dir.path()).unwrap();
        assert_eq!(
            o.files,
            ["timeseries.csv", "pn.csv", "wigner_0.csv", "wigner_0.json", "summary.json", "manifest.json"]
        );
        let pn = std::fs::read_to_string(dir.path().join("pn.csv")).unwrap();
        let total: f64 = pn.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let w = std::fs::read_to_string(dir.path().join("wigner_0.csv")).unwrap();
        assert_eq!(w.lines().next(), Some("rho,theta,w"));
        assert_eq!(w.lines().count(), 1 + 8 * 12);
        let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["command"], "simulate");
        assert_eq!(m["code_version"], crate::VERSION);
        let toml = m["config"]["toml"].as_str().unwrap();
        assert_eq!(RunConfig::parse(toml).unwrap().run.trajectories, 40);
    }

    #[test]
    fn oracle_budget_is_reported() {
        let c = RunConfig::parse(
            "[system]\ndrive = 0.1\ncutoff1 = 80\ncutoff2 = 60\n[run]\nengine = \"oracle\"\nt_end = 0.1\ndt = 0.01\nsample_every = 0.1",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let e = execute_config(Command::Oracle, &c, dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn window_summary_finds_peaks_per_period() {
        let c = RunConfig::parse(
            "[system]\ndrive = 0.1\ncutoff1 = 4\ncutoff2 = 4\n[pulses]\nmode = \"pulsed\"\nduration = 1.0\ntau = 2.0\n[run]\nt_end = 8.0\ndt = 0.01\nsample_every = 1.0\nsummary_window = [4.0, 8.0]",
        )
        .unwrap();
        let times: Vec<f64> = (0..=8).map(f64::from).collect();
        let s = QuantumSeries {
            csv: String::new(),
            n1: times.iter().map(|t| 1.0 + (t * 1.3).sin()).collect(),
            g3: times.iter().map(|t| Some(*t)).collect(),
            se_g3: times.iter().map(|_| Some(0.1)).collect(),
            times,
            rho1: vec![],
            max_top_population: 0.0,
        };
        let v = window_summary(&c, &s, 4.0, 8.0);
        assert_eq!(v["peak_g3"], 8.0);
        assert_eq!(v["periods"].as_array().unwrap().len(), 2);
        assert_eq!(v["periods"][0]["peak_g3"], 5.0);
        assert_eq!(v["periods"][1]["peak_g3"], 8.0);
    }

    #[test]
    fn triplet_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let o = execute(Command::Triplet, None, dir.path(), Overrides::default()).unwrap();
        assert_eq!(o.files, ["triplet.csv", "triplet.json", "manifest.json"]);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("triplet.json")).unwrap()).unwrap();
        assert!((v["reduced_purity"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coupling_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[coupling]\nsegments = [[1.0, 2.0], [0.5, -1.0]]\n").unwrap();
        execute(Command::Coupling, Some(&path), &dir.path().join("out"), Overrides::default()).unwrap();
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/coupling.json")).unwrap()).unwrap();
        assert!((v["re"].as_f64().unwrap() - 1.5).abs() < 1e-14);
        std::fs::write(&path, "[coupling]\nsegments = [[1.0, 2.0]]\nextra = 1\n").unwrap();
        let e = execute(Command::Coupling, Some(&path), &dir.path().join("out"), Overrides::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
