//! Run configuration: flat typed TOML with `system`, `pulses` and `run`
//! sections, validated in one pass so that every violation is reported with
//! its key path.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::dynamics::{Pump, PulseTrain, SystemParams, DEFAULT_WINDOW};
use crate::fock::BasisDims;
use crate::observables::WignerGridSpec;
use crate::semiclassical::{self, DriftVariant};
use crate::trajectories::{rate_scale, EvolutionSchedule, InitialState, DEFAULT_LEAKAGE_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    /// Drive rate `chi1 E_L / gamma0` in units of `gamma1`.
    Rate(f64),
    /// Fraction of the threshold drive.
    ThresholdRatio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub chi1: f64,
    pub chi2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub drive: Drive,
    pub cutoff1: usize,
    pub cutoff2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseConfig {
    pub duration: f64,
    pub tau: f64,
    pub t0: f64,
    pub window: f64,
    pub periodic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Qsd,
    Oracle,
    Semiclassical,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Qsd => "qsd",
            Engine::Oracle => "oracle",
            Engine::Semiclassical => "semiclassical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    N,
    Pn,
    G3,
    Wigner,
}

impl Observable {
    fn name(self) -> &'static str {
        match self {
            Observable::N => "n",
            Observable::Pn => "pn",
            Observable::G3 => "g3",
            Observable::Wigner => "wigner",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Every(f64),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSection {
    pub engine: Engine,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sampling: Sampling,
    pub trajectories: usize,
    pub seed: u64,
    pub workers: usize,
    pub initial: InitialState,
    pub observables: Vec<Observable>,
    pub pn_times: Vec<f64>,
    pub wigner_times: Vec<f64>,
    pub wigner: WignerGridSpec,
    pub leakage_tolerance: f64,
    pub drift_variant: DriftVariant,
    /// Time window summarized per pump period.
    pub summary_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    /// `None` for continuous pumping.
    pub pulses: Option<PulseConfig>,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        parse_table(&table)
    }

    pub fn pump(&self) -> Pump {
        match self.pulses {
            None => Pump::Continuous,
            Some(p) => Pump::Pulsed(PulseTrain {
                window: p.window,
                ..PulseTrain::new(p.duration, p.tau, p.t0, p.periodic)
            }),
        }
    }

    /// System parameters with the drive resolved to a rate.
    pub fn params(&self) -> SystemParams {
        let s = &self.system;
        let mut params = SystemParams {
            chi1: s.chi1,
            chi2: s.chi2,
            gamma0: s.gamma0,
            gamma1: s.gamma1,
            gamma2: s.gamma2,
            drive: 0.0,
        };
        params.drive = match s.drive {
            Drive::Rate(r) => r,
            Drive::ThresholdRatio(r) => {
                r * semiclassical::threshold(&params, &self.pump())
                    .map(|t| t.drive)
                    .unwrap_or(f64::NAN)
            }
        };
        params
    }

    pub fn dims(&self) -> BasisDims {
        BasisDims::two_mode(self.system.cutoff1, self.system.cutoff2)
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let r = &self.run;
        match &r.sampling {
            Sampling::Times(t) => t.clone(),
            Sampling::Every(every) => EvolutionSchedule::uniform(r.t_start, r.t_end, r.dt, *every).sample_times,
        }
    }

    pub fn schedule(&self) -> EvolutionSchedule {
        EvolutionSchedule::new(self.run.t_start, self.run.t_end, self.run.dt, self.sample_times())
    }

    pub fn wants(&self, o: Observable) -> bool {
        self.run.observables.contains(&o)
    }

    /// Equivalent TOML text; parsing it yields `self` again.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        let s = &self.system;
        let mut system = Table::new();
        system.insert("chi1".into(), s.chi1.into());
        system.insert("chi2".into(), s.chi2.into());
        system.insert("gamma0".into(), s.gamma0.into());
        system.insert("gamma1".into(), s.gamma1.into());
        system.insert("gamma2".into(), s.gamma2.into());
        match s.drive {
            Drive::Rate(r) => system.insert("drive".into(), r.into()),
            Drive::ThresholdRatio(r) => system.insert("drive_ratio".into(), r.into()),
        };
        system.insert("cutoff1".into(), (s.cutoff1 as i64).into());
        system.insert("cutoff2".into(), (s.cutoff2 as i64).into());
        root.insert("system".into(), system.into());

        let mut pulses = Table::new();
        match self.pulses {
            None => {
                pulses.insert("mode".into(), "cw".into());
            }
            Some(p) => {
                pulses.insert("mode".into(), "pulsed".into());
                pulses.insert("duration".into(), p.duration.into());
                pulses.insert("tau".into(), p.tau.into());
                pulses.insert("t0".into(), p.t0.into());
                pulses.insert("window".into(), p.window.into());
                pulses.insert("periodic".into(), p.periodic.into());
            }
        }
        root.insert("pulses".into(), pulses.into());

        let r = &self.run;
        let mut run = Table::new();
        let floats = |v: &[f64]| Value::Array(v.iter().map(|&x| x.into()).collect());
        run.insert("engine".into(), r.engine.name().into());
        run.insert("t_start".into(), r.t_start.into());
        run.insert("t_end".into(), r.t_end.into());
        run.insert("dt".into(), r.dt.into());
        match &r.sampling {
            Sampling::Every(e) => run.insert("sample_every".into(), (*e).into()),
            Sampling::Times(t) => run.insert("sample_times".into(), floats(t)),
        };
        run.insert("trajectories".into(), (r.trajectories as i64).into());
        run.insert("seed".into(), (r.seed as i64).into());
        run.insert("workers".into(), (r.workers as i64).into());
        match r.initial {
            InitialState::Vacuum => {
                run.insert("initial".into(), "vacuum".into());
            }
            InitialState::Fock { n1, n2 } => {
                run.insert("initial".into(), "fock".into());
                run.insert("initial_n1".into(), (n1 as i64).into());
                run.insert("initial_n2".into(), (n2 as i64).into());
            }
            InitialState::Coherent { alpha1, alpha2 } => {
                run.insert("initial".into(), "coherent".into());
                run.insert("initial_alpha1".into(), floats(&alpha1));
                run.insert("initial_alpha2".into(), floats(&alpha2));
            }
        }
        run.insert(
            "observables".into(),
            Value::Array(r.observables.iter().map(|o| o.name().into()).collect()),
        );
        run.insert("pn_times".into(), floats(&r.pn_times));
        run.insert("wigner_times".into(), floats(&r.wigner_times));
        run.insert("wigner_radius".into(), r.wigner.radius.into());
        run.insert("wigner_radial".into(), (r.wigner.n_radial as i64).into());
        run.insert("wigner_angular".into(), (r.wigner.n_angular as i64).into());
        run.insert("leakage_tolerance".into(), r.leakage_tolerance.into());
        let variant = match r.drift_variant {
            DriftVariant::PaperLiteral => "paper_literal",
            DriftVariant::HamiltonianDerived => "hamiltonian_derived",
        };
        run.insert("drift_variant".into(), variant.into());
        if let Some(w) = r.summary_window {
            run.insert("summary_window".into(), floats(&w));
        }
        root.insert("run".into(), run.into());
        toml::to_string(&root).expect("plain tables serialize")
    }
}

/// Typed key access on one section, recording every problem.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: BTreeSet<String>,
    errors: &'a mut Vec<Violation>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errors: &'a mut Vec<Violation>) -> Self {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errors.push(Violation {
                    path: name.into(),
                    message: "must be a table".into(),
                });
                None
            }
        };
        Self {
            name,
            table,
            seen: BTreeSet::new(),
            errors,
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        let path = self.path(key);
        self.errors.push(Violation {
            path,
            message: message.into(),
        });
    }

    fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.seen.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.fail(key, "expected a number");
                None
            }
        }
    }

    fn required_float(&mut self, key: &str) -> Option<f64> {
        let v = self.float(key);
        if v.is_none() && !self.has(key) {
            self.fail(key, "missing required key");
        }
        v
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        match self.raw(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.fail(key, "expected a non-negative integer");
                None
            }
        }
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        match self.raw(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.fail(key, "expected true or false");
                None
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<&'a str> {
        match self.raw(key)? {
            Value::String(s) => Some(s.as_str()),
            _ => {
                self.fail(key, "expected a string");
                None
            }
        }
    }

    fn float_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let Value::Array(items) = self.raw(key)? else {
            self.fail(key, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(f) => out.push(*f),
                Value::Integer(i) => out.push(*i as f64),
                _ => {
                    self.fail(key, "expected an array of numbers");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn string_list(&mut self, key: &str) -> Option<Vec<&'a str>> {
        let Value::Array(items) = self.raw(key)? else {
            self.fail(key, "expected an array of strings");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::String(s) => out.push(s.as_str()),
                _ => {
                    self.fail(key, "expected an array of strings");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn check(&mut self, key: &str, value: Option<f64>, ok: impl Fn(f64) -> bool, message: &str) {
        if let Some(v) = value {
            if !(v.is_finite() && ok(v)) {
                self.fail(key, format!("{message} (got {v})"));
            }
        }
    }

    fn finish(self) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !self.seen.contains(key) {
                    self.errors.push(Violation {
                        path: format!("{}.{key}", self.name),
                        message: "unknown key".into(),
                    });
                }
            }
        }
    }
}

fn parse_table(root: &Table) -> Result<RunConfig, ConfigError> {
    let mut errors = Vec::new();
    for key in root.keys() {
        if !["system", "pulses", "run"].contains(&key.as_str()) {
            errors.push(Violation {
                path: key.clone(),
                message: "unknown section".into(),
            });
        }
    }
    if !root.contains_key("system") {
        errors.push(Violation {
            path: "system".into(),
            message: "missing required section".into(),
        });
    }
    if !root.contains_key("run") {
        errors.push(Violation {
            path: "run".into(),
            message: "missing required section".into(),
        });
    }

    let system = parse_system(root, &mut errors);
    let pulses = parse_pulses(root, &mut errors);
    let run = parse_run(root, pulses.as_ref().and_then(|p| p.as_ref()), &mut errors);

    let (Some(system), Some(pulses), Some(run)) = (system, pulses, run) else {
        return Err(ConfigError::Invalid(errors));
    };
    let config = RunConfig { system, pulses, run };
    cross_check(&config, &mut errors);
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

fn parse_system(root: &Table, errors: &mut Vec<Violation>) -> Option<SystemConfig> {
    let mut s = Section::new(root, "system", errors);
    let chi1 = s.float("chi1").or(Some(1.0));
    let chi2 = s.float("chi2").or(Some(0.0));
    let gamma0 = s.float("gamma0").or(Some(1.0));
    let gamma1 = s.float("gamma1").or(Some(1.0));
    let gamma2 = s.float("gamma2").or(Some(1.0));
    s.check("chi1", chi1, |v| v > 0.0, "must be > 0");
    s.check("chi2", chi2, |v| v >= 0.0, "must be >= 0");
    s.check("gamma0", gamma0, |v| v > 0.0, "must be > 0");
    s.check("gamma1", gamma1, |v| v > 0.0, "must be > 0");
    s.check("gamma2", gamma2, |v| v > 0.0, "must be > 0");

    let rate = s.float("drive");
    let ratio = s.float("drive_ratio");
    s.check("drive", rate, |v| v >= 0.0, "must be >= 0");
    s.check("drive_ratio", ratio, |v| v >= 0.0, "must be >= 0");
    let drive = match (rate, ratio, s.has("drive") || s.has("drive_ratio")) {
        (Some(_), Some(_), _) => {
            s.fail("drive", "give either drive or drive_ratio, not both");
            None
        }
        (Some(r), None, _) => Some(Drive::Rate(r)),
        (None, Some(r), _) => Some(Drive::ThresholdRatio(r)),
        (None, None, false) => {
            s.fail("drive", "missing required key (or system.drive_ratio)");
            None
        }
        (None, None, true) => None,
    };

    let cutoff = |s: &mut Section, key: &str| {
        let c = s.uint(key);
        if c.is_none() && !s.has(key) {
            s.fail(key, "missing required key");
        }
        match c {
            Some(c) if c < 2 => {
                s.fail(key, format!("must be >= 2 (got {c})"));
                None
            }
            c => c.map(|c| c as usize),
        }
    };
    let cutoff1 = cutoff(&mut s, "cutoff1");
    let cutoff2 = cutoff(&mut s, "cutoff2");
    let present = s.table.is_some();
    s.finish();
    if !present {
        return None;
    }
    Some(SystemConfig {
        chi1: chi1?,
        chi2: chi2?,
        gamma0: gamma0?,
        gamma1: gamma1?,
        gamma2: gamma2?,
        drive: drive?,
        cutoff1: cutoff1?,
        cutoff2: cutoff2?,
    })
}

/// `Some(None)` is continuous pumping; `None` means the section was invalid.
fn parse_pulses(root: &Table, errors: &mut Vec<Violation>) -> Option<Option<PulseConfig>> {
    let mut s = Section::new(root, "pulses", errors);
    let mode = s.string("mode").unwrap_or("cw");
    let out = match mode {
        "cw" => {
            for key in ["duration", "tau", "t0", "window", "periodic"] {
                if s.has(key) {
                    s.raw(key);
                    s.fail(key, "only valid with pulses.mode = \"pulsed\"");
                }
            }
            Some(None)
        }
        "pulsed" => {
            let duration = s.required_float("duration");
            let tau = s.required_float("tau");
            s.check("duration", duration, |v| v > 0.0, "must be > 0");
            s.check("tau", tau, |v| v > 0.0, "must be > 0");
            let t0 = s.float("t0");
            let window = s.float("window").unwrap_or(DEFAULT_WINDOW);
            s.check("window", Some(window), |v| v >= 4.0, "must be >= 4");
            let periodic = s.boolean("periodic").unwrap_or(false);
            match (duration, tau) {
                (Some(d), Some(t)) if d > 0.0 && t > 0.0 => Some(Some(PulseConfig {
                    duration: d,
                    tau: t,
                    t0: t0.unwrap_or(4.0 * d),
                    window,
                    periodic,
                })),
                _ => None,
            }
        }
        other => {
            s.fail("mode", format!("expected \"cw\" or \"pulsed\" (got \"{other}\")"));
            None
        }
    };
    s.finish();
    out
}

fn parse_run(root: &Table, pulses: Option<&PulseConfig>, errors: &mut Vec<Violation>) -> Option<RunSection> {
    let mut s = Section::new(root, "run", errors);
    let present = s.table.is_some();
    let engine = match s.string("engine").unwrap_or("qsd") {
        "qsd" => Some(Engine::Qsd),
        "oracle" => Some(Engine::Oracle),
        "semiclassical" => Some(Engine::Semiclassical),
        other => {
            s.fail("engine", format!("expected qsd, oracle or semiclassical (got \"{other}\")"));
            None
        }
    };
    let default_start = pulses.map_or(0.0, |p| p.t0 - 4.0 * p.duration);
    let t_start = s.float("t_start").unwrap_or(default_start);
    let t_end = s.required_float("t_end");
    let dt = s.required_float("dt");
    s.check("dt", dt, |v| v > 0.0, "must be > 0");
    if let Some(end) = t_end {
        if !(end >= t_start) {
            s.fail("t_end", format!("must be >= run.t_start = {t_start} (got {end})"));
        }
    }

    let every = s.float("sample_every");
    let times = s.float_list("sample_times");
    let sampling = match (every, times) {
        (Some(_), Some(_)) => {
            s.fail("sample_every", "give either sample_every or sample_times, not both");
            None
        }
        (Some(e), None) => {
            s.check("sample_every", Some(e), |v| v > 0.0, "must be > 0");
            (e > 0.0).then_some(Sampling::Every(e))
        }
        (None, Some(t)) => {
            if t.is_empty() {
                s.fail("sample_times", "must not be empty");
                None
            } else {
                Some(Sampling::Times(t))
            }
        }
        (None, None) => {
            if !s.has("sample_every") && !s.has("sample_times") {
                s.fail("sample_every", "missing required key (or run.sample_times)");
            }
            None
        }
    };

    let trajectories = s.uint("trajectories").unwrap_or(1000) as usize;
    if trajectories < 2 {
        s.fail("trajectories", format!("must be >= 2 (got {trajectories})"));
    }
    let seed = s.uint("seed").unwrap_or(0);
    let workers = s.uint("workers").unwrap_or(0) as usize;

    let initial = match s.string("initial").unwrap_or("vacuum") {
        "vacuum" => {
            for key in ["initial_n1", "initial_n2", "initial_alpha1", "initial_alpha2"] {
                if s.has(key) {
                    s.raw(key);
                    s.fail(key, "only valid with a fock or coherent initial state");
                }
            }
            Some(InitialState::Vacuum)
        }
        "fock" => {
            let n1 = s.uint("initial_n1").unwrap_or(0) as usize;
            let n2 = s.uint("initial_n2").unwrap_or(0) as usize;
            Some(InitialState::Fock { n1, n2 })
        }
        "coherent" => {
            let pair = |s: &mut Section, key: &str| match s.float_list(key) {
                None => Some([0.0, 0.0]),
                Some(v) if v.len() == 2 => Some([v[0], v[1]]),
                Some(_) => {
                    s.fail(key, "expected [re, im]");
                    None
                }
            };
            let a1 = pair(&mut s, "initial_alpha1");
            let a2 = pair(&mut s, "initial_alpha2");
            Some(InitialState::Coherent {
                alpha1: a1?,
                alpha2: a2?,
            })
        }
        other => {
            s.fail("initial", format!("expected vacuum, fock or coherent (got \"{other}\")"));
            None
        }
    };

    let mut observables = BTreeSet::new();
    for name in s.string_list("observables").unwrap_or_else(|| vec!["n", "g3"]) {
        match name {
            "n" => observables.insert(Observable::N),
            "pn" => observables.insert(Observable::Pn),
            "g3" => observables.insert(Observable::G3),
            "wigner" => observables.insert(Observable::Wigner),
            other => {
                s.fail("observables", format!("unknown observable \"{other}\" (n, pn, g3, wigner)"));
                false
            }
        };
    }
    let pn_times = s.float_list("pn_times").unwrap_or_default();
    let wigner_times = s.float_list("wigner_times").unwrap_or_default();
    let wigner = WignerGridSpec {
        radius: s.float("wigner_radius").unwrap_or(6.0),
        n_radial: s.uint("wigner_radial").unwrap_or(120) as usize,
        n_angular: s.uint("wigner_angular").unwrap_or(180) as usize,
    };
    if wigner.validate().is_err() {
        s.fail("wigner_radius", "Wigner grid needs radius > 0 and at least one radial and angular node");
    }
    let leakage_tolerance = s.float("leakage_tolerance").unwrap_or(DEFAULT_LEAKAGE_TOLERANCE);
    s.check("leakage_tolerance", Some(leakage_tolerance), |v| v > 0.0, "must be > 0");
    let drift_variant = match s.string("drift_variant").unwrap_or("hamiltonian_derived") {
        "hamiltonian_derived" => Some(DriftVariant::HamiltonianDerived),
        "paper_literal" => Some(DriftVariant::PaperLiteral),
        other => {
            s.fail(
                "drift_variant",
                format!("expected hamiltonian_derived or paper_literal (got \"{other}\")"),
            );
            None
        }
    };
    let summary_window = match s.float_list("summary_window") {
        None => Some(None),
        Some(w) if w.len() == 2 && w[0] < w[1] => Some(Some([w[0], w[1]])),
        Some(_) => {
            s.fail("summary_window", "expected [start, end] with start < end");
            None
        }
    };
    s.finish();
    if !present {
        return None;
    }
    Some(RunSection {
        engine: engine?,
        t_start,
        t_end: t_end?,
        dt: dt.filter(|&d| d > 0.0)?,
        sampling: sampling?,
        trajectories,
        seed,
        workers,
        initial: initial?,
        observables: observables.into_iter().collect(),
        pn_times,
        wigner_times,
        wigner,
        leakage_tolerance,
        drift_variant: drift_variant?,
        summary_window: summary_window?,
    })
}

fn cross_check(c: &RunConfig, errors: &mut Vec<Violation>) {
    let mut fail = |path: &str, message: String| {
        errors.push(Violation {
            path: path.into(),
            message,
        })
    };
    let params = c.params();
    if let Drive::ThresholdRatio(_) = c.system.drive {
        if let Err(e) = semiclassical::threshold(&params, &c.pump()) {
            fail("system.drive_ratio", e.to_string());
        }
    }
    let r = &c.run;
    let slack = 1e-9 * r.dt;
    let inside = |t: f64| t >= r.t_start - slack && t <= r.t_end + slack;
    if let Sampling::Times(times) = &r.sampling {
        if let Some(t) = times.iter().find(|&&t| !inside(t)) {
            fail("run.sample_times", format!("{t} lies outside [{}, {}]", r.t_start, r.t_end));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            fail("run.sample_times", "must be non-decreasing".into());
        }
    }
    for (key, times) in [("run.pn_times", &r.pn_times), ("run.wigner_times", &r.wigner_times)] {
        if let Some(t) = times.iter().find(|&&t| !inside(t)) {
            fail(key, format!("{t} lies outside [{}, {}]", r.t_start, r.t_end));
        }
    }
    if let InitialState::Fock { n1, n2 } = r.initial {
        if n1 > c.system.cutoff1 {
            fail("run.initial_n1", format!("exceeds system.cutoff1 = {}", c.system.cutoff1));
        }
        if n2 > c.system.cutoff2 {
            fail("run.initial_n2", format!("exceeds system.cutoff2 = {}", c.system.cutoff2));
        }
    }
    if params.drive.is_finite() && r.engine != Engine::Oracle {
        let bound = rate_scale(&params, &c.pump());
        if let Err(e) = c.schedule().validate(bound) {
            fail("run.dt", e.to_string());
        }
    }
    if r.engine == Engine::Semiclassical && r.observables.iter().any(|o| *o != Observable::N) {
        fail("run.observables", "the semiclassical engine only provides n".into());
    }
}
