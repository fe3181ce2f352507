//! Quantum-state-diffusion unraveling of the two-mode master equation and a
//! dense density-matrix integrator used as its small-scale oracle.
//!
//! Each trajectory follows the diffusive stochastic Schrödinger equation
//!
//! ```text
//! d|psi> = -i H |psi> dt
//!        + sum_k (<L_k^+> L_k - L_k^+ L_k / 2 - <L_k^+><L_k> / 2) |psi> dt
//!        + sum_k (L_k - <L_k>) |psi> dxi_k
//! ```
//!
//! with `E[dxi_j dxi_k^*] = delta_jk dt` and `E[dxi dxi] = 0`, integrated by
//! Euler–Maruyama and renormalized after every step.
//!
//! Ensembles are split into fixed-size blocks of consecutive trajectories.
//! Each block is reduced sequentially and blocks are merged in index order,
//! so results do not depend on the number of workers.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{hamiltonian_parts, lindblad_ops, Pump, SystemParams};
use crate::fock::{self, BasisDims, DensityMatrix, FockError, SparseOperator, StateVector};
use crate::observables::{falling3, g3_from_moments};
use crate::stats::{MomentAccumulator, NeumaierSum};

pub const DEFAULT_LEAKAGE_TOLERANCE: f64 = 1e-4;
pub const COLLAPSE_NORM: f64 = 1e-8;
pub const ORACLE_MAX_DIM: usize = 4096;
/// Trajectories per reduction block.
pub const BLOCK_SIZE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("state norm collapsed to {norm:e} at t = {t}")]
    NumericalCollapse { t: f64, norm: f64 },
    #[error(
        "truncation overflow at t = {t}: top-level population {population:e} exceeds {tolerance:e}; \
         increase the Fock cutoffs"
    )]
    TruncationOverflow {
        t: f64,
        population: f64,
        tolerance: f64,
    },
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<TrajectoryError>,
    },
    #[error("oracle needs dimension <= {ORACLE_MAX_DIM}, got {dim}")]
    OracleTooLarge { dim: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("ensemble needs at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error(transparent)]
    Fock(#[from] FockError),
}

impl TrajectoryError {
    /// The underlying error with trajectory indices stripped.
    pub fn root(&self) -> &TrajectoryError {
        match self {
            TrajectoryError::Trajectory { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_times: Vec<f64>,
}

impl EvolutionSchedule {
    pub fn new(t_start: f64, t_end: f64, dt: f64, sample_times: Vec<f64>) -> Self {
        Self {
            t_start,
            t_end,
            dt,
            sample_times,
        }
    }

    /// Samples every `every` starting at `t_start`, plus `t_end`.
    pub fn uniform(t_start: f64, t_end: f64, dt: f64, every: f64) -> Self {
        let count = ((t_end - t_start) / every + 1e-9).floor() as usize;
        let mut samples: Vec<f64> = (0..=count).map(|k| t_start + k as f64 * every).collect();
        if samples.last().map_or(true, |&s| (t_end - s).abs() > 1e-9 * every.max(1.0)) {
            samples.push(t_end);
        }
        Self::new(t_start, t_end, dt, samples)
    }

    /// Checks ordering and the step bound `dt <= 1 / (20 rate_scale)`.
    pub fn validate(&self, rate_scale: f64) -> Result<(), TrajectoryError> {
        let bad = |m: String| Err(TrajectoryError::InvalidSchedule(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0".into());
        }
        if !(self.t_end >= self.t_start) {
            return bad("t_end must be >= t_start".into());
        }
        if self.sample_times.is_empty() {
            return bad("at least one sample time is required".into());
        }
        let slack = 1e-9 * self.dt;
        for &s in &self.sample_times {
            if s < self.t_start - slack || s > self.t_end + slack {
                return bad(format!("sample time {s} outside [{}, {}]", self.t_start, self.t_end));
            }
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("sample times must be non-decreasing".into());
        }
        if rate_scale > 0.0 && self.dt > 1.0 / (20.0 * rate_scale) * (1.0 + 1e-12) {
            return bad(format!(
                "dt = {} exceeds the stability bound 1/(20 * {rate_scale}) = {}",
                self.dt,
                1.0 / (20.0 * rate_scale)
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        let span = self.t_end - self.t_start;
        if span <= 0.0 {
            0
        } else {
            (span / self.dt - 1e-9).ceil() as usize
        }
    }

    /// Step actually taken: the interval divided evenly into [`Self::steps`].
    pub fn effective_dt(&self) -> f64 {
        match self.steps() {
            0 => self.dt,
            n => (self.t_end - self.t_start) / n as f64,
        }
    }

    /// Grid step at which each sample is recorded (nearest grid point).
    pub fn sample_steps(&self) -> Vec<usize> {
        let dt = self.effective_dt();
        let steps = self.steps();
        self.sample_times
            .iter()
            .map(|&s| (((s - self.t_start) / dt).round().max(0.0) as usize).min(steps))
            .collect()
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.effective_dt()
    }
}

/// Largest rate that the time step has to resolve.
pub fn rate_scale(params: &SystemParams, pump: &Pump) -> f64 {
    [
        params.gamma1,
        params.gamma2,
        params.drive * pump.peak(),
        params.chi2,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    Vacuum,
    Fock { n1: usize, n2: usize },
    Coherent { alpha1: [f64; 2], alpha2: [f64; 2] },
}

impl InitialState {
    pub fn build(&self, dims: &BasisDims) -> Result<StateVector, FockError> {
        match *self {
            InitialState::Vacuum => Ok(StateVector::vacuum(dims)),
            InitialState::Fock { n1, n2 } => StateVector::fock(dims, &[n1, n2]),
            InitialState::Coherent { alpha1, alpha2 } => StateVector::coherent(
                dims,
                &[C64::new(alpha1[0], alpha1[1]), C64::new(alpha2[0], alpha2[1])],
            ),
        }
    }
}

/// Operators for one run, built once and shared read-only by all workers.
#[derive(Debug, Clone)]
pub struct QsdModel {
    dims: BasisDims,
    params: SystemParams,
    pump: Pump,
    h_pump: SparseOperator,
    h_cascade: SparseOperator,
    lindblad: Vec<SparseOperator>,
    /// `L_k^+ L_k`
    lindblad_norm: Vec<SparseOperator>,
}

/// Scratch buffers for one worker.
#[derive(Debug, Clone)]
pub struct Workspace {
    h_psi: Vec<C64>,
    l_psi: Vec<Vec<C64>>,
    ll_psi: Vec<Vec<C64>>,
}

impl QsdModel {
    pub fn new(params: &SystemParams, pump: &Pump, dims: &BasisDims) -> Self {
        let parts = hamiltonian_parts(params, dims);
        let lindblad = lindblad_ops(params, dims);
        let lindblad_norm = lindblad.iter().map(|l| l.adjoint().mul(l)).collect();
        Self {
            dims: dims.clone(),
            params: *params,
            pump: *pump,
            h_pump: parts.pump,
            h_cascade: parts.cascade,
            lindblad,
            lindblad_norm,
        }
    }

    /// Same structure with explicitly given operators; `H(t) = drive f(t) pump + cascade`.
    pub fn from_operators(
        params: &SystemParams,
        pump: &Pump,
        h_pump: SparseOperator,
        h_cascade: SparseOperator,
        lindblad: Vec<SparseOperator>,
    ) -> Self {
        let lindblad_norm = lindblad.iter().map(|l| l.adjoint().mul(l)).collect();
        Self {
            dims: h_pump.dims().clone(),
            params: *params,
            pump: *pump,
            h_pump,
            h_cascade,
            lindblad,
            lindblad_norm,
        }
    }

    pub fn dims(&self) -> &BasisDims {
        &self.dims
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn pump(&self) -> &Pump {
        &self.pump
    }

    pub fn noise_channels(&self) -> usize {
        self.lindblad.len()
    }

    pub fn workspace(&self) -> Workspace {
        let n = self.dims.total();
        let k = self.lindblad.len();
        Workspace {
            h_psi: vec![C64::default(); n],
            l_psi: vec![vec![C64::default(); n]; k],
            ll_psi: vec![vec![C64::default(); n]; k],
        }
    }

    fn drive_at(&self, t: f64) -> f64 {
        self.params.drive * self.pump.envelope(t)
    }

    /// One Euler–Maruyama step followed by renormalization. `noise[k]` is the
    /// complex increment of channel `k`. Returns the squared norm reached
    /// before renormalizing.
    pub fn step(
        &self,
        psi: &mut [C64],
        t: f64,
        dt: f64,
        noise: &[C64],
        ws: &mut Workspace,
    ) -> Result<f64, TrajectoryError> {
        debug_assert_eq!(noise.len(), self.lindblad.len());
        self.h_pump
            .apply_into(psi, &mut ws.h_psi);
        let s = C64::new(self.drive_at(t), 0.0);
        for v in ws.h_psi.iter_mut() {
            *v *= s;
        }
        self.h_cascade
            .apply_add_scaled(C64::new(1.0, 0.0), psi, &mut ws.h_psi);

        let mut expect = [C64::default(); fock::MAX_MODES];
        for (k, (l, ll)) in self.lindblad.iter().zip(&self.lindblad_norm).enumerate() {
            l.apply_into(psi, &mut ws.l_psi[k]);
            ll.apply_into(psi, &mut ws.ll_psi[k]);
            expect[k] = psi
                .iter()
                .zip(&ws.l_psi[k])
                .map(|(a, b)| a.conj() * b)
                .sum();
        }

        let minus_i_dt = C64::new(0.0, -dt);
        let mut diag = C64::new(0.0, 0.0);
        let mut shift = C64::new(0.0, 0.0);
        for k in 0..self.lindblad.len() {
            diag -= 0.5 * expect[k].norm_sqr() * dt;
            shift -= expect[k] * noise[k];
        }
        let mut norm = 0.0;
        for i in 0..psi.len() {
            let p = psi[i];
            let mut d = minus_i_dt * ws.h_psi[i] + (diag + shift) * p;
            for k in 0..self.lindblad.len() {
                d += (expect[k].conj() * dt + noise[k]) * ws.l_psi[k][i]
                    - 0.5 * dt * ws.ll_psi[k][i];
            }
            let next = p + d;
            norm += next.norm_sqr();
            psi[i] = next;
        }
        if !(norm.sqrt() >= COLLAPSE_NORM) {
            return Err(TrajectoryError::NumericalCollapse {
                t,
                norm: norm.sqrt(),
            });
        }
        let inv = 1.0 / norm.sqrt();
        psi.iter_mut().for_each(|a| *a *= inv);
        Ok(norm)
    }
}

/// One Euler–Maruyama QSD step on a fresh copy of `psi`.
pub fn qsd_step(
    model: &QsdModel,
    psi: &StateVector,
    t: f64,
    dt: f64,
    noise: &[C64],
) -> Result<StateVector, TrajectoryError> {
    if psi.dims() != model.dims() {
        return Err(FockError::DimsMismatch {
            expected: model.dims().cutoffs().to_vec(),
            got: psi.dims().cutoffs().to_vec(),
        }
        .into());
    }
    let mut out = psi.clone();
    let mut ws = model.workspace();
    model.step(out.amplitudes_mut(), t, dt, noise, &mut ws)?;
    Ok(out)
}

/// Stream of complex Wiener increments for one trajectory: ChaCha8 keyed by
/// the master seed, stream selected by the trajectory index, consumed in step
/// order.
pub struct NoiseSource {
    rng: ChaCha8Rng,
    scale: f64,
}

impl NoiseSource {
    pub fn new(master_seed: u64, trajectory: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory);
        Self {
            rng,
            scale: (0.5 * dt).sqrt(),
        }
    }

    pub fn fill(&mut self, out: &mut [C64]) {
        for z in out.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut self.rng);
            let im: f64 = StandardNormal.sample(&mut self.rng);
            *z = C64::new(re, im) * self.scale;
        }
    }
}

/// Pure-state observables at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct PureSample {
    pub t: f64,
    pub n1: f64,
    pub n2: f64,
    /// `<a1^+3 a1^3>`
    pub m3: f64,
    pub top_population: f64,
    pub rho1: Option<DensityMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<PureSample>,
    /// Mean over steps of `|psi|^2 - 1` before renormalizing.
    pub mean_norm_drift: f64,
    pub max_abs_norm_drift: f64,
    /// Largest `| |psi| - 1 |` after renormalizing, over sample times.
    pub max_norm_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOptions {
    pub record_rho1: bool,
    /// Sample indices at which `rho1` is recorded; `None` records all.
    pub rho1_samples: Option<Vec<usize>>,
    pub leakage_tolerance: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            record_rho1: false,
            rho1_samples: None,
            leakage_tolerance: DEFAULT_LEAKAGE_TOLERANCE,
        }
    }
}

fn wants_rho1(record: bool, samples: &Option<Vec<usize>>, index: usize) -> bool {
    record && samples.as_ref().is_none_or(|s| s.contains(&index))
}

fn sample_pure(dims: &BasisDims, psi: &[C64], t: f64, record_rho1: bool) -> PureSample {
    let (mut n1, mut n2, mut m3) = (0.0, 0.0, 0.0);
    for (i, a) in psi.iter().enumerate() {
        let p = a.norm_sqr();
        let k1 = dims.occupation(i, 0);
        n1 += k1 as f64 * p;
        n2 += dims.occupation(i, 1) as f64 * p;
        m3 += falling3(k1) * p;
    }
    let top_population = fock::top_level_population(dims, psi.iter().map(|a| a.norm_sqr()));
    let rho1 = record_rho1.then(|| {
        let state = StateVector::from_amplitudes(dims, psi.to_vec()).expect("matching dims");
        fock::partial_trace_mode1(&state)
    });
    PureSample {
        t,
        n1,
        n2,
        m3,
        top_population,
        rho1,
    }
}

/// Runs one trajectory from `initial`, sampling at the schedule's sample
/// times. Deterministic in `(master_seed, index)`.
pub fn run_trajectory(
    model: &QsdModel,
    schedule: &EvolutionSchedule,
    initial: &StateVector,
    master_seed: u64,
    index: u64,
    options: &TrajectoryOptions,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let dims = model.dims();
    let mut psi = initial.amplitudes().to_vec();
    let steps = schedule.steps();
    let dt = schedule.effective_dt();
    let sample_steps = schedule.sample_steps();
    let mut noise_src = NoiseSource::new(master_seed, index, dt);
    let mut noise = vec![C64::default(); model.noise_channels()];
    let mut ws = model.workspace();
    let mut samples = Vec::with_capacity(sample_steps.len());
    let mut drift = NeumaierSum::default();
    let mut max_abs_drift = 0.0f64;
    let mut max_norm_error = 0.0f64;
    let mut next_sample = 0;

    let mut record = |step: usize, psi: &[C64], samples: &mut Vec<PureSample>| {
        let t = schedule.time_at(step);
        let rho = wants_rho1(options.record_rho1, &options.rho1_samples, samples.len());
        let s = sample_pure(dims, psi, t, rho);
        if s.top_population > options.leakage_tolerance {
            return Err(TrajectoryError::TruncationOverflow {
                t,
                population: s.top_population,
                tolerance: options.leakage_tolerance,
            });
        }
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        max_norm_error = max_norm_error.max((norm.sqrt() - 1.0).abs());
        samples.push(s);
        Ok(())
    };

    for step in 0..=steps {
        while next_sample < sample_steps.len() && sample_steps[next_sample] == step {
            record(step, &psi, &mut samples)?;
            next_sample += 1;
        }
        if step == steps {
            break;
        }
        noise_src.fill(&mut noise);
        let t = schedule.time_at(step);
        let norm = model.step(&mut psi, t, dt, &noise, &mut ws)?;
        drift.add(norm - 1.0);
        max_abs_drift = max_abs_drift.max((norm - 1.0).abs());
    }
    Ok(TrajectoryRecord {
        samples,
        mean_norm_drift: if steps > 0 { drift.value() / steps as f64 } else { 0.0 },
        max_abs_norm_drift: max_abs_drift,
        max_norm_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOptions {
    pub workers: usize,
    pub record_rho1: bool,
    /// Sample indices at which `rho1` is recorded; `None` records all.
    pub rho1_samples: Option<Vec<usize>>,
    pub leakage_tolerance: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            record_rho1: false,
            rho1_samples: None,
            leakage_tolerance: DEFAULT_LEAKAGE_TOLERANCE,
        }
    }
}

impl EnsembleOptions {
    fn records_rho1(&self, index: usize) -> bool {
        wants_rho1(self.record_rho1, &self.rho1_samples, index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub params: SystemParams,
    pub pump: Pump,
    pub cutoffs: Vec<usize>,
    pub dt: f64,
    pub trajectories: usize,
    pub seed: u64,
}

/// Ensemble means with Monte Carlo standard errors at every sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub times: Vec<f64>,
    pub n1: Vec<f64>,
    pub se_n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub se_n2: Vec<f64>,
    pub m3: Vec<f64>,
    pub se_m3: Vec<f64>,
    pub g3: Vec<Option<f64>>,
    pub se_g3: Vec<Option<f64>>,
    pub rho1: Option<Vec<DensityMatrix>>,
    /// Standard error of each reduced-matrix entry, `|.|` of the complex error.
    pub rho1_se: Option<Vec<Vec<f64>>>,
    /// Sample indices that `rho1` and `rho1_se` refer to.
    pub rho1_indices: Vec<usize>,
    /// Largest ensemble-mean population of the top two levels of any mode.
    pub max_top_population: f64,
    pub metadata: RunMetadata,
}

impl RunResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Table `t,n1,se_n1,n2,se_n2,g3,se_g3`; undefined `g3` cells are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("t,n1,se_n1,n2,se_n2,g3,se_g3\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.times[i],
                self.n1[i],
                self.se_n1[i],
                self.n2[i],
                self.se_n2[i],
                opt(self.g3[i]),
                opt(self.se_g3[i]),
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct SampleAccumulator {
    n1: MomentAccumulator,
    n2: MomentAccumulator,
    m3: MomentAccumulator,
    top: NeumaierSum,
    n1_m3: NeumaierSum,
    rho_re: Vec<MomentAccumulator>,
    rho_im: Vec<MomentAccumulator>,
}

impl SampleAccumulator {
    fn new(rho_entries: usize) -> Self {
        Self {
            n1: MomentAccumulator::default(),
            n2: MomentAccumulator::default(),
            m3: MomentAccumulator::default(),
            top: NeumaierSum::default(),
            n1_m3: NeumaierSum::default(),
            rho_re: vec![MomentAccumulator::default(); rho_entries],
            rho_im: vec![MomentAccumulator::default(); rho_entries],
        }
    }

    fn push(&mut self, s: &PureSample) {
        self.n1.push(s.n1);
        self.n2.push(s.n2);
        self.m3.push(s.m3);
        self.top.add(s.top_population);
        self.n1_m3.add(s.n1 * s.m3);
        if let Some(rho) = &s.rho1 {
            for (k, v) in rho.data().iter().enumerate() {
                self.rho_re[k].push(v.re);
                self.rho_im[k].push(v.im);
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        self.n1.merge(&other.n1);
        self.n2.merge(&other.n2);
        self.m3.merge(&other.m3);
        self.top.merge(&other.top);
        self.n1_m3.merge(&other.n1_m3);
        for (a, b) in self.rho_re.iter_mut().zip(&other.rho_re) {
            a.merge(b);
        }
        for (a, b) in self.rho_im.iter_mut().zip(&other.rho_im) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone)]
struct BlockResult {
    samples: Vec<SampleAccumulator>,
    times: Vec<f64>,
}

fn run_block(
    model: &QsdModel,
    schedule: &EvolutionSchedule,
    initial: &StateVector,
    seed: u64,
    range: std::ops::Range<usize>,
    options: &EnsembleOptions,
) -> Result<BlockResult, TrajectoryError> {
    let entries = (model.dims().cutoff(0) + 1).pow(2);
    let mut acc: Vec<SampleAccumulator> = (0..schedule.sample_times.len())
        .map(|i| SampleAccumulator::new(if options.records_rho1(i) { entries } else { 0 }))
        .collect();
    let mut times = Vec::new();
    // leakage is judged on the ensemble mean, see `ensemble_average`
    let traj_opts = TrajectoryOptions {
        record_rho1: options.record_rho1,
        rho1_samples: options.rho1_samples.clone(),
        leakage_tolerance: f64::INFINITY,
    };
    for index in range {
        let rec = run_trajectory(model, schedule, initial, seed, index as u64, &traj_opts).map_err(
            |e| TrajectoryError::Trajectory {
                index,
                source: Box::new(e),
            },
        )?;
        for (a, s) in acc.iter_mut().zip(&rec.samples) {
            a.push(s);
        }
        if times.is_empty() {
            times = rec.samples.iter().map(|s| s.t).collect();
        }
    }
    Ok(BlockResult { samples: acc, times })
}

/// Blocks evaluated in parallel before their ordered merge.
const MERGE_CHUNK: usize = 64;

pub(crate) fn worker_pool(workers: usize) -> Option<rayon::ThreadPool> {
    if workers == 0 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok()
}

pub(crate) fn install<T: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// Runs `n_traj` trajectories and reduces them into ensemble means. The
/// leakage guard applies to the ensemble-mean top-level population, i.e. to
/// the averaged density operator, not to single trajectories.
pub fn ensemble_average(
    model: &QsdModel,
    schedule: &EvolutionSchedule,
    initial: &StateVector,
    n_traj: usize,
    seed: u64,
    options: &EnsembleOptions,
) -> Result<RunResult, TrajectoryError> {
    if n_traj < 2 {
        return Err(TrajectoryError::TooFewTrajectories(n_traj));
    }
    schedule.validate(0.0)?;
    let blocks: Vec<std::ops::Range<usize>> = (0..n_traj)
        .step_by(BLOCK_SIZE)
        .map(|start| start..(start + BLOCK_SIZE).min(n_traj))
        .collect();
    let pool = worker_pool(options.workers);
    let mut merged: Option<BlockResult> = None;
    for chunk in blocks.chunks(MERGE_CHUNK) {
        let results: Vec<Result<BlockResult, TrajectoryError>> = install(&pool, || {
            chunk
                .par_iter()
                .map(|r| run_block(model, schedule, initial, seed, r.clone(), options))
                .collect()
        });
        for r in results {
            let block = r?;
            match merged.as_mut() {
                None => merged = Some(block),
                Some(m) => {
                    for (a, b) in m.samples.iter_mut().zip(&block.samples) {
                        a.merge(b);
                    }
                }
            }
        }
    }
    let merged = merged.expect("at least one block");
    for (acc, &t) in merged.samples.iter().zip(&merged.times) {
        let population = acc.top.value() / n_traj as f64;
        if population > options.leakage_tolerance {
            return Err(TrajectoryError::TruncationOverflow {
                t,
                population,
                tolerance: options.leakage_tolerance,
            });
        }
    }
    Ok(finish(model, schedule, merged, n_traj, seed, options))
}

fn finish(
    model: &QsdModel,
    schedule: &EvolutionSchedule,
    merged: BlockResult,
    n_traj: usize,
    seed: u64,
    options: &EnsembleOptions,
) -> RunResult {
    let record_rho1 = options.record_rho1;
    let n = n_traj as f64;
    let mut out = RunResult {
        times: merged.times,
        n1: vec![],
        se_n1: vec![],
        n2: vec![],
        se_n2: vec![],
        m3: vec![],
        se_m3: vec![],
        g3: vec![],
        se_g3: vec![],
        rho1: record_rho1.then(Vec::new),
        rho1_se: record_rho1.then(Vec::new),
        rho1_indices: vec![],
        max_top_population: merged
            .samples
            .iter()
            .map(|a| a.top.value() / n)
            .fold(0.0, f64::max),
        metadata: RunMetadata {
            params: *model.params(),
            pump: *model.pump(),
            cutoffs: model.dims().cutoffs().to_vec(),
            dt: schedule.effective_dt(),
            trajectories: n_traj,
            seed,
        },
    };
    let cutoff = model.dims().cutoff(0);
    for acc in &merged.samples {
        let (n1, m3) = (acc.n1.mean(), acc.m3.mean());
        out.n1.push(n1);
        out.se_n1.push(acc.n1.standard_error());
        out.n2.push(acc.n2.mean());
        out.se_n2.push(acc.n2.standard_error());
        out.m3.push(m3);
        out.se_m3.push(acc.m3.standard_error());
        let g = g3_from_moments(n1, m3);
        out.g3.push(g);
        out.se_g3.push(g.map(|_| {
            // delta method on g = m3 / n1^3 with the sample covariance
            let cov = (acc.n1_m3.value() - n * n1 * m3) / (n - 1.0);
            let (dg_dm, dg_dn) = (1.0 / n1.powi(3), -3.0 * m3 / n1.powi(4));
            let var = dg_dm * dg_dm * acc.m3.variance()
                + dg_dn * dg_dn * acc.n1.variance()
                + 2.0 * dg_dm * dg_dn * cov;
            (var.max(0.0) / n).sqrt()
        }));
        if options.records_rho1(out.n1.len() - 1) {
            out.rho1_indices.push(out.n1.len() - 1);
            let data = acc
                .rho_re
                .iter()
                .zip(&acc.rho_im)
                .map(|(re, im)| C64::new(re.mean(), im.mean()))
                .collect();
            let se = acc
                .rho_re
                .iter()
                .zip(&acc.rho_im)
                .map(|(re, im)| re.standard_error().hypot(im.standard_error()))
                .collect();
            out.rho1.as_mut().unwrap().push(DensityMatrix::from_matrix(cutoff, data));
            out.rho1_se.as_mut().unwrap().push(se);
        }
    }
    out
}

/// Observable shifts between a run at `dt` and one at `dt / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub max_shift_n1: f64,
    pub max_shift_n2: f64,
    pub max_shift_g3: f64,
    /// Largest shift in units of the combined standard error.
    pub max_shift_in_se: f64,
    pub coarse: RunResult,
    pub fine: RunResult,
}

pub fn convergence_check(
    model: &QsdModel,
    schedule: &EvolutionSchedule,
    initial: &StateVector,
    n_traj: usize,
    seed: u64,
    options: &EnsembleOptions,
) -> Result<ConvergenceReport, TrajectoryError> {
    let coarse = ensemble_average(model, schedule, initial, n_traj, seed, options)?;
    let halved = EvolutionSchedule {
        dt: schedule.dt / 2.0,
        ..schedule.clone()
    };
    let fine = ensemble_average(model, &halved, initial, n_traj, seed, options)?;
    let mut report = ConvergenceReport {
        max_shift_n1: 0.0,
        max_shift_n2: 0.0,
        max_shift_g3: 0.0,
        max_shift_in_se: 0.0,
        coarse,
        fine,
    };
    let (c, f) = (&report.coarse, &report.fine);
    let (mut s1, mut s2, mut s3, mut sse) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..c.len() {
        let d1 = (c.n1[i] - f.n1[i]).abs();
        let d2 = (c.n2[i] - f.n2[i]).abs();
        s1 = s1.max(d1);
        s2 = s2.max(d2);
        let se1 = c.se_n1[i].hypot(f.se_n1[i]);
        if se1 > 0.0 {
            sse = sse.max(d1 / se1);
        }
        if let (Some(a), Some(b)) = (c.g3[i], f.g3[i]) {
            s3 = s3.max((a - b).abs());
        }
    }
    report.max_shift_n1 = s1;
    report.max_shift_n2 = s2;
    report.max_shift_g3 = s3;
    report.max_shift_in_se = sse;
    Ok(report)
}

/// Density-matrix time series from direct integration of the master equation.
#[derive(Debug, Clone)]
pub struct OracleSeries {
    pub times: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub m3: Vec<f64>,
    pub rho1: Vec<DensityMatrix>,
    /// Full two-mode matrices (row-major), kept only on request.
    pub full: Option<Vec<Vec<C64>>>,
    pub max_trace_error: f64,
    pub max_top_population: f64,
    pub dims: BasisDims,
}

impl OracleSeries {
    pub fn g3(&self, i: usize) -> Option<f64> {
        g3_from_moments(self.n1[i], self.m3[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,n1,se_n1,n2,se_n2,g3,se_g3\n");
        for i in 0..self.times.len() {
            let g = self.g3(i);
            out.push_str(&format!(
                "{},{},0,{},0,{},{}\n",
                self.times[i],
                self.n1[i],
                self.n2[i],
                g.map(|x| x.to_string()).unwrap_or_default(),
                g.map(|_| "0".to_string()).unwrap_or_default(),
            ));
        }
        out
    }
}

struct Liouvillian<'a> {
    model: &'a QsdModel,
    dim: usize,
    kernel: SparseOperator,
}

impl<'a> Liouvillian<'a> {
    fn new(model: &'a QsdModel) -> Self {
        let dim = model.dims().total();
        let kernel = model
            .lindblad_norm
            .iter()
            .fold(SparseOperator::zero(model.dims()), |acc, op| acc.add(op));
        Self { model, dim, kernel }
    }

    /// `out = A rho` for sparse `A` and dense row-major `rho`.
    fn left_mul(&self, op: &SparseOperator, scale: C64, rho: &[C64], out: &mut [C64], accumulate: bool) {
        let d = self.dim;
        if !accumulate {
            out.iter_mut().for_each(|v| *v = C64::default());
        }
        for r in 0..d {
            let out_row = &mut out[r * d..(r + 1) * d];
            for &(_, c, v) in op.row(r) {
                let w = scale * v;
                let src = &rho[c * d..(c + 1) * d];
                for (o, s) in out_row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }

    /// Lindblad right-hand side for Hermitian `rho`.
    fn rhs(&self, t: f64, rho: &[C64], out: &mut [C64], tmp: &mut [C64], tmp2: &mut [C64]) {
        let d = self.dim;
        let m = self.model;
        // A = H rho; -i[H, rho] = -i(A - A^+)
        self.left_mul(&m.h_pump, C64::new(m.drive_at(t), 0.0), rho, tmp, false);
        self.left_mul(&m.h_cascade, C64::new(1.0, 0.0), rho, tmp, true);
        // B = K rho, K = sum L^+ L; dissipator anticommutator -(B + B^+)/2
        self.left_mul(&self.kernel, C64::new(1.0, 0.0), rho, tmp2, false);
        let mi = C64::new(0.0, -1.0);
        for r in 0..d {
            for c in 0..d {
                let a = tmp[r * d + c] - tmp[c * d + r].conj();
                let b = tmp2[r * d + c] + tmp2[c * d + r].conj();
                out[r * d + c] = mi * a - 0.5 * b;
            }
        }
        // L rho L^+ = L (L rho)^+
        for l in &m.lindblad {
            if l.nnz() == 0 {
                continue;
            }
            self.left_mul(l, C64::new(1.0, 0.0), rho, tmp, false);
            for r in 0..d {
                for c in (r + 1)..d {
                    let (x, y) = (tmp[r * d + c], tmp[c * d + r]);
                    tmp[r * d + c] = y.conj();
                    tmp[c * d + r] = x.conj();
                }
                tmp[r * d + r] = tmp[r * d + r].conj();
            }
            self.left_mul(l, C64::new(1.0, 0.0), tmp, out, true);
        }
    }
}

struct OracleSample {
    n1: f64,
    n2: f64,
    m3: f64,
    rho1: DensityMatrix,
    trace_error: f64,
    top_population: f64,
}

fn oracle_sample(dims: &BasisDims, rho: &[C64]) -> OracleSample {
    let dim = dims.total();
    let diag: Vec<f64> = (0..dim).map(|i| rho[i * dim + i].re).collect();
    let (mut n1, mut n2, mut m3) = (0.0, 0.0, 0.0);
    for (i, &p) in diag.iter().enumerate() {
        let k1 = dims.occupation(i, 0);
        n1 += k1 as f64 * p;
        n2 += dims.occupation(i, 1) as f64 * p;
        m3 += falling3(k1) * p;
    }
    let trace: f64 = diag.iter().sum();
    OracleSample {
        n1,
        n2,
        m3,
        rho1: fock::partial_trace_mode1_dense(rho, dims),
        trace_error: (trace - 1.0).abs(),
        top_population: fock::top_level_population(dims, diag.into_iter()),
    }
}

/// Classical RK4 on the full two-mode density matrix.
pub fn master_equation_oracle(
    model: &QsdModel,
    schedule: &EvolutionSchedule,
    initial: &StateVector,
    keep_full: bool,
    leakage_tolerance: f64,
) -> Result<OracleSeries, TrajectoryError> {
    let dims = model.dims().clone();
    let dim = dims.total();
    if dim > ORACLE_MAX_DIM {
        return Err(TrajectoryError::OracleTooLarge { dim });
    }
    schedule.validate(0.0)?;
    let amps = initial.amplitudes();
    let mut rho: Vec<C64> = (0..dim * dim)
        .map(|k| amps[k / dim] * amps[k % dim].conj())
        .collect();
    let lv = Liouvillian::new(model);
    let n = dim * dim;
    let zeros = || vec![C64::default(); n];
    let (mut k1, mut k2, mut k3, mut k4) = (zeros(), zeros(), zeros(), zeros());
    let (mut stage, mut tmp, mut tmp2) = (zeros(), zeros(), zeros());
    let steps = schedule.steps();
    let dt = schedule.effective_dt();
    let sample_steps = schedule.sample_steps();
    let mut series = OracleSeries {
        times: vec![],
        n1: vec![],
        n2: vec![],
        m3: vec![],
        rho1: vec![],
        full: keep_full.then(Vec::new),
        max_trace_error: 0.0,
        max_top_population: 0.0,
        dims: dims.clone(),
    };
    let mut next_sample = 0;
    for step in 0..=steps {
        while next_sample < sample_steps.len() && sample_steps[next_sample] == step {
            let t = schedule.time_at(step);
            let sample = oracle_sample(&dims, &rho);
            if sample.top_population > leakage_tolerance {
                return Err(TrajectoryError::TruncationOverflow {
                    t,
                    population: sample.top_population,
                    tolerance: leakage_tolerance,
                });
            }
            series.times.push(t);
            series.n1.push(sample.n1);
            series.n2.push(sample.n2);
            series.m3.push(sample.m3);
            series.rho1.push(sample.rho1);
            series.max_trace_error = series.max_trace_error.max(sample.trace_error);
            series.max_top_population = series.max_top_population.max(sample.top_population);
            if let Some(full) = series.full.as_mut() {
                full.push(rho.clone());
            }
            next_sample += 1;
        }
        if step == steps {
            break;
        }
        let t = schedule.time_at(step);
        lv.rhs(t, &rho, &mut k1, &mut tmp, &mut tmp2);
        for i in 0..n {
            stage[i] = rho[i] + 0.5 * dt * k1[i];
        }
        lv.rhs(t + 0.5 * dt, &stage, &mut k2, &mut tmp, &mut tmp2);
        for i in 0..n {
            stage[i] = rho[i] + 0.5 * dt * k2[i];
        }
        lv.rhs(t + 0.5 * dt, &stage, &mut k3, &mut tmp, &mut tmp2);
        for i in 0..n {
            stage[i] = rho[i] + dt * k3[i];
        }
        lv.rhs(t + dt, &stage, &mut k4, &mut tmp, &mut tmp2);
        for i in 0..n {
            rho[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for r in 0..dim {
            for c in r..dim {
                let avg = 0.5 * (rho[r * dim + c] + rho[c * dim + r].conj());
                rho[r * dim + c] = avg;
                rho[c * dim + r] = avg.conj();
            }
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PulseTrain;
    use nalgebra::DMatrix;

    fn params(drive: f64, chi2: f64) -> SystemParams {
        SystemParams {
            chi1: 1.0,
            chi2,
            gamma0: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
            drive,
        }
    }

    #[test]
    fn step_without_generator_is_identity() {
        let dims = BasisDims::two_mode(3, 2);
        let zero = SparseOperator::zero(&dims);
        let model = QsdModel::from_operators(
            &params(0.0, 0.0),
            &Pump::Continuous,
            zero.clone(),
            zero.clone(),
            vec![zero.clone(), zero],
        );
        let psi = StateVector::coherent(&dims, &[C64::new(0.4, 0.2), C64::new(-0.3, 0.1)]).unwrap();
        let out = qsd_step(&model, &psi, 0.0, 0.01, &[C64::new(0.1, -0.2), C64::new(0.05, 0.3)]).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn vacuum_is_stationary_under_decay() {
        let dims = BasisDims::two_mode(3, 3);
        let model = QsdModel::new(&params(0.0, 0.0), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 2.0, 0.01, 0.5);
        let vac = StateVector::vacuum(&dims);
        let rec = run_trajectory(&model, &schedule, &vac, 1, 0, &TrajectoryOptions::default()).unwrap();
        assert!(rec.samples.iter().all(|s| s.n1 == 0.0 && s.n2 == 0.0));

        let r = ensemble_average(&model, &schedule, &vac, 2, 9, &EnsembleOptions::default()).unwrap();
        assert!(r.n1.iter().chain(&r.se_n1).all(|&v| v == 0.0));
        assert!(r.g3.iter().all(|g| g.is_none()));
    }

    #[test]
    fn single_photon_decay_matches_exponential() {
        let dims = BasisDims::two_mode(3, 2);
        let model = QsdModel::new(&params(0.0, 0.0), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 1.5, 0.002, 0.25);
        let one = StateVector::fock(&dims, &[1, 0]).unwrap();
        let r = ensemble_average(&model, &schedule, &one, 2000, 42, &EnsembleOptions::default()).unwrap();
        for i in 0..r.len() {
            let want = (-2.0 * r.times[i]).exp();
            assert!(
                (r.n1[i] - want).abs() <= 3.0 * r.se_n1[i] + 1e-12,
                "t = {}: {} vs {want} (se {})",
                r.times[i],
                r.n1[i],
                r.se_n1[i]
            );
        }
    }

    #[test]
    fn trajectories_are_reproducible() {
        let dims = BasisDims::two_mode(10, 6);
        let model = QsdModel::new(&params(0.5, 0.25), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 1.0, 0.01, 0.25);
        let vac = StateVector::vacuum(&dims);
        let opts = TrajectoryOptions {
            leakage_tolerance: 1.0,
            ..Default::default()
        };
        let a = run_trajectory(&model, &schedule, &vac, 5, 3, &opts).unwrap();
        let b = run_trajectory(&model, &schedule, &vac, 5, 3, &opts).unwrap();
        assert_eq!(a, b);
        let other = run_trajectory(&model, &schedule, &vac, 5, 4, &opts).unwrap();
        assert_ne!(a.samples, other.samples);

        let run = |workers| {
            let o = EnsembleOptions {
                workers,
                record_rho1: true,
                ..Default::default()
            };
            ensemble_average(&model, &schedule, &vac, 70, 17, &o).unwrap()
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(8));
        assert_eq!(one.to_csv(), run(3).to_csv());
    }

    #[test]
    fn zero_duration_schedule_reports_initial_state() {
        let dims = BasisDims::two_mode(6, 3);
        let model = QsdModel::new(&params(0.5, 0.25), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::new(1.0, 1.0, 0.01, vec![1.0]);
        let psi = StateVector::fock(&dims, &[3, 1]).unwrap();
        let rec = run_trajectory(&model, &schedule, &psi, 0, 0, &TrajectoryOptions::default()).unwrap();
        assert_eq!(rec.samples.len(), 1);
        assert_eq!((rec.samples[0].n1, rec.samples[0].n2, rec.samples[0].m3), (3.0, 1.0, 6.0));
    }

    #[test]
    fn norm_is_restored_every_step() {
        let dims = BasisDims::two_mode(14, 8);
        let model = QsdModel::new(&params(0.8, 0.5), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 2.0, 0.005, 0.1);
        let vac = StateVector::vacuum(&dims);
        let rec = run_trajectory(&model, &schedule, &vac, 2, 1, &TrajectoryOptions::default()).unwrap();
        assert!(rec.max_norm_error < 1e-10);
    }

    #[test]
    fn leakage_guard_trips() {
        let dims = BasisDims::two_mode(2, 2);
        let model = QsdModel::new(&params(0.0, 0.0), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::new(0.0, 0.0, 0.01, vec![0.0]);
        let psi = StateVector::fock(&dims, &[2, 0]).unwrap();
        let single = run_trajectory(&model, &schedule, &psi, 0, 0, &TrajectoryOptions::default());
        assert!(matches!(single, Err(TrajectoryError::TruncationOverflow { .. })));
        let err = ensemble_average(&model, &schedule, &psi, 4, 0, &EnsembleOptions::default()).unwrap_err();
        assert!(matches!(err.root(), TrajectoryError::TruncationOverflow { population, .. } if *population == 1.0));
    }

    #[test]
    fn forbidden_coherences_vanish_in_the_mean() {
        let dims = BasisDims::two_mode(8, 4);
        let model = QsdModel::new(&params(0.6, 0.4), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 1.5, 0.005, 0.5);
        let opts = EnsembleOptions {
            record_rho1: true,
            leakage_tolerance: 1.0,
            ..Default::default()
        };
        let r = ensemble_average(&model, &schedule, &StateVector::vacuum(&dims), 400, 8, &opts).unwrap();
        let d = dims.cutoff(0) + 1;
        for (rho, se) in r.rho1.as_ref().unwrap().iter().zip(r.rho1_se.as_ref().unwrap()) {
            for m in 0..d {
                for n in 0..d {
                    if (m + 3 - n % 3) % 3 != 0 {
                        assert!(rho.get(m, n).norm() <= 5.0 * se[m * d + n] + 1e-14);
                    }
                }
            }
        }
    }

    fn min_eigenvalue(rho: &[C64], dim: usize) -> f64 {
        let m = DMatrix::from_row_slice(dim, dim, rho);
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn oracle_reproduces_decay() {
        let dims = BasisDims::two_mode(2, 2);
        let model = QsdModel::new(&params(0.0, 0.0), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 2.0, 0.001, 0.25);
        let s = master_equation_oracle(&model, &schedule, &StateVector::fock(&dims, &[1, 0]).unwrap(), false, 1.0)
            .unwrap();
        for (t, p) in s.times.iter().zip(&s.rho1) {
            assert!((p.get(1, 1).re - (-2.0 * t).exp()).abs() < 1e-6);
        }
        let v = master_equation_oracle(&model, &schedule, &StateVector::vacuum(&dims), false, 1.0).unwrap();
        assert!(v.n1.iter().chain(&v.n2).all(|&x| x == 0.0));
    }

    #[test]
    fn oracle_keeps_trace_and_positivity() {
        let dims = BasisDims::two_mode(6, 4);
        let pump = Pump::Pulsed(PulseTrain::new(0.5, 2.0, 1.0, false));
        let model = QsdModel::new(&params(1.5, 0.5), &pump, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 3.0, 0.002, 0.5);
        let s = master_equation_oracle(&model, &schedule, &StateVector::vacuum(&dims), true, 1.0).unwrap();
        assert!(s.max_trace_error < 1e-8);
        for rho in s.full.as_ref().unwrap() {
            assert!(min_eigenvalue(rho, dims.total()) >= -1e-6);
        }
        assert!(s.n1.last().unwrap() > &0.01);
    }

    #[test]
    fn oracle_rejects_large_dims() {
        let dims = BasisDims::two_mode(64, 63);
        let model = QsdModel::new(&params(0.0, 0.0), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::new(0.0, 0.0, 0.01, vec![0.0]);
        let err = master_equation_oracle(&model, &schedule, &StateVector::vacuum(&dims), false, 1.0).unwrap_err();
        assert_eq!(err, TrajectoryError::OracleTooLarge { dim: 65 * 64 });
    }

    #[test]
    fn qsd_matches_oracle_on_small_cascade() {
        let dims = BasisDims::two_mode(10, 6);
        let model = QsdModel::new(&params(0.5, 0.25), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::uniform(0.0, 1.0, 0.002, 0.25);
        let vac = StateVector::vacuum(&dims);
        let oracle = master_equation_oracle(&model, &schedule, &vac, false, 1.0).unwrap();
        let r = ensemble_average(&model, &schedule, &vac, 1000, 21, &EnsembleOptions::default()).unwrap();
        for i in 0..r.len() {
            assert!((r.n1[i] - oracle.n1[i]).abs() <= 3.0 * r.se_n1[i] + 1e-3);
            assert!((r.n2[i] - oracle.n2[i]).abs() <= 3.0 * r.se_n2[i] + 1e-3);
        }
    }

    #[test]
    fn schedule_validation() {
        let s = EvolutionSchedule::new(0.0, 1.0, 0.1, vec![0.5]);
        assert!(s.validate(0.4).is_ok());
        assert!(s.validate(1.0).is_err());
        assert!(EvolutionSchedule::new(0.0, 1.0, 0.01, vec![2.0]).validate(0.0).is_err());
        assert!(EvolutionSchedule::new(0.0, 1.0, 0.0, vec![0.5]).validate(0.0).is_err());
        let u = EvolutionSchedule::uniform(0.0, 1.0, 0.01, 0.3);
        assert_eq!(u.sample_times.len(), 5);
        assert_eq!(u.steps(), 100);
        assert_eq!(u.sample_steps(), vec![0, 30, 60, 90, 100]);
    }

    #[test]
    fn csv_leaves_undefined_g3_empty() {
        let dims = BasisDims::two_mode(3, 3);
        let model = QsdModel::new(&params(0.0, 0.0), &Pump::Continuous, &dims);
        let schedule = EvolutionSchedule::new(0.0, 0.0, 0.01, vec![0.0]);
        let r = ensemble_average(&model, &schedule, &StateVector::vacuum(&dims), 2, 0, &EnsembleOptions::default())
            .unwrap();
        assert_eq!(r.to_csv(), "t,n1,se_n1,n2,se_n2,g3,se_g3\n0,0,0,0,0,,\n");
    }
}
