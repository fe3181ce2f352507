//! Physical model of the cascaded oscillator: pump envelope, effective
//! Hamiltonian, dissipators and quasi-phase-matched couplings.
//!
//! Units: hbar = 1 and all rates are multiples of the mode-1 decay rate, so
//! time is measured in units of its inverse. The pump enters only through the
//! dimensionless drive rate `drive = chi1 * E_L / gamma0`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{annihilation, creation, BasisDims, SparseOperator};

pub const DEFAULT_WINDOW: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("envelope average needs a periodic pulse train")]
    NotPeriodic,
    #[error("coupling profile is empty")]
    EmptyProfile,
    #[error("segment {0} has non-positive length")]
    BadSegment(usize),
    #[error("closed-form average {closed_form} and quadrature {quadrature} disagree")]
    AverageMismatch { closed_form: f64, quadrature: f64 },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> DynamicsError {
    DynamicsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub chi1: f64,
    pub chi2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Peak drive rate `chi1 * E_L / gamma0`.
    pub drive: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = [
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("gamma0", self.gamma0),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("drive", self.drive),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.gamma1 <= 0.0 {
            return Err(invalid("gamma1", "must be > 0"));
        }
        if self.gamma2 <= 0.0 {
            return Err(invalid("gamma2", "must be > 0"));
        }
        if self.gamma0 <= 0.0 {
            return Err(invalid("gamma0", "must be > 0"));
        }
        if self.chi1 <= 0.0 {
            return Err(invalid("chi1", "must be > 0"));
        }
        if self.chi2 < 0.0 {
            return Err(invalid("chi2", "must be >= 0"));
        }
        if self.drive < 0.0 {
            return Err(invalid("drive", "must be >= 0"));
        }
        Ok(())
    }

    /// Pump field amplitude `E_L` implied by the drive rate.
    pub fn pump_amplitude(&self) -> f64 {
        self.drive * self.gamma0 / self.chi1
    }
}

/// Train of Gaussian pulses `f(t) = sum_n exp(-(t - t0 - n tau)^2 / T^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    /// Pulse duration `T`.
    pub duration: f64,
    /// Pulse separation `tau`.
    pub separation: f64,
    /// Center `t0` of the first (n = 0) pulse.
    pub center: f64,
    /// Half-width of the pulse sum in units of `T`.
    pub window: f64,
    /// Sum over all integers `n` instead of `n >= 0`.
    pub periodic: bool,
}

impl PulseTrain {
    pub fn new(duration: f64, separation: f64, center: f64, periodic: bool) -> Self {
        Self {
            duration,
            separation,
            center,
            window: DEFAULT_WINDOW,
            periodic,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", "must be > 0"));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(invalid("separation", "must be > 0"));
        }
        if !self.center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        if !(self.window >= 4.0) {
            return Err(invalid("window", "must be >= 4"));
        }
        Ok(())
    }

    /// Pulse indices whose centers lie within `[lo - W T, hi + W T]`.
    fn pulse_range(&self, lo: f64, hi: f64) -> Option<(i64, i64)> {
        let reach = self.window * self.duration;
        let first = ((lo - self.center - reach) / self.separation).ceil() as i64;
        let last = ((hi - self.center + reach) / self.separation).floor() as i64;
        let first = if self.periodic { first } else { first.max(0) };
        (first <= last).then_some((first, last))
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let Some((first, last)) = self.pulse_range(t, t) else {
            return 0.0;
        };
        (first..=last)
            .map(|n| {
                let x = (t - self.center - n as f64 * self.separation) / self.duration;
                (-x * x).exp()
            })
            .sum()
    }

    /// `int_a^b f dt`, summing the analytic Gaussian integral of every pulse
    /// that reaches the interval.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let Some((first, last)) = self.pulse_range(a, b) else {
            return 0.0;
        };
        let scale = 0.5 * PI.sqrt() * self.duration;
        let mut acc = 0.0;
        for n in first..=last {
            let c = self.center + n as f64 * self.separation;
            acc += scale * (libm::erf((b - c) / self.duration) - libm::erf((a - c) / self.duration));
        }
        acc
    }

    /// Period average `sqrt(pi) T / tau` of the periodic train.
    pub fn average_closed_form(&self) -> f64 {
        PI.sqrt() * self.duration / self.separation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pump {
    /// `f(t) = 1`.
    Continuous,
    Pulsed(PulseTrain),
}

impl Pump {
    pub fn envelope(&self, t: f64) -> f64 {
        match self {
            Pump::Continuous => 1.0,
            Pump::Pulsed(p) => p.envelope(t),
        }
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Pump::Continuous => b - a,
            Pump::Pulsed(p) => p.integral(a, b),
        }
    }

    /// Upper bound on `f(t)`.
    pub fn peak(&self) -> f64 {
        match self {
            Pump::Continuous => 1.0,
            Pump::Pulsed(p) => {
                // neighbouring pulses add up when tau is comparable to T
                let reach = (p.window * p.duration / p.separation).ceil();
                1.0 + 2.0 * (1..=reach as i64)
                    .map(|n| {
                        let x = n as f64 * p.separation / p.duration;
                        (-x * x).exp()
                    })
                    .sum::<f64>()
            }
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            Pump::Continuous => Ok(()),
            Pump::Pulsed(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeAverage {
    pub closed_form: f64,
    pub quadrature: f64,
}

/// Period average of a periodic train, by closed form and by composite
/// Simpson quadrature over one period. Fails if the two differ by more than
/// `1e-6`.
pub fn envelope_average(pulses: &PulseTrain) -> Result<EnvelopeAverage, DynamicsError> {
    if !pulses.periodic {
        return Err(DynamicsError::NotPeriodic);
    }
    pulses.validate()?;
    let closed_form = pulses.average_closed_form();
    let intervals = {
        let n = ((pulses.separation / pulses.duration) * 200.0).ceil() as usize;
        let n = n.max(2000);
        n + n % 2
    };
    let (a, tau) = (pulses.center, pulses.separation);
    let h = tau / intervals as f64;
    let mut acc = pulses.envelope(a) + pulses.envelope(a + tau);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pulses.envelope(a + k as f64 * h);
    }
    let quadrature = acc * h / 3.0 / tau;
    if (quadrature - closed_form).abs() > 1e-6 {
        return Err(DynamicsError::AverageMismatch {
            closed_form,
            quadrature,
        });
    }
    Ok(EnvelopeAverage {
        closed_form,
        quadrature,
    })
}

/// Time-independent pieces of the interaction Hamiltonian
/// `H(t) = drive * f(t) * pump + cascade`.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    /// `i (a1^+ a2^+ - a1 a2)`
    pub pump: SparseOperator,
    /// `i chi2 (a1^+2 a2 - a1^2 a2^+)`
    pub cascade: SparseOperator,
}

pub fn hamiltonian_parts(params: &SystemParams, dims: &BasisDims) -> HamiltonianParts {
    assert_eq!(dims.modes(), 2, "cascaded Hamiltonian needs two modes");
    let i = C64::new(0.0, 1.0);
    let (a1, a2) = (annihilation(0, dims), annihilation(1, dims));
    let (c1, c2) = (creation(0, dims), creation(1, dims));
    let pair_up = c1.mul(&c2);
    let pump = pair_up.sub(&pair_up.adjoint()).scale(i);
    let split = c1.mul(&c1).mul(&a2);
    let merge = a1.mul(&a1).mul(&c2);
    let cascade = split.sub(&merge).scale(i * params.chi2);
    HamiltonianParts { pump, cascade }
}

/// `L_k = sqrt(2 gamma_k) a_k`, one per mode.
pub fn lindblad_ops(params: &SystemParams, dims: &BasisDims) -> Vec<SparseOperator> {
    [params.gamma1, params.gamma2]
        .iter()
        .take(dims.modes())
        .enumerate()
        .map(|(mode, &gamma)| annihilation(mode, dims).scale(C64::new((2.0 * gamma).sqrt(), 0.0)))
        .collect()
}

/// `sum_j chi_j int_{z_j}^{z_j + l_j} exp(i dk z) dz` over consecutive
/// segments `(length, chi)` starting at `z = 0`.
pub fn effective_coupling(profile: &[(f64, f64)], delta_k: f64) -> Result<C64, DynamicsError> {
    if profile.is_empty() {
        return Err(DynamicsError::EmptyProfile);
    }
    let mut z = 0.0;
    let mut acc = C64::new(0.0, 0.0);
    for (k, &(length, chi)) in profile.iter().enumerate() {
        if !(length > 0.0) {
            return Err(DynamicsError::BadSegment(k));
        }
        let end = z + length;
        let integral = if delta_k == 0.0 {
            C64::new(length, 0.0)
        } else {
            (C64::new(0.0, delta_k * end).exp() - C64::new(0.0, delta_k * z).exp())
                / C64::new(0.0, delta_k)
        };
        acc += chi * integral;
        z = end;
    }
    Ok(acc)
}
