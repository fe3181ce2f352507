//! Photon statistics and Wigner function of the reduced mode-1 state.
//!
//! Phase-space convention: `alpha = (x + i y) / sqrt(2)` with quadratures
//! `x = (a + a^+)/sqrt(2)` and `y = (a - a^+)/(sqrt(2) i)`. Grids are polar in
//! the `alpha` plane, `alpha = r e^{i theta}`, and `W` is normalized so that
//! `int W d^2 alpha = 1`; the vacuum peaks at `2/pi`.

use std::f64::consts::{FRAC_2_PI, TAU};

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::fock::DensityMatrix;

/// `g3` is reported only above this mean photon number.
pub const G3_GUARD: f64 = 1e-3;
pub const MAX_WIGNER_CUTOFF: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservablesError {
    #[error("grid radius {radius} too small, state needs at least {required:.3}")]
    GridTooSmall { radius: f64, required: f64 },
    #[error("Wigner evaluation supports cutoffs up to {MAX_WIGNER_CUTOFF}, got {0}")]
    CutoffTooLarge(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub fn mean_photon_number(rho: &DensityMatrix) -> f64 {
    rho.diagonal()
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum()
}

pub fn photon_number_distribution(rho: &DensityMatrix) -> Vec<f64> {
    rho.diagonal()
}

/// `<a^+3 a^3> = sum n(n-1)(n-2) P(n)`.
pub fn third_factorial_moment(rho: &DensityMatrix) -> f64 {
    rho.diagonal()
        .iter()
        .enumerate()
        .map(|(n, p)| falling3(n) * p)
        .sum()
}

#[inline]
pub fn falling3(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) * (n - 2.0)
}

/// `<a^+3 a^3> / n^3`, or `None` below [`G3_GUARD`].
pub fn g3(rho: &DensityMatrix) -> Option<f64> {
    g3_from_moments(mean_photon_number(rho), third_factorial_moment(rho))
}

pub fn g3_from_moments(n: f64, m3: f64) -> Option<f64> {
    (n >= G3_GUARD).then(|| m3 / (n * n * n))
}

/// Indices `n` with `P(n)` strictly above both neighbours (the ends compare
/// against their single neighbour). Entries below `floor` are ignored.
pub fn local_maxima(p: &[f64], floor: f64) -> Vec<usize> {
    (0..p.len())
        .filter(|&n| {
            let left = n == 0 || p[n] > p[n - 1];
            let right = n + 1 == p.len() || p[n] > p[n + 1];
            left && right && p[n] > floor
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WignerGridSpec {
    /// Largest `|alpha|` covered.
    pub radius: f64,
    pub n_radial: usize,
    pub n_angular: usize,
}

impl WignerGridSpec {
    pub fn validate(&self) -> Result<(), ObservablesError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ObservablesError::InvalidGrid("radius must be > 0".into()));
        }
        if self.n_radial == 0 || self.n_angular == 0 {
            return Err(ObservablesError::InvalidGrid("grid counts must be > 0".into()));
        }
        Ok(())
    }

    pub fn dr(&self) -> f64 {
        self.radius / self.n_radial as f64
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.n_angular as f64
    }

    /// Midpoints `(j + 1/2) dr`.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_radial).map(|j| (j as f64 + 0.5) * self.dr()).collect()
    }

    /// `k dtheta`, starting at zero so rotations by `2 pi / 3` stay on the
    /// grid whenever `n_angular` is a multiple of three.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_angular).map(|k| k as f64 * self.dtheta()).collect()
    }
}

/// Smallest admissible grid radius (in `|alpha|`) for a state with mean photon
/// number `n`: `1.5 (sqrt(n) + 3)` in quadrature units `x = sqrt(2) Re alpha`.
pub fn required_radius(n: f64) -> f64 {
    1.5 * (n.max(0.0).sqrt() + 3.0) / std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerGrid {
    pub spec: WignerGridSpec,
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    /// `values[j * n_angular + k] = W(radii[j], angles[k])`.
    pub values: Vec<f64>,
    /// Largest imaginary part met before discarding it.
    pub max_imag_residue: f64,
}

impl WignerGrid {
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.spec.n_angular + k]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint rule for `int W r dr dtheta`.
    pub fn integral(&self) -> f64 {
        self.weighted_sum(|w| w)
    }

    fn weighted_sum(&self, g: impl Fn(f64) -> f64) -> f64 {
        let cell = self.spec.dr() * self.spec.dtheta();
        self.radii
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let row = &self.values[j * self.spec.n_angular..(j + 1) * self.spec.n_angular];
                r * row.iter().map(|&w| g(w)).sum::<f64>()
            })
            .sum::<f64>()
            * cell
    }

    /// `max |W(r, theta) - W(r, theta + 2 pi / 3)|`. Needs `n_angular % 3 == 0`.
    pub fn threefold_defect(&self) -> Option<f64> {
        let na = self.spec.n_angular;
        if na % 3 != 0 {
            return None;
        }
        let shift = na / 3;
        let mut worst = 0.0f64;
        for j in 0..self.spec.n_radial {
            for k in 0..na {
                worst = worst.max((self.at(j, k) - self.at(j, (k + shift) % na)).abs());
            }
        }
        Some(worst)
    }

    /// Rows `r, theta, x, y, W` where `x + i y = alpha`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,theta,re_alpha,im_alpha,w\n");
        for (j, r) in self.radii.iter().enumerate() {
            for (k, th) in self.angles.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r,
                    th,
                    r * th.cos(),
                    r * th.sin(),
                    self.at(j, k)
                ));
            }
        }
        out
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Evaluates `sum_{mn} rho_mn W_{|m><n|}(alpha)` with the displaced-parity
/// matrix elements
/// `W_{|m><n|} = (2/pi) (-1)^n sqrt(n!/m!) (2 alpha^*)^{m-n} e^{-2|alpha|^2} L_n^{(m-n)}(4|alpha|^2)`
/// for `m >= n`. The returned imaginary part vanishes for Hermitian `rho`.
struct WignerKernel {
    ln_fact: Vec<f64>,
    laguerre: Vec<f64>,
}

impl WignerKernel {
    fn new(cutoff: usize) -> Self {
        Self {
            ln_fact: ln_factorials(cutoff),
            laguerre: vec![0.0; cutoff + 1],
        }
    }

    fn eval(&mut self, rho: &DensityMatrix, alpha: C64) -> C64 {
        let dim = rho.dim();
        let r2 = alpha.norm_sqr();
        let x = 4.0 * r2;
        let radius = r2.sqrt();
        let ln_two_r = (2.0 * radius).ln();
        let phase_step = C64::from_polar(1.0, -alpha.arg());
        let mut phase = C64::new(1.0, 0.0);
        let mut total = C64::new(0.0, 0.0);
        for k in 0..dim {
            if k > 0 && radius == 0.0 {
                break;
            }
            let len = dim - k;
            let kf = k as f64;
            // L_n^{(k)}(x), upward in n
            self.laguerre[0] = 1.0;
            if len > 1 {
                self.laguerre[1] = 1.0 + kf - x;
            }
            for n in 1..len.saturating_sub(1) {
                let nf = n as f64;
                self.laguerre[n + 1] = ((2.0 * nf + 1.0 + kf - x) * self.laguerre[n]
                    - (nf + kf) * self.laguerre[n - 1])
                    / (nf + 1.0);
            }
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..len {
                let m = n + k;
                let ln_mag = 0.5 * (self.ln_fact[n] - self.ln_fact[m]) - 2.0 * r2
                    + if k > 0 { kf * ln_two_r } else { 0.0 };
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let w = sign * ln_mag.exp() * self.laguerre[n];
                if k == 0 {
                    acc += rho.get(n, n) * w;
                } else {
                    let wm = phase * w;
                    acc += rho.get(m, n) * wm + rho.get(n, m) * wm.conj();
                }
            }
            total += acc;
            phase *= phase_step;
        }
        total * FRAC_2_PI
    }
}

/// Wigner function at a single phase-space point.
pub fn wigner_at(rho: &DensityMatrix, alpha: C64) -> Result<C64, ObservablesError> {
    if rho.cutoff() > MAX_WIGNER_CUTOFF {
        return Err(ObservablesError::CutoffTooLarge(rho.cutoff()));
    }
    Ok(WignerKernel::new(rho.cutoff()).eval(rho, alpha))
}

pub fn wigner(rho: &DensityMatrix, spec: &WignerGridSpec) -> Result<WignerGrid, ObservablesError> {
    spec.validate()?;
    if rho.cutoff() > MAX_WIGNER_CUTOFF {
        return Err(ObservablesError::CutoffTooLarge(rho.cutoff()));
    }
    let required = required_radius(mean_photon_number(rho));
    if spec.radius < required {
        return Err(ObservablesError::GridTooSmall {
            radius: spec.radius,
            required,
        });
    }
    Ok(wigner_unchecked(rho, spec))
}

/// Grid evaluation without the radius precondition.
pub fn wigner_unchecked(rho: &DensityMatrix, spec: &WignerGridSpec) -> WignerGrid {
    use rayon::prelude::*;
    let radii = spec.radii();
    let angles = spec.angles();
    let rows: Vec<(Vec<f64>, f64)> = radii
        .par_iter()
        .map_init(
            || WignerKernel::new(rho.cutoff()),
            |kernel, &r| {
                let mut imag = 0.0f64;
                let row = angles
                    .iter()
                    .map(|&th| {
                        let w = kernel.eval(rho, C64::from_polar(r, th));
                        imag = imag.max(w.im.abs());
                        w.re
                    })
                    .collect();
                (row, imag)
            },
        )
        .collect();
    let max_imag_residue = rows.iter().map(|(_, i)| *i).fold(0.0, f64::max);
    WignerGrid {
        spec: *spec,
        radii,
        angles,
        values: rows.into_iter().flat_map(|(row, _)| row).collect(),
        max_imag_residue,
    }
}

/// `int (|W| - W) / 2 dmu` by midpoint quadrature.
pub fn wigner_negativity(grid: &WignerGrid) -> f64 {
    grid.weighted_sum(|w| 0.5 * (w.abs() - w))
}

/// Metadata written next to exported grids.
pub fn wigner_metadata(grid: &WignerGrid) -> serde_json::Value {
    serde_json::json!({
        "convention": "alpha = (x + i y)/sqrt(2), x = (a + a^+)/sqrt(2), y = (a - a^+)/(sqrt(2) i); polar grid r = |alpha|, theta = arg(alpha); int W d^2alpha = 1",
        "radius": grid.spec.radius,
        "n_radial": grid.spec.n_radial,
        "n_angular": grid.spec.n_angular,
        "radial_nodes": "midpoints (j + 1/2) * radius / n_radial",
        "angular_nodes": "k * 2 pi / n_angular",
        "integral": grid.integral(),
        "negativity": wigner_negativity(grid),
        "min": grid.min(),
        "max": grid.max(),
        "max_imag_residue": grid.max_imag_residue,
    })
}
