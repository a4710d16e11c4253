//! ULA geometry and steering vectors.
//!
//! Antennas sit on the y-axis at `(0, δ_n λ)` with `δ_n = (2n − N − 1)/4`,
//! `n = 1..=N`, i.e. half-wavelength spacing centred on the origin. A source
//! is described by its direction sine `Ω = sin θ` (θ measured from the array
//! broadside, the positive x-axis) and its range `r` from the origin.
//!
//! Three steering models are provided:
//!
//! * [`steering_near`]: the exact spherical-wavefront response (phase only),
//! * [`far_steering`]: the planar-wavefront response `β(N, Ω)`,
//! * [`steering_quadratic`]: the chirp `γ` obtained from a second-order
//!   expansion of the element distance, parameterised by [`QuadraticPhase`].
//!
//! All three are unit-norm.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of the array and its subarray partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrayConfig {
    n_antennas: usize,
    n_rf: usize,
    wavelength: f64,
}

impl ArrayConfig {
    pub fn new(n_antennas: usize, n_rf: usize, wavelength: f64) -> Result<Self> {
        if n_antennas == 0 || n_rf == 0 {
            return Err(Error::InvalidArray(
                "antenna and RF-chain counts must be positive".into(),
            ));
        }
        if n_antennas % n_rf != 0 {
            return Err(Error::InvalidArray(format!(
                "{n_antennas} antennas cannot be split evenly over {n_rf} RF chains"
            )));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidArray(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Ok(Self {
            n_antennas,
            n_rf,
            wavelength,
        })
    }

    /// The 512-antenna, 4-RF-chain, 3 mm array used throughout the experiments.
    pub fn reference() -> Self {
        Self {
            n_antennas: 512,
            n_rf: 4,
            wavelength: 0.003,
        }
    }

    #[inline]
    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    #[inline]
    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    /// Antennas per subarray, `M = N / N_RF`.
    #[inline]
    pub fn m_per_sub(&self) -> usize {
        self.n_antennas / self.n_rf
    }

    #[inline]
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Array aperture `D = Nλ/2`.
    pub fn aperture(&self) -> f64 {
        self.n_antennas as f64 * self.wavelength / 2.0
    }

    /// Rayleigh distance `Z = 2D²/λ = N²λ/2`.
    pub fn rayleigh_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.wavelength
    }

    /// Lower edge of the region where the second-order distance expansion
    /// holds, `0.5·sqrt(D³/λ)`.
    pub fn validity_floor(&self) -> f64 {
        let d = self.aperture();
        0.5 * (d * d * d / self.wavelength).sqrt()
    }

    /// A single subarray viewed as its own array (`M` antennas, one RF chain).
    pub fn subarray(&self) -> ArrayConfig {
        ArrayConfig {
            n_antennas: self.m_per_sub(),
            n_rf: 1,
            wavelength: self.wavelength,
        }
    }

    /// Normalised position `δ_n` of antenna `n` (1-based), in wavelengths.
    #[inline]
    pub fn delta(&self, n: usize) -> f64 {
        (2.0 * n as f64 - self.n_antennas as f64 - 1.0) / 4.0
    }

    /// Normalised centre `Δ_t` of subarray `t` (1-based), in wavelengths.
    #[inline]
    pub fn subarray_center(&self, t: usize) -> f64 {
        ((2.0 * t as f64 - 1.0) * self.m_per_sub() as f64 - self.n_antennas as f64) / 4.0
    }
}

/// Source range: a finite distance in metres or the planar-wave limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Range {
    Finite(f64),
    Far,
}

impl Range {
    pub fn is_far(&self) -> bool {
        matches!(self, Range::Far)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Range::Finite(r) => Some(r),
            Range::Far => None,
        }
    }

    /// Metres, with `Far` mapped to `+∞`.
    pub fn meters(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl From<Option<f64>> for Range {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(r) if r.is_finite() => Range::Finite(r),
            _ => Range::Far,
        }
    }
}

impl From<Range> for Option<f64> {
    fn from(r: Range) -> Self {
        r.finite()
    }
}

/// One propagation path: complex gain, direction sine and range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub omega: f64,
    pub range: Range,
}

impl PathParams {
    /// Cartesian position `(r cos θ, r sin θ)` of the source, if finite.
    pub fn position(&self) -> Option<(f64, f64)> {
        polar_to_cartesian(self.omega, self.range)
    }
}

/// `(Ω, r) → (x, y)` with `θ = asin Ω`; `None` in the far field.
pub fn polar_to_cartesian(omega: f64, range: Range) -> Option<(f64, f64)> {
    let r = range.finite()?;
    let s = omega.clamp(-1.0, 1.0);
    let c = (1.0 - s * s).sqrt();
    Some((r * c, r * s))
}

/// Coefficients of the chirp phase `π(k n² + b n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPhase {
    pub k: f64,
    pub b: f64,
}

impl QuadraticPhase {
    /// `ρ = λ(1−Ω²)/(2r)`, `k = −ρ/2`, `b = Ω + ρ(N+1)/2`. Far sources give
    /// `k = 0, b = Ω`.
    pub fn from_polar(cfg: &ArrayConfig, omega: f64, range: Range) -> Self {
        match range {
            Range::Far => Self { k: 0.0, b: omega },
            Range::Finite(r) => {
                let rho = cfg.wavelength() * (1.0 - omega * omega) / (2.0 * r);
                Self {
                    k: -rho / 2.0,
                    b: omega + rho * (cfg.n_antennas() as f64 + 1.0) / 2.0,
                }
            }
        }
    }

    /// Direction sine `Ω = b + k(N+1)`.
    pub fn omega(&self, cfg: &ArrayConfig) -> f64 {
        self.b + self.k * (cfg.n_antennas() as f64 + 1.0)
    }

    /// Inverse of [`QuadraticPhase::from_polar`]: `r = −λ(1−Ω²)/(4k)` for
    /// `k < 0`, otherwise the far-field marker.
    pub fn to_polar(&self, cfg: &ArrayConfig) -> (f64, Range) {
        let omega = self.omega(cfg);
        if self.k < 0.0 {
            let r = -cfg.wavelength() * (1.0 - omega * omega) / (4.0 * self.k);
            (omega, Range::Finite(r))
        } else {
            (omega, Range::Far)
        }
    }
}

/// Exact distance `r^(n)` between a source at `(Ω, r)` and antenna `n`.
pub fn element_distance(cfg: &ArrayConfig, omega: f64, r: f64, n: usize) -> Result<f64> {
    if n == 0 || n > cfg.n_antennas() {
        return Err(Error::AntennaIndex {
            index: n,
            n: cfg.n_antennas(),
        });
    }
    if !(r > 0.0) {
        return Err(Error::InvalidScenario(format!("range must be positive, got {r}")));
    }
    let y = cfg.delta(n) * cfg.wavelength();
    Ok((r * r + y * y - 2.0 * r * omega * y).sqrt())
}

/// `r^(n) − r`, evaluated without cancellation for large `r`.
#[inline]
fn path_difference(omega: f64, r: f64, y: f64) -> f64 {
    let num = y * y - 2.0 * r * omega * y;
    let rn = (r * r + num).sqrt();
    num / (rn + r)
}

fn check_angle(omega: f64) -> Result<()> {
    if omega.is_finite() && omega.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAngle(omega))
    }
}

/// Near-field steering vector `α(N, Ω, r)`. Ranges below
/// [`ArrayConfig::validity_floor`] are rejected.
pub fn steering_near(cfg: &ArrayConfig, omega: f64, r: f64) -> Result<Vec<Complex64>> {
    check_angle(omega)?;
    let floor = cfg.validity_floor();
    if !(r >= floor) {
        return Err(Error::BelowValidityFloor { range: r, floor });
    }
    Ok(steering(cfg, omega, Range::Finite(r)))
}

/// Spherical-wave steering vector without range validation. `Range::Far`
/// yields the planar limit `e^{j2πΩδ_n}/√N`, which equals `β(N, Ω)` up to a
/// global phase.
pub fn steering(cfg: &ArrayConfig, omega: f64, range: Range) -> Vec<Complex64> {
    let n = cfg.n_antennas();
    let amp = 1.0 / (n as f64).sqrt();
    let lambda = cfg.wavelength();
    (1..=n)
        .map(|i| {
            let d = cfg.delta(i);
            let phase = match range {
                Range::Finite(r) => -2.0 * PI / lambda * path_difference(omega, r, d * lambda),
                Range::Far => 2.0 * PI * omega * d,
            };
            Complex64::from_polar(amp, phase)
        })
        .collect()
}

/// Far-field steering vector `β(n, Ω)` with entries `e^{jπ(i−1)Ω}/√n`.
pub fn far_steering(n: usize, omega: f64) -> Vec<Complex64> {
    let amp = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|i| Complex64::from_polar(amp, PI * i as f64 * omega))
        .collect()
}

/// Chirp steering vector `γ` with entries `e^{jπ(k n² + b n)}/√N`.
pub fn steering_quadratic(n: usize, qp: QuadraticPhase) -> Vec<Complex64> {
    let amp = 1.0 / (n as f64).sqrt();
    (1..=n)
        .map(|i| {
            let x = i as f64;
            Complex64::from_polar(amp, PI * (qp.k * x * x + qp.b * x))
        })
        .collect()
}
