//! Closed-form beam refinement from subarray phase shifts (BRPSS).
//!
//! Every subarray applies the chirp of the coarse estimate `(k̃, b̃)` during
//! a single pilot. The residual chirp `(Δk, Δb)` makes the phase of subarray
//! output `ẑ_t` quadratic in `t`, with second difference `2πΔkM²` and
//! first difference `π(ΔkM²(2t−1) + (Δb + Δk(M+1))M)`. Both are read off
//! the principal-value phases after wrapping to `[−π, π)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::array::{ArrayConfig, QuadraticPhase, Range};
use crate::channel::receive_rf;
use crate::combining::AnalogCombiner;
use crate::error::{Error, Result};

/// Wrap to `[−π, π)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// `k̃ = −λ(1−Ω̃²)/(4r̃)`, `b̃ = Ω̃ − k̃(N+1)`; far estimates give `(0, Ω̃)`.
pub fn initial_kb(cfg: &ArrayConfig, omega: f64, range: Range) -> QuadraticPhase {
    QuadraticPhase::from_polar(cfg, omega, range)
}

/// Analog combiner whose block `t` matches the chirp `qp` over antennas
/// `(t−1)M+1 ..= tM`, so that output `t` is `w̄_t^H G_t h`.
pub fn refinement_combiner(cfg: &ArrayConfig, qp: QuadraticPhase) -> AnalogCombiner {
    let m = cfg.m_per_sub();
    let rows = (0..cfg.n_rf())
        .map(|t| {
            (1..=m)
                .map(|i| {
                    let n = (t * m + i) as f64;
                    Complex64::from_polar(1.0, -PI * (qp.k * n * n + qp.b * n))
                })
                .collect()
        })
        .collect();
    AnalogCombiner::new(rows).expect("non-empty equal-length rows")
}

/// One-pilot subarray measurements `ẑ_1 … ẑ_NRF`.
pub fn measure_subarrays<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    h: &[Complex64],
    qp: QuadraticPhase,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    receive_rf(h, &refinement_combiner(cfg, qp), Complex64::new(1.0, 0.0), sigma2, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDifferences {
    /// `Δϒ_t`, `t = 1..NRF−1`.
    pub first: Vec<f64>,
    /// Wrapped `Δ²ϒ_t`, `t = 1..NRF−2`.
    pub second: Vec<f64>,
}

pub fn phase_differences(z: &[Complex64]) -> Result<PhaseDifferences> {
    if z.len() < 3 {
        return Err(Error::TooFewSubarrays(z.len()));
    }
    if let Some(t) = z.iter().position(|x| !(x.norm() > 0.0)) {
        return Err(Error::ZeroMeasurement(t + 1));
    }
    let phase: Vec<f64> = z.iter().map(|x| x.arg()).collect();
    let first: Vec<f64> = phase.windows(2).map(|w| w[1] - w[0]).collect();
    let second = first.windows(2).map(|w| wrap_phase(w[1] - w[0])).collect();
    Ok(PhaseDifferences { first, second })
}

/// `(Δk̂, Δb̂)` from the phase differences.
pub fn estimate_offsets(cfg: &ArrayConfig, d: &PhaseDifferences) -> (f64, f64) {
    let m = cfg.m_per_sub() as f64;
    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| xs.sum::<f64>() / n as f64;
    let dk = mean(&mut d.second.iter().map(|&x| x / (2.0 * PI * m * m)), d.second.len());
    // Unwrap around the array-centre angle offset `ΔΩ = Δb + Δk(N+1)`: the
    // coarse angle is far more reliable than the coarse range.
    let n_rf = cfg.n_rf() as f64;
    let d_omega = mean(
        &mut d.first.iter().enumerate().map(|(i, &x)| {
            let t = (i + 1) as f64;
            wrap_phase(x - (2.0 * t - n_rf) * m * m * dk * PI) / (m * PI)
        }),
        d.first.len(),
    );
    (dk, d_omega - dk * (cfg.n_antennas() as f64 + 1.0))
}

/// Refined chirp and position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementOutput {
    pub k: f64,
    pub b: f64,
    pub omega: f64,
    pub range: Range,
    /// `false` when refinement failed and the coarse estimate was returned.
    pub refined: bool,
}

impl RefinementOutput {
    /// The coarse estimate, tagged unrefined.
    pub fn coarse(cfg: &ArrayConfig, omega: f64, range: Range) -> Self {
        let qp = initial_kb(cfg, omega, range);
        Self {
            k: qp.k,
            b: qp.b,
            omega,
            range,
            refined: false,
        }
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        crate::array::polar_to_cartesian(self.omega, self.range)
    }
}

/// `k̂ = k̃ + Δk̂`, `b̂ = b̃ + Δb̂`, then `Ω̂ = b̂ + k̂(N+1)` and
/// `r̂ = −λ(1−Ω̂²)/(4k̂)`. `k̂ ≥ 0` maps to the far-field marker.
pub fn refine(cfg: &ArrayConfig, init: QuadraticPhase, dk: f64, db: f64) -> RefinementOutput {
    let qp = QuadraticPhase {
        k: init.k + dk,
        b: init.b + db,
    };
    let (omega, range) = qp.to_polar(cfg);
    RefinementOutput {
        k: qp.k,
        b: qp.b,
        omega,
        range,
        refined: true,
    }
}

/// Full refinement from a coarse `(Ω̃, r̃)`: one pilot, `O(N_RF)` work after
/// the measurement. Failures fall back to the coarse estimate.
pub fn run_brpss<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    h: &[Complex64],
    coarse: (f64, Range),
    sigma2: f64,
    rng: &mut R,
) -> Result<RefinementOutput> {
    if cfg.n_rf() < 3 {
        return Err(Error::TooFewSubarrays(cfg.n_rf()));
    }
    let init = initial_kb(cfg, coarse.0, coarse.1);
    let z = measure_subarrays(cfg, h, init, sigma2, rng)?;
    Ok(refine_from_measurements(cfg, init, &z).unwrap_or_else(|| {
        RefinementOutput::coarse(cfg, coarse.0, coarse.1)
    }))
}

/// Refinement from given measurements; `None` if the phases are unusable or
/// the refined direction sine leaves `[−1, 1]`.
pub fn refine_from_measurements(
    cfg: &ArrayConfig,
    init: QuadraticPhase,
    z: &[Complex64],
) -> Option<RefinementOutput> {
    let d = phase_differences(z).ok()?;
    let (dk, db) = estimate_offsets(cfg, &d);
    let out = refine(cfg, init, dk, db);
    (out.omega.is_finite() && out.omega.abs() <= 1.0).then_some(out)
}

/// Exact noiseless subarray sum `Σ_m e^{jπ(Δk n² + Δb n)}`,
/// `n = (t−1)M + m`, for an exact chirp channel with unit gain.
pub fn chirp_block_sum(cfg: &ArrayConfig, dk: f64, db: f64, t: usize) -> Complex64 {
    let m = cfg.m_per_sub();
    ((t - 1) * m + 1..=t * m)
        .map(|n| {
            let x = n as f64;
            Complex64::from_polar(1.0, PI * (dk * x * x + db * x))
        })
        .sum()
}

/// `sin(Mx/2)/sin(x/2)` with the removable singularities filled in.
fn dirichlet(m: f64, x: f64) -> f64 {
    let s = (x / 2.0).sin();
    if s.abs() < 1e-12 {
        let k = (x / (2.0 * PI)).round();
        let sign = if (k * (m - 1.0)).rem_euclid(2.0) == 0.0 { 1.0 } else { -1.0 };
        sign * m
    } else {
        (m * x / 2.0).sin() / s
    }
}

/// Stationary-phase model of `ẑ_t` for an exact chirp channel with unit
/// gain: `ḡ·C(t)·B(φ_t)`, with `B` evaluated by composite Simpson
/// quadrature. Positive `Δk` uses conjugate symmetry; `Δk = 0` uses the
/// geometric series.
pub fn psp_model_oracle(cfg: &ArrayConfig, dk: f64, db: f64, t: usize) -> Complex64 {
    let m = cfg.m_per_sub() as f64;
    let tm = (t - 1) as f64;
    if dk == 0.0 {
        let lead = Complex64::from_polar(1.0, PI * db * (tm * m + (m + 1.0) / 2.0));
        return lead * dirichlet(m, PI * db);
    }
    if dk > 0.0 {
        return psp_model_oracle(cfg, -dk, -db, t).conj();
    }
    let g_bar = Complex64::from_polar(1.0, PI * ((m + 1.0) * db / 2.0 - 0.25)) / (2.0 * (-dk).sqrt());
    let c_t = Complex64::from_polar(
        1.0,
        PI * (dk * m * m * tm * tm + (db + dk * (m + 1.0)) * m * tm),
    );
    let phi = db + 2.0 * dk * m * tm;
    let (lo, hi) = (2.0 * dk * m, 2.0 * dk);
    // Resolve the Dirichlet main lobe (width ~2/M) with ≥ 64 panels.
    let panels = (((hi - lo) * m * 32.0).ceil() as usize).max(256);
    let panels = panels + panels % 2;
    let step = (hi - lo) / panels as f64;
    let integrand = |w: f64| {
        Complex64::from_polar(1.0, PI * ((m + 1.0) * w / 2.0 - w * w / (4.0 * dk)))
            * dirichlet(m, PI * (phi + w))
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..panels {
        let w = lo + i as f64 * step;
        acc += integrand(w) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    g_bar * c_t * (acc * step / 3.0)
}

/// Peak-shift condition `|φ_t + ω| ≤ 1/M` over `ω ∈ [2ΔkM, 2Δk]` and every
/// subarray.
pub fn peak_shift_ok(cfg: &ArrayConfig, dk: f64, db: f64) -> bool {
    let m = cfg.m_per_sub() as f64;
    (0..cfg.n_rf()).all(|t| {
        let phi = db + 2.0 * dk * m * t as f64;
        [2.0 * dk * m, 2.0 * dk]
            .iter()
            .all(|w| (phi + w).abs() <= 1.0 / m)
    })
}

/// Curvature offset bound `1/(M(N−1)) − 1/(Q(N−1))` implied by the
/// peak-shift condition.
pub fn curvature_offset_bound(cfg: &ArrayConfig, n_angles: usize) -> f64 {
    let n1 = cfg.n_antennas() as f64 - 1.0;
    1.0 / (cfg.m_per_sub() as f64 * n1) - 1.0 / (n_angles as f64 * n1)
}

/// Largest curvature gap between adjacent distance rings, `√2/(2N^{3/2}S)`.
pub fn ring_curvature_gap(cfg: &ArrayConfig, n_dist: usize) -> f64 {
    std::f64::consts::SQRT_2 / (2.0 * (cfg.n_antennas() as f64).powf(1.5) * n_dist as f64)
}
