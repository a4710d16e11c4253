//! Partially-connected hybrid combining.
//!
//! The analog stage is block diagonal: RF chain `t` sees only antennas
//! `(t−1)M+1 ..= tM` through a row of unit-modulus phase shifts. The digital
//! stage is a single row `v` over the `N_RF` chain outputs.
//!
//! [`design_hybrid`] implements the subarray approximation: each subarray
//! steers a DFT beam at the direction its own centre sees the source, and the
//! digital row co-phases the subarray outputs.

use num_complex::Complex64;

use crate::array::{steering, ArrayConfig, Range};
use crate::codebook::SubarrayCodebook;
use crate::cvec::{dot_conj, norm};
use crate::error::{Error, Result};

/// Block-diagonal analog combiner `W = blkdiag{w_1, …, w_NRF}`.
///
/// Row `t` is stored exactly as applied: RF output `t` is
/// `Σ_m w_t[m] · x[(t−1)M + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogCombiner {
    rows: Vec<Vec<Complex64>>,
}

impl AnalogCombiner {
    pub fn new(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let m = rows.first().map(Vec::len).unwrap_or(0);
        if m == 0 {
            return Err(Error::DegenerateCombiner("empty analog combiner".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::Dimension {
                expected: m,
                got: bad.len(),
            });
        }
        Ok(Self { rows })
    }

    pub fn n_rf(&self) -> usize {
        self.rows.len()
    }

    pub fn m_per_sub(&self) -> usize {
        self.rows[0].len()
    }

    pub fn n_antennas(&self) -> usize {
        self.n_rf() * self.m_per_sub()
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.rows[t]
    }

    /// `W x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_antennas() {
            return Err(Error::Dimension {
                expected: self.n_antennas(),
                got: x.len(),
            });
        }
        let m = self.m_per_sub();
        Ok(self
            .rows
            .iter()
            .zip(x.chunks_exact(m))
            .map(|(w, blk)| w.iter().zip(blk).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// The dense `N_RF × N` matrix, row-major.
    pub fn dense(&self) -> Vec<Vec<Complex64>> {
        let m = self.m_per_sub();
        let n = self.n_antennas();
        self.rows
            .iter()
            .enumerate()
            .map(|(t, w)| {
                let mut row = vec![Complex64::new(0.0, 0.0); n];
                row[t * m..(t + 1) * m].copy_from_slice(w);
                row
            })
            .collect()
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.rows
            .iter()
            .flatten()
            .all(|w| (w.norm() - 1.0).abs() <= tol)
    }
}

/// Analog combiner whose every block is the conjugated subarray DFT column
/// `m` (1-based), as used by the first training stage.
pub fn uniform_dft_combiner(sub: &SubarrayCodebook, n_rf: usize, m: usize) -> AnalogCombiner {
    let row: Vec<Complex64> = sub.column(m).iter().map(|x| x.conj()).collect();
    AnalogCombiner {
        rows: vec![row; n_rf],
    }
}

/// Analog combiner built from one subarray DFT index per RF chain.
pub fn dft_combiner(sub: &SubarrayCodebook, indices: &[usize]) -> AnalogCombiner {
    AnalogCombiner {
        rows: indices
            .iter()
            .map(|&m| sub.column(m).iter().map(|x| x.conj()).collect())
            .collect(),
    }
}

/// Analog combiner and digital row for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerPair {
    /// Subarray DFT index (1-based) chosen for each RF chain.
    pub indices: Vec<usize>,
    pub analog: AnalogCombiner,
    pub digital: Vec<Complex64>,
}

impl CombinerPair {
    /// `v W`, the effective length-`N` combining row.
    pub fn effective_row(&self) -> Vec<Complex64> {
        let m = self.analog.m_per_sub();
        let mut out = Vec::with_capacity(self.analog.n_antennas());
        for (t, v) in self.digital.iter().enumerate() {
            out.extend(self.analog.row(t).iter().map(|w| v * w));
        }
        debug_assert_eq!(out.len(), m * self.digital.len());
        out
    }

    /// The combined beam `(vW)^H`, comparable with a codeword `u` since
    /// `vW ≈ u^H` up to phase. Its hybrid beam gain towards a source equals
    /// the magnitude of the combined output for that source.
    pub fn combined_vector(&self) -> Vec<Complex64> {
        self.effective_row().into_iter().map(|x| x.conj()).collect()
    }

    /// `‖vW‖₂`.
    pub fn effective_norm(&self) -> f64 {
        norm(&self.effective_row())
    }
}

/// Direction sines `Ψ_t` from each subarray centre to a source at `(Ω, r)`.
pub fn subarray_pointing(cfg: &ArrayConfig, omega: f64, range: Range) -> Vec<f64> {
    let lambda = cfg.wavelength();
    (1..=cfg.n_rf())
        .map(|t| match range {
            Range::Far => omega,
            Range::Finite(r) => {
                let c = cfg.subarray_center(t) * lambda;
                (r * omega - c) / (r * r + c * c - 2.0 * r * omega * c).sqrt()
            }
        })
        .collect()
}

/// Index (1-based) of the subarray DFT angle nearest to `psi`; ties go to the
/// smaller index.
pub fn quantize_pointing(psi: f64, sub: &SubarrayCodebook) -> usize {
    let m = sub.len();
    // Φ_x = psi at x = (psi·M + M + 1)/2
    let x = (psi * m as f64 + m as f64 + 1.0) / 2.0;
    let lo = (x.floor() as i64).clamp(1, m as i64) as usize;
    let hi = (lo + 1).min(m);
    let d_lo = (sub.angle(lo) - psi).abs();
    let d_hi = (sub.angle(hi) - psi).abs();
    if d_hi < d_lo {
        hi
    } else {
        lo
    }
}

/// Hybrid combiner approximating codeword `u`, whose generating parameters
/// are `(omega, range)`.
pub fn design_hybrid(
    cfg: &ArrayConfig,
    sub: &SubarrayCodebook,
    u: &[Complex64],
    omega: f64,
    range: Range,
) -> Result<CombinerPair> {
    let indices: Vec<usize> = subarray_pointing(cfg, omega, range)
        .into_iter()
        .map(|psi| quantize_pointing(psi, sub))
        .collect();
    let analog = dft_combiner(sub, &indices);
    let wu = analog.apply(u)?;
    let wu_norm = norm(&wu);
    if !(wu_norm > 0.0) {
        return Err(Error::DegenerateCombiner(
            "analog combiner output has zero norm".into(),
        ));
    }
    let scale = 1.0 / ((cfg.m_per_sub() as f64).sqrt() * wu_norm);
    let digital = wu.iter().map(|x| x.conj() * scale).collect();
    Ok(CombinerPair {
        indices,
        analog,
        digital,
    })
}

/// Hybrid-field beam gain `|α(N, Ω, r)^H u|`.
pub fn hybrid_beam_gain(cfg: &ArrayConfig, u: &[Complex64], omega: f64, range: Range) -> f64 {
    dot_conj(&steering(cfg, omega, range), u).norm()
}

/// Worst-case gain loss of the subarray approximation,
/// `max{1 − N_RF/(2N)^{1/4}, 0}`.
pub fn gain_loss_bound(cfg: &ArrayConfig) -> f64 {
    let loss = 1.0 - cfg.n_rf() as f64 / (2.0 * cfg.n_antennas() as f64).powf(0.25);
    loss.max(0.0)
}

/// Stationary-phase flat-top approximation of a subarray's response to a
/// chirp with curvature `k < 0` and local slope `b_local`, observed with a
/// far-field beam at `omega`: `sqrt(1/−k)` inside
/// `[b_local + 2kM, b_local + 2k]`, zero outside.
pub fn flat_top_gain(cfg: &ArrayConfig, k: f64, b_local: f64, omega: f64) -> Result<f64> {
    if !(k < 0.0) {
        return Err(Error::NonNegativeCurvature(k));
    }
    let m = cfg.m_per_sub() as f64;
    let lo = b_local + 2.0 * k * m;
    let hi = b_local + 2.0 * k;
    Ok(if omega >= lo && omega <= hi {
        (1.0 / -k).sqrt()
    } else {
        0.0
    })
}

/// Centre `B_t` of subarray `t`'s flat-top beam for a source at `(Ω, r)`.
pub fn beam_center(cfg: &ArrayConfig, omega: f64, range: Range, t: usize) -> f64 {
    match range {
        Range::Far => omega,
        Range::Finite(r) => {
            let n = cfg.n_antennas() as f64;
            let m = cfg.m_per_sub() as f64;
            omega
                + cfg.wavelength() * (1.0 - omega * omega) * (n - (2.0 * t as f64 - 1.0) * m)
                    / (4.0 * r)
        }
    }
}

/// One sample of a beam-gain map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GainSample {
    pub omega: f64,
    pub r: f64,
    pub gain: f64,
}

/// `B(u, Ω, r)` over a rectangular grid, omega-major.
pub fn gain_map(cfg: &ArrayConfig, u: &[Complex64], omegas: &[f64], ranges: &[f64]) -> Vec<GainSample> {
    let mut out = Vec::with_capacity(omegas.len() * ranges.len());
    for &omega in omegas {
        for &r in ranges {
            out.push(GainSample {
                omega,
                r,
                gain: hybrid_beam_gain(cfg, u, omega, Range::Finite(r)),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::far_steering;
    use crate::codebook::{CodebookLayout, SubarrayCodebook};

    #[test]
    fn lemma_one_examples() {
        let a = ArrayConfig::new(256, 4, 0.003).unwrap();
        assert!((gain_loss_bound(&a) - 0.159).abs() < 5e-4);
        let b = ArrayConfig::new(16, 4, 0.003).unwrap();
        assert_eq!(gain_loss_bound(&b), 0.0);
        let c = ArrayConfig::reference();
        assert!((gain_loss_bound(&c) - (1.0 - 4.0 / 1024f64.powf(0.25))).abs() < 1e-15);
        assert!((gain_loss_bound(&c) - 0.2929).abs() < 1e-4);
    }

    #[test]
    fn pointing_far_and_symmetry() {
        let a = ArrayConfig::reference();
        assert!(subarray_pointing(&a, 0.3, Range::Far).iter().all(|&p| p == 0.3));
        let p = subarray_pointing(&a, 0.0, Range::Finite(20.0));
        for t in 0..4 {
            assert!((p[t] + p[3 - t]).abs() < 1e-15);
        }
        let p = subarray_pointing(&a, 0.2, Range::Finite(1e12));
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-9));
    }

    #[test]
    fn quantize_on_grid_and_ties() {
        let sub = SubarrayCodebook::new(8);
        for m in 1..=8 {
            assert_eq!(quantize_pointing(sub.angle(m), &sub), m);
        }
        // midpoint between Φ_3 and Φ_4 is exactly representable: (−0.375 + −0.125)/2
        let mid = (sub.angle(3) + sub.angle(4)) / 2.0;
        assert_eq!(quantize_pointing(mid, &sub), 3);
        assert_eq!(quantize_pointing(-1.0, &sub), 1);
        assert_eq!(quantize_pointing(1.0, &sub), 8);
    }

    #[test]
    fn quantize_matches_brute_force() {
        let sub = SubarrayCodebook::new(128);
        for i in 0..2001 {
            let psi = -1.0 + i as f64 * 0.001;
            let brute = (1..=128)
                .min_by(|&a, &b| {
                    let da = (sub.angle(a) - psi).abs();
                    let db = (sub.angle(b) - psi).abs();
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(quantize_pointing(psi, &sub), brute, "psi={psi}");
        }
    }

    #[test]
    fn design_has_unit_effective_norm() {
        let a = ArrayConfig::reference();
        let sub = SubarrayCodebook::new(a.m_per_sub());
        let layout = CodebookLayout::new(a, 512, 11);
        for p in [1, 77, 2811, 5632, 5633, 6144] {
            let par = layout.codeword_params(p).unwrap();
            let u = layout.column(p).unwrap();
            let pair = design_hybrid(&a, &sub, &u, par.theta, par.range).unwrap();
            assert!((pair.effective_norm() - 1.0).abs() < 1e-12);
            assert!(pair.analog.is_unit_modulus(1e-12));
        }
    }

    #[test]
    fn block_structure() {
        let a = ArrayConfig::new(16, 4, 0.003).unwrap();
        let sub = SubarrayCodebook::new(a.m_per_sub());
        let w = dft_combiner(&sub, &[1, 2, 3, 4]);
        for (t, row) in w.dense().iter().enumerate() {
            for (n, x) in row.iter().enumerate() {
                if n / 4 == t {
                    assert!((x.norm() - 1.0).abs() < 1e-15);
                } else {
                    assert_eq!(*x, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn on_grid_far_codeword_is_recovered_by_hybrid() {
        // Θ on the subarray grid: every subarray picks the same beam and the
        // hybrid beam equals the full-array beam.
        let a = ArrayConfig::new(128, 4, 0.003).unwrap();
        let sub = SubarrayCodebook::new(a.m_per_sub());
        let omega = sub.angle(10);
        let u = far_steering(128, omega);
        let pair = design_hybrid(&a, &sub, &u, omega, Range::Far).unwrap();
        assert!(pair.indices.iter().all(|&m| m == 10));
        let f = pair.combined_vector();
        assert!((dot_conj(&f, &u).norm() - 1.0).abs() < 1e-12);
        assert!((hybrid_beam_gain(&a, &f, omega, Range::Far) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_gain_and_orthogonality() {
        let a = ArrayConfig::reference();
        let u = steering(&a, 0.2, Range::Finite(30.0));
        assert!((hybrid_beam_gain(&a, &u, 0.2, Range::Finite(30.0)) - 1.0).abs() < 1e-12);
        // DFT-grid orthogonality in the far field
        let u = far_steering(512, 4.0 / 512.0);
        let g = hybrid_beam_gain(&a, &u, 8.0 / 512.0, Range::Far);
        assert!(g < 1e-12, "{g}");
        let u = far_steering(512, 0.4);
        assert!(hybrid_beam_gain(&a, &u, 0.4, Range::Finite(1e6)) > 0.999);
    }

    #[test]
    fn flat_top_support() {
        let a = ArrayConfig::reference();
        let k = -1e-5;
        let b = 0.1;
        let center = b + k * (a.m_per_sub() as f64 + 1.0);
        assert!((flat_top_gain(&a, k, b, center).unwrap() - (1e5f64).sqrt()).abs() < 1e-9);
        assert_eq!(flat_top_gain(&a, k, b, b + 0.1).unwrap(), 0.0);
        assert!(flat_top_gain(&a, 0.0, b, b).is_err());
    }

    #[test]
    fn beam_center_limits() {
        let a = ArrayConfig::reference();
        assert_eq!(beam_center(&a, 0.3, Range::Far, 2), 0.3);
        let r = Range::Finite(15.0);
        let avg = (beam_center(&a, 0.3, r, 2) + beam_center(&a, 0.3, r, 3)) / 2.0;
        assert!((avg - 0.3).abs() < 1e-15);
    }
}
