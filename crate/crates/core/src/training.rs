//! Two-stage hybrid-field beam training (THBT) and exhaustive baselines.
//!
//! Stage 1 sweeps the subarray DFT codebook: pilot `m` has every subarray
//! apply `√M β(M, Φ_m)^H`, giving one output per RF chain. Stage 2 spends no
//! pilots. For each hybrid codeword `p`, the designed combiner `(F_p, v_p)`
//! only ever uses DFT beams, so the RF output it would have produced on chain
//! `t` was already observed in the sweep at index `m̃_t`. The outputs are
//! reassembled and digitally combined, and the codeword with the largest
//! power wins.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::array::{ArrayConfig, Range};
use crate::channel::{complex_normal, noise_vector, receive_rf_with_noise};
use crate::codebook::{CodebookLayout, CodewordParams, HybridCodebook, SubarrayCodebook};
use crate::combining::{design_hybrid, dft_combiner, uniform_dft_combiner, CombinerPair};
use crate::cvec::{dot, dot_conj};
use crate::error::{Error, Result};

const PILOT: Complex64 = Complex64::new(1.0, 0.0);

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Outcome of a beam-training sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingResult {
    /// Winning hybrid codeword index `p̃`, 1-based.
    pub best_index: usize,
    pub best: CodewordParams,
    pub rough_omega: f64,
    pub rough_range: Range,
    /// `|ỹ_p|²` for every tested codeword, in test order.
    #[serde(skip)]
    pub powers: Vec<f64>,
    pub pilots: usize,
}

/// Rough source position `(Θ_q̃, d_{q̃,s̃})` of a codeword; far codewords
/// give only the angle.
pub fn rough_position(best: &CodewordParams) -> (f64, Range) {
    (best.theta, best.range)
}

fn result_from_powers(
    layout: &CodebookLayout,
    powers: Vec<f64>,
    first_index: usize,
    pilots: usize,
) -> TrainingResult {
    let best_index = first_index + argmax_first(&powers);
    let best = layout
        .codeword_params(best_index)
        .expect("argmax lies inside the codebook");
    let (rough_omega, rough_range) = rough_position(&best);
    TrainingResult {
        best_index,
        best,
        rough_omega,
        rough_range,
        powers,
        pilots,
    }
}

/// RF-chain outputs of the subarray DFT sweep, `z_1 … z_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    /// `z[m−1][t−1]`.
    pub z: Vec<Vec<Complex64>>,
    pub pilots: usize,
}

/// Stage 1: one pilot per subarray DFT beam, fresh noise each pilot.
pub fn stage1_sweep<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    sub: &SubarrayCodebook,
    h: &[Complex64],
    sigma2: f64,
    rng: &mut R,
) -> Result<Stage1> {
    let z = (1..=sub.len())
        .map(|m| {
            let w = uniform_dft_combiner(sub, cfg.n_rf(), m);
            if sigma2 > 0.0 {
                let eta = noise_vector(rng, h.len(), sigma2);
                receive_rf_with_noise(h, &w, PILOT, Some(&eta))
            } else {
                receive_rf_with_noise(h, &w, PILOT, None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Stage1 {
        pilots: z.len(),
        z,
    })
}

/// `[z̃_p]_t = [z_{m̃_t}]_t`.
pub fn assemble_reused(stage1: &Stage1, indices: &[usize]) -> Result<Vec<Complex64>> {
    indices
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            stage1
                .z
                .get(m.wrapping_sub(1))
                .and_then(|zm| zm.get(t))
                .copied()
                .ok_or(Error::CodewordIndex {
                    index: m,
                    len: stage1.z.len(),
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct PlanEntry {
    indices: Vec<usize>,
    digital: Vec<Complex64>,
}

/// Per-codeword subarray indices and digital rows, computed once per
/// codebook and shared across trials.
#[derive(Debug, Clone)]
pub struct ThbtPlan {
    layout: CodebookLayout,
    sub: SubarrayCodebook,
    entries: Vec<PlanEntry>,
}

impl ThbtPlan {
    pub fn new(layout: CodebookLayout) -> Result<Self> {
        let cfg = *layout.cfg();
        let sub = SubarrayCodebook::for_array(&cfg);
        let entries = layout
            .params_iter()
            .map(|par| {
                let u = layout.column(par.p)?;
                let pair = design_hybrid(&cfg, &sub, &u, par.theta, par.range)?;
                Ok(PlanEntry {
                    indices: pair.indices,
                    digital: pair.digital,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layout,
            sub,
            entries,
        })
    }

    pub fn layout(&self) -> &CodebookLayout {
        &self.layout
    }

    pub fn subarray_codebook(&self) -> &SubarrayCodebook {
        &self.sub
    }

    /// Subarray DFT indices `m̃_1 … m̃_NRF` used by codeword `p`.
    pub fn indices(&self, p: usize) -> Result<&[usize]> {
        self.layout.codeword_params(p)?;
        Ok(&self.entries[p - 1].indices)
    }

    /// The designed combiner `(F_p, v_p)`.
    pub fn combiner(&self, p: usize) -> Result<CombinerPair> {
        self.layout.codeword_params(p)?;
        let e = &self.entries[p - 1];
        Ok(CombinerPair {
            indices: e.indices.clone(),
            analog: dft_combiner(&self.sub, &e.indices),
            digital: e.digital.clone(),
        })
    }

    /// Stage 2: `ỹ_p = v_p z̃_p` for every codeword, argmax power.
    pub fn select(&self, stage1: &Stage1) -> Result<TrainingResult> {
        let mut z_t = vec![Complex64::new(0.0, 0.0); self.layout.cfg().n_rf()];
        let powers = self
            .entries
            .iter()
            .map(|e| {
                for (t, &m) in e.indices.iter().enumerate() {
                    z_t[t] = stage1.z[m - 1][t];
                }
                dot(&e.digital, &z_t).norm_sqr()
            })
            .collect();
        Ok(result_from_powers(&self.layout, powers, 1, stage1.pilots))
    }

    /// Both stages on one channel.
    pub fn run<R: Rng + ?Sized>(
        &self,
        h: &[Complex64],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<TrainingResult> {
        let s1 = stage1_sweep(self.layout.cfg(), &self.sub, h, sigma2, rng)?;
        self.select(&s1)
    }
}

/// Stage 2 without a precomputed plan.
pub fn stage2_select(layout: &CodebookLayout, stage1: &Stage1) -> Result<TrainingResult> {
    ThbtPlan::new(*layout)?.select(stage1)
}

fn sweep_columns<'a, R: Rng + ?Sized>(
    cols: impl Iterator<Item = &'a [Complex64]>,
    h: &[Complex64],
    sigma2: f64,
    rng: &mut R,
) -> Vec<f64> {
    // u^H η ~ CN(0, σ²) for unit-norm u
    cols.map(|u| {
        let mut y = dot_conj(u, h) * PILOT;
        if sigma2 > 0.0 {
            y += complex_normal(rng, sigma2);
        }
        y.norm_sqr()
    })
    .collect()
}

/// Hybrid-field beam sweeping: every codeword of `C_h` observed directly.
pub fn baseline_hfbs<R: Rng + ?Sized>(
    book: &HybridCodebook,
    h: &[Complex64],
    sigma2: f64,
    rng: &mut R,
) -> TrainingResult {
    let cols = book.near().columns().chain(book.far().columns());
    let powers = sweep_columns(cols, h, sigma2, rng);
    let pilots = powers.len();
    result_from_powers(book.layout(), powers, 1, pilots)
}

/// Far-field beam sweeping over `C_f` only. `best_index` refers to the far
/// block of the hybrid codebook.
pub fn baseline_ffbs<R: Rng + ?Sized>(
    book: &HybridCodebook,
    h: &[Complex64],
    sigma2: f64,
    rng: &mut R,
) -> TrainingResult {
    let powers = sweep_columns(book.far().columns(), h, sigma2, rng);
    let pilots = powers.len();
    result_from_powers(book.layout(), powers, book.layout().n_near() + 1, pilots)
}
