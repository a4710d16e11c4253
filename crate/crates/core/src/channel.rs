//! Multipath channel synthesis and the hybrid-combined observation model.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{steering, ArrayConfig, PathParams, Range};
use crate::combining::{AnalogCombiner, CombinerPair};
use crate::cvec::dot;
use crate::error::{Error, Result};

/// Path statistics for [`sample_channel`]. Path 1 is the LoS path; all paths
/// share the angle and range distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub count: usize,
    pub gain_vars: Vec<f64>,
    pub angle_range: [f64; 2],
    pub range_range: [f64; 2],
}

impl Scenario {
    /// One LoS path `CN(0, 1)`, two NLoS paths `CN(0, 0.01)`, `Ω` uniform on
    /// `±√3/2`, range uniform on `[6, 150]` m.
    pub fn reference() -> Self {
        let a = 3f64.sqrt() / 2.0;
        Self {
            count: 3,
            gain_vars: vec![1.0, 0.01, 0.01],
            angle_range: [-a, a],
            range_range: [6.0, 150.0],
        }
    }

    pub fn with_max_range(mut self, r_max: f64) -> Self {
        self.range_range[1] = r_max;
        self
    }

    /// Keep only the LoS path.
    pub fn single_path(mut self) -> Self {
        self.count = 1;
        self.gain_vars.truncate(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.count == 0 {
            return bad("path count must be at least 1".into());
        }
        if self.gain_vars.len() != self.count {
            return bad(format!(
                "gain_vars has {} entries for {} paths",
                self.gain_vars.len(),
                self.count
            ));
        }
        if let Some(v) = self.gain_vars.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("gain variance {v} must be finite and non-negative"));
        }
        let [lo, hi] = self.angle_range;
        if !(lo >= -1.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("angle_range [{lo}, {hi}] must lie in [-1, 1]"));
        }
        let [lo, hi] = self.range_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("range_range [{lo}, {hi}] must be positive and ordered"));
        }
        Ok(())
    }
}

/// Paths and the synthesized channel `h = Σ g_l α(N, Ω_l, r_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathParams>,
    pub h: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_paths(cfg: &ArrayConfig, paths: Vec<PathParams>) -> Self {
        let mut h = vec![Complex64::new(0.0, 0.0); cfg.n_antennas()];
        for p in &paths {
            for (x, a) in h.iter_mut().zip(steering(cfg, p.omega, p.range)) {
                *x += p.gain * a;
            }
        }
        Self { paths, h }
    }

    pub fn single(cfg: &ArrayConfig, gain: Complex64, omega: f64, range: Range) -> Self {
        Self::from_paths(cfg, vec![PathParams { gain, omega, range }])
    }

    /// The path with the largest `|g_l|`.
    pub fn strongest(&self) -> &PathParams {
        self.paths
            .iter()
            .reduce(|a, b| if b.gain.norm() > a.gain.norm() { b } else { a })
            .expect("channel has at least one path")
    }
}

/// `CN(0, var)`: independent real and imaginary parts of variance `var/2`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

pub fn noise_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> Vec<Complex64> {
    (0..n).map(|_| complex_normal(rng, var)).collect()
}

/// Noise power for a per-antenna SNR in dB. A unit-gain path with a
/// unit-norm steering vector delivers power `1/N` per antenna.
pub fn noise_variance(snr_db: f64, n_antennas: usize) -> f64 {
    10f64.powf(-snr_db / 10.0) / n_antennas as f64
}

pub fn sample_channel<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    rng: &mut R,
    scenario: &Scenario,
) -> Result<ChannelRealization> {
    scenario.validate()?;
    let [a_lo, a_hi] = scenario.angle_range;
    let [r_lo, r_hi] = scenario.range_range;
    let paths = scenario
        .gain_vars
        .iter()
        .map(|&var| {
            let gain = complex_normal(rng, var);
            let omega = rng.random_range(a_lo..=a_hi);
            let r = rng.random_range(r_lo..=r_hi);
            PathParams {
                gain,
                omega,
                range: Range::Finite(r),
            }
        })
        .collect();
    Ok(ChannelRealization::from_paths(cfg, paths))
}

/// RF-chain outputs `W h x + W η`, `η ~ CN(0, σ² I_N)`.
pub fn receive_rf<R: Rng + ?Sized>(
    h: &[Complex64],
    w: &AnalogCombiner,
    x: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if h.len() != w.n_antennas() {
        return Err(Error::Dimension {
            expected: w.n_antennas(),
            got: h.len(),
        });
    }
    if sigma2 > 0.0 {
        let eta = noise_vector(rng, h.len(), sigma2);
        receive_rf_with_noise(h, w, x, Some(&eta))
    } else {
        receive_rf_with_noise(h, w, x, None)
    }
}

/// [`receive_rf`] with an explicit noise realization.
pub fn receive_rf_with_noise(
    h: &[Complex64],
    w: &AnalogCombiner,
    x: Complex64,
    eta: Option<&[Complex64]>,
) -> Result<Vec<Complex64>> {
    let n = w.n_antennas();
    for len in std::iter::once(h.len()).chain(eta.map(<[_]>::len)) {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    let m = w.m_per_sub();
    Ok((0..w.n_rf())
        .map(|t| {
            let row = w.row(t);
            let blk = t * m..(t + 1) * m;
            let y = dot(row, &h[blk.clone()]) * x;
            match eta {
                Some(e) => y + dot(row, &e[blk]),
                None => y,
            }
        })
        .collect())
}

/// Combined output `v W h x + v W η`.
pub fn receive<R: Rng + ?Sized>(
    h: &[Complex64],
    pair: &CombinerPair,
    x: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Complex64> {
    let z = receive_rf(h, &pair.analog, x, sigma2, rng)?;
    Ok(dot(&pair.digital, &z))
}
