//! Near-field beam tracking (NFBT).
//!
//! Each block predicts the user position with a constant-velocity model,
//! seeds a one-pilot BRPSS measurement with the predicted `(Ω̄, ζ̄)`,
//! converts the refined estimate to Cartesian and fuses it with a Kalman
//! update. The data combiner for the block is the chirp of the filtered
//! position, which the partially-connected array realizes exactly.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{steering, steering_quadratic, ArrayConfig, QuadraticPhase, Range};
use crate::channel::ChannelRealization;
use crate::codebook::CodebookLayout;
use crate::cvec::dot_conj;
use crate::error::{Error, Result};
use crate::refinement::run_brpss;

/// Position `(x, y)` and velocity `(v_x, v_y)` with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub block: usize,
}

impl TrackState {
    pub fn new(position: [f64; 2], velocity: [f64; 2], p0: Matrix4<f64>) -> Self {
        Self {
            x: Vector4::new(position[0], position[1], velocity[0], velocity[1]),
            p: p0,
            block: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x[0], self.x[1]]
    }

    /// `ζ = √(x² + y²)`.
    pub fn range(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }

    /// `ϑ = atan2(y, x)`.
    pub fn angle(&self) -> f64 {
        self.x[1].atan2(self.x[0])
    }

    /// `Ω = sin ϑ` in the array frame.
    pub fn omega(&self) -> f64 {
        self.angle().sin()
    }

    /// Smallest eigenvalue of the symmetrized covariance.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        let sym = (self.p + self.p.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// What the Kalman update observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementModel {
    /// Cartesian position; linear, `H = [I₂ | 0]`.
    #[default]
    Cartesian,
    /// `(ζ, Ω)`; linearized at the prediction.
    Polar,
}

impl MeasurementModel {
    fn predict(&self, x: &Vector4<f64>) -> Vector2<f64> {
        match self {
            MeasurementModel::Cartesian => Vector2::new(x[0], x[1]),
            MeasurementModel::Polar => {
                let r = x[0].hypot(x[1]);
                Vector2::new(r, x[1] / r)
            }
        }
    }

    fn jacobian(&self, x: &Vector4<f64>) -> Matrix2x4<f64> {
        match self {
            MeasurementModel::Cartesian => {
                Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
            }
            MeasurementModel::Polar => {
                let (px, py) = (x[0], x[1]);
                let r2 = px * px + py * py;
                let r = r2.sqrt();
                let r3 = r2 * r;
                Matrix2x4::new(
                    px / r,
                    py / r,
                    0.0,
                    0.0,
                    -px * py / r3,
                    px * px / r3,
                    0.0,
                    0.0,
                )
            }
        }
    }

    /// Map a Cartesian position measurement into this model's space.
    fn observe(&self, pos: [f64; 2]) -> Vector2<f64> {
        self.predict(&Vector4::new(pos[0], pos[1], 0.0, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Block duration `ΔT` in seconds.
    pub dt: f64,
    pub max_blocks: usize,
    /// White-acceleration intensity in m/s².
    pub sigma_a: f64,
    /// Measurement covariance, row-major 2×2. `None` calibrates it by Monte
    /// Carlo at the run's SNR.
    pub r: Option<[[f64; 2]; 2]>,
    /// Diagonal of the initial covariance.
    pub p0_diag: [f64; 4],
    /// Mahalanobis gate on the innovation; gated measurements are dropped.
    pub innovation_gate: Option<f64>,
    pub model: MeasurementModel,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_blocks: 180,
            sigma_a: 1.0,
            r: None,
            p0_diag: [1.0, 1.0, 25.0, 25.0],
            innovation_gate: None,
            model: MeasurementModel::Cartesian,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.max_blocks == 0 {
            return Err(Error::InvalidScenario(
                "tracker needs dt > 0 and at least one block".into(),
            ));
        }
        if self.p0_diag.iter().any(|v| !(*v >= 0.0)) || !(self.sigma_a >= 0.0) {
            return Err(Error::InvalidScenario(
                "tracker covariances must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn p0(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.p0_diag))
    }

    /// Constant-velocity transition `Ξ`.
    pub fn transition(&self) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 2)] = self.dt;
        f[(1, 3)] = self.dt;
        f
    }

    /// Piecewise-constant white-acceleration process noise.
    pub fn process_noise(&self) -> Matrix4<f64> {
        let dt = self.dt;
        let q = self.sigma_a * self.sigma_a;
        let (a, b, c) = (dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q);
        let mut m = Matrix4::zeros();
        for i in 0..2 {
            m[(i, i)] = a;
            m[(i, i + 2)] = b;
            m[(i + 2, i)] = b;
            m[(i + 2, i + 2)] = c;
        }
        m
    }
}

pub fn predict(state: &TrackState, cfg: &TrackerConfig) -> TrackState {
    let f = cfg.transition();
    TrackState {
        x: f * state.x,
        p: f * state.p * f.transpose() + cfg.process_noise(),
        block: state.block + 1,
    }
}

/// Kalman update with a Joseph-form covariance. Returns the state and
/// whether the measurement was accepted by the gate.
pub fn filter_update(
    predicted: &TrackState,
    measurement: [f64; 2],
    r: &Matrix2<f64>,
    cfg: &TrackerConfig,
) -> (TrackState, bool) {
    let model = cfg.model;
    let h = model.jacobian(&predicted.x);
    let innovation = model.observe(measurement) - model.predict(&predicted.x);
    let s = h * predicted.p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .or_else(|| (s + Matrix2::identity() * 1e-9).try_inverse())
        .unwrap_or_else(Matrix2::zeros);
    if let Some(gate) = cfg.innovation_gate {
        let d2 = (innovation.transpose() * s_inv * innovation)[(0, 0)];
        if !(d2 <= gate) {
            return (*predicted, false);
        }
    }
    let k: Matrix4x2<f64> = predicted.p * h.transpose() * s_inv;
    let ikh = Matrix4::identity() - k * h;
    let p = ikh * predicted.p * ikh.transpose() + k * r * k.transpose();
    (
        TrackState {
            x: predicted.x + k * innovation,
            p: (p + p.transpose()) * 0.5,
            block: predicted.block,
        },
        true,
    )
}

/// Chirp combiner for a state: `γ(N, sin ϑ, ζ)`.
pub fn filtered_channel(arr: &ArrayConfig, state: &TrackState) -> Vec<Complex64> {
    chirp_for(arr, state.omega(), state.range())
}

fn chirp_for(arr: &ArrayConfig, omega: f64, range: f64) -> Vec<Complex64> {
    let range = if range.is_finite() && range > 0.0 {
        Range::Finite(range)
    } else {
        Range::Far
    };
    steering_quadratic(arr.n_antennas(), QuadraticPhase::from_polar(arr, omega, range))
}

/// One-pilot BRPSS measurement seeded with the predicted position. `None`
/// when refinement fails or lands in the far field.
pub fn measure_block<R: Rng + ?Sized>(
    arr: &ArrayConfig,
    h: &[Complex64],
    predicted: &TrackState,
    sigma2: f64,
    rng: &mut R,
) -> Result<Option<[f64; 2]>> {
    let coarse = (predicted.omega(), Range::Finite(predicted.range()));
    let out = run_brpss(arr, h, coarse, sigma2, rng)?;
    Ok(match (out.refined, out.position()) {
        (true, Some((x, y))) if x.is_finite() && y.is_finite() => Some([x, y]),
        _ => None,
    })
}

/// Straight-line constant-velocity user path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub start: [f64; 2],
    pub velocity: [f64; 2],
}

impl Trajectory {
    /// Starts at `(50, 50√3)` m and heads to the array at `(−5, −5√3)` m/s.
    pub fn reference() -> Self {
        let s3 = 3f64.sqrt();
        Self {
            start: [50.0, 50.0 * s3],
            velocity: [-5.0, -5.0 * s3],
        }
    }

    pub fn position(&self, t: f64) -> [f64; 2] {
        [
            self.start[0] + self.velocity[0] * t,
            self.start[1] + self.velocity[1] * t,
        ]
    }

    /// `(Ω, r)` of the user at time `t`.
    pub fn polar(&self, t: f64) -> (f64, f64) {
        let [x, y] = self.position(t);
        let r = x.hypot(y);
        (y / r, r)
    }
}

/// Per-block record of a tracking run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockRecord {
    pub t_s: f64,
    pub truth: [f64; 2],
    pub pred: [f64; 2],
    pub meas: Option<[f64; 2]>,
    pub filt: [f64; 2],
    pub gain: f64,
    pub se_bits: f64,
    pub pilots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingLog {
    pub scheme: String,
    pub blocks: Vec<BlockRecord>,
}

impl TrackingLog {
    pub fn total_pilots(&self) -> usize {
        self.blocks.iter().map(|b| b.pilots).sum()
    }
}

/// Gain and spectral efficiency of combiner `f` on a tracking channel.
pub fn link_metrics(arr: &ArrayConfig, ch: &ChannelRealization, f: &[Complex64], sigma2: f64) -> (f64, f64) {
    let gain = crate::harness::beamforming_gain(arr, ch, f);
    let power = dot_conj(f, &ch.h).norm_sqr();
    (gain, crate::harness::spectral_efficiency(power, sigma2))
}

/// Single LoS path at the trajectory position for block time `t`.
pub fn tracking_channel(arr: &ArrayConfig, traj: &Trajectory, gain: Complex64, t: f64) -> ChannelRealization {
    let (omega, r) = traj.polar(t);
    ChannelRealization::single(arr, gain, omega, Range::Finite(r))
}

/// NFBT over the trajectory. Block `i` (1-based) is observed at `t = iΔT`;
/// the filter starts from `init` at `t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_tracking<R: Rng + ?Sized>(
    arr: &ArrayConfig,
    traj: &Trajectory,
    cfg: &TrackerConfig,
    init: TrackState,
    r: &Matrix2<f64>,
    gain: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<TrackingLog> {
    cfg.validate()?;
    let mut state = init;
    let mut blocks = Vec::with_capacity(cfg.max_blocks);
    for i in 1..=cfg.max_blocks {
        let t = i as f64 * cfg.dt;
        let ch = tracking_channel(arr, traj, gain, t);
        let pred = predict(&state, cfg);
        let meas = measure_block(arr, &ch.h, &pred, sigma2, rng)?;
        state = match meas {
            Some(z) => filter_update(&pred, z, r, cfg).0,
            None => pred,
        };
        let f = filtered_channel(arr, &state);
        let (g, se) = link_metrics(arr, &ch, &f, sigma2);
        blocks.push(BlockRecord {
            t_s: t,
            truth: traj.position(t),
            pred: pred.position(),
            meas,
            filt: state.position(),
            gain: g,
            se_bits: se,
            pilots: 1,
        });
    }
    Ok(TrackingLog {
        scheme: "NFBT".into(),
        blocks,
    })
}

/// BRPSS-only tracking: the previous block's estimate seeds the next
/// refinement, with no kinematic model.
pub fn run_brpss_only<R: Rng + ?Sized>(
    arr: &ArrayConfig,
    traj: &Trajectory,
    cfg: &TrackerConfig,
    init: [f64; 2],
    gain: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<TrackingLog> {
    cfg.validate()?;
    let mut est = init;
    let mut blocks = Vec::with_capacity(cfg.max_blocks);
    for i in 1..=cfg.max_blocks {
        let t = i as f64 * cfg.dt;
        let ch = tracking_channel(arr, traj, gain, t);
        let pred = TrackState::new(est, [0.0, 0.0], Matrix4::zeros());
        let meas = measure_block(arr, &ch.h, &pred, sigma2, rng)?;
        if let Some(z) = meas {
            est = z;
        }
        let s = TrackState::new(est, [0.0, 0.0], Matrix4::zeros());
        let (g, se) = link_metrics(arr, &ch, &filtered_channel(arr, &s), sigma2);
        blocks.push(BlockRecord {
            t_s: t,
            truth: traj.position(t),
            pred: pred.position(),
            meas,
            filt: est,
            gain: g,
            se_bits: se,
            pilots: 1,
        });
    }
    Ok(TrackingLog {
        scheme: "BRPSS".into(),
        blocks,
    })
}

/// Hybrid-field codeword neighbours of `p` on the `(q, s)` grid, with the far
/// codeword of angle `q` acting as distance index `s = 0`. Out-of-range
/// neighbours are clamped, so the list always has five entries.
pub fn hfns_candidates(layout: &CodebookLayout, p: usize) -> Result<[usize; 5]> {
    let par = layout.codeword_params(p)?;
    let (q_max, s_max) = (layout.n_angles() as i64, layout.n_dist() as i64);
    let idx = |q: i64, s: i64| {
        let q = q.clamp(1, q_max) as usize;
        let s = s.clamp(0, s_max) as usize;
        if s == 0 {
            layout.far_index(q)
        } else {
            layout.near_index(q, s)
        }
    };
    let (q, s) = (par.q as i64, par.s as i64);
    Ok([
        idx(q, s),
        idx(q - 1, s),
        idx(q + 1, s),
        idx(q, s - 1),
        idx(q, s + 1),
    ])
}

/// Far codeword neighbours `q−1, q, q+1` (clamped).
pub fn ffbt_candidates(layout: &CodebookLayout, p: usize) -> Result<[usize; 3]> {
    let par = layout.codeword_params(p)?;
    let q = par.q as i64;
    let q_max = layout.n_angles() as i64;
    let idx = |q: i64| layout.far_index(q.clamp(1, q_max) as usize);
    Ok([idx(q), idx(q - 1), idx(q + 1)])
}

/// Codeword index best matched to a known position, over `candidates`.
pub fn best_codeword_for(
    layout: &CodebookLayout,
    omega: f64,
    range: Range,
    candidates: impl Iterator<Item = usize>,
) -> Result<usize> {
    let a = steering(layout.cfg(), omega, range);
    let mut best = (0, -1.0);
    for p in candidates {
        let g = dot_conj(&layout.column(p)?, &a).norm();
        if g > best.1 {
            best = (p, g);
        }
    }
    Ok(best.0)
}

/// Codeword neighbour search: each block measures the `candidates` of the
/// previous winner and keeps the strongest.
#[allow(clippy::too_many_arguments)]
fn run_neighbour_search<R: Rng + ?Sized, const K: usize>(
    arr: &ArrayConfig,
    layout: &CodebookLayout,
    traj: &Trajectory,
    cfg: &TrackerConfig,
    start: usize,
    neighbours: impl Fn(usize) -> Result<[usize; K]>,
    scheme: &str,
    gain: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<TrackingLog> {
    cfg.validate()?;
    let mut p = start;
    let mut blocks = Vec::with_capacity(cfg.max_blocks);
    for i in 1..=cfg.max_blocks {
        let t = i as f64 * cfg.dt;
        let ch = tracking_channel(arr, traj, gain, t);
        let cands = neighbours(p)?;
        let mut best = (p, f64::NEG_INFINITY);
        for &c in &cands {
            let u = layout.column(c)?;
            let mut y = dot_conj(&u, &ch.h);
            if sigma2 > 0.0 {
                y += crate::channel::complex_normal(rng, sigma2);
            }
            if y.norm_sqr() > best.1 {
                best = (c, y.norm_sqr());
            }
        }
        p = best.0;
        let par = layout.codeword_params(p)?;
        let u = layout.column(p)?;
        let (g, se) = link_metrics(arr, &ch, &u, sigma2);
        let pos = par.range.finite().map_or([f64::NAN; 2], |r| {
            let c = (1.0 - par.theta * par.theta).sqrt();
            [r * c, r * par.theta]
        });
        blocks.push(BlockRecord {
            t_s: t,
            truth: traj.position(t),
            pred: pos,
            meas: None,
            filt: pos,
            gain: g,
            se_bits: se,
            pilots: cands.len(),
        });
    }
    Ok(TrackingLog {
        scheme: scheme.into(),
        blocks,
    })
}

/// Hybrid-field neighbour search (5 pilots per block).
#[allow(clippy::too_many_arguments)]
pub fn run_hfns<R: Rng + ?Sized>(
    arr: &ArrayConfig,
    layout: &CodebookLayout,
    traj: &Trajectory,
    cfg: &TrackerConfig,
    start: usize,
    gain: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<TrackingLog> {
    run_neighbour_search(
        arr,
        layout,
        traj,
        cfg,
        start,
        |p| hfns_candidates(layout, p),
        "HFNS",
        gain,
        sigma2,
        rng,
    )
}

/// Far-field neighbour search standing in for FFBT (3 pilots per block).
#[allow(clippy::too_many_arguments)]
pub fn run_ffbt_proxy<R: Rng + ?Sized>(
    arr: &ArrayConfig,
    layout: &CodebookLayout,
    traj: &Trajectory,
    cfg: &TrackerConfig,
    start: usize,
    gain: Complex64,
    sigma2: f64,
    rng: &mut R,
) -> Result<TrackingLog> {
    run_neighbour_search(
        arr,
        layout,
        traj,
        cfg,
        start,
        |p| ffbt_candidates(layout, p),
        "FFBT-proxy",
        gain,
        sigma2,
        rng,
    )
}

/// Full measurement covariance from a Monte Carlo of BRPSS position errors
/// with the coarse estimate at the truth. Invalid refinements are skipped.
/// The errors are mostly radial, so the off-diagonal term matters.
pub fn calibrate_measurement_noise<R: Rng + ?Sized>(
    arr: &ArrayConfig,
    omega: f64,
    range: f64,
    sigma2: f64,
    trials: usize,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    let ch = ChannelRealization::single(arr, Complex64::new(1.0, 0.0), omega, Range::Finite(range));
    let truth = crate::array::polar_to_cartesian(omega, Range::Finite(range)).expect("finite");
    let seed = TrackState::new([truth.0, truth.1], [0.0; 2], Matrix4::zeros());
    let mut acc = Matrix2::zeros();
    let mut n = 0usize;
    for _ in 0..trials {
        if let Some([x, y]) = measure_block(arr, &ch.h, &seed, sigma2, rng)? {
            let e = Vector2::new(x - truth.0, y - truth.1);
            acc += e * e.transpose();
            n += 1;
        }
    }
    let mut r = acc / n.max(1) as f64;
    r[(0, 0)] = r[(0, 0)].max(1e-6);
    r[(1, 1)] = r[(1, 1)].max(1e-6);
    Ok(r)
}
