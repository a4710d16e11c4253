//! Monte Carlo experiment drivers.
//!
//! Every trial owns an RNG stream keyed by `(seed, experiment, x-index,
//! trial)`, and per-scheme noise streams hang off the same key, so results
//! are identical for any worker count. Trials run on the ambient rayon pool
//! and are collected in trial order.

use std::fmt::Write as _;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{polar_to_cartesian, steering, ArrayConfig, Range};
use crate::channel::{sample_channel, ChannelRealization, Scenario};
use crate::codebook::{build_hybrid_codebook, validate_quantization, CodebookLayout, HybridCodebook};
use crate::cvec::dot_conj;
use crate::error::{Error, Result};
use crate::refinement::run_brpss;
use crate::seed::{label_tag, stream_rng};
use crate::tracking::{
    best_codeword_for, calibrate_measurement_noise, run_brpss_only, run_ffbt_proxy, run_hfns,
    run_tracking, TrackState, TrackerConfig, TrackingLog, Trajectory,
};
use crate::training::{baseline_ffbs, baseline_hfbs, ThbtPlan};

/// `ξ = max_l (|g_l|/g_m)·|α(N, Ω_l, r_l)^H f|` with `g_m = max_l |g_l|`.
pub fn beamforming_gain(arr: &ArrayConfig, ch: &ChannelRealization, f: &[Complex64]) -> f64 {
    let g_m = ch.paths.iter().map(|p| p.gain.norm()).fold(0.0, f64::max);
    if !(g_m > 0.0) {
        return 0.0;
    }
    ch.paths
        .iter()
        .map(|p| {
            let a = steering(arr, p.omega, p.range);
            p.gain.norm() / g_m * dot_conj(&a, f).norm()
        })
        .fold(0.0, f64::max)
}

/// `log₂(1 + |f^H h|²/σ²)`.
pub fn spectral_efficiency(power: f64, sigma2: f64) -> f64 {
    if sigma2 > 0.0 {
        (1.0 + power / sigma2).log2()
    } else {
        f64::INFINITY
    }
}

/// Euclidean distance between two positions; `∞` if either is unknown.
pub fn position_error(truth: Option<(f64, f64)>, est: Option<(f64, f64)>) -> f64 {
    match (truth, est) {
        (Some(a), Some(b)) => (a.0 - b.0).hypot(a.1 - b.1),
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "THBT")]
    Thbt,
    #[serde(rename = "THBT+BRPSS")]
    ThbtBrpss,
    #[serde(rename = "HFBS")]
    Hfbs,
    #[serde(rename = "FFBS")]
    Ffbs,
    #[serde(rename = "NFBT")]
    Nfbt,
    #[serde(rename = "BRPSS")]
    BrpssOnly,
    #[serde(rename = "HFNS")]
    Hfns,
    #[serde(rename = "FFBT-proxy")]
    FfbtProxy,
}

impl Scheme {
    pub const TRAINING: [Scheme; 4] = [Scheme::Thbt, Scheme::ThbtBrpss, Scheme::Hfbs, Scheme::Ffbs];
    pub const TRACKING: [Scheme; 4] = [Scheme::Nfbt, Scheme::Hfns, Scheme::BrpssOnly, Scheme::FfbtProxy];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Thbt => "THBT",
            Scheme::ThbtBrpss => "THBT+BRPSS",
            Scheme::Hfbs => "HFBS",
            Scheme::Ffbs => "FFBS",
            Scheme::Nfbt => "NFBT",
            Scheme::BrpssOnly => "BRPSS",
            Scheme::Hfns => "HFNS",
            Scheme::FfbtProxy => "FFBT-proxy",
        }
    }

    /// Case-insensitive inverse of [`Scheme::label`].
    pub fn from_label(s: &str) -> Option<Scheme> {
        Scheme::TRAINING
            .into_iter()
            .chain(Scheme::TRACKING)
            .find(|x| x.label().eq_ignore_ascii_case(s))
    }

    pub fn is_training(&self) -> bool {
        Scheme::TRAINING.contains(self)
    }

    /// Analytic pilot count: per alignment for training schemes, per block
    /// for tracking schemes.
    pub fn analytic_pilots(&self, layout: &CodebookLayout) -> usize {
        let m = layout.cfg().m_per_sub();
        match self {
            Scheme::Hfbs => layout.len(),
            Scheme::Ffbs => layout.n_angles(),
            Scheme::Thbt => m,
            Scheme::ThbtBrpss => m + 1,
            Scheme::Nfbt | Scheme::BrpssOnly => 1,
            Scheme::Hfns => 5,
            Scheme::FfbtProxy => 3,
        }
    }

    fn tag(&self) -> u64 {
        label_tag(self.label())
    }
}

/// Array, codebook and THBT plan shared by all training trials.
#[derive(Debug, Clone)]
pub struct TrainingContext {
    pub arr: ArrayConfig,
    pub book: HybridCodebook,
    pub plan: ThbtPlan,
}

impl TrainingContext {
    pub fn new(arr: ArrayConfig, n_angles: usize, n_dist: usize) -> Result<Self> {
        let layout = CodebookLayout::new(arr, n_angles, n_dist);
        Ok(Self {
            arr,
            book: build_hybrid_codebook(&arr, n_angles, n_dist),
            plan: ThbtPlan::new(layout)?,
        })
    }

    pub fn layout(&self) -> &CodebookLayout {
        self.book.layout()
    }
}

/// Result of one scheme on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub scheme: Scheme,
    pub gain: f64,
    pub error_m: f64,
    pub pilots: usize,
}

/// Draw one channel and run each requested training scheme on it. All
/// schemes see the same channel; each has its own noise stream.
pub fn run_training_trial(
    ctx: &TrainingContext,
    schemes: &[Scheme],
    scenario: &Scenario,
    sigma2: f64,
    seed: u64,
    key: &[u64],
) -> Result<Vec<TrialOutcome>> {
    let arr = &ctx.arr;
    let with = |tag: u64| -> Vec<u64> { key.iter().copied().chain([tag]).collect() };
    let ch = sample_channel(arr, &mut stream_rng(seed, &with(0)), scenario)?;
    let truth = ch.paths[0].position();
    let mut out = Vec::with_capacity(schemes.len());

    if schemes.contains(&Scheme::Thbt) || schemes.contains(&Scheme::ThbtBrpss) {
        let mut rng = stream_rng(seed, &with(Scheme::Thbt.tag()));
        let res = ctx.plan.run(&ch.h, sigma2, &mut rng)?;
        if schemes.contains(&Scheme::Thbt) {
            // ξ is scored against the selected codeword, not its
            // subarray-approximated realization.
            let f = ctx.book.column(res.best_index)?;
            out.push(TrialOutcome {
                scheme: Scheme::Thbt,
                gain: beamforming_gain(arr, &ch, f),
                error_m: position_error(truth, polar_to_cartesian(res.rough_omega, res.rough_range)),
                pilots: res.pilots,
            });
        }
        if schemes.contains(&Scheme::ThbtBrpss) {
            let coarse = (res.rough_omega, res.rough_range);
            let refined = run_brpss(arr, &ch.h, coarse, sigma2, &mut rng)?;
            let f = steering(arr, refined.omega, refined.range);
            out.push(TrialOutcome {
                scheme: Scheme::ThbtBrpss,
                gain: beamforming_gain(arr, &ch, &f),
                error_m: position_error(truth, refined.position()),
                pilots: res.pilots + 1,
            });
        }
    }
    for (scheme, far_only) in [(Scheme::Hfbs, false), (Scheme::Ffbs, true)] {
        if !schemes.contains(&scheme) {
            continue;
        }
        let mut rng = stream_rng(seed, &with(scheme.tag()));
        let res = if far_only {
            baseline_ffbs(&ctx.book, &ch.h, sigma2, &mut rng)
        } else {
            baseline_hfbs(&ctx.book, &ch.h, sigma2, &mut rng)
        };
        let f = ctx.book.column(res.best_index)?;
        out.push(TrialOutcome {
            scheme,
            gain: beamforming_gain(arr, &ch, f),
            error_m: position_error(truth, polar_to_cartesian(res.rough_omega, res.rough_range)),
            pilots: res.pilots,
        });
    }
    out.sort_by_key(|o| schemes.iter().position(|s| *s == o.scheme));
    Ok(out)
}

/// Run `trials` independent work items in parallel, keeping trial order.
pub fn run_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials as u64).into_par_iter().map(&f).collect()
}

/// One aggregated point of a gain curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub scheme: Scheme,
    pub x: f64,
    pub mean_gain: f64,
    pub median_error_m: f64,
    pub pilots: usize,
    pub trials: usize,
}

fn aggregate(schemes: &[Scheme], x: f64, per_trial: &[Vec<TrialOutcome>]) -> Vec<MetricRow> {
    schemes
        .iter()
        .map(|&s| {
            let picked: Vec<&TrialOutcome> = per_trial
                .iter()
                .flat_map(|t| t.iter().filter(move |o| o.scheme == s))
                .collect();
            let n = picked.len().max(1) as f64;
            let mut errors: Vec<f64> = picked.iter().map(|o| o.error_m).collect();
            MetricRow {
                scheme: s,
                x,
                mean_gain: picked.iter().map(|o| o.gain).sum::<f64>() / n,
                median_error_m: quantile(&mut errors, 0.5),
                pilots: picked.first().map_or(0, |o| o.pilots),
                trials: picked.len(),
            }
        })
        .collect()
}

const EXP_SNR: u64 = 1;
const EXP_DISTANCE: u64 = 2;
const EXP_POSITIONING: u64 = 3;
const EXP_REFINEMENT: u64 = 4;
const EXP_TRACKING: u64 = 5;

/// Mean `ξ` against SNR.
pub fn gain_vs_snr(
    ctx: &TrainingContext,
    scenario: &Scenario,
    schemes: &[Scheme],
    snr_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for (xi, &snr) in snr_grid.iter().enumerate() {
        let sigma2 = noise_variance_for(&ctx.arr, snr);
        let per_trial = run_trials(trials, |t| {
            run_training_trial(ctx, schemes, scenario, sigma2, seed, &[EXP_SNR, xi as u64, t])
        })?;
        rows.extend(aggregate(schemes, snr, &per_trial));
    }
    Ok(rows)
}

/// Mean `ξ` against the upper edge of the range distribution.
pub fn gain_vs_distance(
    ctx: &TrainingContext,
    scenario: &Scenario,
    schemes: &[Scheme],
    r_max_grid: &[f64],
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let sigma2 = noise_variance_for(&ctx.arr, snr_db);
    let mut rows = Vec::new();
    for (xi, &r_max) in r_max_grid.iter().enumerate() {
        let sc = scenario.clone().with_max_range(r_max);
        let per_trial = run_trials(trials, |t| {
            run_training_trial(ctx, schemes, &sc, sigma2, seed, &[EXP_DISTANCE, xi as u64, t])
        })?;
        rows.extend(aggregate(schemes, r_max, &per_trial));
    }
    Ok(rows)
}

/// Positioning errors per scheme, one entry per trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositioningResult {
    pub scheme: Scheme,
    pub errors_m: Vec<f64>,
}

impl PositioningResult {
    pub fn median(&self) -> f64 {
        quantile(&mut self.errors_m.clone(), 0.5)
    }

    pub fn cdf(&self) -> Vec<(f64, f64)> {
        quantile_grid(&self.errors_m)
    }
}

pub fn positioning_cdf(
    ctx: &TrainingContext,
    scenario: &Scenario,
    schemes: &[Scheme],
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<PositioningResult>> {
    let sigma2 = noise_variance_for(&ctx.arr, snr_db);
    let per_trial = run_trials(trials, |t| {
        run_training_trial(ctx, schemes, scenario, sigma2, seed, &[EXP_POSITIONING, 0, t])
    })?;
    Ok(schemes
        .iter()
        .map(|&s| PositioningResult {
            scheme: s,
            errors_m: per_trial
                .iter()
                .flat_map(|t| t.iter().filter(|o| o.scheme == s).map(|o| o.error_m))
                .collect(),
        })
        .collect())
}

/// Quantile by linear interpolation between order statistics; sorts in
/// place. `NaN` for an empty sample.
pub fn quantile(xs: &mut [f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || xs[lo] == xs[hi] {
        xs[lo]
    } else {
        xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
    }
}

/// Empirical CDF sampled at the 101 quantiles `0, 0.01, …, 1`, as
/// `(probability, value)`.
pub fn quantile_grid(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    (0..=100)
        .map(|i| {
            let q = i as f64 / 100.0;
            (q, quantile(&mut xs, q))
        })
        .collect()
}

/// One `(Q, S)` cell of the refinement study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRow {
    pub q: usize,
    pub s: usize,
    pub s_ok: bool,
    pub mean_error_m: f64,
    pub median_error_m: f64,
    pub trials: usize,
}

/// BRPSS positioning error over a `(Q, S)` grid with a single path and the
/// coarse estimate set to the best-matching hybrid codeword.
pub fn refinement_grid(
    arr: &ArrayConfig,
    grid: &[(usize, usize)],
    range_bounds: [f64; 2],
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<RefinementRow>> {
    let sigma2 = noise_variance_for(arr, snr_db);
    let mut scenario = Scenario::reference().single_path();
    scenario.range_range = range_bounds;
    grid.iter()
        .enumerate()
        .map(|(xi, &(q, s))| {
            let book = build_hybrid_codebook(arr, q, s);
            let mut errors = run_trials(trials, |t| {
                let key = [EXP_REFINEMENT, xi as u64, t];
                let ch = sample_channel(arr, &mut stream_rng(seed, &[&key[..], &[0]].concat()), &scenario)?;
                let p = ch.paths[0];
                let best = best_hybrid_codeword(&book, &steering(arr, p.omega, p.range));
                let par = book.codeword_params(best)?;
                let mut rng = stream_rng(seed, &[&key[..], &[1]].concat());
                let out = run_brpss(arr, &ch.h, (par.theta, par.range), sigma2, &mut rng)?;
                Ok(position_error(p.position(), out.position()))
            })?;
            let n = errors.len();
            Ok(RefinementRow {
                q,
                s,
                s_ok: validate_quantization(arr, q, s).ok,
                mean_error_m: errors.iter().sum::<f64>() / n.max(1) as f64,
                median_error_m: quantile(&mut errors, 0.5),
                trials: n,
            })
        })
        .collect()
}

/// Index of the codeword with the largest `|c^H a|`.
pub fn best_hybrid_codeword(book: &HybridCodebook, a: &[Complex64]) -> usize {
    let powers: Vec<f64> = (1..=book.len())
        .map(|p| dot_conj(book.column(p).expect("in range"), a).norm())
        .collect();
    1 + crate::training::argmax_first(&powers)
}

/// Noise power for an SNR in dB under the crate's per-antenna convention.
pub fn noise_variance_for(arr: &ArrayConfig, snr_db: f64) -> f64 {
    crate::channel::noise_variance(snr_db, arr.n_antennas())
}

/// Settings of a tracking experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSetup {
    pub arr: ArrayConfig,
    pub layout: CodebookLayout,
    pub trajectory: Trajectory,
    pub tracker: TrackerConfig,
    /// Monte Carlo size for the default measurement covariance.
    pub calibration_trials: usize,
}

impl TrackingSetup {
    pub fn reference() -> Self {
        let arr = ArrayConfig::reference();
        Self {
            arr,
            layout: CodebookLayout::new(arr, 512, 11),
            trajectory: Trajectory::reference(),
            tracker: TrackerConfig::default(),
            calibration_trials: 500,
        }
    }

    /// The configured measurement covariance, or one calibrated at the
    /// trajectory midpoint.
    pub fn measurement_covariance(&self, sigma2: f64, seed: u64) -> Result<Matrix2<f64>> {
        if let Some(r) = self.tracker.r {
            return Ok(Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1]));
        }
        let mid = self.tracker.max_blocks as f64 * self.tracker.dt / 2.0;
        let (omega, range) = self.trajectory.polar(mid);
        let mut rng = stream_rng(seed, &[EXP_TRACKING, label_tag("calibration"), sigma2.to_bits()]);
        calibrate_measurement_noise(&self.arr, omega, range, sigma2, self.calibration_trials, &mut rng)
    }
}

/// Run one tracking scheme for one seed.
pub fn run_tracking_scheme(
    setup: &TrackingSetup,
    scheme: Scheme,
    r: &Matrix2<f64>,
    sigma2: f64,
    seed: u64,
    key: &[u64],
) -> Result<TrackingLog> {
    let arr = &setup.arr;
    let traj = &setup.trajectory;
    let cfg = &setup.tracker;
    let with = |tag: u64| -> Vec<u64> { key.iter().copied().chain([tag]).collect() };
    let phase: f64 = rand::Rng::random_range(&mut stream_rng(seed, &with(0)), 0.0..std::f64::consts::TAU);
    let gain = Complex64::from_polar(1.0, phase);
    let mut rng = stream_rng(seed, &with(scheme.tag()));
    let (omega0, r0) = traj.polar(0.0);
    let layout = &setup.layout;
    match scheme {
        Scheme::Nfbt => {
            let init = TrackState::new(traj.start, [0.0, 0.0], cfg.p0());
            run_tracking(arr, traj, cfg, init, r, gain, sigma2, &mut rng)
        }
        Scheme::BrpssOnly => run_brpss_only(arr, traj, cfg, traj.start, gain, sigma2, &mut rng),
        Scheme::Hfns => {
            let start = best_codeword_for(layout, omega0, Range::Finite(r0), 1..=layout.len())?;
            run_hfns(arr, layout, traj, cfg, start, gain, sigma2, &mut rng)
        }
        Scheme::FfbtProxy => {
            let start = best_codeword_for(
                layout,
                omega0,
                Range::Finite(r0),
                layout.n_near() + 1..=layout.len(),
            )?;
            run_ffbt_proxy(arr, layout, traj, cfg, start, gain, sigma2, &mut rng)
        }
        other => Err(Error::InvalidScenario(format!(
            "{} is not a tracking scheme",
            other.label()
        ))),
    }
}

/// Mean per-block gain and spectral efficiency over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingRow {
    pub scheme: Scheme,
    pub t_s: f64,
    pub mean_gain: f64,
    pub mean_se_bits: f64,
    pub pilots: usize,
}

/// Time-averaged spectral efficiency at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub mean_se_bits: f64,
    /// `log₂(1 + 1/σ²)`: perfect CSI with a unit-gain LoS path.
    pub upper_bound_bits: f64,
}

/// Run every scheme over `runs` seeds at one SNR.
pub fn tracking_experiment(
    setup: &TrackingSetup,
    schemes: &[Scheme],
    snr_db: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<TrackingRow>> {
    let sigma2 = noise_variance_for(&setup.arr, snr_db);
    let r = setup.measurement_covariance(sigma2, seed)?;
    let mut rows = Vec::new();
    for &scheme in schemes {
        let logs = run_trials(runs, |run| {
            run_tracking_scheme(setup, scheme, &r, sigma2, seed, &[EXP_TRACKING, snr_db.to_bits(), run])
        })?;
        rows.extend(mean_tracking_rows(scheme, &logs));
    }
    Ok(rows)
}

pub fn mean_tracking_rows(scheme: Scheme, logs: &[TrackingLog]) -> Vec<TrackingRow> {
    let Some(first) = logs.first() else {
        return Vec::new();
    };
    let n = logs.len() as f64;
    (0..first.blocks.len())
        .map(|i| TrackingRow {
            scheme,
            t_s: first.blocks[i].t_s,
            mean_gain: logs.iter().map(|l| l.blocks[i].gain).sum::<f64>() / n,
            mean_se_bits: logs.iter().map(|l| l.blocks[i].se_bits).sum::<f64>() / n,
            pilots: first.blocks[i].pilots,
        })
        .collect()
}

/// Spectral efficiency against SNR, averaged over blocks and seeds.
pub fn tracking_se_vs_snr(
    setup: &TrackingSetup,
    schemes: &[Scheme],
    snr_grid: &[f64],
    runs: usize,
    seed: u64,
) -> Result<Vec<SeRow>> {
    let mut out = Vec::new();
    for &snr in snr_grid {
        let sigma2 = noise_variance_for(&setup.arr, snr);
        let rows = tracking_experiment(setup, schemes, snr, runs, seed)?;
        for &s in schemes {
            let sel: Vec<&TrackingRow> = rows.iter().filter(|r| r.scheme == s).collect();
            out.push(SeRow {
                scheme: s,
                snr_db: snr,
                mean_se_bits: sel.iter().map(|r| r.mean_se_bits).sum::<f64>() / sel.len().max(1) as f64,
                upper_bound_bits: spectral_efficiency(1.0, sigma2),
            });
        }
    }
    Ok(out)
}

/// One row of the overhead table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadRow {
    pub scheme: String,
    pub formula: String,
    pub analytic: usize,
    /// Pilots counted while running the scheme; `None` if not implemented.
    pub runtime: Option<usize>,
    pub implemented: bool,
}

/// Training and tracking overheads. Implemented schemes are run once on a
/// noiseless channel and their pilot counters reported next to the formula.
pub fn overhead_report(ctx: &TrainingContext, tracking: &TrackingSetup) -> Result<Vec<OverheadRow>> {
    let layout = ctx.layout();
    let (q, s, m) = (layout.n_angles(), layout.n_dist(), ctx.arr.m_per_sub());
    let mut rows = Vec::new();
    let outcomes = run_training_trial(
        ctx,
        &Scheme::TRAINING,
        &Scenario::reference(),
        0.0,
        0,
        &[0],
    )?;
    let runtime = |sch: Scheme| outcomes.iter().find(|o| o.scheme == sch).map(|o| o.pilots);
    let implemented = [
        (Scheme::Hfbs, "Q(S+1)"),
        (Scheme::Ffbs, "Q"),
        (Scheme::Thbt, "M"),
        (Scheme::ThbtBrpss, "M+1"),
    ];
    for (sch, formula) in implemented {
        rows.push(OverheadRow {
            scheme: sch.label().into(),
            formula: formula.into(),
            analytic: sch.analytic_pilots(layout),
            runtime: runtime(sch),
            implemented: true,
        });
    }
    let (k, v, r, p) = (3, 2, 256, m);
    for (name, formula, val) in [
        ("TPBT", "Q+K(S+1)", q + k * (s + 1)),
        ("DHBT", "VR", v * r),
        ("P-SOMP", "P", p),
    ] {
        rows.push(OverheadRow {
            scheme: name.into(),
            formula: formula.into(),
            analytic: val,
            runtime: None,
            implemented: false,
        });
    }
    let mut short = tracking.clone();
    short.tracker.max_blocks = 2;
    let r_meas = Matrix2::identity();
    for sch in Scheme::TRACKING {
        let log = run_tracking_scheme(&short, sch, &r_meas, 0.0, 0, &[0])?;
        rows.push(OverheadRow {
            scheme: sch.label().into(),
            formula: "per block".into(),
            analytic: sch.analytic_pilots(&tracking.layout),
            runtime: Some(log.total_pilots() / short.tracker.max_blocks),
            implemented: true,
        });
    }
    Ok(rows)
}

/// CSV text: header plus rows of pre-formatted cells.
pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// Shortest round-trip formatting; deterministic across runs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn metric_rows_csv(x_name: &str, rows: &[MetricRow]) -> String {
    csv_string(
        &["scheme", x_name, "mean_gain", "median_error_m", "pilots", "trials"],
        rows.iter().map(|r| {
            vec![
                r.scheme.label().into(),
                fmt_f64(r.x),
                fmt_f64(r.mean_gain),
                fmt_f64(r.median_error_m),
                r.pilots.to_string(),
                r.trials.to_string(),
            ]
        }),
    )
}

pub fn positioning_csv(results: &[PositioningResult]) -> String {
    csv_string(
        &["scheme", "quantile", "error_m"],
        results.iter().flat_map(|r| {
            r.cdf()
                .into_iter()
                .map(move |(q, e)| vec![r.scheme.label().into(), fmt_f64(q), fmt_f64(e)])
        }),
    )
}

pub fn refinement_csv(rows: &[RefinementRow]) -> String {
    csv_string(
        &["q", "s", "s_ok", "mean_error_m", "median_error_m", "trials"],
        rows.iter().map(|r| {
            vec![
                r.q.to_string(),
                r.s.to_string(),
                r.s_ok.to_string(),
                fmt_f64(r.mean_error_m),
                fmt_f64(r.median_error_m),
                r.trials.to_string(),
            ]
        }),
    )
}

pub fn tracking_rows_csv(rows: &[TrackingRow]) -> String {
    csv_string(
        &["scheme", "t_s", "mean_gain", "mean_se_bits", "pilots"],
        rows.iter().map(|r| {
            vec![
                r.scheme.label().into(),
                fmt_f64(r.t_s),
                fmt_f64(r.mean_gain),
                fmt_f64(r.mean_se_bits),
                r.pilots.to_string(),
            ]
        }),
    )
}

pub fn se_rows_csv(rows: &[SeRow]) -> String {
    csv_string(
        &["scheme", "snr_db", "mean_se_bits", "upper_bound_bits"],
        rows.iter().map(|r| {
            vec![
                r.scheme.label().into(),
                fmt_f64(r.snr_db),
                fmt_f64(r.mean_se_bits),
                fmt_f64(r.upper_bound_bits),
            ]
        }),
    )
}

pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    csv_string(
        &["scheme", "formula", "analytic", "runtime", "implemented"],
        rows.iter().map(|r| {
            vec![
                r.scheme.clone(),
                r.formula.clone(),
                r.analytic.to_string(),
                r.runtime.map_or_else(String::new, |v| v.to_string()),
                r.implemented.to_string(),
            ]
        }),
    )
}

/// Per-block log of a single tracking run.
pub fn tracking_log_csv(log: &TrackingLog) -> String {
    let opt = |v: Option<[f64; 2]>, i: usize| v.map_or_else(String::new, |p| fmt_f64(p[i]));
    csv_string(
        &[
            "t_s", "truth_x", "truth_y", "pred_x", "pred_y", "meas_x", "meas_y", "filt_x", "filt_y",
            "gain", "se_bits",
        ],
        log.blocks.iter().map(|b| {
            vec![
                fmt_f64(b.t_s),
                fmt_f64(b.truth[0]),
                fmt_f64(b.truth[1]),
                fmt_f64(b.pred[0]),
                fmt_f64(b.pred[1]),
                opt(b.meas, 0),
                opt(b.meas, 1),
                fmt_f64(b.filt[0]),
                fmt_f64(b.filt[1]),
                fmt_f64(b.gain),
                fmt_f64(b.se_bits),
            ]
        }),
    )
}

/// Minimal static SVG line plot.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 56.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];
    let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0 < x1) {
        x1 = x0 + 1.0;
    }
    if !(y0 < y1) {
        y1 = y0 + 1.0;
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, xml_escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        xml_escape(y_label)
    );
    for (v, anchor, x, y) in [
        (x0, "start", PAD, H - PAD + 16.0),
        (x1, "end", W - PAD, H - PAD + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, short(v));
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, PAD - 4.0, short(v));
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = PAD + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            W - PAD - 6.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
