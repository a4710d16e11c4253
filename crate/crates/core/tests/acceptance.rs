//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p xlbeam --test acceptance` runs everything; pass criterion
//! numbers (`-- 4 7`) to run a subset. Set `XLBEAM_ACCEPTANCE_STRICT=1` to
//! exit nonzero when any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::Rng;

use xlbeam::channel::sample_channel;
use xlbeam::codebook::CodebookLayout;
use xlbeam::combining::gain_loss_bound;
use xlbeam::harness::{
    gain_vs_distance, gain_vs_snr, metric_rows_csv, overhead_report, positioning_cdf,
    positioning_csv, tracking_experiment, tracking_rows_csv, Scheme, TrackingSetup,
    TrainingContext,
};
use xlbeam::refinement::{chirp_block_sum, peak_shift_ok, run_brpss, wrap_phase};
use xlbeam::seed::stream_rng;
use xlbeam::tracking::{filter_update, predict, TrackState, TrackerConfig, Trajectory};
use xlbeam::training::{assemble_reused, stage1_sweep, ThbtPlan};
use xlbeam::{ArrayConfig, Scenario};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Outcome;

const SEED: u64 = 20_240_601;

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(u32, &str, Duration, Check); 12] = [
        (1, "rayleigh-and-gain-loss", secs(1), c1_rayleigh_and_gain_loss),
        (2, "worked-example-indices", secs(1), c2_worked_example),
        (3, "overhead-tables", secs(1), c3_overheads),
        (4, "noiseless-exactness", secs(120), c4_noiseless_exactness),
        (5, "refinement-recovery", secs(120), c5_refinement_recovery),
        (6, "phase-model", secs(60), c6_phase_model),
        (7, "gain-vs-snr-ordering", secs(600), c7_gain_vs_snr),
        (8, "gain-vs-distance", secs(600), c8_gain_vs_distance),
        (9, "positioning-ordering", secs(600), c9_positioning),
        (10, "tracking-behavior", secs(600), c10_tracking),
        (11, "filter-sanity", secs(10), c11_filter_sanity),
        (12, "determinism", secs(60), c12_determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, budget, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= budget;
        let pass = out.pass && in_budget;
        ran += 1;
        if !pass {
            failed += 1;
        }
        let budget_note = if in_budget {
            String::new()
        } else {
            format!(" over budget {:.0} s", budget.as_secs_f64())
        };
        println!(
            "{} {id:>2} {name} ({:.2} s{budget_note}): {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("XLBEAM_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

fn c1_rayleigh_and_gain_loss() -> Outcome {
    let arr = ArrayConfig::new(256, 4, 0.003).expect("valid array");
    let z = arr.rayleigh_distance();
    let z_sub = arr.subarray().rayleigh_distance();
    let gamma = gain_loss_bound(&arr);
    let pass = round_sig(z, 3) == round_sig(98.304, 3)
        && round_sig(z_sub, 3) == round_sig(6.144, 3)
        && round_sig(gamma, 3) == 0.159;
    Outcome::new(pass, format!("Z = {z} m, subarray Z = {z_sub} m, gain loss bound = {gamma:.6}"))
}

fn c2_worked_example() -> Outcome {
    let layout = CodebookLayout::new(ArrayConfig::reference(), 512, 11);
    let plan = ThbtPlan::new(layout).expect("plan");
    let p = layout.near_index(256, 6);
    let got = plan.indices(p).expect("in range").to_vec();
    let expected = vec![63, 64, 65, 66];
    Outcome::new(got == expected, format!("codeword p = {p}: indices {got:?}, expected {expected:?}"))
}

fn c3_overheads() -> Outcome {
    let ctx = TrainingContext::new(ArrayConfig::reference(), 512, 11).expect("context");
    let setup = TrackingSetup::reference();
    let rows = overhead_report(&ctx, &setup).expect("report");
    let lookup = |name: &str| rows.iter().find(|r| r.scheme == name).expect("row present");
    let training = ["HFBS", "FFBS", "THBT", "THBT+BRPSS"].map(|s| {
        let r = lookup(s);
        (r.analytic, r.runtime)
    });
    let tracking = ["NFBT", "HFNS", "BRPSS", "FFBT-proxy"].map(|s| {
        let r = lookup(s);
        (r.analytic, r.runtime)
    });
    let want_training = [6144, 512, 128, 129];
    let want_tracking = [1, 5, 1, 3];
    let ok = |got: &[(usize, Option<usize>)], want: &[usize]| {
        got.iter().zip(want).all(|(&(a, r), &w)| a == w && r == Some(w))
    };
    let quoted = lookup("TPBT").analytic == 548 && !lookup("TPBT").implemented;
    Outcome::new(
        ok(&training, &want_training) && ok(&tracking, &want_tracking) && quoted,
        format!("training (analytic, runtime) {training:?}; tracking {tracking:?}; TPBT quoted {}", lookup("TPBT").analytic),
    )
}

fn c4_noiseless_exactness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // N = 128: every codeword.
    let arr = ArrayConfig::new(128, 4, 0.003).expect("valid array");
    let s = xlbeam::validate_quantization(&arr, 128, 1).s_min.expect("admissible");
    let layout = CodebookLayout::new(arr, 128, s);
    let plan = ThbtPlan::new(layout).expect("plan");
    let (hits, reuse_ok) = exact_hits(&plan, &layout, 1..=layout.len());
    pass &= hits == layout.len() && reuse_ok;
    notes.push(format!("N=128 Q=128 S={s}: {hits}/{} exact, reuse bit-exact {reuse_ok}", layout.len()));

    // N = 512: random codewords whose range is physically valid.
    let arr = ArrayConfig::reference();
    let layout = CodebookLayout::new(arr, 512, 11);
    let plan = ThbtPlan::new(layout).expect("plan");
    let valid: Vec<usize> = (1..=layout.len())
        .filter(|&p| !layout.codeword_params(p).expect("in range").below_floor)
        .collect();
    let mut rng = stream_rng(SEED, &[4]);
    let picks: Vec<usize> = (0..500).map(|_| valid[rng.random_range(0..valid.len())]).collect();
    let (hits, reuse_ok) = exact_hits(&plan, &layout, picks.iter().copied());
    pass &= hits == picks.len() && reuse_ok;
    notes.push(format!(
        "N=512 Q=512 S=11: {hits}/{} random valid codewords exact, reuse bit-exact {reuse_ok}",
        picks.len()
    ));
    Outcome::new(pass, notes.join("; "))
}

fn exact_hits(plan: &ThbtPlan, layout: &CodebookLayout, ps: impl Iterator<Item = usize>) -> (usize, bool) {
    let arr = layout.cfg();
    let mut hits = 0;
    let mut reuse_ok = true;
    let mut rng = stream_rng(0, &[]);
    for p in ps {
        let h = layout.column(p).expect("in range");
        let s1 = stage1_sweep(arr, plan.subarray_codebook(), &h, 0.0, &mut rng).expect("sweep");
        let res = plan.select(&s1).expect("select");
        hits += usize::from(res.best_index == p);
        let pair = plan.combiner(p).expect("in range");
        let reused = assemble_reused(&s1, &pair.indices).expect("indices");
        reuse_ok &= reused == pair.analog.apply(&h).expect("dims");
    }
    (hits, reuse_ok)
}

fn c5_refinement_recovery() -> Outcome {
    let arr = ArrayConfig::reference();
    let plan = ThbtPlan::new(CodebookLayout::new(arr, 512, 11)).expect("plan");
    let mut scenario = Scenario::reference().single_path();
    scenario.range_range = [10.0, 30.0];
    let trials = 1000u64;
    let mut ok = 0;
    let mut worst_angle: f64 = 0.0;
    for t in 0..trials {
        let ch = sample_channel(&arr, &mut stream_rng(SEED, &[5, t]), &scenario).expect("channel");
        let path = ch.paths[0];
        let mut rng = stream_rng(SEED, &[5, t, 1]);
        let coarse = plan.run(&ch.h, 0.0, &mut rng).expect("training");
        let out = run_brpss(&arr, &ch.h, (coarse.rough_omega, coarse.rough_range), 0.0, &mut rng)
            .expect("refinement");
        let r = path.range.meters();
        let angle_err = (out.omega - path.omega).abs();
        let range_err = out.range.finite().map_or(f64::INFINITY, |x| (x - r).abs() / r);
        if angle_err <= 1e-3 && range_err <= 0.02 {
            ok += 1;
        } else {
            worst_angle = worst_angle.max(angle_err);
        }
    }
    let frac = ok as f64 / trials as f64;
    Outcome::new(
        frac >= 0.99,
        format!("{ok}/{trials} placements within |dΩ| ≤ 1e-3 and 2% range (largest miss |dΩ| = {worst_angle:.2e})"),
    )
}

fn c6_phase_model() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for n_rf in [4, 8] {
        let arr = ArrayConfig::new(512, n_rf, 0.003).expect("valid array");
        let m = arr.m_per_sub() as f64;
        let mut rng = stream_rng(SEED, &[6, n_rf as u64]);
        let dk_max = 1.0 / (m * (arr.n_antennas() as f64 - 1.0));
        let mut tested = 0;
        let mut worst: f64 = 0.0;
        let mut worst_closed: f64 = 0.0;
        while tested < 2000 {
            let dk = rng.random_range(-dk_max..dk_max);
            let db = rng.random_range(-1.0 / m..1.0 / m);
            if !peak_shift_ok(&arr, dk, db) {
                continue;
            }
            tested += 1;
            let z: Vec<Complex64> = (1..=n_rf).map(|t| chirp_block_sum(&arr, dk, db, t)).collect();
            let mut phase = vec![z[0].arg()];
            for w in z.windows(2) {
                let last = *phase.last().expect("non-empty");
                phase.push(last + wrap_phase((w[1] / w[0]).arg()));
            }
            let fit = quadratic_fit_residual(&phase);
            worst = worst.max(fit);
            // Deviation from the closed-form coefficients, reported only.
            let model = |t: f64| PI * dk * m * m * t * t + PI * (db + dk * (m + 1.0)) * m * t;
            let resid: Vec<f64> = phase.iter().enumerate().map(|(i, p)| p - model(i as f64)).collect();
            let c = resid.iter().sum::<f64>() / resid.len() as f64;
            worst_closed = worst_closed.max(resid.iter().map(|r| (r - c).abs()).fold(0.0, f64::max));
        }
        pass &= worst <= 1e-3;
        notes.push(format!(
            "N_RF={n_rf}: {tested} offsets, max fit residual {worst:.2e} rad (closed-form coefficients {worst_closed:.2e} rad)"
        ));
    }
    Outcome::new(pass, notes.join("; "))
}

/// Largest absolute residual of the least-squares quadratic through
/// `(t, y_t)`, `t = 0, 1, …`.
fn quadratic_fit_residual(y: &[f64]) -> f64 {
    let a = DMatrix::from_fn(y.len(), 3, |i, j| (i as f64).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).expect("full rank");
    (a * coef - b).amax()
}

fn reference_context() -> TrainingContext {
    TrainingContext::new(ArrayConfig::reference(), 512, 11).expect("context")
}

fn c7_gain_vs_snr() -> Outcome {
    let ctx = reference_context();
    let rows = gain_vs_snr(&ctx, &Scenario::reference(), &Scheme::TRAINING, &[10.0, -15.0], 500, SEED)
        .expect("sweep");
    let g = |s: Scheme, snr: f64| {
        rows.iter()
            .find(|r| r.scheme == s && r.x == snr)
            .expect("row")
            .mean_gain
    };
    let (thbt, refined, hfbs) = (g(Scheme::Thbt, 10.0), g(Scheme::ThbtBrpss, 10.0), g(Scheme::Hfbs, 10.0));
    let (thbt_lo, hfbs_lo) = (g(Scheme::Thbt, -15.0), g(Scheme::Hfbs, -15.0));
    Outcome::new(
        refined > thbt && thbt >= 0.95 * hfbs && hfbs_lo > thbt_lo,
        format!(
            "10 dB: THBT+BRPSS {refined:.4}, THBT {thbt:.4}, HFBS {hfbs:.4}; -15 dB: HFBS {hfbs_lo:.4}, THBT {thbt_lo:.4}"
        ),
    )
}

fn c8_gain_vs_distance() -> Outcome {
    let ctx = reference_context();
    let grid = [40.0, 150.0, 400.0];
    let rows = gain_vs_distance(&ctx, &Scenario::reference(), &[Scheme::Thbt, Scheme::Ffbs], &grid, 10.0, 500, SEED)
        .expect("sweep");
    let series = |s: Scheme| -> Vec<f64> {
        grid.iter()
            .map(|&x| rows.iter().find(|r| r.scheme == s && r.x == x).expect("row").mean_gain)
            .collect()
    };
    let thbt = series(Scheme::Thbt);
    let ffbs = series(Scheme::Ffbs);
    let spread = thbt.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - thbt.iter().cloned().fold(f64::INFINITY, f64::min);
    let drop = ffbs[2] - ffbs[0];
    Outcome::new(
        spread <= 0.05 && drop >= 0.15,
        format!("THBT {thbt:.4?} (spread {spread:.4}); FFBS {ffbs:.4?} (drop {drop:.4})"),
    )
}

fn c9_positioning() -> Outcome {
    let ctx = reference_context();
    let schemes = [Scheme::Thbt, Scheme::ThbtBrpss, Scheme::Hfbs];
    let res = positioning_cdf(&ctx, &Scenario::reference(), &schemes, 20.0, 10_000, SEED).expect("sweep");
    let med = |s: Scheme| res.iter().find(|r| r.scheme == s).expect("scheme").median();
    let (thbt, refined, hfbs) = (med(Scheme::Thbt), med(Scheme::ThbtBrpss), med(Scheme::Hfbs));
    let rel = (thbt - hfbs).abs() / hfbs;
    Outcome::new(
        refined < thbt && rel <= 0.10,
        format!("median error THBT+BRPSS {refined:.3} m, THBT {thbt:.3} m, HFBS {hfbs:.3} m (THBT/HFBS gap {:.1}%)", rel * 100.0),
    )
}

fn c10_tracking() -> Outcome {
    let setup = TrackingSetup::reference();
    let rows = tracking_experiment(&setup, &[Scheme::Nfbt, Scheme::BrpssOnly], 0.0, 100, SEED).expect("tracking");
    let nfbt: Vec<f64> = rows.iter().filter(|r| r.scheme == Scheme::Nfbt).map(|r| r.mean_gain).collect();
    let late: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheme == Scheme::BrpssOnly && r.t_s > 6.0)
        .map(|r| r.mean_gain)
        .collect();
    let nfbt_min = nfbt.iter().cloned().fold(f64::INFINITY, f64::min);
    let brpss_min = late.iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome::new(
        nfbt.len() == 180 && nfbt_min >= 0.8 && brpss_min < 0.5,
        format!("NFBT min per-block mean gain {nfbt_min:.4}; BRPSS-only min after 6 s {brpss_min:.4}"),
    )
}

fn c11_filter_sanity() -> Outcome {
    let cfg = TrackerConfig::default();
    let mut rng = stream_rng(SEED, &[11]);
    let mut limits_ok = true;
    let mut psd_ok = true;
    for _ in 0..200 {
        let mut x = [0.0; 4];
        for v in x.iter_mut() {
            *v = rng.random_range(-100.0..100.0);
        }
        let pred = TrackState::new([x[0], x[1]], [x[2], x[3]], cfg.p0());
        let z = [x[0] + rng.random_range(-5.0..5.0), x[1] + rng.random_range(-5.0..5.0)];
        let (trust, _) = filter_update(&pred, z, &Matrix2::zeros(), &cfg);
        let (ignore, _) = filter_update(&pred, z, &(Matrix2::identity() * 1e30), &cfg);
        limits_ok &= (trust.x[0] - z[0]).abs() <= 1e-9 && (trust.x[1] - z[1]).abs() <= 1e-9;
        limits_ok &= (ignore.x - pred.x).norm() <= 1e-9;

        let r_scale = 10f64.powf(rng.random_range(-6.0..2.0));
        let r = Matrix2::new(r_scale, 0.3 * r_scale, 0.3 * r_scale, 2.0 * r_scale);
        let mut s = pred;
        for _ in 0..30 {
            s = predict(&s, &cfg);
            let z = [s.x[0] + rng.random_range(-10.0..10.0), s.x[1] + rng.random_range(-10.0..10.0)];
            s = filter_update(&s, z, &r, &cfg).0;
            psd_ok &= s.min_cov_eigenvalue() >= -1e-9 && (s.p - s.p.transpose()).norm() <= 1e-9 * s.p.norm().max(1.0);
        }
    }
    let traj = Trajectory::reference();
    let mut s = TrackState::new(traj.start, [0.0, 0.0], cfg.p0());
    for i in 1..=5 {
        s = predict(&s, &cfg);
        s = filter_update(&s, traj.position(i as f64 * cfg.dt), &Matrix2::zeros(), &cfg).0;
    }
    let truth = traj.position(5.0 * cfg.dt);
    let err = (s.x[0] - truth[0]).hypot(s.x[1] - truth[1]);
    Outcome::new(
        limits_ok && psd_ok && err <= 1e-6,
        format!("limits exact {limits_ok}; covariance PSD every block {psd_ok}; error after 5 blocks {err:.2e} m"),
    )
}

fn c12_determinism() -> Outcome {
    let run = |threads: usize| -> String {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
        pool.install(|| {
            let arr = ArrayConfig::new(128, 4, 0.003).expect("valid array");
            let ctx = TrainingContext::new(arr, 128, 3).expect("context");
            let sc = Scenario::reference().with_max_range(40.0);
            let gains = gain_vs_snr(&ctx, &sc, &Scheme::TRAINING, &[-5.0, 10.0], 64, 7).expect("sweep");
            let cdf = positioning_cdf(&ctx, &sc, &Scheme::TRAINING, 20.0, 64, 7).expect("cdf");
            let mut setup = TrackingSetup::reference();
            setup.tracker.max_blocks = 20;
            setup.calibration_trials = 50;
            let track = tracking_experiment(&setup, &Scheme::TRACKING, 0.0, 8, 7).expect("tracking");
            [metric_rows_csv("snr_db", &gains), positioning_csv(&cdf), tracking_rows_csv(&track)].concat()
        })
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    Outcome::new(
        a == b && a == c,
        format!(
            "{} bytes of CSV; sequential rerun identical {}; 4-worker run identical {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}
