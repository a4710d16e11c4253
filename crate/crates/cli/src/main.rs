//! `xlbeam` experiment runner.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration error. Errors are
//! printed to stderr as one JSON object with `kind`, `path` and `message`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use xlbeam::array::{polar_to_cartesian, steering, Range};
use xlbeam::channel::sample_channel;
use xlbeam::config::SweepKind;
use xlbeam::harness::{
    fmt_f64, gain_vs_distance, gain_vs_snr, metric_rows_csv, noise_variance_for, overhead_csv,
    overhead_report, position_error, positioning_cdf, positioning_csv, refinement_csv,
    refinement_grid, run_tracking_scheme, se_rows_csv, svg_line_plot, tracking_experiment,
    tracking_log_csv, tracking_rows_csv, tracking_se_vs_snr, csv_string, MetricRow,
};
use xlbeam::seed::{label_tag, stream_rng};
use xlbeam::training::{baseline_ffbs, baseline_hfbs};
use xlbeam::{
    beamforming_gain, run_brpss, validate_quantization, Error, RunConfig, Scheme, TrainingContext,
    TrainingResult,
};

#[derive(Parser)]
#[command(name = "xlbeam", version, about = "Near-field beam training, refinement and tracking experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; defaults to the 512-antenna settings.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Write artifacts and a run manifest here instead of printing to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `sweep.trials` and `sweep.runs`.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one sampled channel.
    Train {
        /// THBT, THBT+BRPSS, HFBS or FFBS.
        #[arg(long, default_value = "THBT", value_parser = parse_scheme)]
        scheme: Scheme,
        /// Also emit the per-codeword power profile.
        #[arg(long)]
        powers: bool,
    },
    /// Refine a coarse estimate on one sampled channel.
    Refine {
        /// JSON file `{"omega": f64, "range": f64 | null}`.
        #[arg(long, value_name = "PATH", conflicts_with_all = ["omega", "range"])]
        coarse: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, requires = "range")]
        omega: Option<f64>,
        #[arg(long, requires = "omega")]
        range: Option<f64>,
    },
    /// Track the configured trajectory with one scheme.
    Track {
        /// NFBT, HFNS, BRPSS or FFBT-proxy.
        #[arg(long, default_value = "NFBT", value_parser = parse_scheme)]
        scheme: Scheme,
    },
    /// Run the Monte Carlo sweep named by `sweep.kind`.
    Sweep,
    /// Codebook metadata, or the per-column table with `--table`.
    Codebook {
        #[arg(long)]
        table: bool,
    },
    /// Training and tracking overhead table.
    Report,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::from_label(s).ok_or_else(|| format!("unknown scheme `{s}`"))
}

/// Files produced by a command. The first one goes to stdout when no
/// output directory is given.
struct Artifacts(Vec<(String, String)>);

impl Artifacts {
    fn one(name: &str, body: String) -> Self {
        Self(vec![(name.into(), body)])
    }

    fn with(mut self, name: &str, body: String) -> Self {
        self.0.push((name.into(), body));
        self
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    trials: usize,
    runs: usize,
    threads: usize,
    crate_name: &'static str,
    crate_version: &'static str,
    outputs: Vec<&'a str>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, path) = match &e {
                Error::Config { path, .. } => ("config", Some(path.clone())),
                e if e.is_config() => ("config", None),
                _ => ("runtime", None),
            };
            let message = match &e {
                Error::Config { message, .. } => message.clone(),
                e => e.to_string(),
            };
            eprintln!("{}", json!({ "kind": kind, "path": path, "message": message }));
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> xlbeam::Result<()> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => load_config(p)?,
        None => RunConfig::reference(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(n) = g.trials {
        if n == 0 {
            return Err(Error::Config {
                path: "--trials".into(),
                message: "must be at least 1".into(),
            });
        }
        cfg.sweep.trials = n;
        cfg.sweep.runs = n;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = g.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config {
        path: "--threads".into(),
        message: e.to_string(),
    })?;

    let name = command_name(&cli.command);
    let artifacts = pool.install(|| execute(&cli.command, &cfg))?;

    match &g.out {
        None => {
            print!("{}", artifacts.0[0].1);
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (file, body) in &artifacts.0 {
                std::fs::write(dir.join(file), body)?;
            }
            let manifest = Manifest {
                command: name,
                config_sha256: cfg.hash(),
                seed: cfg.seed,
                trials: cfg.sweep.trials,
                runs: cfg.sweep.runs,
                threads: pool.current_num_threads(),
                crate_name: env!("CARGO_PKG_NAME"),
                crate_version: env!("CARGO_PKG_VERSION"),
                outputs: artifacts.0.iter().map(|(f, _)| f.as_str()).collect(),
            };
            std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> xlbeam::Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    RunConfig::from_json(&text)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Train { .. } => "train",
        Command::Refine { .. } => "refine",
        Command::Track { .. } => "track",
        Command::Sweep => "sweep",
        Command::Codebook { .. } => "codebook",
        Command::Report => "report",
    }
}

fn execute(command: &Command, cfg: &RunConfig) -> xlbeam::Result<Artifacts> {
    match command {
        Command::Train { scheme, powers } => train(cfg, *scheme, *powers),
        Command::Refine { coarse, omega, range } => {
            let coarse = match (coarse, omega) {
                (Some(p), _) => Some(load_coarse(p)?),
                (None, Some(o)) => Some(Coarse {
                    omega: *o,
                    range: Range::from(*range),
                }),
                _ => None,
            };
            refine(cfg, coarse)
        }
        Command::Track { scheme } => track(cfg, *scheme),
        Command::Sweep => sweep(cfg),
        Command::Codebook { table } => codebook(cfg, *table),
        Command::Report => report(cfg),
    }
}

fn context(cfg: &RunConfig) -> xlbeam::Result<TrainingContext> {
    let arr = cfg.array()?;
    let (q, s) = cfg.codebook_dims(&arr)?;
    TrainingContext::new(arr, q, s)
}

fn json_body<T: Serialize>(v: &T) -> xlbeam::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

#[derive(Serialize)]
struct Truth {
    omega: f64,
    range_m: f64,
}

#[derive(Serialize)]
struct TrainOutput {
    scheme: Scheme,
    best_index: usize,
    kind: &'static str,
    q: usize,
    s: usize,
    omega: f64,
    range_m: Range,
    gain: f64,
    error_m: Option<f64>,
    pilots: usize,
    truth: Truth,
}

fn train(cfg: &RunConfig, scheme: Scheme, with_powers: bool) -> xlbeam::Result<Artifacts> {
    if !scheme.is_training() {
        return Err(Error::Config {
            path: "--scheme".into(),
            message: format!("{} is not a training scheme", scheme.label()),
        });
    }
    let ctx = context(cfg)?;
    let arr = &ctx.arr;
    let sigma2 = noise_variance_for(arr, cfg.snr_db);
    let ch = sample_channel(arr, &mut stream_rng(cfg.seed, &[label_tag("train"), 0]), &cfg.paths)?;
    let los = ch.paths[0];
    let mut rng = stream_rng(cfg.seed, &[label_tag("train"), label_tag(scheme.label())]);
    let res: TrainingResult = match scheme {
        Scheme::Hfbs => baseline_hfbs(&ctx.book, &ch.h, sigma2, &mut rng),
        Scheme::Ffbs => baseline_ffbs(&ctx.book, &ch.h, sigma2, &mut rng),
        _ => ctx.plan.run(&ch.h, sigma2, &mut rng)?,
    };
    let (omega, range, gain, pilots) = if scheme == Scheme::ThbtBrpss {
        let out = run_brpss(arr, &ch.h, (res.rough_omega, res.rough_range), sigma2, &mut rng)?;
        let gain = beamforming_gain(arr, &ch, &steering(arr, out.omega, out.range));
        (out.omega, out.range, gain, res.pilots + 1)
    } else {
        let gain = beamforming_gain(arr, &ch, ctx.book.column(res.best_index)?);
        (res.rough_omega, res.rough_range, gain, res.pilots)
    };
    let err = position_error(los.position(), polar_to_cartesian(omega, range));
    let body = TrainOutput {
        scheme,
        best_index: res.best_index,
        kind: res.best.kind.as_str(),
        q: res.best.q,
        s: res.best.s,
        omega,
        range_m: range,
        gain,
        error_m: err.is_finite().then_some(err),
        pilots,
        truth: Truth {
            omega: los.omega,
            range_m: los.range.meters(),
        },
    };
    let mut art = Artifacts::one("train.json", json_body(&body)?);
    if with_powers {
        let offset = if scheme == Scheme::Ffbs { ctx.layout().n_near() + 1 } else { 1 };
        let rows = res
            .powers
            .iter()
            .enumerate()
            .map(|(i, &p)| vec![(offset + i).to_string(), fmt_f64(p)]);
        art = art.with("powers.csv", csv_string(&["p", "power"], rows));
    }
    Ok(art)
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct Coarse {
    omega: f64,
    range: Range,
}

fn load_coarse(path: &Path) -> xlbeam::Result<Coarse> {
    let err = |message: String| Error::Config {
        path: format!("--coarse {}", path.display()),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

#[derive(Serialize)]
struct RefineOutput {
    coarse_omega: f64,
    coarse_range_m: Range,
    omega: f64,
    range_m: Range,
    k: f64,
    b: f64,
    refined: bool,
    gain: f64,
    error_m: Option<f64>,
    truth: Truth,
}

/// Without a coarse estimate, THBT supplies one.
fn refine(cfg: &RunConfig, coarse: Option<Coarse>) -> xlbeam::Result<Artifacts> {
    let ctx = context(cfg)?;
    let arr = &ctx.arr;
    let sigma2 = noise_variance_for(arr, cfg.snr_db);
    let ch = sample_channel(arr, &mut stream_rng(cfg.seed, &[label_tag("refine"), 0]), &cfg.paths)?;
    let los = ch.paths[0];
    let mut rng = stream_rng(cfg.seed, &[label_tag("refine"), 1]);
    let coarse = match coarse {
        Some(c) => c,
        None => {
            let res = ctx.plan.run(&ch.h, sigma2, &mut rng)?;
            Coarse {
                omega: res.rough_omega,
                range: res.rough_range,
            }
        }
    };
    if !(-1.0..=1.0).contains(&coarse.omega) {
        return Err(Error::Config {
            path: "coarse.omega".into(),
            message: format!("{} outside [-1, 1]", coarse.omega),
        });
    }
    let out = run_brpss(arr, &ch.h, (coarse.omega, coarse.range), sigma2, &mut rng)?;
    let err = position_error(los.position(), out.position());
    let body = RefineOutput {
        coarse_omega: coarse.omega,
        coarse_range_m: coarse.range,
        omega: out.omega,
        range_m: out.range,
        k: out.k,
        b: out.b,
        refined: out.refined,
        gain: beamforming_gain(arr, &ch, &steering(arr, out.omega, out.range)),
        error_m: err.is_finite().then_some(err),
        truth: Truth {
            omega: los.omega,
            range_m: los.range.meters(),
        },
    };
    Ok(Artifacts::one("refine.json", json_body(&body)?))
}

fn track(cfg: &RunConfig, scheme: Scheme) -> xlbeam::Result<Artifacts> {
    if scheme.is_training() {
        return Err(Error::Config {
            path: "--scheme".into(),
            message: format!("{} is not a tracking scheme", scheme.label()),
        });
    }
    let setup = cfg.tracking_setup()?;
    let sigma2 = noise_variance_for(&setup.arr, cfg.snr_db);
    let r = setup.measurement_covariance(sigma2, cfg.seed)?;
    let log = run_tracking_scheme(&setup, scheme, &r, sigma2, cfg.seed, &[label_tag("track")])?;
    let series = vec![(
        scheme.label().to_string(),
        log.blocks.iter().map(|b| (b.t_s, b.gain)).collect(),
    )];
    Ok(Artifacts::one("track.csv", tracking_log_csv(&log)).with(
        "track.svg",
        svg_line_plot(&format!("{} beamforming gain", scheme.label()), "t (s)", "gain", &series),
    ))
}

fn schemes_for(cfg: &RunConfig, default: [Scheme; 4]) -> Vec<Scheme> {
    cfg.sweep.schemes.clone().unwrap_or_else(|| default.to_vec())
}

fn gain_series(rows: &[MetricRow], schemes: &[Scheme]) -> Vec<(String, Vec<(f64, f64)>)> {
    schemes
        .iter()
        .map(|&s| {
            let pts = rows.iter().filter(|r| r.scheme == s).map(|r| (r.x, r.mean_gain)).collect();
            (s.label().to_string(), pts)
        })
        .collect()
}

fn sweep(cfg: &RunConfig) -> xlbeam::Result<Artifacts> {
    let sw = &cfg.sweep;
    let seed = cfg.seed;
    match sw.kind {
        SweepKind::GainVsSnr => {
            let schemes = schemes_for(cfg, Scheme::TRAINING);
            let rows = gain_vs_snr(&context(cfg)?, &cfg.paths, &schemes, &sw.snr_grid, sw.trials, seed)?;
            let svg = svg_line_plot("Gain against SNR", "SNR (dB)", "gain", &gain_series(&rows, &schemes));
            Ok(Artifacts::one("gain_vs_snr.csv", metric_rows_csv("snr_db", &rows)).with("gain_vs_snr.svg", svg))
        }
        SweepKind::GainVsDistance => {
            let schemes = schemes_for(cfg, Scheme::TRAINING);
            let rows = gain_vs_distance(
                &context(cfg)?,
                &cfg.paths,
                &schemes,
                &sw.r_max_grid,
                cfg.snr_db,
                sw.trials,
                seed,
            )?;
            let svg = svg_line_plot("Gain against maximum range", "r_max (m)", "gain", &gain_series(&rows, &schemes));
            Ok(Artifacts::one("gain_vs_distance.csv", metric_rows_csv("r_max_m", &rows))
                .with("gain_vs_distance.svg", svg))
        }
        SweepKind::Positioning => {
            let schemes = schemes_for(cfg, Scheme::TRAINING);
            let res = positioning_cdf(&context(cfg)?, &cfg.paths, &schemes, cfg.snr_db, sw.trials, seed)?;
            let series: Vec<_> = res
                .iter()
                .map(|r| {
                    let pts = r.cdf().into_iter().map(|(q, e)| (e, q)).collect();
                    (r.scheme.label().to_string(), pts)
                })
                .collect();
            let svg = svg_line_plot("Positioning error CDF", "error (m)", "CDF", &series);
            Ok(Artifacts::one("positioning.csv", positioning_csv(&res)).with("positioning.svg", svg))
        }
        SweepKind::Refinement => {
            let grid: Vec<(usize, usize)> = sw.qs_grid.iter().map(|&[q, s]| (q, s)).collect();
            let rows = refinement_grid(&cfg.array()?, &grid, sw.refinement_ranges, cfg.snr_db, sw.trials, seed)?;
            Ok(Artifacts::one("refinement.csv", refinement_csv(&rows)))
        }
        SweepKind::Tracking => {
            let schemes = schemes_for(cfg, Scheme::TRACKING);
            let rows = tracking_experiment(&cfg.tracking_setup()?, &schemes, cfg.snr_db, sw.runs, seed)?;
            let series: Vec<_> = schemes
                .iter()
                .map(|&s| {
                    let pts = rows.iter().filter(|r| r.scheme == s).map(|r| (r.t_s, r.mean_gain)).collect();
                    (s.label().to_string(), pts)
                })
                .collect();
            let svg = svg_line_plot("Tracking gain", "t (s)", "gain", &series);
            Ok(Artifacts::one("tracking.csv", tracking_rows_csv(&rows)).with("tracking.svg", svg))
        }
        SweepKind::TrackingSe => {
            let schemes = schemes_for(cfg, Scheme::TRACKING);
            let rows = tracking_se_vs_snr(&cfg.tracking_setup()?, &schemes, &sw.snr_grid, sw.runs, seed)?;
            let mut series: Vec<_> = schemes
                .iter()
                .map(|&s| {
                    let pts = rows.iter().filter(|r| r.scheme == s).map(|r| (r.snr_db, r.mean_se_bits)).collect();
                    (s.label().to_string(), pts)
                })
                .collect();
            if let Some(&s) = schemes.first() {
                let pts = rows.iter().filter(|r| r.scheme == s).map(|r| (r.snr_db, r.upper_bound_bits)).collect();
                series.push(("upper bound".to_string(), pts));
            }
            let svg = svg_line_plot("Spectral efficiency", "SNR (dB)", "bits/s/Hz", &series);
            Ok(Artifacts::one("tracking_se.csv", se_rows_csv(&rows)).with("tracking_se.svg", svg))
        }
    }
}

#[derive(Serialize)]
struct CodebookMeta {
    n_antennas: usize,
    n_rf: usize,
    q: usize,
    s: usize,
    len: usize,
    n_near: usize,
    rayleigh_distance_m: f64,
    validity_floor_m: f64,
    quantization: xlbeam::QuantizationReport,
}

fn codebook(cfg: &RunConfig, table: bool) -> xlbeam::Result<Artifacts> {
    let layout = cfg.layout()?;
    let arr = *layout.cfg();
    let (q, s) = (layout.n_angles(), layout.n_dist());
    let meta = CodebookMeta {
        n_antennas: arr.n_antennas(),
        n_rf: arr.n_rf(),
        q,
        s,
        len: layout.len(),
        n_near: layout.n_near(),
        rayleigh_distance_m: arr.rayleigh_distance(),
        validity_floor_m: arr.validity_floor(),
        quantization: validate_quantization(&arr, q, s),
    };
    let rows = (1..=layout.len())
        .map(|p| {
            let c = layout.codeword_params(p)?;
            Ok(vec![
                c.p.to_string(),
                c.kind.as_str().to_string(),
                c.q.to_string(),
                c.s.to_string(),
                fmt_f64(c.theta),
                c.range.finite().map(fmt_f64).unwrap_or_default(),
            ])
        })
        .collect::<xlbeam::Result<Vec<_>>>()?;
    let csv = csv_string(&["p", "kind", "q", "s", "theta", "distance_m"], rows);
    let meta = json_body(&meta)?;
    Ok(if table {
        Artifacts::one("codebook.csv", csv).with("codebook.json", meta)
    } else {
        Artifacts::one("codebook.json", meta).with("codebook.csv", csv)
    })
}

fn report(cfg: &RunConfig) -> xlbeam::Result<Artifacts> {
    let rows = overhead_report(&context(cfg)?, &cfg.tracking_setup()?)?;
    Ok(Artifacts::one("overhead.csv", overhead_csv(&rows)))
}
