//! Command-line front end for `cvqkd-core`: configuration, subcommand
//! dispatch and CSV output. All numerics are delegated to the library.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cvqkd_core::analysis::{self, PointOutcome, RootMethod, SweepResult};
use cvqkd_core::{mcsim, protocol};

pub use config::{Overrides, RunConfig, Validated};
pub use output::{fmt_num, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cvqkd", version, about = "CV-QKD key rates with a practical homodyne detector and a phase-sensitive amplifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report max(R, 0) instead of the signed rate
    #[arg(long, global = true)]
    clamp: bool,
    #[arg(long, global = true)]
    gain: Option<f64>,
    #[arg(long, global = true)]
    eta_d: Option<f64>,
    #[arg(long, global = true)]
    eta_e: Option<f64>,
    #[arg(long, global = true)]
    distance_km: Option<f64>,
    #[arg(long, global = true)]
    excess_noise: Option<f64>,
    #[arg(long, global = true)]
    epr_variance: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    alpha_db_per_km: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Key rate, mutual information, Holevo bound and symplectic spectrum at one point
    Keyrate,
    /// Key rate against distance for every gain series
    SweepDistance,
    /// Key rate against modulation variance at the configured distances
    SweepVariance,
    /// Maximal tolerable excess noise against distance
    MaxNoise,
    /// Monte-Carlo check of the prepare-and-measure / entanglement-based equivalence
    McVerify,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            gain: self.gain,
            eta_d: self.eta_d,
            eta_e: self.eta_e,
            distance_km: self.distance_km,
            excess_noise: self.excess_noise,
            epr_variance: self.epr_variance,
            beta: self.beta,
            alpha_db_per_km: self.alpha_db_per_km,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };

    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(errs) => return report_config(stderr, &errs),
        },
        None => RunConfig::default(),
    };
    cfg.apply(&cli.overrides());
    let v = match cfg.validate() {
        Ok(v) => v,
        Err(errs) => return report_config(stderr, &errs),
    };

    let result = match cli.command {
        Command::Keyrate => keyrate(&v, cli.clamp),
        Command::SweepDistance => sweep_distance(&v, cli.clamp),
        Command::SweepVariance => sweep_variance(&v, cli.clamp),
        Command::MaxNoise => max_noise(&v),
        Command::McVerify => mc_verify(&v),
    };
    let (text, code) = match result {
        Ok(r) => r,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_CONFIG;
        }
    };
    match &v.output {
        Some(path) => {
            if let Err(e) = write_atomic(path, text.as_bytes()) {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
        None => {
            let _ = stdout.write_all(text.as_bytes());
        }
    }
    code
}

fn report_config(stderr: &mut dyn Write, errs: &[String]) -> i32 {
    let _ = writeln!(stderr, "invalid configuration:");
    for e in errs {
        let _ = writeln!(stderr, "  {e}");
    }
    EXIT_CONFIG
}

type CmdResult = Result<(String, i32), String>;

fn shown_rate(r: f64, clamp: bool) -> f64 {
    if clamp {
        r.max(0.0)
    } else {
        r
    }
}

fn keyrate(v: &Validated, clamp: bool) -> CmdResult {
    let b = protocol::secret_key_rate(&v.channel, &v.detector, &v.protocol).map_err(|e| e.to_string())?;
    let mut line = format!(
        "R={} I_AB={} chi_BE={}",
        fmt_num(shown_rate(b.key_rate, clamp)),
        fmt_num(b.i_ab),
        fmt_num(b.chi_be)
    );
    for (i, l) in b.lambdas.iter().enumerate() {
        line.push_str(&format!(" lambda{}={}", i + 1, fmt_num(*l)));
    }
    line.push('\n');
    Ok((line, EXIT_OK))
}

fn series(v: &Validated) -> Result<Vec<analysis::SeriesSpec>, String> {
    analysis::gain_series(v.fiber, v.detector, v.protocol, &v.gains, v.include_ideal).map_err(|e| e.to_string())
}

fn sweep_csv(res: &SweepResult, clamp: bool) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| e.to_string();
    w.write_record(["axis", "series_label", "key_rate_bits_per_pulse", "i_ab", "chi_be", "status", "reason"])
        .map_err(e)?;
    for s in &res.series {
        for (x, p) in res.axis_values.iter().zip(&s.points) {
            let axis = fmt_num(*x);
            let row = match p {
                PointOutcome::Ok { key_rate, i_ab, chi_be } => [
                    axis,
                    s.label().to_string(),
                    fmt_num(shown_rate(*key_rate, clamp)),
                    fmt_num(*i_ab),
                    fmt_num(*chi_be),
                    "ok".into(),
                    String::new(),
                ],
                PointOutcome::Failed { reason } => [
                    axis,
                    s.label().to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "failed".into(),
                    reason.clone(),
                ],
            };
            w.write_record(&row).map_err(e)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

fn sweep_distance(v: &Validated, clamp: bool) -> CmdResult {
    let res = analysis::sweep_distance(&series(v)?, &v.distances_km).map_err(|e| e.to_string())?;
    Ok((sweep_csv(&res, clamp)?, EXIT_OK))
}

fn sweep_variance(v: &Validated, clamp: bool) -> CmdResult {
    let res = analysis::sweep_modulation_variance(
        v.fiber,
        v.detector,
        v.protocol,
        &v.va_grid,
        &v.va_distances_km,
        &v.gains,
        v.include_ideal,
    )
    .map_err(|e| e.to_string())?;
    Ok((sweep_csv(&res, clamp)?, EXIT_OK))
}

fn max_noise(v: &Validated) -> CmdResult {
    let rows = analysis::sweep_max_noise(&series(v)?, &v.distances_km, v.tolerance).map_err(|e| e.to_string())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| e.to_string();
    w.write_record([
        "distance_km",
        "series_label",
        "max_excess_noise_snu",
        "bracket_lo",
        "bracket_hi",
        "iterations",
        "residual",
        "method",
        "status",
        "reason",
    ])
    .map_err(e)?;
    for (label, reports) in &rows {
        for (l, r) in v.distances_km.iter().zip(reports) {
            let row = match r {
                Ok(b) => [
                    fmt_num(*l),
                    label.clone(),
                    fmt_num(b.root),
                    fmt_num(b.bracket.0),
                    fmt_num(b.bracket.1),
                    b.iterations.to_string(),
                    fmt_num(b.residual),
                    match b.method {
                        RootMethod::Bisection => "bisection".into(),
                        RootMethod::GridScan => "grid_scan".into(),
                    },
                    "ok".into(),
                    String::new(),
                ],
                Err(err) => {
                    let mut row: [String; 10] = Default::default();
                    row[0] = fmt_num(*l);
                    row[1] = label.clone();
                    row[8] = "failed".into();
                    row[9] = err.to_string();
                    row
                }
            };
            w.write_record(&row).map_err(e)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    Ok((String::from_utf8(bytes).map_err(|e| e.to_string())?, EXIT_OK))
}

fn mc_verify(v: &Validated) -> CmdResult {
    let r = mcsim::verify_equivalence(&v.mc, v.z_threshold).map_err(|e| e.to_string())?;
    let cal = &v.mc.calibration;
    let mut s = String::new();
    let mut kv = |k: &str, val: String| s.push_str(&format!("{k}={val}\n"));
    kv("n_samples", r.n_samples.to_string());
    kv("seed", v.mc.seed.to_string());
    kv("amplification", fmt_num(cal.amplification()));
    kv("lo_amplitude", fmt_num(cal.lo_amplitude()));
    kv("electronic_noise_variance", fmt_num(cal.electronic_noise_variance()));
    kv("eta_e", fmt_num(v.mc.eta_e()));
    kv("eta_d", fmt_num(v.mc.eta_d));
    kv("gain", fmt_num(v.mc.gain));
    kv("sample_variance_x", fmt_num(r.sample_variance_x));
    kv("predicted_variance_x", fmt_num(r.predicted_x));
    kv("z_x", fmt_num(r.z_scores.0));
    kv("sample_variance_p", fmt_num(r.sample_variance_p));
    kv("predicted_variance_p", fmt_num(r.predicted_p));
    kv("z_p", fmt_num(r.z_scores.1));
    kv("sample_covariance_xp", fmt_num(r.sample_covariance_xp));
    kv("z_covariance", fmt_num(r.z_covariance));
    kv("z_threshold", fmt_num(r.z_threshold));
    kv("result", if r.pass { "PASS" } else { "FAIL" }.into());
    Ok((s, if r.pass { EXIT_OK } else { EXIT_FAIL }))
}
