//! Run configuration: a TOML file with `[channel]`, `[detector]`, `[protocol]`,
//! `[sweep]`, `[mc]` and `[output]` sections. Every key is optional and
//! defaults to the standard simulation scenario (0.01 SNU excess noise,
//! V = 40, eta_e = 0.9, eta_d = 0.6, beta = 0.956, 0.2 dB/km).

use std::path::{Path, PathBuf};

use cvqkd_core::mcsim::PmConfig;
use cvqkd_core::{ChannelParams, FiberChannel, ModifiedDetector, ProtocolParams, RawCalibration};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub excess_noise: f64,
    pub attenuation_db_per_km: f64,
    pub distance_km: f64,
    /// Overrides `distance_km` for single-point commands when set.
    pub transmittance: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            excess_noise: 0.01,
            attenuation_db_per_km: 0.2,
            distance_km: 30.0,
            transmittance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub eta_d: f64,
    pub eta_e: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            eta_d: 0.6,
            eta_e: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub epr_variance: f64,
    pub beta: f64,
    pub gain: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            epr_variance: 40.0,
            beta: 0.956,
            gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub distance_start_km: f64,
    pub distance_stop_km: f64,
    pub distance_step_km: f64,
    pub gains: Vec<f64>,
    pub include_ideal: bool,
    pub va_start: f64,
    pub va_stop: f64,
    pub va_step: f64,
    pub va_distances_km: Vec<f64>,
    /// `|R|` tolerance of the excess-noise bisection.
    pub tolerance: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            distance_start_km: 0.0,
            distance_stop_km: 100.0,
            distance_step_km: 1.0,
            gains: vec![1.0, 3.0, 10.0],
            include_ideal: true,
            va_start: 0.5,
            va_stop: 100.0,
            va_step: 0.5,
            va_distances_km: vec![30.0, 50.0, 80.0],
            tolerance: cvqkd_core::analysis::DEFAULT_RATE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub amplification: f64,
    pub lo_amplitude: f64,
    pub electronic_noise_variance: f64,
    /// Incoming variance at Bob; derived from channel and protocol when unset.
    pub v_b1: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub z_threshold: f64,
}

impl Default for McSection {
    fn default() -> Self {
        // A^2 X_LO^2 = 900, V_ele = 100, i.e. eta_e = 0.9
        Self {
            amplification: 1.0,
            lo_amplitude: 30.0,
            electronic_noise_variance: 100.0,
            v_b1: None,
            n_samples: 1_000_000,
            seed: 1,
            z_threshold: cvqkd_core::mcsim::DEFAULT_Z_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub channel: ChannelSection,
    pub detector: DetectorSection,
    pub protocol: ProtocolSection,
    pub sweep: SweepSection,
    pub mc: McSection,
    pub output: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub gain: Option<f64>,
    pub eta_d: Option<f64>,
    pub eta_e: Option<f64>,
    pub distance_km: Option<f64>,
    pub excess_noise: Option<f64>,
    pub epr_variance: Option<f64>,
    pub beta: Option<f64>,
    pub alpha_db_per_km: Option<f64>,
}

/// Everything a command needs, already checked.
#[derive(Debug, Clone)]
pub struct Validated {
    pub fiber: FiberChannel,
    pub channel: ChannelParams,
    pub detector: ModifiedDetector,
    pub protocol: ProtocolParams,
    pub distances_km: Vec<f64>,
    pub gains: Vec<f64>,
    pub include_ideal: bool,
    pub va_grid: Vec<f64>,
    pub va_distances_km: Vec<f64>,
    pub tolerance: f64,
    pub mc: PmConfig,
    pub z_threshold: f64,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![format!("config: {}", e.message())])
    }

    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("config: cannot read {}: {e}", path.display())])?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.output.path = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.mc.seed = v;
        }
        if let Some(v) = o.gain {
            self.protocol.gain = v;
        }
        if let Some(v) = o.eta_d {
            self.detector.eta_d = v;
        }
        if let Some(v) = o.eta_e {
            self.detector.eta_e = v;
        }
        if let Some(v) = o.distance_km {
            self.channel.distance_km = v;
            self.channel.transmittance = None;
        }
        if let Some(v) = o.excess_noise {
            self.channel.excess_noise = v;
        }
        if let Some(v) = o.epr_variance {
            self.protocol.epr_variance = v;
        }
        if let Some(v) = o.beta {
            self.protocol.beta = v;
        }
        if let Some(v) = o.alpha_db_per_km {
            self.channel.attenuation_db_per_km = v;
        }
    }

    /// Checks every field and reports all problems at once, one per line.
    pub fn validate(&self) -> Result<Validated, Vec<String>> {
        let mut errs = Vec::new();
        fn check<T>(errs: &mut Vec<String>, field: &str, r: &cvqkd_core::Result<T>) {
            if let Err(e) = r {
                errs.push(format!("{field}: {e}"));
            }
        }

        let c = &self.channel;
        let fiber = FiberChannel::new(c.attenuation_db_per_km, c.excess_noise);
        check(&mut errs, "channel", &fiber);
        let channel = match c.transmittance {
            Some(t) => ChannelParams::new(t, c.excess_noise),
            None => ChannelParams::from_length(c.distance_km, c.attenuation_db_per_km, c.excess_noise),
        };
        check(&mut errs, "channel", &channel);

        let d = &self.detector;
        check(&mut errs, "detector", &ModifiedDetector::new(d.eta_d, d.eta_e));
        let p = &self.protocol;
        check(&mut errs, "protocol", &ProtocolParams::new(p.epr_variance, p.beta, p.gain));

        let s = &self.sweep;
        let distances = grid(s.distance_start_km, s.distance_stop_km, s.distance_step_km);
        if let Err(e) = &distances {
            errs.push(format!("sweep.distance_*: {e}"));
        }
        let va_grid = grid(s.va_start, s.va_stop, s.va_step);
        match &va_grid {
            Err(e) => errs.push(format!("sweep.va_*: {e}")),
            Ok(g) if g[0] <= 0.0 => errs.push("sweep.va_start: modulation variance must be > 0".into()),
            Ok(_) => {}
        }
        if s.gains.is_empty() && !s.include_ideal {
            errs.push("sweep.gains: no series requested".into());
        }
        for &g in &s.gains {
            if !(g >= 1.0) || !g.is_finite() {
                errs.push(format!("sweep.gains: gain {g} must be >= 1"));
            }
        }
        if s.va_distances_km.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            errs.push("sweep.va_distances_km: distances must be >= 0".into());
        }
        if !(s.tolerance > 0.0) {
            errs.push(format!("sweep.tolerance: {} must be > 0", s.tolerance));
        }

        let m = &self.mc;
        if !(m.z_threshold > 0.0) {
            errs.push(format!("mc.z_threshold: {} must be > 0", m.z_threshold));
        }
        if m.n_samples < cvqkd_core::mcsim::MIN_VERIFY_SAMPLES {
            errs.push(format!(
                "mc.n_samples: {} is below the minimum {}",
                m.n_samples,
                cvqkd_core::mcsim::MIN_VERIFY_SAMPLES
            ));
        }
        let cal = RawCalibration::new(m.amplification, m.lo_amplitude, m.electronic_noise_variance);
        let v_b1 = m.v_b1.unwrap_or_else(|| {
            let t = channel.as_ref().map(|c| c.transmittance()).unwrap_or(1.0);
            t * (p.epr_variance - 1.0 + c.excess_noise) + 1.0
        });
        let mc = cal.and_then(|cal| PmConfig::new(cal, d.eta_d, p.gain, v_b1, m.n_samples, m.seed));
        if let Err(e) = &mc {
            errs.push(format!("mc: {e}"));
        }

        if !errs.is_empty() {
            return Err(errs);
        }
        Ok(Validated {
            fiber: fiber.unwrap(),
            channel: channel.unwrap(),
            detector: ModifiedDetector::new(d.eta_d, d.eta_e).unwrap(),
            protocol: ProtocolParams::new(p.epr_variance, p.beta, p.gain).unwrap(),
            distances_km: distances.unwrap(),
            gains: s.gains.clone(),
            include_ideal: s.include_ideal,
            va_grid: va_grid.unwrap(),
            va_distances_km: s.va_distances_km.clone(),
            tolerance: s.tolerance,
            mc: mc.unwrap(),
            z_threshold: m.z_threshold,
            output: self.output.path.clone(),
        })
    }
}

/// `start, start + step, ...` up to `stop` inclusive (to within half a step).
fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err("grid bounds must be finite".into());
    }
    if !(step > 0.0) {
        return Err(format!("step {step} must be > 0"));
    }
    if stop < start {
        return Err(format!("stop {stop} is below start {start}"));
    }
    let n = ((stop - start) / step + 0.5).floor() as usize;
    if n > 1_000_000 {
        return Err(format!("grid has {n} points; refusing"));
    }
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}
