//! Sample-level simulation of the prepare-and-measure detector outputs.
//!
//! Each sample draws the incoming quadratures of B1, one vacuum pair and the
//! raw electronic noise, forms the raw detector outputs
//!
//! ```text
//! x_raw = A X_LO (sqrt(eta_d) sqrt(g) x_B1 + sqrt(1 - eta_d) x_v1) + X_ele
//! p_raw = A X_LO (sqrt(eta_d) p_B1 / sqrt(g) + sqrt(1 - eta_d) p_v1) + P_ele
//! ```
//!
//! and normalizes them by `sqrt(u_s')`. The sample variances are compared
//! with the entanglement-based prediction.
//!
//! Samples are generated in fixed-size shards. Shard `k` draws from a ChaCha8
//! stream keyed by `(seed, k)`, so the sample sequence, and every statistic
//! accumulated in shard order, is independent of the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::detector::{eta_e_from_raw, RawCalibration};
use crate::error::{domain, Error, Result};

/// Samples per shard.
pub const SHARD_SIZE: usize = 1 << 16;

/// Minimum sample count accepted by [`verify_equivalence`].
pub const MIN_VERIFY_SAMPLES: usize = 10_000;

pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmConfig {
    pub calibration: RawCalibration,
    pub eta_d: f64,
    pub gain: f64,
    /// Variance of the incoming mode B1, SNU.
    pub v_b1: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl PmConfig {
    pub fn new(
        calibration: RawCalibration,
        eta_d: f64,
        gain: f64,
        v_b1: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(eta_d > 0.0 && eta_d <= 1.0) {
            return Err(domain("detection efficiency eta_d", eta_d, "in (0, 1]"));
        }
        if !(gain >= 1.0) || !gain.is_finite() {
            return Err(domain("deamplifying gain", gain, ">= 1"));
        }
        if !(v_b1 >= 1.0) || !v_b1.is_finite() {
            return Err(domain("incoming variance V_B1", v_b1, ">= 1"));
        }
        if n_samples == 0 {
            return Err(Error::Argument("n_samples must be positive".into()));
        }
        Ok(Self {
            calibration,
            eta_d,
            gain,
            v_b1,
            n_samples,
            seed,
        })
    }

    pub fn eta_e(&self) -> f64 {
        eta_e_from_raw(&self.calibration)
    }

    fn shard_count(&self) -> usize {
        self.n_samples.div_ceil(SHARD_SIZE)
    }

    fn shard_len(&self, shard: usize) -> usize {
        SHARD_SIZE.min(self.n_samples - shard * SHARD_SIZE)
    }
}

/// One raw detector reading, in the detector's own units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub x: f64,
    pub p: f64,
}

impl RawSample {
    /// Divides both quadratures by `sqrt(snu)`.
    pub fn normalized(&self, snu: f64) -> (f64, f64) {
        let s = snu.sqrt();
        (self.x / s, self.p / s)
    }
}

#[derive(Clone, Copy)]
struct SampleModel {
    scale: f64,
    sig_x: f64,
    sig_p: f64,
    vac: f64,
    sd_b1: f64,
    sd_ele: f64,
}

impl SampleModel {
    fn new(cfg: &PmConfig) -> Self {
        let sqrt_eta = cfg.eta_d.sqrt();
        let sqrt_g = cfg.gain.sqrt();
        Self {
            scale: cfg.calibration.amplification() * cfg.calibration.lo_amplitude(),
            sig_x: sqrt_eta * sqrt_g,
            sig_p: sqrt_eta / sqrt_g,
            vac: (1.0 - cfg.eta_d).sqrt(),
            sd_b1: cfg.v_b1.sqrt(),
            sd_ele: cfg.calibration.electronic_noise_variance().sqrt(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> RawSample {
        // fixed draw order: x_B1, p_B1, x_v1, p_v1, X_ele, P_ele
        let x_b1: f64 = self.sd_b1 * rng.sample::<f64, _>(StandardNormal);
        let p_b1: f64 = self.sd_b1 * rng.sample::<f64, _>(StandardNormal);
        let x_v1: f64 = rng.sample(StandardNormal);
        let p_v1: f64 = rng.sample(StandardNormal);
        let x_ele: f64 = self.sd_ele * rng.sample::<f64, _>(StandardNormal);
        let p_ele: f64 = self.sd_ele * rng.sample::<f64, _>(StandardNormal);
        RawSample {
            x: self.scale * (self.sig_x * x_b1 + self.vac * x_v1) + x_ele,
            p: self.scale * (self.sig_p * p_b1 + self.vac * p_v1) + p_ele,
        }
    }
}

fn shard_rng(seed: u64, shard: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    rng
}

/// Raw (un-normalized) readings, deterministic in `(seed, n_samples)`.
pub fn simulate_pm_raw(cfg: &PmConfig) -> impl Iterator<Item = RawSample> {
    let cfg = *cfg;
    let model = SampleModel::new(&cfg);
    (0..cfg.shard_count()).flat_map(move |shard| {
        let mut rng = shard_rng(cfg.seed, shard);
        let len = cfg.shard_len(shard);
        (0..len).map(move |_| model.draw(&mut rng))
    })
}

/// Readings normalized by the modified shot-noise unit `u_s'`.
pub fn simulate_pm(cfg: &PmConfig) -> impl Iterator<Item = (f64, f64)> {
    let snu = cfg.calibration.modified_snu();
    simulate_pm_raw(cfg).map(move |s| s.normalized(snu))
}

/// Predicted `(V_x, V_p)` of the entanglement-based model at Bob's detector.
pub fn eb_predicted_variance(cfg: &PmConfig) -> (f64, f64) {
    let eta_e = cfg.eta_e();
    let (eta_d, g, v) = (cfg.eta_d, cfg.gain, cfg.v_b1);
    let vx = eta_e * (eta_d * g * v + (1.0 - eta_d)) + (1.0 - eta_e);
    let vp = eta_e * (eta_d * v / g + (1.0 - eta_d)) + (1.0 - eta_e);
    (vx, vp)
}

/// Running zero-mean-agnostic second moments of `(x, p)` pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    pub count: u64,
    pub mean_x: f64,
    pub mean_p: f64,
    m2_x: f64,
    m2_p: f64,
    c_xp: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64, p: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dp = p - self.mean_p;
        self.mean_x += dx / n;
        self.mean_p += dp / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_p += dp * (p - self.mean_p);
        self.c_xp += dx * (p - self.mean_p);
    }

    /// Pairwise combination of two disjoint sample sets.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dp = other.mean_p - self.mean_p;
        Self {
            count: self.count + other.count,
            mean_x: self.mean_x + dx * nb / n,
            mean_p: self.mean_p + dp * nb / n,
            m2_x: self.m2_x + other.m2_x + dx * dx * na * nb / n,
            m2_p: self.m2_p + other.m2_p + dp * dp * na * nb / n,
            c_xp: self.c_xp + other.c_xp + dx * dp * na * nb / n,
        }
    }

    /// Unbiased sample variances and covariance `(var_x, var_p, cov_xp)`.
    pub fn sample_moments(&self) -> (f64, f64, f64) {
        let d = (self.count.max(2) - 1) as f64;
        (self.m2_x / d, self.m2_p / d, self.c_xp / d)
    }
}

/// Accumulates the normalized samples shard by shard, in parallel, and merges
/// the shard results in shard order.
pub fn accumulate_moments(cfg: &PmConfig) -> MomentAccumulator {
    let model = SampleModel::new(cfg);
    let norm = cfg.calibration.modified_snu().sqrt();
    let shards: Vec<MomentAccumulator> = (0..cfg.shard_count())
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(cfg.seed, shard);
            let mut acc = MomentAccumulator::default();
            for _ in 0..cfg.shard_len(shard) {
                let s = model.draw(&mut rng);
                acc.push(s.x / norm, s.p / norm);
            }
            acc
        })
        .collect();
    shards
        .iter()
        .fold(MomentAccumulator::default(), |acc, s| acc.merge(s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub n_samples: usize,
    pub sample_variance_x: f64,
    pub sample_variance_p: f64,
    pub predicted_x: f64,
    pub predicted_p: f64,
    /// `(z_x, z_p)`.
    pub z_scores: (f64, f64),
    pub sample_covariance_xp: f64,
    /// Covariance divided by its standard error `sqrt(V_x V_p / (n - 1))`.
    pub z_covariance: f64,
    pub z_threshold: f64,
    pub pass: bool,
}

/// Compares sample variances with [`eb_predicted_variance`].
pub fn verify_equivalence(cfg: &PmConfig, z_threshold: f64) -> Result<EquivalenceReport> {
    verify_against(cfg, eb_predicted_variance(cfg), z_threshold)
}

/// Compares sample variances with an arbitrary prediction `(V_x, V_p)`,
/// using the normal-theory standard error `V sqrt(2 / (n - 1))`.
pub fn verify_against(
    cfg: &PmConfig,
    predicted: (f64, f64),
    z_threshold: f64,
) -> Result<EquivalenceReport> {
    if cfg.n_samples < MIN_VERIFY_SAMPLES {
        return Err(Error::Argument(format!(
            "need at least {MIN_VERIFY_SAMPLES} samples, got {}",
            cfg.n_samples
        )));
    }
    if !(z_threshold > 0.0) {
        return Err(domain("z threshold", z_threshold, "> 0"));
    }
    let (vx, vp, cxp) = accumulate_moments(cfg).sample_moments();
    let dof = (cfg.n_samples - 1) as f64;
    let se = |v: f64| v * (2.0 / dof).sqrt();
    let z_x = (vx - predicted.0) / se(predicted.0);
    let z_p = (vp - predicted.1) / se(predicted.1);
    let z_covariance = cxp / (predicted.0 * predicted.1 / dof).sqrt();
    Ok(EquivalenceReport {
        n_samples: cfg.n_samples,
        sample_variance_x: vx,
        sample_variance_p: vp,
        predicted_x: predicted.0,
        predicted_p: predicted.1,
        z_scores: (z_x, z_p),
        sample_covariance_xp: cxp,
        z_covariance,
        z_threshold,
        pass: z_x.abs() < z_threshold && z_p.abs() < z_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(a: f64, x_lo: f64, v_ele: f64, eta_d: f64, g: f64, v_b1: f64, n: usize) -> PmConfig {
        PmConfig::new(RawCalibration::new(a, x_lo, v_ele).unwrap(), eta_d, g, v_b1, n, 7).unwrap()
    }

    #[test]
    fn predicted_variance_examples() {
        let c = cfg(2.0, 3.0, 0.0, 1.0, 1.0, 5.5, 10);
        assert_eq!(eb_predicted_variance(&c), (5.5, 5.5));

        let c = cfg(1.0, 10.0, 37.0, 0.4, 1.0, 1.0, 10);
        let (vx, vp) = eb_predicted_variance(&c);
        assert_abs_diff_eq!(vx, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vp, 1.0, epsilon = 1e-15);

        // 0.9 (0.6 * 3 * 4.901 + 0.4) + 0.1
        let c = cfg(3.0, 10.0, 100.0, 0.6, 3.0, 4.901, 10);
        let (vx, vp) = eb_predicted_variance(&c);
        assert_abs_diff_eq!(vx, 8.39962, epsilon = 1e-12);
        // 0.9 (0.6 * 4.901 / 3 + 0.4) + 0.1
        assert_abs_diff_eq!(vp, 1.34218, epsilon = 1e-12);
    }

    #[test]
    fn stream_is_deterministic() {
        let c = cfg(1.0, 10.0, 20.0, 0.6, 3.0, 4.0, 3 * SHARD_SIZE / 2);
        let a: Vec<_> = simulate_pm(&c).collect();
        let b: Vec<_> = simulate_pm(&c).collect();
        assert_eq!(a.len(), c.n_samples);
        assert_eq!(a, b);
        let other = PmConfig { seed: 8, ..c };
        assert_ne!(a[0], simulate_pm(&other).next().unwrap());
    }

    #[test]
    fn parallel_accumulation_matches_sequential_stream() {
        let c = cfg(1.0, 10.0, 20.0, 0.6, 3.0, 4.0, 3 * SHARD_SIZE + 123);
        let mut per_shard = Vec::new();
        let mut stream = simulate_pm(&c);
        for shard in 0..c.shard_count() {
            let mut acc = MomentAccumulator::default();
            for _ in 0..c.shard_len(shard) {
                let (x, p) = stream.next().unwrap();
                acc.push(x, p);
            }
            per_shard.push(acc);
        }
        let seq = per_shard
            .iter()
            .fold(MomentAccumulator::default(), |a, s| a.merge(s));
        assert_eq!(seq, accumulate_moments(&c));
    }

    #[test]
    fn merge_matches_single_pass() {
        let data: Vec<(f64, f64)> = (0..1000)
            .map(|i| {
                let t = i as f64;
                ((t * 0.37).sin() * 3.0 + 1.0, (t * 0.11).cos() - t * 1e-3)
            })
            .collect();
        let mut whole = MomentAccumulator::default();
        data.iter().for_each(|&(x, p)| whole.push(x, p));
        let mut a = MomentAccumulator::default();
        let mut b = MomentAccumulator::default();
        data[..313].iter().for_each(|&(x, p)| a.push(x, p));
        data[313..].iter().for_each(|&(x, p)| b.push(x, p));
        let m = a.merge(&b).sample_moments();
        let w = whole.sample_moments();
        assert_abs_diff_eq!(m.0, w.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.1, w.1, epsilon = 1e-12);
        assert_abs_diff_eq!(m.2, w.2, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_chain_is_standard_normal() {
        let c = cfg(1.0, 5.0, 0.0, 1.0, 1.0, 1.0, 200_000);
        let r = verify_against(&c, (1.0, 1.0), 4.0).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn amplifier_reshapes_variances() {
        let c = cfg(1.0, 5.0, 0.0, 1.0, 4.0, 1.0, 200_000);
        let r = verify_against(&c, (4.0, 0.25), 4.0).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn too_few_samples_rejected() {
        let c = cfg(1.0, 5.0, 0.0, 1.0, 1.0, 1.0, 100);
        assert!(matches!(verify_equivalence(&c, 4.0), Err(Error::Argument(_))));
    }

    #[test]
    fn config_validation() {
        let cal = RawCalibration::new(1.0, 1.0, 0.0).unwrap();
        assert!(PmConfig::new(cal, 0.0, 1.0, 1.0, 10, 0).is_err());
        assert!(PmConfig::new(cal, 0.5, 0.9, 1.0, 10, 0).is_err());
        assert!(PmConfig::new(cal, 0.5, 1.0, 0.5, 10, 0).is_err());
        assert!(PmConfig::new(cal, 0.5, 1.0, 1.0, 0, 0).is_err());
    }
}
