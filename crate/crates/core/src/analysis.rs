//! Parameter sweeps and root finding on top of [`crate::protocol`].
//!
//! Grid points are independent and evaluated in parallel with rayon; results
//! are always collected in axis order.

use rayon::prelude::*;

use crate::detector::ModifiedDetector;
use crate::error::{Error, Result};
use crate::protocol::{secret_key_rate, FiberChannel, ProtocolParams};

/// Default `|R|` tolerance for the excess-noise bisection, bits/pulse.
pub const DEFAULT_RATE_TOL: f64 = 1e-8;
/// Bisection also stops once the bracket is this narrow.
pub const BRACKET_WIDTH_TOL: f64 = 1e-9;
/// First upper bracket for the excess noise, doubled until the rate is negative.
pub const INITIAL_NOISE_BRACKET: f64 = 0.1;
/// Hard cap on the excess-noise bracket, SNU.
pub const NOISE_CAP: f64 = 10.0;
/// Step of the fallback scan used when the rate is not monotone in the noise.
pub const FALLBACK_SCAN_STEP: f64 = 1e-5;

/// One curve of a sweep: a detector and protocol setting plus a label.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub label: String,
    pub channel: FiberChannel,
    pub detector: ModifiedDetector,
    pub protocol: ProtocolParams,
    /// Fixed distance for sweeps whose axis is not the distance.
    pub distance_km: Option<f64>,
}

/// Outcome at a single grid point. Failures carry the reason instead of a NaN.
#[derive(Debug, Clone, PartialEq)]
pub enum PointOutcome {
    Ok { key_rate: f64, i_ab: f64, chi_be: f64 },
    Failed { reason: String },
}

impl PointOutcome {
    pub fn key_rate(&self) -> Option<f64> {
        match self {
            PointOutcome::Ok { key_rate, .. } => Some(*key_rate),
            PointOutcome::Failed { .. } => None,
        }
    }

    fn from_result(r: Result<crate::protocol::KeyRateBreakdown>) -> Self {
        match r {
            Ok(b) => PointOutcome::Ok {
                key_rate: b.key_rate,
                i_ab: b.i_ab,
                chi_be: b.chi_be,
            },
            Err(e) => PointOutcome::Failed {
                reason: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub spec: SeriesSpec,
    pub points: Vec<PointOutcome>,
}

impl SweepSeries {
    pub fn label(&self) -> &str {
        &self.spec.label
    }

    /// Key rates, with failed points as `None`.
    pub fn key_rates(&self) -> Vec<Option<f64>> {
        self.points.iter().map(PointOutcome::key_rate).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    pub series: Vec<SweepSeries>,
}

impl SweepResult {
    pub fn series_by_label(&self, label: &str) -> Option<&SweepSeries> {
        self.series.iter().find(|s| s.spec.label == label)
    }
}

/// Label used for the amplifier series with gain `g`.
pub fn gain_label(gain: f64) -> String {
    format!("g={gain}")
}

pub const IDEAL_LABEL: &str = "ideal";

/// One series per gain (detector as given) plus, optionally, the
/// perfect-efficiency reference (`eta_d = 1`, no amplifier).
pub fn gain_series(
    channel: FiberChannel,
    detector: ModifiedDetector,
    protocol: ProtocolParams,
    gains: &[f64],
    include_ideal: bool,
) -> Result<Vec<SeriesSpec>> {
    let mut out = Vec::with_capacity(gains.len() + 1);
    if include_ideal {
        out.push(SeriesSpec {
            label: IDEAL_LABEL.to_string(),
            channel,
            detector: detector.with_ideal_efficiency(),
            protocol: protocol.with_gain(1.0)?,
            distance_km: None,
        });
    }
    for &g in gains {
        out.push(SeriesSpec {
            label: gain_label(g),
            channel,
            detector,
            protocol: protocol.with_gain(g)?,
            distance_km: None,
        });
    }
    Ok(out)
}

fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument(format!("{what} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("{what} grid has non-finite values")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(format!("{what} grid is not strictly increasing")));
    }
    Ok(())
}

/// Key rate against distance for each series.
pub fn sweep_distance(series: &[SeriesSpec], distances_km: &[f64]) -> Result<SweepResult> {
    check_increasing(distances_km, "distance")?;
    let series = series
        .iter()
        .map(|spec| {
            let points = distances_km
                .par_iter()
                .map(|&l| {
                    PointOutcome::from_result(
                        spec.channel
                            .at_length(l)
                            .and_then(|ch| secret_key_rate(&ch, &spec.detector, &spec.protocol)),
                    )
                })
                .collect();
            SweepSeries {
                spec: spec.clone(),
                points,
            }
        })
        .collect();
    Ok(SweepResult {
        axis_name: "distance_km".into(),
        axis_values: distances_km.to_vec(),
        series,
    })
}

/// Key rate against modulation variance `V_A = V - 1`, one series per
/// (distance, gain) pair plus the ideal reference per distance.
pub fn sweep_modulation_variance(
    channel: FiberChannel,
    detector: ModifiedDetector,
    protocol: ProtocolParams,
    va_grid: &[f64],
    distances_km: &[f64],
    gains: &[f64],
    include_ideal: bool,
) -> Result<SweepResult> {
    check_increasing(va_grid, "modulation variance")?;
    if let Some(v) = va_grid.iter().find(|&&v| v <= 0.0) {
        return Err(Error::Argument(format!(
            "modulation variance grid must be positive, found {v}"
        )));
    }
    let mut specs = Vec::new();
    for &l in distances_km {
        for mut s in gain_series(channel, detector, protocol, gains, include_ideal)? {
            s.label = format!("L={l}km {}", s.label);
            s.distance_km = Some(l);
            specs.push(s);
        }
    }
    let series = specs
        .into_iter()
        .map(|spec| {
            let l = spec.distance_km.unwrap_or(0.0);
            let points = va_grid
                .par_iter()
                .map(|&va| {
                    let r = spec.channel.at_length(l).and_then(|ch| {
                        let pp = spec.protocol.with_epr_variance(va + 1.0)?;
                        secret_key_rate(&ch, &spec.detector, &pp)
                    });
                    PointOutcome::from_result(r)
                })
                .collect();
            SweepSeries { spec, points }
        })
        .collect();
    Ok(SweepResult {
        axis_name: "modulation_variance_snu".into(),
        axis_values: va_grid.to_vec(),
        series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMethod {
    Bisection,
    /// The rate was not monotone on the samples; located by a fine scan.
    GridScan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionReport {
    pub root: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// Function value at `root`.
    pub residual: f64,
    pub method: RootMethod,
}

/// Root of a function that is positive at `lo` and non-positive at `hi`.
///
/// Stops when `|f| <= tol` or the bracket is narrower than `width_tol`. Every
/// evaluation is recorded in `samples`. Never evaluates outside `[lo, hi]`.
pub fn bisect_sign_change<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    width_tol: f64,
    samples: &mut Vec<(f64, f64)>,
) -> Result<BisectionReport>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::Argument(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let val = f(mid)?;
        samples.push((mid, val));
        iterations += 1;
        if val.abs() <= tol || (hi - lo) <= width_tol || mid <= lo || mid >= hi {
            return Ok(BisectionReport {
                root: mid,
                bracket: (lo, hi),
                iterations,
                residual: val,
                method: RootMethod::Bisection,
            });
        }
        if val > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Largest channel excess noise at which the key rate stays non-negative.
///
/// The upper bracket starts at 0.1 SNU and doubles (capped at 10) until the
/// rate turns negative. If the sampled rates turn out non-monotone in the
/// noise the root is re-located by a scan at [`FALLBACK_SCAN_STEP`].
pub fn max_tolerable_excess_noise(
    channel: FiberChannel,
    detector: &ModifiedDetector,
    protocol: &ProtocolParams,
    distance_km: f64,
    tol: f64,
) -> Result<BisectionReport> {
    let rate = |eps: f64| -> Result<f64> {
        let ch = channel.with_excess_noise(eps).at_length(distance_km)?;
        Ok(secret_key_rate(&ch, detector, protocol)?.key_rate)
    };
    let mut samples = Vec::new();

    let r0 = rate(0.0)?;
    samples.push((0.0, r0));
    if !(r0 > 0.0) {
        return Err(Error::NoPositiveRate { key_rate: r0 });
    }

    let mut lo = 0.0;
    let mut hi = INITIAL_NOISE_BRACKET;
    loop {
        let r = rate(hi)?;
        samples.push((hi, r));
        if r <= 0.0 {
            break;
        }
        if hi >= NOISE_CAP {
            return Err(Error::NoiseCapReached { cap: NOISE_CAP });
        }
        lo = hi;
        hi = (2.0 * hi).min(NOISE_CAP);
    }
    if samples.last().map(|s| s.1) == Some(0.0) {
        return Ok(BisectionReport {
            root: hi,
            bracket: (lo, hi),
            iterations: 0,
            residual: 0.0,
            method: RootMethod::Bisection,
        });
    }

    let report = bisect_sign_change(&rate, lo, hi, tol, BRACKET_WIDTH_TOL, &mut samples)?;
    if is_nonincreasing(&samples) {
        return Ok(report);
    }
    scan_then_bisect(rate, hi, tol)
}

fn is_nonincreasing(samples: &[(f64, f64)]) -> bool {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    s.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12)
}

fn scan_then_bisect<F>(mut f: F, hi: f64, tol: f64) -> Result<BisectionReport>
where
    F: FnMut(f64) -> Result<f64>,
{
    let steps = (hi / FALLBACK_SCAN_STEP).ceil() as usize;
    let mut prev = 0.0;
    for k in 1..=steps {
        let x = (k as f64 * FALLBACK_SCAN_STEP).min(hi);
        let v = f(x)?;
        if v <= 0.0 {
            let mut samples = Vec::new();
            let mut report = bisect_sign_change(&mut f, prev, x, tol, BRACKET_WIDTH_TOL, &mut samples)?;
            report.method = RootMethod::GridScan;
            report.iterations += k;
            return Ok(report);
        }
        prev = x;
    }
    Err(Error::Numerical("no sign change found by the fallback scan".into()))
}

/// Maximal tolerable excess noise for each (distance, series) pair.
/// Per-point failures are returned in place.
pub fn sweep_max_noise(
    series: &[SeriesSpec],
    distances_km: &[f64],
    tol: f64,
) -> Result<Vec<(String, Vec<Result<BisectionReport>>)>> {
    check_increasing(distances_km, "distance")?;
    Ok(series
        .iter()
        .map(|spec| {
            let reports = distances_km
                .par_iter()
                .map(|&l| {
                    max_tolerable_excess_noise(spec.channel, &spec.detector, &spec.protocol, l, tol)
                })
                .collect();
            (spec.label.clone(), reports)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainLadderReport {
    pub distance_km: f64,
    /// `eta_d = 1`, no amplifier.
    pub ideal_rate: f64,
    pub gains: Vec<f64>,
    pub rates: Vec<f64>,
    /// `|R(g) - R_ideal|` along the ladder.
    pub gaps: Vec<f64>,
    pub monotone_decreasing: bool,
    pub final_gap: f64,
}

/// How fast the key rate approaches the perfect-efficiency rate as the gain grows.
pub fn asymptotic_gain_check(
    channel: FiberChannel,
    detector: &ModifiedDetector,
    protocol: &ProtocolParams,
    distances_km: &[f64],
    gain_ladder: &[f64],
) -> Result<Vec<GainLadderReport>> {
    check_increasing(gain_ladder, "gain")?;
    let ideal_det = detector.with_ideal_efficiency();
    let ideal_pp = protocol.with_gain(1.0)?;
    distances_km
        .iter()
        .map(|&l| {
            let ch = channel.at_length(l)?;
            let ideal_rate = secret_key_rate(&ch, &ideal_det, &ideal_pp)?.key_rate;
            let rates = gain_ladder
                .iter()
                .map(|&g| Ok(secret_key_rate(&ch, detector, &protocol.with_gain(g)?)?.key_rate))
                .collect::<Result<Vec<_>>>()?;
            let gaps: Vec<f64> = rates.iter().map(|r| (r - ideal_rate).abs()).collect();
            let monotone_decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
            Ok(GainLadderReport {
                distance_km: l,
                ideal_rate,
                gains: gain_ladder.to_vec(),
                rates,
                final_gap: *gaps.last().unwrap_or(&f64::NAN),
                gaps,
                monotone_decreasing,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn standard() -> (FiberChannel, ModifiedDetector, ProtocolParams) {
        (
            FiberChannel::new(0.2, 0.01).unwrap(),
            ModifiedDetector::new(0.6, 0.9).unwrap(),
            ProtocolParams::new(40.0, 0.956, 1.0).unwrap(),
        )
    }

    #[test]
    fn bisection_finds_linear_root() {
        let mut samples = Vec::new();
        let r = bisect_sign_change(|x| Ok(0.3 - x), 0.0, 1.0, 1e-12, 1e-15, &mut samples).unwrap();
        assert_abs_diff_eq!(r.root, 0.3, epsilon = 1e-12);
        assert!(r.residual.abs() <= 1e-12);
        assert!(samples.iter().all(|(x, _)| (0.0..=1.0).contains(x)));
        assert!(bisect_sign_change(Ok, 1.0, 1.0, 1e-9, 1e-9, &mut samples).is_err());
    }

    #[test]
    fn fallback_scan_handles_bumps() {
        // positive, dips, recovers, then crosses zero at 0.5
        let f = |x: f64| Ok(if x < 0.5 { 0.1 + 0.05 * (40.0 * x).sin() } else { 0.5 - x });
        let r = scan_then_bisect(f, 1.0, 1e-12).unwrap();
        assert_eq!(r.method, RootMethod::GridScan);
        assert_abs_diff_eq!(r.root, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn grid_validation() {
        let (ch, det, pp) = standard();
        let s = gain_series(ch, det, pp, &[1.0], false).unwrap();
        assert!(sweep_distance(&s, &[1.0, 1.0]).is_err());
        assert!(sweep_distance(&s, &[]).is_err());
        assert!(sweep_modulation_variance(ch, det, pp, &[0.0, 1.0], &[10.0], &[1.0], false).is_err());
    }

    #[test]
    fn failed_points_are_recorded() {
        let (ch, det, pp) = standard();
        let s = gain_series(ch, det, pp, &[1.0], false).unwrap();
        // negative lengths are outside the channel domain
        let r = sweep_distance(&s, &[-5.0, 10.0]).unwrap();
        assert!(matches!(r.series[0].points[0], PointOutcome::Failed { .. }));
        assert!(r.series[0].points[1].key_rate().is_some());
    }

    #[test]
    fn zero_distance_is_best() {
        let (ch, det, pp) = standard();
        let specs = gain_series(ch, det, pp, &[1.0, 3.0, 10.0], true).unwrap();
        let r = sweep_distance(&specs, &[0.0, 1.0, 5.0, 20.0]).unwrap();
        for s in &r.series {
            let rates: Vec<f64> = s.key_rates().into_iter().map(Option::unwrap).collect();
            assert!(rates.windows(2).all(|w| w[1] < w[0]), "{}: {rates:?}", s.label());
        }
    }

    #[test]
    fn no_positive_rate_is_reported() {
        let (ch, det, _) = standard();
        let pp = ProtocolParams::new(40.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            max_tolerable_excess_noise(ch, &det, &pp, 100.0, 1e-8),
            Err(Error::NoPositiveRate { .. })
        ));
    }

    #[test]
    fn ideal_detector_ladder_is_flat() {
        let (ch, det, pp) = standard();
        let ideal = det.with_ideal_efficiency();
        let reports =
            asymptotic_gain_check(ch, &ideal, &pp, &[10.0, 30.0], &[10.0, 100.0, 1e4, 1e6]).unwrap();
        for r in reports {
            assert!(r.gaps.iter().all(|g| *g < 1e-10), "{:?}", r.gaps);
        }
    }
}
