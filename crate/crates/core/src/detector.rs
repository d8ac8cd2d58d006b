//! Trusted-detector parametrizations.
//!
//! The conventional model describes a homodyne detector by its efficiency
//! `eta_d` and an additive electronic noise `v_el` in shot-noise units
//! `u_s = A^2 X_LO^2`. The modified model replaces the additive noise by a
//! second beamsplitter of transmittance `eta_e = 1 / (1 + v_el)` and measures
//! in units of `u_s' = A^2 X_LO^2 + V_ele`. The two agree once rescaled by
//! `s = u_s' / u_s = 1 + v_el`.

use crate::error::{domain, Result};

/// Raw detector calibration, in the detector's own (arbitrary) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCalibration {
    amplification: f64,
    lo_amplitude: f64,
    electronic_noise_variance: f64,
}

impl RawCalibration {
    pub fn new(amplification: f64, lo_amplitude: f64, electronic_noise_variance: f64) -> Result<Self> {
        if !(amplification > 0.0) || !amplification.is_finite() {
            return Err(domain("detector amplification A", amplification, "> 0"));
        }
        if !(lo_amplitude > 0.0) || !lo_amplitude.is_finite() {
            return Err(domain("local oscillator amplitude X_LO", lo_amplitude, "> 0"));
        }
        if !(electronic_noise_variance >= 0.0) || !electronic_noise_variance.is_finite() {
            return Err(domain(
                "raw electronic noise variance V_ele",
                electronic_noise_variance,
                ">= 0",
            ));
        }
        Ok(Self {
            amplification,
            lo_amplitude,
            electronic_noise_variance,
        })
    }

    pub fn amplification(&self) -> f64 {
        self.amplification
    }

    pub fn lo_amplitude(&self) -> f64 {
        self.lo_amplitude
    }

    pub fn electronic_noise_variance(&self) -> f64 {
        self.electronic_noise_variance
    }

    /// Conventional shot-noise unit `u_s = A^2 X_LO^2`.
    pub fn conventional_snu(&self) -> f64 {
        let a = self.amplification * self.lo_amplitude;
        a * a
    }

    /// Modified shot-noise unit `u_s' = A^2 X_LO^2 + V_ele`.
    pub fn modified_snu(&self) -> f64 {
        self.conventional_snu() + self.electronic_noise_variance
    }

    /// Electronic noise in conventional shot-noise units, `V_ele / u_s`.
    pub fn v_el(&self) -> f64 {
        self.electronic_noise_variance / self.conventional_snu()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionalDetector {
    pub eta_d: f64,
    pub v_el: f64,
}

impl ConventionalDetector {
    pub fn new(eta_d: f64, v_el: f64) -> Result<Self> {
        check_efficiency(eta_d)?;
        if !(v_el >= 0.0) || !v_el.is_finite() {
            return Err(domain("electronic noise v_el", v_el, ">= 0"));
        }
        Ok(Self { eta_d, v_el })
    }

    pub fn to_modified(&self) -> ModifiedDetector {
        ModifiedDetector {
            eta_d: self.eta_d,
            eta_e: 1.0 / (1.0 + self.v_el),
        }
    }

    /// Variance of the EPR mode the conventional model injects at the
    /// efficiency beamsplitter, `1 + v_el / (1 - eta_d)`. Infinite at `eta_d = 1`.
    pub fn purification_variance(&self) -> f64 {
        1.0 + self.v_el / (1.0 - self.eta_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedDetector {
    pub eta_d: f64,
    pub eta_e: f64,
}

impl ModifiedDetector {
    pub fn new(eta_d: f64, eta_e: f64) -> Result<Self> {
        check_efficiency(eta_d)?;
        if !(eta_e > 0.0 && eta_e <= 1.0) {
            return Err(domain("electronic noise transmittance eta_e", eta_e, "in (0, 1]"));
        }
        Ok(Self { eta_d, eta_e })
    }

    pub fn from_calibration(eta_d: f64, cal: &RawCalibration) -> Result<Self> {
        Self::new(eta_d, eta_e_from_raw(cal))
    }

    pub fn to_conventional(&self) -> ConventionalDetector {
        ConventionalDetector {
            eta_d: self.eta_d,
            v_el: 1.0 / self.eta_e - 1.0,
        }
    }

    /// Same detector with a perfect efficiency beamsplitter.
    pub fn with_ideal_efficiency(&self) -> Self {
        Self {
            eta_d: 1.0,
            eta_e: self.eta_e,
        }
    }
}

fn check_efficiency(eta_d: f64) -> Result<()> {
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        return Err(domain("detection efficiency eta_d", eta_d, "in (0, 1]"));
    }
    Ok(())
}

/// Order in which an incoming mode meets the two detector beamsplitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamsplitterOrder {
    /// `eta_e` first, then `eta_d`. The amplifier sits between the two.
    ElectronicFirst,
    EfficiencyFirst,
}

/// `eta_e = A^2 X_LO^2 / (A^2 X_LO^2 + V_ele)`.
pub fn eta_e_from_raw(cal: &RawCalibration) -> f64 {
    cal.conventional_snu() / cal.modified_snu()
}

/// `eta_e = 1 / (1 + v_el)`.
pub fn eta_e_from_vel(v_el: f64) -> Result<f64> {
    if !(v_el >= 0.0) {
        return Err(domain("electronic noise v_el", v_el, ">= 0"));
    }
    Ok(1.0 / (1.0 + v_el))
}

/// `v_el = 1 / eta_e - 1`.
pub fn vel_from_eta_e(eta_e: f64) -> Result<f64> {
    if !(eta_e > 0.0 && eta_e <= 1.0) {
        return Err(domain("electronic noise transmittance eta_e", eta_e, "in (0, 1]"));
    }
    Ok(1.0 / eta_e - 1.0)
}

/// `s = u_s' / u_s = 1 + v_el`.
pub fn scaling_s(v_el: f64) -> f64 {
    1.0 + v_el
}

/// `eta_d V_M + (1 - eta_d) + v_el`, in units of `u_s`.
pub fn conventional_output_variance(det: &ConventionalDetector, v_m: f64) -> f64 {
    det.eta_d * v_m + (1.0 - det.eta_d) + det.v_el
}

/// `eta_e eta_d V_M - eta_e eta_d + 1`, in units of `u_s'`.
pub fn modified_output_variance(det: &ModifiedDetector, v_m: f64) -> f64 {
    let t = det.eta_e * det.eta_d;
    t * v_m - t + 1.0
}

/// Output variance obtained by actually chaining the two lossy beamsplitters
/// in the given order. Equal to [`modified_output_variance`] for either order.
pub fn cascaded_output_variance(det: &ModifiedDetector, v_m: f64, order: BeamsplitterOrder) -> f64 {
    let lossy = |eta: f64, v: f64| eta * v + (1.0 - eta);
    match order {
        BeamsplitterOrder::ElectronicFirst => lossy(det.eta_d, lossy(det.eta_e, v_m)),
        BeamsplitterOrder::EfficiencyFirst => lossy(det.eta_e, lossy(det.eta_d, v_m)),
    }
}

/// `|s * V_modified - V_conventional|` for the detector `(eta_d, v_el)`.
pub fn equivalence_residual(eta_d: f64, v_el: f64, v_m: f64) -> Result<f64> {
    let conv = ConventionalDetector::new(eta_d, v_el)?;
    let modified = ModifiedDetector::new(eta_d, eta_e_from_vel(v_el)?)?;
    let lhs = scaling_s(v_el) * modified_output_variance(&modified, v_m);
    Ok((lhs - conventional_output_variance(&conv, v_m)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eta_e_from_raw_examples() {
        let c = RawCalibration::new(2.0, 5.0, 0.0).unwrap();
        assert_eq!(eta_e_from_raw(&c), 1.0);
        // A^2 X_LO^2 = 100
        let c = RawCalibration::new(1.0, 10.0, 100.0).unwrap();
        assert_eq!(eta_e_from_raw(&c), 0.5);
        // A^2 X_LO^2 = 900
        let c = RawCalibration::new(3.0, 10.0, 100.0).unwrap();
        assert_abs_diff_eq!(eta_e_from_raw(&c), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn raw_calibration_rejects_bad_inputs() {
        assert!(matches!(RawCalibration::new(0.0, 1.0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(RawCalibration::new(1.0, -2.0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(RawCalibration::new(1.0, 1.0, -1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn vel_conversions() {
        assert_eq!(eta_e_from_vel(0.0).unwrap(), 1.0);
        assert_eq!(eta_e_from_vel(1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(vel_from_eta_e(0.9).unwrap(), 1.0 / 9.0, epsilon = 1e-15);
        assert!(vel_from_eta_e(0.0).is_err());
        assert!(eta_e_from_vel(-0.1).is_err());
    }

    #[test]
    fn vel_round_trip() {
        for k in 1..=1000 {
            let eta = k as f64 / 1000.0;
            let back = eta_e_from_vel(vel_from_eta_e(eta).unwrap()).unwrap();
            assert_abs_diff_eq!(back, eta, epsilon = 1e-14);
        }
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scaling_s(0.0), 1.0);
        assert_abs_diff_eq!(scaling_s(1.0 / 9.0), 10.0 / 9.0, epsilon = 1e-15);
        for v_el in [0.0, 0.01, 0.3, 5.0] {
            assert_abs_diff_eq!(scaling_s(v_el) * eta_e_from_vel(v_el).unwrap(), 1.0, epsilon = 1e-15);
        }
        let cal = RawCalibration::new(3.0, 10.0, 100.0).unwrap();
        assert_abs_diff_eq!(scaling_s(cal.v_el()), cal.modified_snu() / cal.conventional_snu(), epsilon = 1e-15);
    }

    #[test]
    fn conventional_variance_examples() {
        for eta in [0.1, 0.5, 1.0] {
            let d = ConventionalDetector::new(eta, 0.0).unwrap();
            assert_abs_diff_eq!(conventional_output_variance(&d, 1.0), 1.0, epsilon = 1e-15);
        }
        let ideal = ConventionalDetector::new(1.0, 0.0).unwrap();
        assert_eq!(conventional_output_variance(&ideal, 17.0), 17.0);
        // 0.6 * 41 + 0.4 + 1/9
        let d = ConventionalDetector::new(0.6, 1.0 / 9.0).unwrap();
        assert_abs_diff_eq!(conventional_output_variance(&d, 41.0), 25.111_111_111_111_11, epsilon = 1e-12);
    }

    #[test]
    fn modified_variance_examples() {
        let d = ModifiedDetector::new(0.3, 0.7).unwrap();
        assert_abs_diff_eq!(modified_output_variance(&d, 1.0), 1.0, epsilon = 1e-15);
        let ideal = ModifiedDetector::new(1.0, 1.0).unwrap();
        assert_eq!(modified_output_variance(&ideal, 41.0), 41.0);
        // 0.54 * 41 - 0.54 + 1
        let d = ModifiedDetector::new(0.6, 0.9).unwrap();
        assert_abs_diff_eq!(modified_output_variance(&d, 41.0), 22.6, epsilon = 1e-12);
    }

    #[test]
    fn beamsplitter_order_does_not_matter() {
        let d = ModifiedDetector::new(0.6, 0.9).unwrap();
        for v in [1.0, 2.0, 41.0, 100.0] {
            let a = cascaded_output_variance(&d, v, BeamsplitterOrder::ElectronicFirst);
            let b = cascaded_output_variance(&d, v, BeamsplitterOrder::EfficiencyFirst);
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            assert_abs_diff_eq!(a, modified_output_variance(&d, v), epsilon = 1e-13);
        }
    }

    #[test]
    fn equivalence_examples() {
        assert!(equivalence_residual(0.6, 1.0 / 9.0, 41.0).unwrap() < 1e-12);
        for eta in [0.1, 0.25, 0.5, 0.9, 1.0] {
            for v in [1.0, 3.0, 41.0] {
                assert!(equivalence_residual(eta, 0.0, v).unwrap() < 1e-13);
            }
        }
    }

    #[test]
    fn detector_ranges() {
        assert!(ModifiedDetector::new(0.0, 0.9).is_err());
        assert!(ModifiedDetector::new(0.6, 1.1).is_err());
        assert!(ModifiedDetector::new(0.6, 0.0).is_err());
        assert!(ConventionalDetector::new(1.2, 0.1).is_err());
        assert!(ConventionalDetector::new(0.5, -0.1).is_err());
        let m = ConventionalDetector::new(0.6, 1.0 / 9.0).unwrap().to_modified();
        assert_abs_diff_eq!(m.eta_e, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(m.to_conventional().v_el, 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn purification_variance_matches_output() {
        // eta_d V_M + (1 - eta_d) V_EPR reproduces the additive-noise output.
        let d = ConventionalDetector::new(0.6, 0.2).unwrap();
        let v_m = 13.0;
        let via_epr = d.eta_d * v_m + (1.0 - d.eta_d) * d.purification_variance();
        assert_abs_diff_eq!(via_epr, conventional_output_variance(&d, v_m), epsilon = 1e-12);
    }
}
