//! Entanglement-based model of the GG02 protocol with the modified detector.
//!
//! Alice holds mode A of an EPR pair and sends the other mode through a lossy,
//! noisy channel (output B1). Inside Bob, B1 crosses the electronic-noise
//! beamsplitter `eta_e` (idler D is inaccessible and dropped), then the
//! amplifier (B2' -> B3'), then the efficiency beamsplitter `eta_d` whose idler
//! C stays with the trusted side. Bob homodynes x on B4'.
//!
//! Mode order after [`build_chain`] is `(A, C, B4')`.

use crate::detector::ModifiedDetector;
use crate::error::{domain, Error, Result};
use crate::gaussian::{
    apply, attach_vacuum, beamsplitter, entropy_from_spectrum, homodyne_condition, psa,
    CovarianceMatrix, Quadrature,
};
use nalgebra::DMatrix;

pub const MODE_A: usize = 0;
pub const MODE_C: usize = 1;
pub const MODE_B4: usize = 2;

/// Standard single-mode fibre loss, dB/km.
pub const FIBER_LOSS_DB_PER_KM: f64 = 0.2;

/// Transmittance `10^(-alpha L / 10)` of `length_km` of fibre.
pub fn channel_transmittance(length_km: f64, alpha_db_per_km: f64) -> f64 {
    10f64.powf(-alpha_db_per_km * length_km / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    transmittance: f64,
    excess_noise: f64,
}

impl ChannelParams {
    pub fn new(transmittance: f64, excess_noise: f64) -> Result<Self> {
        if !(transmittance > 0.0 && transmittance <= 1.0) {
            return Err(domain("channel transmittance T", transmittance, "in (0, 1]"));
        }
        if !(excess_noise >= 0.0) || !excess_noise.is_finite() {
            return Err(domain("excess noise", excess_noise, ">= 0"));
        }
        Ok(Self {
            transmittance,
            excess_noise,
        })
    }

    pub fn from_length(length_km: f64, alpha_db_per_km: f64, excess_noise: f64) -> Result<Self> {
        if !(length_km >= 0.0) || !length_km.is_finite() {
            return Err(domain("channel length", length_km, ">= 0 km"));
        }
        if !(alpha_db_per_km >= 0.0) || !alpha_db_per_km.is_finite() {
            return Err(domain("fibre attenuation", alpha_db_per_km, ">= 0 dB/km"));
        }
        Self::new(channel_transmittance(length_km, alpha_db_per_km), excess_noise)
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn excess_noise(&self) -> f64 {
        self.excess_noise
    }

    pub fn with_excess_noise(&self, excess_noise: f64) -> Result<Self> {
        Self::new(self.transmittance, excess_noise)
    }
}

/// A fibre link whose length is chosen later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberChannel {
    pub attenuation_db_per_km: f64,
    pub excess_noise: f64,
}

impl FiberChannel {
    pub fn new(attenuation_db_per_km: f64, excess_noise: f64) -> Result<Self> {
        // validate once with a zero-length link
        ChannelParams::from_length(0.0, attenuation_db_per_km, excess_noise)?;
        Ok(Self {
            attenuation_db_per_km,
            excess_noise,
        })
    }

    pub fn at_length(&self, length_km: f64) -> Result<ChannelParams> {
        ChannelParams::from_length(length_km, self.attenuation_db_per_km, self.excess_noise)
    }

    pub fn with_excess_noise(&self, excess_noise: f64) -> Self {
        Self {
            excess_noise,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// EPR variance `V`; the modulation variance is `V - 1`.
    pub epr_variance: f64,
    /// Reconciliation efficiency. Zero is accepted as a degenerate case.
    pub beta: f64,
    /// Amplifier gain; `1` means no amplifier.
    pub gain: f64,
}

impl ProtocolParams {
    pub fn new(epr_variance: f64, beta: f64, gain: f64) -> Result<Self> {
        if !(epr_variance > 1.0) || !epr_variance.is_finite() {
            return Err(domain("EPR variance V", epr_variance, "> 1"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(domain("reconciliation efficiency beta", beta, "in [0, 1]"));
        }
        if !(gain >= 1.0) || !gain.is_finite() {
            return Err(domain("deamplifying gain", gain, ">= 1"));
        }
        Ok(Self {
            epr_variance,
            beta,
            gain,
        })
    }

    pub fn modulation_variance(&self) -> f64 {
        self.epr_variance - 1.0
    }

    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        Self::new(self.epr_variance, self.beta, gain)
    }

    pub fn with_epr_variance(&self, epr_variance: f64) -> Result<Self> {
        Self::new(epr_variance, self.beta, self.gain)
    }
}

/// Covariance matrix of (A, B1) after the channel.
pub fn channel_output(ch: &ChannelParams, v: f64) -> Result<CovarianceMatrix> {
    if !(v >= 1.0) || !v.is_finite() {
        return Err(domain("unphysical EPR variance", v, ">= 1"));
    }
    let t = ch.transmittance;
    let c = (t * (v * v - 1.0)).sqrt();
    let vb = t * (v - 1.0 + ch.excess_noise) + 1.0;
    let m = DMatrix::from_row_slice(
        4,
        4,
        &[
            v, 0.0, c, 0.0, //
            0.0, v, 0.0, -c, //
            c, 0.0, vb, 0.0, //
            0.0, -c, 0.0, vb,
        ],
    );
    CovarianceMatrix::new(m)
}

/// Every intermediate state of the chain, for inspection.
#[derive(Debug, Clone)]
pub struct ChainStages {
    /// (A, B1)
    pub ab1: CovarianceMatrix,
    /// (A, B2', D)
    pub ab2d: CovarianceMatrix,
    /// (A, B2')
    pub ab2: CovarianceMatrix,
    /// (A, B3'); equal to `ab2` when the amplifier is skipped
    pub ab3: CovarianceMatrix,
    /// (A, B4', C)
    pub ab4c: CovarianceMatrix,
    /// (A, C, B4')
    pub acb4: CovarianceMatrix,
}

/// Runs channel, `eta_e` beamsplitter, amplifier, `eta_d` beamsplitter.
pub fn build_chain(
    ch: &ChannelParams,
    det: &ModifiedDetector,
    pp: &ProtocolParams,
) -> Result<ChainStages> {
    run_chain(ch, det, pp.epr_variance, Some(pp.gain))
}

/// Same chain with the amplifier step left out entirely.
pub fn build_chain_without_psa(
    ch: &ChannelParams,
    det: &ModifiedDetector,
    epr_variance: f64,
) -> Result<ChainStages> {
    run_chain(ch, det, epr_variance, None)
}

fn run_chain(
    ch: &ChannelParams,
    det: &ModifiedDetector,
    v: f64,
    gain: Option<f64>,
) -> Result<ChainStages> {
    let ab1 = channel_output(ch, v)?;
    let ab2d = apply(&beamsplitter(det.eta_e, 3, 1, 2)?, &attach_vacuum(&ab1))?;
    let ab2 = ab2d.select_modes(&[0, 1])?;
    let ab3 = match gain {
        Some(g) => apply(&psa(g, 2, 1)?, &ab2)?,
        None => ab2.clone(),
    };
    let ab4c = apply(&beamsplitter(det.eta_d, 3, 1, 2)?, &attach_vacuum(&ab3))?;
    let acb4 = ab4c.select_modes(&[0, 2, 1])?;
    Ok(ChainStages {
        ab1,
        ab2d,
        ab2,
        ab3,
        ab4c,
        acb4,
    })
}

/// Classical mutual information between Alice's heterodyne outcome and Bob's
/// x homodyne outcome, in bits.
///
/// Heterodyning A splits it on a balanced beamsplitter, so Alice's x outcome
/// has variance `(V_A + 1) / 2` and covariance `C / sqrt(2)` with Bob's.
pub fn mutual_information(gamma_acb4: &CovarianceMatrix) -> Result<f64> {
    check_three_modes(gamma_acb4)?;
    let v_a = gamma_acb4.variance(MODE_A, Quadrature::X);
    let c = gamma_acb4.covariance(MODE_A, Quadrature::X, MODE_B4, Quadrature::X);
    let v_b = gamma_acb4.variance(MODE_B4, Quadrature::X);
    if !(v_b > 0.0) {
        return Err(Error::Numerical(format!("Bob's x variance {v_b} is not positive")));
    }
    let v_am = (v_a + 1.0) / 2.0;
    let c_het = c / std::f64::consts::SQRT_2;
    let v_cond = v_am - c_het * c_het / v_b;
    if !(v_cond > 0.0) {
        return Err(Error::Numerical(format!(
            "conditional variance {v_cond} is not positive"
        )));
    }
    Ok(0.5 * (v_am / v_cond).log2())
}

/// Eve's Holevo information on Bob's x outcome (reverse reconciliation).
#[derive(Debug, Clone, PartialEq)]
pub struct HolevoBound {
    pub chi_be: f64,
    /// Three eigenvalues of `gamma_ACB4'` followed by two of the conditioned `gamma_AC`.
    pub lambdas: [f64; 5],
}

/// `S(ACB4') - S(AC | x_B4')`.
pub fn holevo_bound(gamma_acb4: &CovarianceMatrix) -> Result<HolevoBound> {
    check_three_modes(gamma_acb4)?;
    let full = gamma_acb4.symplectic_eigenvalues()?;
    let cond = homodyne_condition(gamma_acb4, MODE_B4, Quadrature::X)?;
    let conditioned = cond.symplectic_eigenvalues()?;
    let chi_be = entropy_from_spectrum(&full) - entropy_from_spectrum(&conditioned);
    Ok(HolevoBound {
        chi_be,
        lambdas: [full[0], full[1], full[2], conditioned[0], conditioned[1]],
    })
}

fn check_three_modes(gamma: &CovarianceMatrix) -> Result<()> {
    if gamma.modes() != 3 {
        return Err(Error::Argument(format!(
            "expected the 3-mode (A, C, B4') state, got {} modes",
            gamma.modes()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateBreakdown {
    /// `beta * I_AB - chi_BE` in bits per pulse; negative means no key.
    pub key_rate: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub lambdas: [f64; 5],
    pub gamma_acb4: CovarianceMatrix,
}

impl KeyRateBreakdown {
    /// The rate actually extractable, `max(R, 0)`.
    pub fn achievable_rate(&self) -> f64 {
        self.key_rate.max(0.0)
    }
}

pub fn secret_key_rate(
    ch: &ChannelParams,
    det: &ModifiedDetector,
    pp: &ProtocolParams,
) -> Result<KeyRateBreakdown> {
    let stages = build_chain(ch, det, pp)?;
    key_rate_from_state(stages.acb4, pp.beta)
}

/// Key rate of an already-built `(A, C, B4')` state.
pub fn key_rate_from_state(gamma_acb4: CovarianceMatrix, beta: f64) -> Result<KeyRateBreakdown> {
    let i_ab = mutual_information(&gamma_acb4)?;
    let HolevoBound { chi_be, lambdas } = holevo_bound(&gamma_acb4)?;
    Ok(KeyRateBreakdown {
        key_rate: beta * i_ab - chi_be,
        i_ab,
        chi_be,
        lambdas,
        gamma_acb4,
    })
}
