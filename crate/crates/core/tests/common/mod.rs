//! Independent reference computations used as oracles by the integration tests.
//! Nothing here calls into the spectrum or conditioning code under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

pub fn omega(modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

/// Symplectic eigenvalues via the symmetric matrix `-(L^T W L)^2`, where
/// `gamma = L L^T`. Its eigenvalues are `nu_k^2`, each twice.
pub fn symplectic_spectrum_symmetric(gamma: &DMatrix<f64>) -> Vec<f64> {
    let n = gamma.nrows() / 2;
    let l = gamma.clone().cholesky().expect("positive definite").l();
    let a = l.transpose() * omega(n) * &l;
    let m = -(&a * &a);
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.into_iter().step_by(2).collect()
}

/// `gamma_rest - sigma (X gamma_m X)^+ sigma^T` with a generic SVD pseudo-inverse,
/// measuring x of the last mode.
pub fn condition_last_mode_x_pinv(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = gamma.nrows();
    let r = d - 2;
    let g_rest = gamma.view((0, 0), (r, r)).into_owned();
    let sigma = gamma.view((0, r), (r, 2)).into_owned();
    let g_m = gamma.view((r, r), (2, 2)).into_owned();
    let x = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
    let pinv = (&x * g_m * &x).pseudo_inverse(1e-14).expect("svd");
    g_rest - &sigma * pinv * sigma.transpose()
}

pub fn g_ref(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

pub fn entropy_ref(gamma: &DMatrix<f64>) -> f64 {
    symplectic_spectrum_symmetric(gamma)
        .into_iter()
        .map(|nu| g_ref((nu.max(1.0) - 1.0) / 2.0))
        .sum()
}

/// Holevo bound of an (A, C, B4') matrix through the oracle routes above.
pub fn holevo_ref(gamma: &DMatrix<f64>) -> f64 {
    entropy_ref(gamma) - entropy_ref(&condition_last_mode_x_pinv(gamma))
}

/// Bob's x and p variances after the detector chain, composed by hand.
pub fn bob_variances_closed_form(t: f64, eps: f64, v: f64, eta_e: f64, eta_d: f64, g: f64) -> (f64, f64) {
    let v_b1 = t * (v - 1.0 + eps) + 1.0;
    let after_e = eta_e * v_b1 + 1.0 - eta_e;
    (
        eta_d * g * after_e + (1.0 - eta_d),
        eta_d * after_e / g + (1.0 - eta_d),
    )
}

/// Scalar mutual information for the chain, from hand-derived variances:
/// Bob's x variance above and the A-B4' x covariance `sqrt(eta_d g eta_e T (V^2 - 1))`.
pub fn mutual_information_closed_form(t: f64, eps: f64, v: f64, eta_e: f64, eta_d: f64, g: f64) -> f64 {
    let (vb, _) = bob_variances_closed_form(t, eps, v, eta_e, eta_d, g);
    let c2 = eta_d * g * eta_e * t * (v * v - 1.0);
    // heterodyne: V_AM = (V+1)/2, C_het^2 = C^2 / 2
    let v_am = (v + 1.0) / 2.0;
    0.5 * (v_am / (v_am - c2 / 2.0 / vb)).log2()
}

/// Minimal deterministic generator so the random grids do not depend on the
/// crate's own RNG plumbing.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }
}
