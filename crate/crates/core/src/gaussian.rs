//! Zero-mean Gaussian states described by their covariance matrix.
//!
//! All matrices are in shot-noise units (vacuum quadrature variance 1) with
//! quadratures ordered `(x1, p1, x2, p2, ...)`. The symplectic form is the
//! block-diagonal stack of `[[0, 1], [-1, 0]]`.

use std::fmt;

use nalgebra::linalg::Cholesky;
use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};

/// Absolute tolerance on `|gamma - gamma^T|` accepted by [`CovarianceMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Symplectic eigenvalues this far below 1 still count as physical.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Relative tolerance used when pairing the `±i nu` eigenvalues of `Omega gamma`.
pub const PAIRING_TOL: f64 = 1e-8;

/// Which quadrature a homodyne detector measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

/// Covariance matrix of an `n`-mode Gaussian state.
#[derive(Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
}

impl fmt::Debug for CovarianceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceMatrix")
            .field("modes", &self.modes())
            .field("matrix", &self.matrix)
            .finish()
    }
}

impl CovarianceMatrix {
    /// Wraps a `2n x 2n` matrix, rejecting odd or non-square shapes and
    /// asymmetry above [`SYMMETRY_TOL`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rows == 0 || rows % 2 != 0 {
            return Err(Error::Argument(format!(
                "covariance matrix must be 2n x 2n with n >= 1, got {rows}x{cols}"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("covariance matrix has non-finite entries".into()));
        }
        let asym = max_abs_diff(&matrix, &matrix.transpose());
        if asym > SYMMETRY_TOL {
            return Err(Error::Argument(format!(
                "covariance matrix is not symmetric (max |g - g^T| = {asym:e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// The `n`-mode vacuum (identity matrix).
    pub fn vacuum(modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Single-mode thermal state `diag(v, v)`.
    pub fn thermal(variance: f64) -> Result<Self> {
        if !(variance >= 1.0) {
            return Err(domain("thermal variance", variance, ">= 1"));
        }
        Ok(Self {
            matrix: DMatrix::from_diagonal_element(2, 2, variance),
        })
    }

    pub fn modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    /// Variance of one quadrature of one mode.
    pub fn variance(&self, mode: usize, q: Quadrature) -> f64 {
        let i = 2 * mode + q.offset();
        self.matrix[(i, i)]
    }

    /// Covariance between quadrature `qa` of mode `a` and `qb` of mode `b`.
    pub fn covariance(&self, a: usize, qa: Quadrature, b: usize, qb: Quadrature) -> f64 {
        self.matrix[(2 * a + qa.offset(), 2 * b + qb.offset())]
    }

    /// Keeps the listed modes in the listed order; everything else is traced out.
    pub fn select_modes(&self, modes: &[usize]) -> Result<Self> {
        let n = self.modes();
        if modes.is_empty() {
            return Err(Error::Argument("mode selection is empty".into()));
        }
        for (k, &m) in modes.iter().enumerate() {
            if m >= n {
                return Err(Error::Argument(format!("mode {m} out of range for {n} modes")));
            }
            if modes[..k].contains(&m) {
                return Err(Error::Argument(format!("mode {m} selected twice")));
            }
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        Ok(Self {
            matrix: submatrix(&self.matrix, &idx, &idx),
        })
    }

    /// Symplectic spectrum; see [`symplectic_eigenvalues`].
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        symplectic_eigenvalues(self)
    }

    /// True when every symplectic eigenvalue is at least `1 - PHYSICALITY_TOL`.
    pub fn is_physical(&self) -> bool {
        match symplectic_eigenvalues(self) {
            Ok(nus) => nus.iter().all(|&nu| nu >= 1.0 - PHYSICALITY_TOL),
            Err(_) => false,
        }
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> Result<f64> {
        Ok(entropy_from_spectrum(&symplectic_eigenvalues(self)?))
    }
}

/// A real `2n x 2n` matrix `Y` with `Y Omega Y^T = Omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticTransform {
    matrix: DMatrix<f64>,
}

impl SymplecticTransform {
    pub fn identity(modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Wraps an arbitrary matrix after checking the symplectic condition to `tol`.
    pub fn from_matrix(matrix: DMatrix<f64>, tol: f64) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rows == 0 || rows % 2 != 0 {
            return Err(Error::Argument(format!(
                "symplectic matrix must be 2n x 2n, got {rows}x{cols}"
            )));
        }
        let t = Self { matrix };
        let r = t.symplectic_residual();
        if r > tol {
            return Err(Error::Argument(format!(
                "matrix is not symplectic (max |Y W Y^T - W| = {r:e})"
            )));
        }
        Ok(t)
    }

    pub fn modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `self` after `first`, i.e. the matrix product `self * first`.
    pub fn after(&self, first: &SymplecticTransform) -> Result<Self> {
        if self.matrix.nrows() != first.matrix.nrows() {
            return Err(Error::Argument(format!(
                "cannot compose {}-mode and {}-mode transforms",
                self.modes(),
                first.modes()
            )));
        }
        Ok(Self {
            matrix: &self.matrix * &first.matrix,
        })
    }

    /// `max |Y Omega Y^T - Omega|`.
    pub fn symplectic_residual(&self) -> f64 {
        let omega = symplectic_form(self.modes());
        let lhs = &self.matrix * &omega * self.matrix.transpose();
        max_abs_diff(&lhs, &omega)
    }
}

/// Block-diagonal symplectic form for `modes` modes.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Two-mode squeezed vacuum with quadrature variance `v` on each mode.
pub fn epr_state(v: f64) -> Result<CovarianceMatrix> {
    if !(v >= 1.0) || !v.is_finite() {
        return Err(domain("unphysical EPR variance", v, ">= 1"));
    }
    let c = (v * v - 1.0).sqrt();
    let mut m = DMatrix::from_diagonal_element(4, 4, v);
    m[(0, 2)] = c;
    m[(2, 0)] = c;
    m[(1, 3)] = -c;
    m[(3, 1)] = -c;
    Ok(CovarianceMatrix { matrix: m })
}

/// Beamsplitter of transmittance `eta` mixing `mode_a` (transmitted port) with `mode_b`.
///
/// On the pair the block is `[[sqrt(eta) I, sqrt(1-eta) I], [-sqrt(1-eta) I, sqrt(eta) I]]`.
pub fn beamsplitter(
    eta: f64,
    n_modes: usize,
    mode_a: usize,
    mode_b: usize,
) -> Result<SymplecticTransform> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain("beamsplitter transmittance", eta, "in [0, 1]"));
    }
    if mode_a == mode_b {
        return Err(Error::Argument(format!(
            "beamsplitter needs two distinct modes, got {mode_a} twice"
        )));
    }
    if mode_a >= n_modes || mode_b >= n_modes {
        return Err(Error::Argument(format!(
            "beamsplitter modes ({mode_a}, {mode_b}) out of range for {n_modes} modes"
        )));
    }
    let t = eta.sqrt();
    let r = (1.0 - eta).sqrt();
    let mut m = DMatrix::identity(2 * n_modes, 2 * n_modes);
    for q in 0..2 {
        let a = 2 * mode_a + q;
        let b = 2 * mode_b + q;
        m[(a, a)] = t;
        m[(a, b)] = r;
        m[(b, a)] = -r;
        m[(b, b)] = t;
    }
    Ok(SymplecticTransform { matrix: m })
}

/// Noiseless phase-sensitive amplifier: `x -> sqrt(g) x`, `p -> p / sqrt(g)` on `mode`.
pub fn psa(g: f64, n_modes: usize, mode: usize) -> Result<SymplecticTransform> {
    if !(g >= 1.0) || !g.is_finite() {
        return Err(domain("deamplifying gain", g, ">= 1"));
    }
    if mode >= n_modes {
        return Err(Error::Argument(format!(
            "amplifier mode {mode} out of range for {n_modes} modes"
        )));
    }
    let mut m = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let s = g.sqrt();
    m[(2 * mode, 2 * mode)] = s;
    m[(2 * mode + 1, 2 * mode + 1)] = 1.0 / s;
    Ok(SymplecticTransform { matrix: m })
}

/// Appends one vacuum mode, uncorrelated with the rest.
pub fn attach_vacuum(gamma: &CovarianceMatrix) -> CovarianceMatrix {
    let d = gamma.dim();
    let mut m = DMatrix::identity(d + 2, d + 2);
    m.view_mut((0, 0), (d, d)).copy_from(&gamma.matrix);
    CovarianceMatrix { matrix: m }
}

/// `Y gamma Y^T`.
///
/// Each entry is accumulated with error-free products and sums, so it is
/// close to correctly rounded even when large terms cancel (high amplifier
/// gains produce entries near 1e7 whose combinations matter at order 1).
/// The upper triangle is mirrored, so the result is exactly symmetric.
pub fn apply(transform: &SymplecticTransform, gamma: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    if transform.matrix.nrows() != gamma.dim() {
        return Err(Error::Argument(format!(
            "transform acts on {} modes but state has {}",
            transform.modes(),
            gamma.modes()
        )));
    }
    let y = &transform.matrix;
    let g = &gamma.matrix;
    let d = g.nrows();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = CompensatedSum::default();
            for k in (0..d).filter(|&k| y[(i, k)] != 0.0) {
                for l in (0..d).filter(|&l| y[(j, l)] != 0.0) {
                    let (hi, lo) = two_prod(y[(i, k)], y[(j, l)]);
                    acc.add_prod(hi, g[(k, l)]);
                    acc.add_small(lo * g[(k, l)]);
                }
            }
            out[(i, j)] = acc.value();
            out[(j, i)] = out[(i, j)];
        }
    }
    Ok(CovarianceMatrix { matrix: out })
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Running sum carrying its rounding error separately.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    err: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.sum, x);
        self.sum = s;
        self.err += e;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.add(p);
        self.err += e;
    }

    fn add_small(&mut self, x: f64) {
        self.err += x;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

/// The `n` symplectic eigenvalues of `gamma`, sorted descending.
///
/// They are the moduli of the eigenvalues of `Omega gamma`, which come in
/// conjugate pairs `±i nu`; after sorting the moduli every second entry is
/// kept and each pair must agree to [`PAIRING_TOL`] (relative).
///
/// With `gamma = L L^T`, `Omega gamma` is similar to the antisymmetric
/// `L^T Omega L`. That matrix is normal, so its eigenvalue moduli are its
/// singular values, which an SVD delivers accurately even for badly scaled
/// `gamma` and for the fully degenerate spectra of pure states.
pub fn symplectic_eigenvalues(gamma: &CovarianceMatrix) -> Result<Vec<f64>> {
    let l = Cholesky::new(gamma.matrix.clone())
        .ok_or_else(|| Error::Numerical("covariance matrix is not positive definite".into()))?
        .l();
    let a = l.transpose() * symplectic_form(gamma.modes()) * &l;
    let a = (&a - a.transpose()) * 0.5;
    let mut moduli: Vec<f64> = a.singular_values().iter().copied().collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    let mut nus = Vec::with_capacity(gamma.modes());
    for pair in moduli.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        if (a - b).abs() > PAIRING_TOL * a.max(1.0) {
            return Err(Error::Numerical(format!(
                "unpaired symplectic eigenvalues {a} and {b}"
            )));
        }
        nus.push(a);
    }
    Ok(nus)
}

/// `G(x) = (x+1) log2(x+1) - x log2(x)`, with `G(0) = 0`.
pub fn g_function(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain("entropy function argument", x, ">= 0"));
    }
    Ok(g_unchecked(x))
}

fn g_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

/// `sum_i G((nu_i - 1) / 2)` in bits, each `nu` clamped up to 1 first.
pub fn entropy_from_spectrum(nus: &[f64]) -> f64 {
    nus.iter()
        .map(|&nu| g_unchecked((nu.max(1.0) - 1.0) / 2.0))
        .sum()
}

/// State of the remaining modes after an ideal homodyne measurement of one
/// quadrature of `measured_mode`.
///
/// `gamma_rest - c c^T / V_q`, where `V_q` is the measured variance and `c`
/// the covariances of the remaining quadratures with the measured one. This is
/// the Moore-Penrose form `gamma_rest - sigma (X gamma_m X)^+ sigma^T` with
/// `X` projecting on the measured quadrature.
pub fn homodyne_condition(
    gamma: &CovarianceMatrix,
    measured_mode: usize,
    quadrature: Quadrature,
) -> Result<CovarianceMatrix> {
    let n = gamma.modes();
    if n < 2 {
        return Err(Error::Argument(
            "conditioning needs at least two modes".into(),
        ));
    }
    if measured_mode >= n {
        return Err(Error::Argument(format!(
            "measured mode {measured_mode} out of range for {n} modes"
        )));
    }
    let q = 2 * measured_mode + quadrature.offset();
    let vq = gamma.matrix[(q, q)];
    if !(vq > 0.0) {
        return Err(Error::Numerical(format!(
            "measured quadrature variance {vq} is not positive"
        )));
    }
    let rest: Vec<usize> = (0..gamma.dim())
        .filter(|&i| i / 2 != measured_mode)
        .collect();
    // compensated, like `apply`: c_i c_j / V_q can nearly cancel gamma_ij
    let mut out = DMatrix::zeros(rest.len(), rest.len());
    for (r, &i) in rest.iter().enumerate() {
        for (c, &j) in rest.iter().enumerate().skip(r) {
            let (hi, lo) = two_prod(gamma.matrix[(i, q)], gamma.matrix[(j, q)]);
            let quot = hi / vq;
            let quot_lo = ((-quot).mul_add(vq, hi) + lo) / vq;
            let mut acc = CompensatedSum::default();
            acc.add(gamma.matrix[(i, j)]);
            acc.add(-quot);
            acc.add_small(-quot_lo);
            out[(r, c)] = acc.value();
            out[(c, r)] = out[(r, c)];
        }
    }
    Ok(CovarianceMatrix { matrix: out })
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
