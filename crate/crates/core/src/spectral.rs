//! Spectral kernels for non-negative and Metzler matrices.
//!
//! The Perron root is found by power iteration on a shifted matrix, polished
//! with a few shifted inverse-iteration steps. Dense Schur-based spectra are
//! the fallback and the reference for everything else.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Largest dimension accepted by [`dense_spectrum`] unless a cap is given.
pub const DEFAULT_SIZE_CAP: usize = 200;

/// Half-width of the band around zero real part reported as marginal.
pub const STABILITY_BAND: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has a negative or non-finite entry at ({i}, {j})")]
    NotNonnegative { i: usize, j: usize },
    #[error("matrix has a negative or non-finite off-diagonal entry at ({i}, {j})")]
    NotMetzler { i: usize, j: usize },
    #[error("eigensolver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("dimension {n} exceeds the dense eigensolver cap {cap}")]
    SizeCap { n: usize, cap: usize },
}

/// Dominant eigenvalue with its eigenvector, scaled so the largest entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Target residual `‖Mv - λv‖∞ / ‖M‖∞`.
    pub tol: f64,
    /// Overrides the default iteration budget.
    pub max_iterations: Option<usize>,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iterations: None,
        }
    }
}

impl PowerOptions {
    fn budget(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| {
            let formula = 10.0 * n as f64 * libm::log(1.0 / self.tol);
            (libm::ceil(formula) as usize).max(1000)
        })
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<usize, SpectralError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(SpectralError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_nonnegative(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SpectralError::NotNonnegative { i, j });
            }
        }
    }
    Ok(())
}

fn check_metzler(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !v.is_finite() || (i != j && v < 0.0) {
                return Err(SpectralError::NotMetzler { i, j });
            }
        }
    }
    Ok(())
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a: f64, b| a.max(b.abs()))
}

/// Value estimate for a non-negative vector: `Σ(Mv) / Σv`.
fn quotient(mv: &DVector<f64>, v: &DVector<f64>) -> f64 {
    mv.sum() / v.sum()
}

#[cfg(test)]
fn residual(m: &DMatrix<f64>, v: &DVector<f64>, value: f64) -> f64 {
    max_abs(&(m * v - v * value))
}

/// Perron root and vector of a non-negative matrix by power iteration only.
///
/// Iterates on `M + cI` with `c` half the largest row sum, which makes every
/// irreducible input primitive. Returns [`SpectralError::NonConvergence`] if
/// the residual target is not met within the budget.
pub fn power_iteration(m: &DMatrix<f64>, opts: &PowerOptions) -> Result<Eigenpair, SpectralError> {
    let n = check_square(m)?;
    check_nonnegative(m)?;
    let scale = norm_inf(m);
    if scale == 0.0 {
        return Ok(Eigenpair {
            value: 0.0,
            vector: DVector::from_element(n, 1.0),
        });
    }
    let target = opts.tol * scale;
    let shift = 0.5 * scale;
    let budget = opts.budget(n);

    let mut v = DVector::from_element(n, 1.0);
    let mut mv = m * &v;
    let mut value = quotient(&mv, &v);
    let mut res = max_abs(&(&mv - &v * value));
    let mut iterations = 0;
    while res > target && iterations < budget {
        let mut w = &mv + &v * shift;
        let top = max_abs(&w);
        w /= top;
        v = w;
        mv = m * &v;
        value = quotient(&mv, &v);
        res = max_abs(&(&mv - &v * value));
        iterations += 1;
        if res <= 1e-6 * scale {
            if let Some((pv, pval, pres)) = polish(m, &v, value, res) {
                v = pv;
                value = pval;
                res = pres;
                mv = m * &v;
            }
        }
    }
    if res > target {
        return Err(SpectralError::NonConvergence { iterations });
    }
    Ok(Eigenpair { value, vector: v })
}

/// Shifted inverse iteration seeded with a good power-iteration estimate.
/// Keeps the result only while it improves the residual and stays positive.
fn polish(
    m: &DMatrix<f64>,
    v0: &DVector<f64>,
    value0: f64,
    res0: f64,
) -> Option<(DVector<f64>, f64, f64)> {
    let n = m.nrows();
    let mut best: Option<(DVector<f64>, f64, f64)> = None;
    let (mut v, mut value, mut res) = (v0.clone(), value0, res0);
    for _ in 0..4 {
        let shifted = m - DMatrix::identity(n, n) * value;
        let w = shifted.lu().solve(&v)?;
        let top = w.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        if top == 0.0 || !top.is_finite() {
            break;
        }
        let w = w / top;
        if w.iter().any(|x| !(*x >= 0.0)) {
            break;
        }
        let mw = m * &w;
        let new_value = quotient(&mw, &w);
        let new_res = max_abs(&(&mw - &w * new_value));
        if !(new_res < res) {
            break;
        }
        v = w;
        value = new_value;
        res = new_res;
        best = Some((v.clone(), value, res));
    }
    best
}

/// Perron root `ρ(M)` and its eigenvector for a non-negative matrix.
///
/// Power iteration first; if it exhausts its budget the dense route supplies
/// the value and the eigenvector is read off the smallest singular vector of
/// `M - ρI`.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<Eigenpair, SpectralError> {
    match power_iteration(m, &PowerOptions::default()) {
        Err(SpectralError::NonConvergence { .. }) => dense_perron(m),
        other => other,
    }
}

fn dense_perron(m: &DMatrix<f64>) -> Result<Eigenpair, SpectralError> {
    let n = m.nrows();
    let value = dense_spectrum(m)?
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max);
    let shifted = m - DMatrix::identity(n, n) * value;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or(SpectralError::NonConvergence { iterations: 0 })?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bs), (k, &s)| if s < bs { (k, s) } else { (bk, bs) });
    let mut vector: DVector<f64> = v_t.row(k).transpose().map(f64::abs);
    let top = max_abs(&vector);
    vector /= top;
    Ok(Eigenpair { value, vector })
}

/// Rightmost eigenvalue of a Metzler matrix and its eigenvector, via
/// `ρ(M + cI) - c` with `c = max(0, -min_i m_ii) + 1`.
pub fn metzler_eigenpair(m: &DMatrix<f64>) -> Result<Eigenpair, SpectralError> {
    let n = check_square(m)?;
    check_metzler(m)?;
    let min_diag = m.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
    let c = (-min_diag).max(0.0) + 1.0;
    let shifted = m + DMatrix::identity(n, n) * c;
    let pair = spectral_radius(&shifted)?;
    Ok(Eigenpair {
        value: pair.value - c,
        vector: pair.vector,
    })
}

/// Spectral abscissa `s(M)` of a Metzler matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    metzler_eigenpair(m).map(|p| p.value)
}

/// All eigenvalues of `m`, sorted by descending real part then imaginary part.
pub fn dense_spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, SpectralError> {
    dense_spectrum_capped(m, DEFAULT_SIZE_CAP)
}

pub fn dense_spectrum_capped(
    m: &DMatrix<f64>,
    cap: usize,
) -> Result<Vec<Complex<f64>>, SpectralError> {
    let n = check_square(m)?;
    if n > cap {
        return Err(SpectralError::SizeCap { n, cap });
    }
    const MAX_SWEEPS: usize = 10_000;
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, MAX_SWEEPS)
        .ok_or(SpectralError::NonConvergence {
            iterations: MAX_SWEEPS,
        })?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(eig)
}

/// Largest real part of the spectrum.
pub fn max_real_part(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    Ok(dense_spectrum(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurwitzVerdict {
    Hurwitz,
    NotHurwitz,
    /// Rightmost real part lies within the stability band around zero.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzReport {
    pub verdict: HurwitzVerdict,
    /// Largest real part of the spectrum.
    pub margin: f64,
}

impl HurwitzReport {
    pub fn is_hurwitz(&self) -> bool {
        self.verdict == HurwitzVerdict::Hurwitz
    }
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<HurwitzReport, SpectralError> {
    is_hurwitz_with_band(m, STABILITY_BAND)
}

pub fn is_hurwitz_with_band(m: &DMatrix<f64>, band: f64) -> Result<HurwitzReport, SpectralError> {
    let margin = max_real_part(m)?;
    let verdict = if margin < -band {
        HurwitzVerdict::Hurwitz
    } else if margin > band {
        HurwitzVerdict::NotHurwitz
    } else {
        HurwitzVerdict::Marginal
    };
    Ok(HurwitzReport { verdict, margin })
}
