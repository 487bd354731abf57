//! Dense symmetric and positive semidefinite matrix calculus.
//!
//! Everything downstream (content operators, greedy remainders, patch
//! second moments) lives in the positive cone, so the central type here is
//! [`PsdOperator`]: a symmetric matrix together with a validated spectral
//! decomposition. Square roots are read off the stored spectrum.
//!
//! Eigendecompositions use cyclic Jacobi rotations with a fixed row-by-row
//! sweep order, which keeps results reproducible for a fixed input.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative clamp threshold for rounding-level negative eigenvalues.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

/// Sweep cap for the Jacobi eigensolver.
pub const MAX_JACOBI_SWEEPS: usize = 64;

/// Components below this magnitude are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-12;

/// A square real matrix that is exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`. Rejects empty, non-square or
    /// non-finite input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Malformed("matrix dimension must be at least 1".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("matrix has non-finite entries".into()));
        }
        Ok(Self(symmetrize(m)))
    }

    pub fn from_row_major(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Malformed(format!(
                "expected {} entries for dim {dim}, found {}",
                dim * dim,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(&self.0 - &other.0))
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        Self(&self.0 * factor)
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Eigenvalues (nonincreasing) and matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Full spectral decomposition of a symmetric matrix by cyclic Jacobi.
///
/// Eigenvalues are sorted nonincreasing (ties keep solver order) and each
/// eigenvector is oriented so that its first component above `1e-12` in
/// magnitude is positive.
pub fn sym_eigen(m: &SymMatrix) -> Result<Spectrum> {
    let n = m.dim();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = m.get(i, j);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let abs_floor = f64::EPSILON * f64::EPSILON * frob;

    let mut converged = n == 1;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() <= abs_floor || apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() * 0.5
                {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                // A <- Jᵀ A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                // V <- V J
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        return Err(Error::NonConvergence {
            cap: MAX_JACOBI_SWEEPS,
            off_norm: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let sign = (0..n)
            .map(|k| v[k * n + src])
            .find(|x| x.abs() > SIGN_EPS)
            .map_or(1.0, f64::signum);
        for k in 0..n {
            eigenvectors[(k, col)] = sign * v[k * n + src];
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// A symmetric positive semidefinite matrix with its spectral decomposition.
#[derive(Clone, Debug)]
pub struct PsdOperator {
    base: SymMatrix,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    clamp_applied: bool,
}

impl PsdOperator {
    /// Projects `m` onto the positive cone, forgiving negative eigenvalues
    /// down to `-tol·λ_max`.
    pub fn new(m: SymMatrix, tol: f64) -> Result<Self> {
        Self::with_scale(m, tol, 0.0)
    }

    /// Like [`PsdOperator::new`] but the clamp threshold is
    /// `tol·max(λ_max, scale)`. Iterated remainders use the scale of the
    /// operator they started from, since their own `λ_max` shrinks towards
    /// rounding level.
    pub fn with_scale(m: SymMatrix, tol: f64, scale: f64) -> Result<Self> {
        if !tol.is_finite() || tol < 0.0 {
            return Err(Error::InvalidConfig(format!("PSD tolerance must be finite and >= 0, got {tol}")));
        }
        let Spectrum {
            mut eigenvalues,
            eigenvectors,
        } = sym_eigen(&m)?;
        let lambda_max = eigenvalues[0].max(0.0);
        let threshold = tol * lambda_max.max(scale.abs());
        let lambda_min = *eigenvalues.last().expect("dim >= 1");
        if lambda_min < -threshold {
            return Err(Error::NotPositive {
                eigenvalue: lambda_min,
                threshold: -threshold,
            });
        }
        let clamp_applied = lambda_min < 0.0;
        if !clamp_applied {
            return Ok(Self {
                base: m,
                eigenvalues,
                eigenvectors,
                clamp_applied,
            });
        }
        for l in eigenvalues.iter_mut() {
            *l = l.max(0.0);
        }
        let base = SymMatrix(reconstruct(&eigenvectors, &eigenvalues));
        Ok(Self {
            base,
            eigenvalues,
            eigenvectors,
            clamp_applied,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            base: SymMatrix::zeros(dim),
            eigenvalues: vec![0.0; dim],
            eigenvectors: DMatrix::identity(dim, dim),
            clamp_applied: false,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            base: SymMatrix::identity(dim),
            eigenvalues: vec![1.0; dim],
            eigenvectors: DMatrix::identity(dim, dim),
            clamp_applied: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &SymMatrix {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn clamp_applied(&self) -> bool {
        self.clamp_applied
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn trace(&self) -> f64 {
        self.base.matrix().trace()
    }

    pub fn hs_norm(&self) -> f64 {
        hs_norm(&self.base)
    }

    /// `V diag(√λ) Vᵀ`, sharing this operator's eigenvectors.
    pub fn sqrt(&self) -> PsdOperator {
        let eigenvalues: Vec<f64> = self.eigenvalues.iter().map(|l| l.sqrt()).collect();
        let base = SymMatrix(reconstruct(&self.eigenvectors, &eigenvalues));
        PsdOperator {
            base,
            eigenvalues,
            eigenvectors: self.eigenvectors.clone(),
            clamp_applied: false,
        }
    }

    /// `max |V diag(λ) Vᵀ − base|`.
    pub fn reconstruction_error(&self) -> f64 {
        max_abs_diff(&reconstruct(&self.eigenvectors, &self.eigenvalues), self.base.matrix())
    }

    /// `max |VᵀV − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        max_abs_diff(&self.eigenvectors.tr_mul(&self.eigenvectors), &DMatrix::identity(n, n))
    }
}

fn reconstruct(vectors: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, l) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*l);
    }
    symmetrize(scaled * vectors.transpose())
}

pub fn make_psd(m: &SymMatrix, tol: f64) -> Result<PsdOperator> {
    PsdOperator::new(m.clone(), tol)
}

pub fn sqrt_psd(r: &PsdOperator) -> PsdOperator {
    r.sqrt()
}

pub fn trace(a: &PsdOperator) -> f64 {
    a.trace()
}

/// Frobenius (Schatten-2) norm.
pub fn hs_norm(a: &SymMatrix) -> f64 {
    a.matrix().norm()
}

/// `a ≤ b` in the Loewner order: `λ_min(b − a) ≥ −tol·(1 + λ_max(b))`.
pub fn loewner_leq(a: &PsdOperator, b: &PsdOperator, tol: f64) -> Result<bool> {
    check_dims(b.dim(), a.dim())?;
    let diff = b.base().sub(a.base())?;
    let spectrum = sym_eigen(&diff)?;
    let lambda_min = *spectrum.eigenvalues.last().expect("dim >= 1");
    Ok(lambda_min >= -tol * (1.0 + b.lambda_max()))
}

/// `{"dim": n, "data": [row-major entries]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_sym(m: &SymMatrix) -> Self {
        Self {
            dim: m.dim(),
            data: m.to_row_major(),
        }
    }

    /// Parses into a [`SymMatrix`], rejecting a wrong entry count and any
    /// asymmetry above `sym_tol·(1 + max|a_ij|)`.
    pub fn to_sym_matrix(&self, sym_tol: f64) -> Result<SymMatrix> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Malformed("dim must be at least 1".into()));
        }
        if self.data.len() != n * n {
            return Err(Error::Malformed(format!(
                "data has {} entries, expected dim² = {}",
                self.data.len(),
                n * n
            )));
        }
        let scale = 1.0 + self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (self.data[i * n + j] - self.data[j * n + i]).abs();
                if d > sym_tol * scale {
                    return Err(Error::Malformed(format!(
                        "matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {d:e}"
                    )));
                }
            }
        }
        SymMatrix::from_row_major(n, &self.data)
    }
}
