//! Discretized `L²[0,1]` and the operator algebra built on it.
//!
//! A [`GridContext`] fixes `m` midpoints `τ_k = (k + 1/2)/m` with uniform
//! quadrature weight `1/m`. Operators are stored as action matrices
//! `A[i, j] = kernel(τ_i, τ_j)/m`, so that `(𝒜f)(τ_i) = Σ_j A[i, j] f(τ_j)`
//! and every Schatten norm of the operator is the matrix Schatten norm of `A`.
//! Kernel values are `m · A` when exported.

use std::f64::consts::{PI, SQRT_2};

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative Frobenius tolerance for treating an operator as self-adjoint.
pub const SELF_ADJOINT_TOL: f64 = 1e-8;

/// Midpoint discretization of `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridContext {
    m: usize,
}

impl GridContext {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("grid resolution m must be positive".into()));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Quadrature weight `1/m`.
    pub fn weight(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.m as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.point(k)).collect()
    }

    /// Real Fourier basis, 1-based: `e_1 = 1`, `e_{2k} = √2 cos(2πkτ)`,
    /// `e_{2k+1} = √2 sin(2πkτ)`.
    ///
    /// Orthonormal under [`inner`] exactly (up to rounding) for `j ≤ m/2`.
    pub fn fourier_basis(&self, j: usize) -> GridFunc {
        assert!(j >= 1, "Fourier basis is 1-based");
        let freq = (j / 2) as f64;
        let values = self
            .points()
            .into_iter()
            .map(|tau| {
                let v = match j {
                    1 => 1.0,
                    _ if j % 2 == 0 => SQRT_2 * (2.0 * PI * freq * tau).cos(),
                    _ => SQRT_2 * (2.0 * PI * freq * tau).sin(),
                };
                Complex64::new(v, 0.0)
            })
            .collect::<Vec<_>>();
        GridFunc {
            grid: *self,
            values: DVector::from_vec(values),
        }
    }

    fn ensure_same(&self, other: &GridContext) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!(
                "grid m={} vs m={}",
                self.m, other.m
            )));
        }
        Ok(())
    }
}

/// A function sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunc {
    grid: GridContext,
    values: DVector<Complex64>,
}

impl GridFunc {
    pub fn new(grid: GridContext, values: DVector<Complex64>) -> Result<Self> {
        if values.len() != grid.m() {
            return Err(Error::Dimension(format!(
                "function has {} values on a grid of {}",
                values.len(),
                grid.m()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_real(grid: GridContext, values: &[f64]) -> Result<Self> {
        let values = DVector::from_iterator(values.len(), values.iter().map(|&v| v.into()));
        Self::new(grid, values)
    }

    pub fn zeros(grid: GridContext) -> Self {
        Self {
            grid,
            values: DVector::zeros(grid.m()),
        }
    }

    pub fn constant(grid: GridContext, c: f64) -> Self {
        Self {
            grid,
            values: DVector::from_element(grid.m(), c.into()),
        }
    }

    pub fn from_fn(grid: GridContext, f: impl Fn(f64) -> f64) -> Self {
        let values = DVector::from_iterator(grid.m(), grid.points().into_iter().map(|t| f(t).into()));
        Self { grid, values }
    }

    pub fn grid(&self) -> GridContext {
        self.grid
    }

    pub fn values(&self) -> &DVector<Complex64> {
        &self.values
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: &self.values * c,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.weight() * self.values.norm_squared()).sqrt()
    }

    pub fn to_json(&self) -> GridFuncJson {
        if self.values.iter().all(|v| v.im == 0.0) {
            GridFuncJson::Real(self.values.iter().map(|v| v.re).collect())
        } else {
            GridFuncJson::Complex {
                re: self.values.iter().map(|v| v.re).collect(),
                im: self.values.iter().map(|v| v.im).collect(),
            }
        }
    }

    pub fn from_json(json: &GridFuncJson) -> Result<Self> {
        let values: Vec<Complex64> = match json {
            GridFuncJson::Real(re) => re.iter().map(|&v| v.into()).collect(),
            GridFuncJson::Complex { re, im } => {
                if re.len() != im.len() {
                    return Err(Error::Format("re/im length mismatch".into()));
                }
                re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect()
            }
        };
        let grid = GridContext::new(values.len())?;
        Self::new(grid, DVector::from_vec(values))
    }
}

/// JSON form of a [`GridFunc`]: a flat array for real functions, split
/// real/imaginary arrays otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridFuncJson {
    Real(Vec<f64>),
    Complex { re: Vec<f64>, im: Vec<f64> },
}

/// `⟨f, g⟩ = ∫ f ḡ`, approximated by the midpoint rule.
pub fn inner(f: &GridFunc, g: &GridFunc) -> Result<Complex64> {
    f.grid.ensure_same(&g.grid)?;
    let s: Complex64 = f
        .values
        .iter()
        .zip(g.values.iter())
        .map(|(a, b)| a * b.conj())
        .sum();
    Ok(s * f.grid.weight())
}

/// `(f ⊗ g)u = ⟨u, g⟩ f`; rank one.
pub fn tensor(f: &GridFunc, g: &GridFunc) -> Result<LinOp> {
    f.grid.ensure_same(&g.grid)?;
    let action = &f.values * g.values.adjoint() * Complex64::from(f.grid.weight());
    Ok(LinOp {
        grid: f.grid,
        action,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchattenOrder {
    /// Nuclear norm.
    One,
    /// Hilbert-Schmidt norm.
    Two,
    /// Operator norm.
    Inf,
}

/// A bounded linear operator on grid functions.
#[derive(Clone, Debug, PartialEq)]
pub struct LinOp {
    grid: GridContext,
    action: DMatrix<Complex64>,
}

impl LinOp {
    pub fn from_action(grid: GridContext, action: DMatrix<Complex64>) -> Result<Self> {
        if action.nrows() != grid.m() || action.ncols() != grid.m() {
            return Err(Error::Dimension(format!(
                "action is {}x{} on a grid of {}",
                action.nrows(),
                action.ncols(),
                grid.m()
            )));
        }
        Ok(Self { grid, action })
    }

    /// Builds the operator from kernel samples `k(τ_i, τ_j)`.
    pub fn from_kernel(grid: GridContext, kernel: impl Fn(f64, f64) -> Complex64) -> Self {
        let pts = grid.points();
        let w = grid.weight();
        let action = DMatrix::from_fn(grid.m(), grid.m(), |i, j| kernel(pts[i], pts[j]) * w);
        Self { grid, action }
    }

    pub fn zeros(grid: GridContext) -> Self {
        Self {
            grid,
            action: DMatrix::zeros(grid.m(), grid.m()),
        }
    }

    pub fn identity(grid: GridContext) -> Self {
        Self {
            grid,
            action: DMatrix::identity(grid.m(), grid.m()),
        }
    }

    /// `Σ_j c_j e_j ⊗ e_j` over the real Fourier basis, `j = 1..=coeffs.len()`.
    pub fn fourier_diagonal(grid: GridContext, coeffs: &[Complex64]) -> Self {
        let mut action = DMatrix::zeros(grid.m(), grid.m());
        for (idx, &c) in coeffs.iter().enumerate() {
            let e = grid.fourier_basis(idx + 1);
            action += &e.values * e.values.transpose() * (c * grid.weight());
        }
        Self { grid, action }
    }

    pub fn grid(&self) -> GridContext {
        self.grid
    }

    pub fn action(&self) -> &DMatrix<Complex64> {
        &self.action
    }

    pub fn into_action(self) -> DMatrix<Complex64> {
        self.action
    }

    /// Kernel values `m · action`.
    pub fn kernel(&self) -> DMatrix<Complex64> {
        &self.action * Complex64::from(self.grid.m() as f64)
    }

    pub fn apply(&self, f: &GridFunc) -> Result<GridFunc> {
        self.grid.ensure_same(&f.grid)?;
        Ok(GridFunc {
            grid: self.grid,
            values: &self.action * &f.values,
        })
    }

    pub fn hs_norm(&self) -> f64 {
        self.action.norm()
    }

    pub fn schatten_norm(&self, order: SchattenOrder) -> Result<f64> {
        self.ensure_finite()?;
        if order == SchattenOrder::Two {
            return Ok(self.hs_norm());
        }
        let sv = to_faer(&self.action)
            .singular_values()
            .map_err(|_| Error::NonFinite("singular value decomposition did not converge"))?;
        Ok(match order {
            SchattenOrder::One => sv.iter().sum(),
            SchattenOrder::Inf => sv.iter().copied().fold(0.0, f64::max),
            SchattenOrder::Two => unreachable!(),
        })
    }

    pub fn compose(&self, other: &LinOp) -> Result<LinOp> {
        self.grid.ensure_same(&other.grid)?;
        Ok(LinOp {
            grid: self.grid,
            action: &self.action * &other.action,
        })
    }

    pub fn add(&self, other: &LinOp) -> Result<LinOp> {
        self.grid.ensure_same(&other.grid)?;
        Ok(LinOp {
            grid: self.grid,
            action: &self.action + &other.action,
        })
    }

    pub fn sub(&self, other: &LinOp) -> Result<LinOp> {
        self.grid.ensure_same(&other.grid)?;
        Ok(LinOp {
            grid: self.grid,
            action: &self.action - &other.action,
        })
    }

    pub fn scale(&self, c: Complex64) -> LinOp {
        LinOp {
            grid: self.grid,
            action: &self.action * c,
        }
    }

    pub fn adjoint(&self) -> LinOp {
        LinOp {
            grid: self.grid,
            action: self.action.adjoint(),
        }
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> LinOp {
        LinOp {
            grid: self.grid,
            action: self.action.map(|z| z.conj()),
        }
    }

    /// `‖A − A*‖₂ / ‖A‖₂`, zero for the zero operator.
    pub fn asymmetry(&self) -> f64 {
        let norm = self.hs_norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.action - self.action.adjoint()).norm() / norm
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.asymmetry() <= SELF_ADJOINT_TOL
    }

    /// `(A + A*)/2`.
    pub fn hermitian_part(&self) -> LinOp {
        LinOp {
            grid: self.grid,
            action: (&self.action + self.action.adjoint()) * Complex64::from(0.5),
        }
    }

    /// HS norm of the entrywise imaginary part.
    pub fn imag_hs_norm(&self) -> f64 {
        self.action.iter().map(|z| z.im * z.im).sum::<f64>().sqrt()
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.action.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("operator action"))
        }
    }

    pub fn to_json(&self) -> LinOpJson {
        let m = self.grid.m();
        LinOpJson {
            m,
            action_re: (0..m).map(|i| (0..m).map(|j| self.action[(i, j)].re).collect()).collect(),
            action_im: (0..m).map(|i| (0..m).map(|j| self.action[(i, j)].im).collect()).collect(),
        }
    }

    pub fn from_json(json: &LinOpJson) -> Result<Self> {
        let m = json.m;
        let grid = GridContext::new(m)?;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == m && rows.iter().all(|r| r.len() == m);
        if !rows_ok(&json.action_re) || !rows_ok(&json.action_im) {
            return Err(Error::Format(format!("LinOp export is not {m}x{m}")));
        }
        let action = DMatrix::from_fn(m, m, |i, j| {
            Complex64::new(json.action_re[i][j], json.action_im[i][j])
        });
        Ok(Self { grid, action })
    }
}

/// JSON export of a [`LinOp`]; entries are the action matrix, not the kernel
/// (kernel values are `m · action`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinOpJson {
    pub m: usize,
    pub action_re: Vec<Vec<f64>>,
    pub action_im: Vec<Vec<f64>>,
}

/// Spectral decomposition of a self-adjoint operator.
#[derive(Clone, Debug)]
pub struct Eigh {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal under [`inner`], matching `eigenvalues`.
    pub eigenfunctions: Vec<GridFunc>,
}

pub fn eigh(a: &LinOp) -> Result<Eigh> {
    a.ensure_finite()?;
    let asym = a.asymmetry();
    if asym > SELF_ADJOINT_TOL {
        return Err(Error::NotSelfAdjoint(asym));
    }
    let (values, vectors) = hermitian_eigen(&a.hermitian_part().action)?;
    let scale = Complex64::from((a.grid.m() as f64).sqrt());
    let eigenfunctions = (0..values.len())
        .map(|k| GridFunc {
            grid: a.grid,
            values: vectors.column(k) * scale,
        })
        .collect();
    Ok(Eigh {
        eigenvalues: values,
        eigenfunctions,
    })
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending, unit-norm
/// eigenvector columns.
fn to_faer(a: &DMatrix<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
pub(crate) fn hermitian_eigen(h: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let eig = to_faer(h)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NonFinite("eigendecomposition did not converge"))?;
    let (s, u) = (eig.S(), eig.U());
    let n = h.nrows();
    // faer returns ascending order
    let values = (0..n).rev().map(|k| s[k].re).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| u[(r, n - 1 - c)]);
    Ok((values, vectors))
}

/// Ridge-regularized inverse `[A + ζ𝓘]⁻¹`.
///
/// `A` is replaced by its Hermitian part before factorizing. Fails with
/// [`Error::RidgeNotPositive`] unless `λ_min + ζ > 0`.
pub fn tikhonov_inverse(a: &LinOp, zeta: f64) -> Result<LinOp> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::Parameter(format!("ridge parameter must be positive, got {zeta}")));
    }
    a.ensure_finite()?;
    let asym = a.asymmetry();
    if asym > SELF_ADJOINT_TOL {
        return Err(Error::NotSelfAdjoint(asym));
    }
    let sym = a.hermitian_part();
    let (values, v) = hermitian_eigen(&sym.action)?;
    let min = values.last().copied().unwrap_or(f64::INFINITY);
    if !(min + zeta > 0.0) {
        return Err(Error::RidgeNotPositive {
            min_eigenvalue: min,
            zeta,
        });
    }
    let mut scaled = v.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::from(1.0 / (values[k] + zeta));
    }
    Ok(LinOp {
        grid: a.grid,
        action: scaled * v.adjoint(),
    })
}
