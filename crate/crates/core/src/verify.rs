//! Fast self-checks of the numerical pipeline, run by `ftsreg verify`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::experiments::{mse_frequency_curves, mse_lag_curves};
use crate::opcore::{tikhonov_inverse, GridContext, LinOp};
use crate::regression::{roundtrip_check, FilterBank};
use crate::simulate::{GroundTruth, ProcessSpec};
use crate::spectral::{fdft, kernel_moment_check, FuncSeries, SmoothingKernel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Worst observed discrepancy.
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<24} {:.3e} (tol {:.0e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_series(grid: GridContext, t_len: usize, rng: &mut impl Rng) -> Result<FuncSeries> {
    FuncSeries::new(grid, DMatrix::from_fn(t_len, grid.m(), |_, _| rng.gen_range(-1.0..1.0)))
}

pub fn random_op(grid: GridContext, rng: &mut impl Rng) -> LinOp {
    let m = grid.m();
    let a = DMatrix::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    LinOp::from_action(grid, a / Complex64::from(m as f64)).expect("square by construction")
}

pub fn random_bank(grid: GridContext, radius: usize, rng: &mut impl Rng) -> FilterBank {
    let r = radius as i64;
    let ops: BTreeMap<i64, LinOp> = (-r..=r).map(|lag| (lag, random_op(grid, rng))).collect();
    FilterBank::new(grid, radius, ops).expect("lags within radius")
}

/// `Σ_s ‖X̃_s‖² = Σ_t ‖X_t‖²`, relative error over a few random series.
pub fn check_dft_parseval(seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng(seed);
    let grid = GridContext::new(16)?;
    let mut worst: f64 = 0.0;
    for t_len in [17, 64, 100] {
        let x = random_series(grid, t_len, &mut rng)?;
        let lhs = fdft(&x).coeffs().norm_squared();
        let rhs = x.data().norm_squared();
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(CheckOutcome::new("dft_parseval", worst, 1e-10))
}

/// `mse_freq = 2π mse_lag` for random curve pairs.
pub fn check_mse_parseval(seed: u64, pairs: usize, t_len: usize, m: usize) -> Result<CheckOutcome> {
    let mut rng = rng(seed);
    let grid = GridContext::new(m)?;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a: Vec<LinOp> = (0..t_len).map(|_| random_op(grid, &mut rng)).collect();
        let b: Vec<LinOp> = (0..t_len).map(|_| random_op(grid, &mut rng)).collect();
        let f = mse_frequency_curves(&a, &b)?;
        let l = mse_lag_curves(&a, &b)?;
        worst = worst.max((f - 2.0 * PI * l).abs() / f);
    }
    Ok(CheckOutcome::new("mse_parseval", worst, 1e-9))
}

pub fn check_roundtrip(seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng(seed);
    let grid = GridContext::new(16)?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        worst = worst.max(roundtrip_check(&random_bank(grid, 3, &mut rng), 64)?);
    }
    Ok(CheckOutcome::new("filter_roundtrip", worst, 1e-10))
}

/// `‖F^{YX}_ω − Q_ω F^{XX}_ω‖₂ / ‖F^{YX}_ω‖₂` for the closed-form truth.
pub fn check_transfer_identity(seed: u64, freqs: usize) -> Result<CheckOutcome> {
    let mut rng = rng(seed);
    let truth = GroundTruth::new(ProcessSpec::default(), GridContext::new(32)?)?;
    let mut worst: f64 = 0.0;
    for _ in 0..freqs {
        let w = rng.gen_range(0.0..2.0 * PI);
        let fyx = truth.cross_spectral_density(w);
        let qf = truth.transfer(w).compose(&truth.spectral_density(w))?;
        worst = worst.max(fyx.sub(&qf)?.hs_norm() / fyx.hs_norm());
    }
    Ok(CheckOutcome::new("transfer_identity", worst, 1e-10))
}

pub fn check_kernel_moments() -> Vec<CheckOutcome> {
    [(SmoothingKernel::epanechnikov(), 2), (SmoothingKernel::quartic(), 4)]
        .into_iter()
        .map(|(k, p)| {
            let r = kernel_moment_check(&k, p);
            let worst = r
                .moments
                .iter()
                .take(p)
                .enumerate()
                .map(|(j, m)| if j == 0 { (m - 1.0).abs() } else { m.abs() })
                .fold(0.0, f64::max);
            CheckOutcome::new(format!("moments_{}", r.kernel), worst, r.tolerance)
        })
        .collect()
}

/// `‖(A + ζ𝓘) R − 𝓘‖₂` for `R = tikhonov_inverse(A, ζ)` and random PSD `A`.
pub fn check_tikhonov_residual(seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng(seed);
    let grid = GridContext::new(16)?;
    let id = LinOp::identity(grid);
    let mut worst: f64 = 0.0;
    for zeta in [1e-4, 1e-2, 1.0] {
        let b = random_op(grid, &mut rng);
        let a = b.compose(&b.adjoint())?;
        let a = a.scale(Complex64::from(1.0 / a.hs_norm()));
        let r = tikhonov_inverse(&a, zeta)?;
        let resid = a.add(&id.scale(zeta.into()))?.compose(&r)?.sub(&id)?.hs_norm();
        worst = worst.max(resid);
    }
    Ok(CheckOutcome::new("tikhonov_residual", worst, 1e-10))
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![
        check_dft_parseval(seed)?,
        check_mse_parseval(seed, 5, 64, 8)?,
        check_roundtrip(seed)?,
        check_transfer_identity(seed, 32)?,
    ];
    out.extend(check_kernel_moments());
    out.push(check_tikhonov_residual(seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let outcomes = run_all(7).unwrap();
        assert_eq!(outcomes.len(), 7);
        for o in &outcomes {
            assert!(o.pass, "{o}");
        }
        assert!(outcomes[0].to_string().starts_with("PASS dft_parseval"));
    }

    #[test]
    fn outcome_fails_above_tolerance() {
        assert!(!CheckOutcome::new("x", 2e-10, 1e-10).pass);
        assert!(CheckOutcome::new("x", 0.0, 0.0).pass);
    }
}
