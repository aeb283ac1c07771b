//! The smoothed Fourier-Tikhonov filter estimator.
//!
//! Per Fourier frequency `ν_s` the transfer operator is estimated by
//! `Q̂_s = F̂^{YX}_s [F̂^{XX}_s + ζ𝓘]⁻¹` and the filter by the discrete
//! inverse transform
//!
//! ```text
//! B̂_ℓ = T⁻¹ Σ_s Q̂_s e^{+iν_s ℓ},     Q_ω = Σ_ℓ e^{-iωℓ} B_ℓ,
//! ```
//!
//! which are exact inverses of each other for filters supported on
//! `|ℓ| < T/2`. Negative lags are read from DFT index `T + ℓ`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opcore::{eigh, tensor, tikhonov_inverse, GridContext, LinOp, LinOpJson};
use crate::spectral::{fdft, fourier_freqs, smooth_spectrum, CurveKind, FuncSeries, SmoothingKernel, SpectralCurve};

/// Finitely supported filter `{B_ℓ : |ℓ| ≤ L}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    grid: GridContext,
    radius: usize,
    ops: BTreeMap<i64, LinOp>,
}

impl FilterBank {
    pub fn new(grid: GridContext, radius: usize, ops: BTreeMap<i64, LinOp>) -> Result<Self> {
        for (&lag, op) in &ops {
            if lag.unsigned_abs() as usize > radius {
                return Err(Error::Parameter(format!("lag {lag} outside radius {radius}")));
            }
            if op.grid() != grid {
                return Err(Error::Dimension(format!("operator at lag {lag} is on another grid")));
            }
        }
        Ok(Self { grid, radius, ops })
    }

    pub fn empty(grid: GridContext) -> Self {
        Self {
            grid,
            radius: 0,
            ops: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> GridContext {
        self.grid
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn lags(&self) -> Vec<i64> {
        self.ops.keys().copied().collect()
    }

    pub fn ops(&self) -> &BTreeMap<i64, LinOp> {
        &self.ops
    }

    pub fn get(&self, lag: i64) -> Option<&LinOp> {
        self.ops.get(&lag)
    }

    /// `Σ_ℓ ‖B_ℓ‖₂`.
    pub fn hs_summability(&self) -> f64 {
        self.ops.values().map(LinOp::hs_norm).sum()
    }

    /// `Σ_ℓ ‖B_ℓ‖₂²`.
    pub fn hs_energy(&self) -> f64 {
        self.ops.values().map(|op| op.hs_norm().powi(2)).sum()
    }

    /// Relative size of the imaginary parts, `(Σ‖Im B_ℓ‖₂²)^{1/2} / (Σ‖B_ℓ‖₂²)^{1/2}`.
    pub fn imag_mass(&self) -> f64 {
        let total = self.hs_energy().sqrt();
        if total == 0.0 {
            return 0.0;
        }
        self.ops
            .values()
            .map(|op| op.imag_hs_norm().powi(2))
            .sum::<f64>()
            .sqrt()
            / total
    }

    /// `Σ_{|ℓ| ≤ L} ‖B_ℓ − B'_ℓ‖₂²` over the union of both supports.
    pub fn squared_distance(&self, other: &FilterBank) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Dimension("filter banks live on different grids".into()));
        }
        let zero = LinOp::zeros(self.grid);
        let lags: std::collections::BTreeSet<i64> =
            self.ops.keys().chain(other.ops.keys()).copied().collect();
        lags.into_iter()
            .map(|lag| {
                let a = self.ops.get(&lag).unwrap_or(&zero);
                let b = other.ops.get(&lag).unwrap_or(&zero);
                Ok(a.sub(b)?.hs_norm().powi(2))
            })
            .sum()
    }

    pub fn to_json(&self) -> FilterBankJson {
        FilterBankJson {
            radius: self.radius,
            lags: self.lags(),
            ops: self.ops.values().map(LinOp::to_json).collect(),
            imag_mass: self.imag_mass(),
        }
    }

    pub fn from_json(json: &FilterBankJson) -> Result<Self> {
        if json.lags.len() != json.ops.len() {
            return Err(Error::Format(format!(
                "{} lags but {} operators",
                json.lags.len(),
                json.ops.len()
            )));
        }
        let mut ops = BTreeMap::new();
        for (&lag, op) in json.lags.iter().zip(&json.ops) {
            if ops.insert(lag, LinOp::from_json(op)?).is_some() {
                return Err(Error::Format(format!("duplicate lag {lag}")));
            }
        }
        let grid = match ops.values().next() {
            Some(op) => op.grid(),
            None => return Err(Error::Format("filter bank JSON has no operators to fix the grid".into())),
        };
        Self::new(grid, json.radius, ops)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBankJson {
    #[serde(rename = "L")]
    pub radius: usize,
    pub lags: Vec<i64>,
    pub ops: Vec<LinOpJson>,
    pub imag_mass: f64,
}

/// `Q_ω = Σ_ℓ e^{-iωℓ} B_ℓ`.
pub fn transfer_function(bank: &FilterBank, omega: f64) -> LinOp {
    let mut action = DMatrix::zeros(bank.grid.m(), bank.grid.m());
    for (&lag, op) in &bank.ops {
        action += op.action() * Complex64::from_polar(1.0, -omega * lag as f64);
    }
    LinOp::from_action(bank.grid, action).expect("bank operators share the grid")
}

/// Full inverse DFT `T⁻¹ Σ_s Q_s e^{+iν_s ℓ}` for `ℓ = 0..T`.
pub fn inverse_transform(ops: &[LinOp]) -> Result<Vec<LinOp>> {
    let t_len = ops.len();
    let Some(first) = ops.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid();
    if ops.iter().any(|op| op.grid() != grid) {
        return Err(Error::Dimension("curve mixes grids".into()));
    }
    let m = grid.m();
    let ifft = FftPlanner::new().plan_fft_inverse(t_len);
    let inv_len = 1.0 / t_len as f64;
    let columns: Vec<Vec<Complex64>> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            let mut buf: Vec<Complex64> = ops.iter().map(|op| op.action()[(i, j)]).collect();
            ifft.process(&mut buf);
            buf.iter_mut().for_each(|z| *z *= inv_len);
            buf
        })
        .collect();
    (0..t_len)
        .map(|lag| {
            LinOp::from_action(grid, DMatrix::from_fn(m, m, |i, j| columns[i * m + j][lag]))
        })
        .collect()
}

/// Recovers `{B_ℓ : |ℓ| ≤ radius}` from a transfer curve sampled at every
/// Fourier frequency.
pub fn filter_from_curve(ops: &[LinOp], radius: usize) -> Result<FilterBank> {
    let t_len = ops.len();
    if 2 * radius >= t_len {
        return Err(Error::Aliasing { radius, len: t_len });
    }
    let grid = ops[0].grid();
    let mut lagged = inverse_transform(ops)?;
    let mut bank = BTreeMap::new();
    for lag in -(radius as i64)..=(radius as i64) {
        let idx = lag.rem_euclid(t_len as i64) as usize;
        bank.insert(lag, std::mem::replace(&mut lagged[idx], LinOp::zeros(grid)));
    }
    FilterBank::new(grid, radius, bank)
}

/// Evaluates the transfer function of `bank` at all `T` Fourier frequencies,
/// inverts it and returns `max_ℓ ‖recovered_ℓ − B_ℓ‖₂`.
pub fn roundtrip_check(bank: &FilterBank, t_len: usize) -> Result<f64> {
    if 2 * bank.radius >= t_len {
        return Err(Error::Aliasing {
            radius: bank.radius,
            len: t_len,
        });
    }
    let curve: Vec<LinOp> = fourier_freqs(t_len)
        .into_iter()
        .map(|nu| transfer_function(bank, nu))
        .collect();
    let recovered = filter_from_curve(&curve, bank.radius)?;
    let zero = LinOp::zeros(bank.grid);
    recovered
        .ops
        .iter()
        .map(|(lag, op)| Ok(op.sub(bank.ops.get(lag).unwrap_or(&zero))?.hs_norm()))
        .try_fold(0.0f64, |acc, d: Result<f64>| Ok(acc.max(d?)))
}

/// Tuning parameters `ζ_T = T^{-α/(α+2β)}` and `B_T = T^{-γ}` for the
/// mildly ill-posed regime `λ_j ≍ j^{-α}`, `|b_j| ≲ j^{-β}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningSchedule {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub t_len: usize,
    pub zeta: f64,
    pub bandwidth: f64,
    /// Predicted slope of log-MSE against log T: `γ − (2β−1)/(α+2β)`.
    pub rate_exponent: f64,
}

impl TuningSchedule {
    /// Admissible open interval for the bandwidth exponent γ.
    pub fn gamma_window(alpha: f64, beta: f64) -> (f64, f64) {
        let denom = alpha + 2.0 * beta;
        ((alpha - 1.0) / denom, (2.0 * beta - alpha) / denom)
    }

    pub fn params(&self) -> FitParams {
        FitParams {
            zeta: self.zeta,
            bandwidth: self.bandwidth,
        }
    }
}

pub fn check_ill_posedness(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 1.0) {
        return Err(Error::Schedule(format!("alpha > 1 (alpha = {alpha})")));
    }
    if !(beta > 0.5) {
        return Err(Error::Schedule(format!("beta > 1/2 (beta = {beta})")));
    }
    if !(alpha < beta + 0.5) {
        return Err(Error::Schedule(format!(
            "alpha < beta + 1/2 (alpha = {alpha}, beta = {beta})"
        )));
    }
    Ok(())
}

pub fn schedule(alpha: f64, beta: f64, gamma: f64, t_len: usize) -> Result<TuningSchedule> {
    check_ill_posedness(alpha, beta)?;
    let (lo, hi) = TuningSchedule::gamma_window(alpha, beta);
    if !(gamma > lo && gamma < hi) {
        return Err(Error::Schedule(format!(
            "(alpha-1)/(alpha+2beta) < gamma < (2beta-alpha)/(alpha+2beta): gamma = {gamma} not in ({lo}, {hi})"
        )));
    }
    if t_len < 2 {
        return Err(Error::Schedule(format!("T >= 2 (T = {t_len})")));
    }
    let t = t_len as f64;
    let denom = alpha + 2.0 * beta;
    Ok(TuningSchedule {
        alpha,
        beta,
        gamma,
        t_len,
        zeta: t.powf(-alpha / denom),
        bandwidth: t.powf(-gamma),
        rate_exponent: gamma - (2.0 * beta - 1.0) / denom,
    })
}

/// Ridge parameter and bandwidth actually used by an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub zeta: f64,
    pub bandwidth: f64,
}

/// How `F̂^{XX}` is inverted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Inversion {
    Tikhonov { zeta: f64 },
    Truncation { rank: usize },
}

/// `F̂^{YX} [F̂^{XX} + ζ𝓘]⁻¹`.
pub fn estimate_q(fyx: &LinOp, fxx: &LinOp, zeta: f64) -> Result<LinOp> {
    fyx.compose(&tikhonov_inverse(fxx, zeta)?)
}

/// `F̂^{YX} Σ_{n ≤ K} λ̂_n⁻¹ φ̂_n ⊗ φ̂_n`.
pub fn estimate_q_truncated(fyx: &LinOp, fxx: &LinOp, rank: usize) -> Result<LinOp> {
    let m = fxx.grid().m();
    if rank == 0 || rank > m {
        return Err(Error::Rank {
            rank,
            reason: format!("must lie in 1..={m}"),
        });
    }
    let e = eigh(fxx)?;
    let lambda_k = e.eigenvalues[rank - 1];
    // eigenvalues at roundoff level relative to the top one count as zero
    let floor = m as f64 * f64::EPSILON * e.eigenvalues[0].abs();
    if !(lambda_k > floor) {
        return Err(Error::Rank {
            rank,
            reason: format!("eigenvalue {lambda_k:.3e} is not positive"),
        });
    }
    let mut pinv = LinOp::zeros(fxx.grid());
    for (lam, phi) in e.eigenvalues.iter().zip(&e.eigenfunctions).take(rank) {
        pinv = pinv.add(&tensor(phi, phi)?.scale((1.0 / lam).into()))?;
    }
    fyx.compose(&pinv)
}

/// Output of [`estimate_filter`].
#[derive(Clone, Debug)]
pub struct FilterEstimate {
    pub bank: FilterBank,
    /// `Q̂` at every Fourier frequency.
    pub qhat: SpectralCurve,
    pub params: FitParams,
}

/// Smoothed Fourier-Tikhonov estimate with the schedule's `ζ_T` and `B_T`.
pub fn estimate_filter(
    x: &FuncSeries,
    y: &FuncSeries,
    kernel: &SmoothingKernel,
    sched: &TuningSchedule,
    radius: usize,
) -> Result<FilterEstimate> {
    estimate_filter_with(
        x,
        y,
        kernel,
        sched.bandwidth,
        Inversion::Tikhonov { zeta: sched.zeta },
        radius,
    )
}

pub fn estimate_filter_with(
    x: &FuncSeries,
    y: &FuncSeries,
    kernel: &SmoothingKernel,
    bandwidth: f64,
    inversion: Inversion,
    radius: usize,
) -> Result<FilterEstimate> {
    if x.grid() != y.grid() {
        return Err(Error::Dimension(format!(
            "X on m={} but Y on m={}",
            x.grid().m(),
            y.grid().m()
        )));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "X has T={} but Y has T={}",
            x.len(),
            y.len()
        )));
    }
    let t_len = x.len();
    if 2 * radius >= t_len {
        return Err(Error::Aliasing { radius, len: t_len });
    }
    let dx = fdft(x);
    let dy = fdft(y);
    let fxx = smooth_spectrum(&dx, None, kernel, bandwidth)?;
    let fyx = smooth_spectrum(&dy, Some(&dx), kernel, bandwidth)?;
    let qhat = transfer_curve(&fyx, &fxx, inversion)?;
    let bank = filter_from_curve(qhat.ops(), radius)?;
    let zeta = match inversion {
        Inversion::Tikhonov { zeta } => zeta,
        Inversion::Truncation { .. } => 0.0,
    };
    Ok(FilterEstimate {
        bank,
        qhat,
        params: FitParams { zeta, bandwidth },
    })
}

/// Applies the inversion at every frequency of two smoothed curves. Only
/// `s ≤ T/2` is solved; the rest is the conjugate reflection.
pub fn transfer_curve(fyx: &SpectralCurve, fxx: &SpectralCurve, inversion: Inversion) -> Result<SpectralCurve> {
    if fyx.len() != fxx.len() {
        return Err(Error::Dimension("spectral curves differ in length".into()));
    }
    let t_len = fxx.len();
    let half: Vec<LinOp> = (0..=t_len / 2)
        .into_par_iter()
        .map(|s| match inversion {
            Inversion::Tikhonov { zeta } => estimate_q(fyx.at(s), fxx.at(s), zeta),
            Inversion::Truncation { rank } => estimate_q_truncated(fyx.at(s), fxx.at(s), rank),
        })
        .collect::<Result<_>>()?;
    let mut ops = half;
    for s in (t_len / 2 + 1)..t_len {
        let mirror = ops[t_len - s].conj();
        ops.push(mirror);
    }
    SpectralCurve::new(CurveKind::Cross, fxx.bandwidth(), ops)
}

/// Scalar sums controlling bias, variance and effective dimension of the
/// ridge inverse for `λ_j = j^{-α}`, `b_j = j^{-β}`, `ζ = T^{-α/(α+2β)}`:
///
/// ```text
/// bias      = Σ_j ζ² b_j² / (λ_j + ζ)²
/// variance  = T⁻¹ Σ_j λ_j / (λ_j + ζ)²
/// dimension = Σ_j λ_j² / (λ_j + ζ)²
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgeSums {
    pub bias: f64,
    pub variance: f64,
    pub dimension: f64,
}

const RIDGE_SUM_TERMS: usize = 1_000_000;

pub fn ridge_sums(alpha: f64, beta: f64, t_len: usize) -> RidgeSums {
    let t = t_len as f64;
    let zeta = t.powf(-alpha / (alpha + 2.0 * beta));
    let (mut bias, mut variance, mut dimension) = (0.0, 0.0, 0.0);
    // Sum small terms first.
    for j in (1..=RIDGE_SUM_TERMS).rev() {
        let jf = j as f64;
        let lam = jf.powf(-alpha);
        let b2 = jf.powf(-2.0 * beta);
        let d2 = (lam + zeta).powi(2);
        bias += zeta * zeta * b2 / d2;
        variance += lam / d2;
        dimension += lam * lam / d2;
    }
    // Beyond the cutoff λ_j ≪ ζ and each summand is a pure power of j.
    let n = RIDGE_SUM_TERMS as f64;
    let tail = |p: f64| (n + 0.5).powf(1.0 - p) / (p - 1.0);
    bias += tail(2.0 * beta);
    variance += tail(alpha) / (zeta * zeta);
    dimension += tail(2.0 * alpha) / (zeta * zeta);
    RidgeSums {
        bias,
        variance: variance / t,
        dimension,
    }
}
