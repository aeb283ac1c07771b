//! Coupled functional time series with closed-form ground truth.
//!
//! The covariate is a sum of independent stationary AR(1) scores on the
//! real Fourier basis,
//!
//! ```text
//! X_t = Σ_{j ≤ J} σ_j ξ_{j,t} e_j,    ξ_{j,t} = ρ ξ_{j,t-1} + η_{j,t},   σ_j² = j^{-α},
//! ```
//!
//! and the response applies the diagonal filter `B_ℓ = w_ℓ Σ_j j^{-β} e_j ⊗ e_j`
//! over lags `ℓ ∈ {-1, 0, 1}` plus independent Gaussian noise:
//!
//! ```text
//! Y_t = Σ_ℓ B_ℓ X_{t-ℓ} + ε_t,        Var⟨ε_t, e_j⟩ = noise_scale · j^{-noise_alpha}.
//! ```
//!
//! Randomness comes from a ChaCha stream keyed by `(seed, replicate)` with
//! one stream per mode, so any replicate can be regenerated on its own.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opcore::{GridContext, LinOp};
use crate::regression::{check_ill_posedness, FilterBank, FilterBankJson};
use crate::spectral::{fourier_freqs, FuncSeries};

/// Parameters of the simulated pair. Missing JSON fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessSpec {
    /// Number of Fourier modes carrying signal.
    #[serde(rename = "J")]
    pub modes: usize,
    /// Score variances decay as `j^{-alpha}`.
    pub alpha: f64,
    /// AR(1) coefficient shared by all modes.
    pub rho: f64,
    /// Filter eigenvalues decay as `j^{-beta}`.
    pub beta: f64,
    /// `(w_{-1}, w_0, w_1)`.
    pub filter_lags: [f64; 3],
    pub noise_alpha: f64,
    pub noise_scale: f64,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        Self {
            modes: 8,
            alpha: 2.0,
            rho: 0.5,
            beta: 2.0,
            filter_lags: [0.4, 1.0, 0.4],
            noise_alpha: 2.0,
            noise_scale: 1.0,
        }
    }
}

pub const FILTER_LAGS: [i64; 3] = [-1, 0, 1];

impl ProcessSpec {
    pub fn validate(&self, grid: GridContext) -> Result<()> {
        if self.modes == 0 || 4 * self.modes > grid.m() {
            return Err(Error::Config(format!(
                "J = {} must satisfy 1 <= J <= m/4 = {}",
                self.modes,
                grid.m() / 4
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Config(format!("|rho| < 1 required, got {}", self.rho)));
        }
        check_ill_posedness(self.alpha, self.beta).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.noise_alpha > 1.0) {
            return Err(Error::Config(format!(
                "noise_alpha > 1 required, got {}",
                self.noise_alpha
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if !self.filter_lags.iter().all(|w| w.is_finite()) {
            return Err(Error::Config("filter weights must be finite".into()));
        }
        Ok(())
    }

    /// `σ_j² = j^{-α}`, `j = 1..=J`.
    pub fn score_variances(&self) -> Vec<f64> {
        (1..=self.modes).map(|j| (j as f64).powf(-self.alpha)).collect()
    }

    /// `j^{-β}`, `j = 1..=J`.
    pub fn filter_eigenvalues(&self) -> Vec<f64> {
        (1..=self.modes).map(|j| (j as f64).powf(-self.beta)).collect()
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        (1..=self.modes)
            .map(|j| self.noise_scale * (j as f64).powf(-self.noise_alpha))
            .collect()
    }

    /// AR(1) spectral density with unit innovations,
    /// `(2π)⁻¹ / |1 − ρ e^{-iω}|²`.
    pub fn ar_density(&self, omega: f64) -> f64 {
        let denom = (Complex64::from(1.0) - Complex64::from_polar(self.rho, -omega)).norm_sqr();
        1.0 / (2.0 * PI * denom)
    }

    /// `Σ_ℓ w_ℓ e^{-iωℓ}`.
    pub fn lag_polynomial(&self, omega: f64) -> Complex64 {
        FILTER_LAGS
            .iter()
            .zip(self.filter_lags)
            .map(|(&lag, w)| Complex64::from_polar(w, -omega * lag as f64))
            .sum()
    }
}

/// Closed-form second-order structure of a simulated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    spec: ProcessSpec,
    grid: GridContext,
}

impl GroundTruth {
    pub fn new(spec: ProcessSpec, grid: GridContext) -> Result<Self> {
        spec.validate(grid)?;
        Ok(Self { spec, grid })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn grid(&self) -> GridContext {
        self.grid
    }

    fn diagonal(&self, coeffs: impl Iterator<Item = Complex64>) -> LinOp {
        LinOp::fourier_diagonal(self.grid, &coeffs.collect::<Vec<_>>())
    }

    /// Eigenvalues `λ_j^ω = σ_j² f_AR(ω)` in mode order (descending).
    pub fn eigenvalues(&self, omega: f64) -> Vec<f64> {
        let f = self.spec.ar_density(omega);
        self.spec.score_variances().into_iter().map(|v| v * f).collect()
    }

    pub fn spectral_density(&self, omega: f64) -> LinOp {
        self.diagonal(self.eigenvalues(omega).into_iter().map(Complex64::from))
    }

    /// `Q_ω = (Σ_ℓ w_ℓ e^{-iωℓ}) Σ_j j^{-β} e_j ⊗ e_j`.
    pub fn transfer(&self, omega: f64) -> LinOp {
        let poly = self.spec.lag_polynomial(omega);
        self.diagonal(self.spec.filter_eigenvalues().into_iter().map(|b| poly * b))
    }

    /// `𝓡_h = E[X_{t+h} ⊗ X_t] = Σ_j σ_j² ρ^{|h|}/(1−ρ²) e_j ⊗ e_j`.
    pub fn autocovariance(&self, lag: i64) -> LinOp {
        let rho = self.spec.rho;
        let factor = rho.powi(lag.unsigned_abs() as i32) / (1.0 - rho * rho);
        self.diagonal(
            self.spec
                .score_variances()
                .into_iter()
                .map(|v| Complex64::from(v * factor)),
        )
    }

    /// `E[Y_{t+h} ⊗ X_t] = Σ_ℓ B_ℓ 𝓡_{h−ℓ}`.
    pub fn cross_covariance(&self, lag: i64) -> LinOp {
        let filter = self.filter();
        let mut acc = LinOp::zeros(self.grid);
        for (&l, b) in filter.ops() {
            acc = acc
                .add(&b.compose(&self.autocovariance(lag - l)).expect("same grid"))
                .expect("same grid");
        }
        acc
    }

    /// `F^{YX}_ω = (2π)⁻¹ Σ_h e^{-ihω} E[Y_{t+h} ⊗ X_t]`, summed in the lag
    /// domain until `ρ^{|h|}` drops below `1e-17`.
    pub fn cross_spectral_density(&self, omega: f64) -> LinOp {
        let rho = self.spec.rho.abs();
        let reach = if rho == 0.0 {
            0
        } else {
            ((1e-17f64).ln() / rho.ln()).ceil() as i64
        };
        let h_max = reach + 1;
        let mut acc = LinOp::zeros(self.grid);
        for h in -h_max..=h_max {
            let phase = Complex64::from_polar(1.0 / (2.0 * PI), -omega * h as f64);
            acc = acc
                .add(&self.cross_covariance(h).scale(phase))
                .expect("same grid");
        }
        acc
    }

    pub fn filter(&self) -> FilterBank {
        let eig = self.spec.filter_eigenvalues();
        let ops: BTreeMap<i64, LinOp> = FILTER_LAGS
            .iter()
            .zip(self.spec.filter_lags)
            .map(|(&lag, w)| (lag, self.diagonal(eig.iter().map(|&b| Complex64::from(w * b)))))
            .collect();
        FilterBank::new(self.grid, 1, ops).expect("radius 1 holds lags -1..=1")
    }

    /// `Q_{ν_s}` at all `T` Fourier frequencies.
    pub fn transfer_curve(&self, t_len: usize) -> Vec<LinOp> {
        fourier_freqs(t_len).into_iter().map(|nu| self.transfer(nu)).collect()
    }
}

pub fn true_spectral_density(spec: &ProcessSpec, grid: GridContext, omega: f64) -> Result<LinOp> {
    Ok(GroundTruth::new(spec.clone(), grid)?.spectral_density(omega))
}

pub fn true_transfer(spec: &ProcessSpec, grid: GridContext, omega: f64) -> Result<LinOp> {
    Ok(GroundTruth::new(spec.clone(), grid)?.transfer(omega))
}

pub fn true_filter(spec: &ProcessSpec, grid: GridContext) -> Result<FilterBank> {
    Ok(GroundTruth::new(spec.clone(), grid)?.filter())
}

/// `truth.json` written next to a simulated pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub spec: ProcessSpec,
    pub m: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub seed: u64,
    /// File name to hex SHA-256 of its bytes.
    pub sha256: BTreeMap<String, String>,
    pub filter: FilterBankJson,
}

#[derive(Clone, Debug)]
pub struct SimulatedPair {
    pub x: FuncSeries,
    pub y: FuncSeries,
    pub truth: GroundTruth,
}

pub fn simulate_pair(spec: &ProcessSpec, grid: GridContext, t_len: usize, seed: u64) -> Result<SimulatedPair> {
    simulate_replicate(spec, grid, t_len, seed, 0)
}

const NOISE_STREAM: u64 = 1 << 32;

fn stream(seed: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Replicate `replicate` of the experiment seeded by `seed`.
pub fn simulate_replicate(
    spec: &ProcessSpec,
    grid: GridContext,
    t_len: usize,
    seed: u64,
    replicate: u64,
) -> Result<SimulatedPair> {
    spec.validate(grid)?;
    if t_len < 4 {
        return Err(Error::Config(format!("T >= 4 required, got {t_len}")));
    }
    let modes = spec.modes;
    let rho = spec.rho;
    let sigma: Vec<f64> = spec.score_variances().iter().map(|v| v.sqrt()).collect();
    let noise_sd: Vec<f64> = spec.noise_variances().iter().map(|v| v.sqrt()).collect();
    let b = spec.filter_eigenvalues();
    let [w_lead, w_now, w_lag] = spec.filter_lags;

    // Scores for t = -1..=T, stored at index t + 1.
    let mut x_scores = DMatrix::zeros(t_len + 2, modes);
    let mut y_scores = DMatrix::zeros(t_len, modes);
    for j in 0..modes {
        let mut rng = stream(seed, replicate, j as u64);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut xi = draw() / (1.0 - rho * rho).sqrt();
        x_scores[(0, j)] = sigma[j] * xi;
        for idx in 1..t_len + 2 {
            xi = rho * xi + draw();
            x_scores[(idx, j)] = sigma[j] * xi;
        }
        let mut noise_rng = stream(seed, replicate, NOISE_STREAM + j as u64);
        for t in 0..t_len {
            let eps: f64 = StandardNormal.sample(&mut noise_rng);
            // Y_t uses X_{t+1}, X_t, X_{t-1} at indices t+2, t+1, t.
            y_scores[(t, j)] = b[j]
                * (w_lead * x_scores[(t + 2, j)] + w_now * x_scores[(t + 1, j)] + w_lag * x_scores[(t, j)])
                + noise_sd[j] * eps;
        }
    }

    let basis = DMatrix::from_fn(modes, grid.m(), |j, k| grid.fourier_basis(j + 1).values()[k].re);
    let x_data = x_scores.rows(1, t_len) * &basis;
    let y_data = y_scores * &basis;
    Ok(SimulatedPair {
        x: FuncSeries::new(grid, x_data)?,
        y: FuncSeries::new(grid, y_data)?,
        truth: GroundTruth::new(spec.clone(), grid)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{cross_periodogram, fdft, periodogram};

    fn grid() -> GridContext {
        GridContext::new(32).unwrap()
    }

    #[test]
    fn spec_validation() {
        let g = grid();
        assert!(ProcessSpec::default().validate(g).is_ok());
        let bad = [
            ProcessSpec { modes: 9, ..Default::default() },
            ProcessSpec { modes: 0, ..Default::default() },
            ProcessSpec { rho: 1.0, ..Default::default() },
            ProcessSpec { alpha: 3.0, ..Default::default() },
            ProcessSpec { beta: 0.5, ..Default::default() },
            ProcessSpec { noise_alpha: 1.0, ..Default::default() },
            ProcessSpec { noise_scale: -1.0, ..Default::default() },
        ];
        for spec in bad {
            assert!(matches!(spec.validate(g), Err(Error::Config(_))), "{spec:?}");
        }
        assert!(simulate_pair(&ProcessSpec::default(), g, 3, 1).is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: ProcessSpec = serde_json::from_str(r#"{"rho": 0.2}"#).unwrap();
        assert_eq!(spec.rho, 0.2);
        assert_eq!(spec.modes, 8);
        let text = serde_json::to_string(&ProcessSpec::default()).unwrap();
        assert!(text.contains("\"J\":8"));
        assert!(serde_json::from_str::<ProcessSpec>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn noiseless_lag_zero_pair() {
        let spec = ProcessSpec {
            noise_scale: 0.0,
            filter_lags: [0.0, 1.0, 0.0],
            ..Default::default()
        };
        let pair = simulate_pair(&spec, grid(), 64, 11).unwrap();
        let b0 = pair.truth.filter().get(0).unwrap().clone();
        let (dx, dy) = (fdft(&pair.x), fdft(&pair.y));
        for s in 0..64 {
            let lhs = cross_periodogram(&dy, &dx, s).unwrap();
            let rhs = b0.compose(&periodogram(&dx, s).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().hs_norm() < 1e-10);
        }
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let spec = ProcessSpec { rho: 0.0, ..Default::default() };
        let truth = GroundTruth::new(spec.clone(), grid()).unwrap();
        let f0 = truth.spectral_density(0.0);
        let expected = LinOp::fourier_diagonal(
            grid(),
            &spec
                .score_variances()
                .iter()
                .map(|v| Complex64::from(v / (2.0 * PI)))
                .collect::<Vec<_>>(),
        );
        assert!(f0.sub(&expected).unwrap().hs_norm() < 1e-14);
        for w in [0.5, 2.0, PI] {
            assert!(truth.spectral_density(w).sub(&f0).unwrap().hs_norm() < 1e-14);
        }
        for (j, l) in truth.eigenvalues(1.0).iter().enumerate() {
            assert!((l - ((j + 1) as f64).powf(-2.0) / (2.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn ar_density_matches_autocovariance_sum() {
        // truncated lag-sum oracle
        let rho: f64 = 0.5;
        let t_max = ((1e-14f64).ln() / rho.ln()).ceil() as i64 + 10;
        let oracle: f64 = (-t_max..=t_max)
            .map(|t| rho.powi(t.unsigned_abs() as i32) / (1.0 - rho * rho) / (2.0 * PI))
            .sum();
        let spec = ProcessSpec { rho, ..Default::default() };
        assert!((spec.ar_density(0.0) - 2.0 / PI).abs() < 1e-13);
        assert!((spec.ar_density(0.0) - oracle).abs() < 1e-12);
        let truth = GroundTruth::new(spec, grid()).unwrap();
        assert!((truth.eigenvalues(0.0)[0] - 2.0 / PI).abs() < 1e-13);
        let r0 = truth.eigenvalues(0.3);
        let r1 = truth.eigenvalues(2.1);
        let ratios: Vec<f64> = r0.iter().zip(&r1).map(|(a, b)| a / b).collect();
        assert!(ratios.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn transfer_examples() {
        let g = grid();
        let spec = ProcessSpec { filter_lags: [0.0, 0.7, 0.0], ..Default::default() };
        let truth = GroundTruth::new(spec, g).unwrap();
        let q0 = truth.transfer(0.0);
        for w in [0.4, 1.9, PI] {
            assert!(truth.transfer(w).sub(&q0).unwrap().hs_norm() < 1e-14);
        }
        let spec = ProcessSpec::default();
        let truth = GroundTruth::new(spec.clone(), g).unwrap();
        let d = LinOp::fourier_diagonal(
            g,
            &spec.filter_eigenvalues().iter().map(|&b| Complex64::from(b)).collect::<Vec<_>>(),
        );
        let expected = d.scale((1.0 - 2.0 * 0.4).into());
        assert!(truth.transfer(PI).sub(&expected).unwrap().hs_norm() < 1e-12);
        assert!(crate::regression::roundtrip_check(&truth.filter(), 64).unwrap() <= 1e-10);
    }

    #[test]
    fn cross_spectrum_factors_through_transfer() {
        let truth = GroundTruth::new(ProcessSpec::default(), grid()).unwrap();
        for w in [0.0, 0.3, 1.7, PI, 5.5] {
            let fyx = truth.cross_spectral_density(w);
            let qf = truth.transfer(w).compose(&truth.spectral_density(w)).unwrap();
            assert!(fyx.sub(&qf).unwrap().hs_norm() <= 1e-10 * fyx.hs_norm());
            assert!(truth.spectral_density(w).asymmetry() < 1e-14);
        }
    }

    #[test]
    fn determinism_and_replicate_independence() {
        let spec = ProcessSpec::default();
        let a = simulate_replicate(&spec, grid(), 40, 5, 3).unwrap();
        let b = simulate_replicate(&spec, grid(), 40, 5, 3).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        let c = simulate_replicate(&spec, grid(), 40, 5, 4).unwrap();
        assert_ne!(a.x, c.x);
        let d = simulate_replicate(&spec, grid(), 40, 6, 3).unwrap();
        assert_ne!(a.x, d.x);
        // shorter run shares its prefix with the longer one
        let short = simulate_replicate(&spec, grid(), 20, 5, 3).unwrap();
        assert_eq!(short.x.data().rows(0, 20), a.x.data().rows(0, 20));
    }

    #[test]
    fn m1_rejected_by_mode_bound() {
        let g = GridContext::new(1).unwrap();
        assert!(GroundTruth::new(ProcessSpec::default(), g).is_err());
    }
}
