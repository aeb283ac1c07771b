//! Monte Carlo properties of the simulator and the estimator. Seeds are fixed,
//! so every run sees the same draws.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ftsreg::experiments::{fit_loglog, mse_frequency};
use ftsreg::opcore::eigh;
use ftsreg::regression::{estimate_filter, estimate_filter_with, schedule, Inversion};
use ftsreg::simulate::{simulate_replicate, GroundTruth, ProcessSpec};
use ftsreg::spectral::{fdft, periodogram, smooth_spectrum_at, FuncSeries, SmoothingKernel};
use ftsreg::{GridContext, LinOp};

fn grid(m: usize) -> GridContext {
    GridContext::new(m).unwrap()
}

/// Sample lag-0 covariance `(1/T) Σ_t A_t ⊗ B_t` as an action matrix.
fn sample_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, g: GridContext) -> LinOp {
    let t = a.nrows() as f64;
    let action = (a.transpose() * b).map(|v| Complex64::from(v / (t * g.m() as f64)));
    LinOp::from_action(g, action).unwrap()
}

#[test]
fn periodogram_mean_is_two_pi_times_density() {
    let spec = ProcessSpec { modes: 4, ..Default::default() };
    let g = grid(16);
    let truth = GroundTruth::new(spec.clone(), g).unwrap();
    let (t_len, reps, s) = (128usize, 400u64, 10usize);
    let mut acc = LinOp::zeros(g);
    for r in 0..reps {
        let pair = simulate_replicate(&spec, g, t_len, 77, r).unwrap();
        acc = acc.add(&periodogram(&fdft(&pair.x), s).unwrap()).unwrap();
    }
    let mean = acc.scale(Complex64::from(1.0 / reps as f64));
    let nu = 2.0 * PI * s as f64 / t_len as f64;
    let target = truth.spectral_density(nu).scale(Complex64::from(2.0 * PI));
    let rel = mean.sub(&target).unwrap().hs_norm() / target.hs_norm();
    assert!(rel < 0.15, "relative error {rel}");
}

#[test]
fn estimated_eigenvalues_decay_like_the_truth() {
    let spec = ProcessSpec::default();
    let g = grid(32);
    let (t_len, reps) = (4096usize, 50u64);
    let bw = (t_len as f64).powf(-0.25);
    let k = SmoothingKernel::epanechnikov();
    let half = spec.modes / 2;
    let mut mean = vec![0.0; half];
    for r in 0..reps {
        let pair = simulate_replicate(&spec, g, t_len, 5, r).unwrap();
        let f = smooth_spectrum_at(&fdft(&pair.x), None, &k, bw, PI / 3.0).unwrap();
        for (acc, lam) in mean.iter_mut().zip(eigh(&f).unwrap().eigenvalues) {
            *acc += lam / reps as f64;
        }
    }
    let j: Vec<f64> = (1..=half).map(|j| j as f64).collect();
    let fit = fit_loglog(&j, &mean).unwrap();
    assert!((fit.slope + spec.alpha).abs() <= 0.25, "slope {}", fit.slope);
}

#[test]
fn lag_zero_covariance_converges_at_parametric_rate() {
    let spec = ProcessSpec::default();
    let g = grid(32);
    let t_len = 4096;
    let pair = simulate_replicate(&spec, g, t_len, 8, 0).unwrap();
    let cov = sample_cov(pair.x.data(), pair.x.data(), g);
    let truth = GroundTruth::new(spec, g).unwrap().autocovariance(0);
    let err = cov.sub(&truth).unwrap().hs_norm();
    assert!(err <= 5.0 / (t_len as f64).sqrt() * truth.hs_norm(), "err {err}");
}

#[test]
fn noise_is_independent_of_the_covariate() {
    let spec = ProcessSpec::default();
    let g = grid(32);
    let t_len = 4096;
    let pair = simulate_replicate(&spec, g, t_len, 9, 0).unwrap();
    let bank = pair.truth.filter();
    let x = pair.x.data();
    let y = pair.y.data();
    // ε_t = Y_t − Σ_ℓ B_ℓ X_{t−ℓ} on the interior where every lag is observed
    let inner = t_len - 2;
    let mut eps = y.rows(1, inner).into_owned();
    for (&lag, op) in bank.ops() {
        let b = op.action().map(|z| z.re);
        let shifted = x.rows((1 - lag) as usize, inner);
        eps -= shifted * b.transpose();
    }
    let cross = sample_cov(&eps, &x.rows(1, inner).into_owned(), g);
    let x_energy: f64 = spec.score_variances().iter().sum::<f64>() / (1.0 - spec.rho * spec.rho);
    let eps_energy: f64 = spec.noise_variances().iter().sum();
    let floor = (x_energy * eps_energy).sqrt();
    let err = cross.hs_norm();
    assert!(err <= 5.0 / (inner as f64).sqrt() * floor, "err {err} floor {floor}");
    // the reconstruction really is the injected noise: its variance matches
    let var = eps.norm_squared() / (inner as f64 * g.m() as f64);
    assert!((var - eps_energy).abs() <= 0.1 * eps_energy, "{var} vs {eps_energy}");
}

#[test]
fn identity_pipeline_improves_as_ridge_shrinks() {
    let g = grid(8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = FuncSeries::new(g, DMatrix::from_fn(512, 8, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
    let k = SmoothingKernel::epanechnikov();
    let id = LinOp::identity(g);
    let errors: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .into_iter()
        .map(|zeta| {
            let fit = estimate_filter_with(&x, &x, &k, 0.3, Inversion::Tikhonov { zeta }, 2).unwrap();
            fit.bank.get(0).unwrap().sub(&id).unwrap().hs_norm()
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[2] < 0.2 * id.hs_norm(), "{errors:?}");
}

#[test]
fn default_fit_is_reproducible() {
    let spec = ProcessSpec::default();
    let g = grid(32);
    let sched = schedule(2.0, 2.0, 0.25, 2048).unwrap();
    let k = SmoothingKernel::epanechnikov();
    let run = || {
        let pair = simulate_replicate(&spec, g, 2048, 123, 0).unwrap();
        let fit = estimate_filter(&pair.x, &pair.y, &k, &sched, 3).unwrap();
        (mse_frequency(&fit.qhat, &pair.truth).unwrap(), fit.bank.imag_mass())
    };
    let (a, imag) = run();
    let (b, _) = run();
    assert!(a.is_finite() && a > 0.0);
    assert!((a - b).abs() <= 1e-12 * a);
    assert!(imag <= 1e-10, "imag mass {imag}");
}
