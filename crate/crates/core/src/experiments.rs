//! Monte Carlo convergence studies.
//!
//! For every sample size in a study the estimator is fitted to independent
//! replicates of the simulated pair and scored against the closed-form
//! transfer function. The headline metric lives in the frequency domain,
//!
//! ```text
//! mse_freq = (2π/T) Σ_s ‖Q̂_{ν_s} − Q_{ν_s}‖₂²  =  2π Σ_{ℓ=0}^{T-1} ‖B̂_ℓ − B_ℓ‖₂²,
//! ```
//!
//! the right side being the lag-domain metric over the full DFT lag set.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opcore::{GridContext, LinOp};
use crate::regression::{
    estimate_filter_with, inverse_transform, schedule, FilterBank, Inversion, TuningSchedule,
};
use crate::simulate::{simulate_replicate, GroundTruth, ProcessSpec};
use crate::spectral::{SmoothingKernel, SpectralCurve};

/// JSON schema for serialized [`StudyResult`]s.
pub const STUDY_RESULT_SCHEMA: &str = include_str!("../schema/study_result.schema.json");

pub const CSV_HEADER: [&str; 7] = [
    "T",
    "B_T",
    "zeta_T",
    "mse_freq_mean",
    "mse_freq_se",
    "mse_lag_mean",
    "guard_failures",
];

/// How the truncation baseline picks its rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KRule {
    /// `K = round(T^{1/(α+2β)})`, the effective dimension of the ridge at `ζ_T`.
    Matched,
    Fixed(usize),
}

impl KRule {
    pub fn rank(&self, sched: &TuningSchedule, m: usize) -> usize {
        match *self {
            KRule::Fixed(k) => k,
            KRule::Matched => {
                let k = (sched.t_len as f64).powf(1.0 / (sched.alpha + 2.0 * sched.beta)).round();
                (k as usize).clamp(1, m)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Tikhonov,
    Truncation(KRule),
}

fn default_m() -> usize {
    32
}

fn default_l_eval() -> usize {
    3
}

fn default_kernel() -> String {
    "epanechnikov".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub spec: ProcessSpec,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(rename = "T_list")]
    pub t_list: Vec<usize>,
    pub replicates: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "L_eval", default = "default_l_eval")]
    pub l_eval: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default)]
    pub kernel_order: Option<usize>,
}

impl StudyConfig {
    /// The reference study: `α = β = 2`, `γ = 1/4`, `T = 2⁸..2¹²`, 100 replicates.
    pub fn default_study() -> Self {
        Self {
            spec: ProcessSpec::default(),
            m: 32,
            t_list: vec![256, 512, 1024, 2048, 4096],
            replicates: 100,
            alpha: 2.0,
            beta: 2.0,
            gamma: 0.25,
            l_eval: 3,
            seed: 20240611,
            estimator: Estimator::Tikhonov,
            kernel: default_kernel(),
            kernel_order: None,
        }
    }

    pub fn grid(&self) -> Result<GridContext> {
        GridContext::new(self.m)
    }

    /// Checks the configuration and returns the schedule for every `T`.
    pub fn validate(&self) -> Result<Vec<TuningSchedule>> {
        let grid = self.grid()?;
        self.spec.validate(grid)?;
        if self.t_list.is_empty() {
            return Err(Error::Config("T_list is empty".into()));
        }
        if let Some(&t) = self.t_list.iter().find(|t| !t.is_power_of_two() || **t < 4) {
            return Err(Error::Config(format!("T = {t} is not a power of two >= 4")));
        }
        if self.t_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("T_list must be strictly increasing".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Config(format!(
                "at least 2 replicates required, got {}",
                self.replicates
            )));
        }
        if 2 * self.l_eval >= self.t_list[0] {
            return Err(Error::Aliasing {
                radius: self.l_eval,
                len: self.t_list[0],
            });
        }
        SmoothingKernel::by_name(&self.kernel, self.kernel_order)?;
        self.t_list
            .iter()
            .map(|&t| schedule(self.alpha, self.beta, self.gamma, t))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(rename = "B_T")]
    pub bandwidth: f64,
    #[serde(rename = "zeta_T")]
    pub zeta: f64,
    /// Means and standard error over replicates that passed the ridge guard.
    pub mse_freq_mean: Option<f64>,
    pub mse_freq_se: Option<f64>,
    pub mse_lag_mean: Option<f64>,
    pub guard_failures: usize,
    /// Not part of the CSV layout.
    #[serde(default)]
    pub replicates: Option<usize>,
    /// `Σ_{|ℓ| ≤ L_eval} ‖B̂_ℓ − B_ℓ‖₂²`, not part of the CSV layout.
    #[serde(default)]
    pub mse_lag_eval_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// OLS slope of `log mse_freq_mean` on `log T`.
    pub fitted_slope: Option<f64>,
    pub fitted_slope_se: Option<f64>,
    pub predicted_slope: f64,
    pub spearman: Option<f64>,
}

impl StudyResult {
    fn from_rows(rows: Vec<StudyRow>, predicted_slope: f64) -> Self {
        let (log_t, log_mse): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|r| r.mse_freq_mean.map(|v| ((r.t_len as f64).ln(), v.ln())))
            .unzip();
        let fit = fit_loglog_ln(&log_t, &log_mse);
        let spearman = if log_t.len() >= 2 {
            Some(spearman(&log_t, &log_mse))
        } else {
            None
        };
        Self {
            rows,
            fitted_slope: fit.map(|f| f.slope),
            fitted_slope_se: fit.and_then(|f| f.slope_se),
            predicted_slope,
            spearman,
        }
    }
}

/// `(2π/T) Σ_s ‖Q̂_s − Q_s‖₂²` for curves sampled at all Fourier frequencies.
pub fn mse_frequency_curves(qhat: &[LinOp], truth: &[LinOp]) -> Result<f64> {
    check_curves(qhat, truth)?;
    let t = qhat.len() as f64;
    let total: f64 = qhat
        .iter()
        .zip(truth)
        .map(|(a, b)| Ok(a.sub(b)?.hs_norm().powi(2)))
        .sum::<Result<f64>>()?;
    Ok(2.0 * PI * total / t)
}

/// `Σ_{ℓ=0}^{T-1} ‖ΔB_ℓ‖₂²` with `ΔB` the inverse DFT of `Q̂ − Q`.
pub fn mse_lag_curves(qhat: &[LinOp], truth: &[LinOp]) -> Result<f64> {
    check_curves(qhat, truth)?;
    let diff: Vec<LinOp> = qhat.iter().zip(truth).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
    Ok(inverse_transform(&diff)?.iter().map(|b| b.hs_norm().powi(2)).sum())
}

fn check_curves(qhat: &[LinOp], truth: &[LinOp]) -> Result<()> {
    if qhat.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "curve has {} frequencies, truth has {}",
            qhat.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn mse_frequency(qhat: &SpectralCurve, truth: &GroundTruth) -> Result<f64> {
    mse_frequency_curves(qhat.ops(), &truth.transfer_curve(qhat.len()))
}

pub fn mse_lag(qhat: &SpectralCurve, truth: &GroundTruth) -> Result<f64> {
    mse_lag_curves(qhat.ops(), &truth.transfer_curve(qhat.len()))
}

/// Metrics of one fitted replicate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateScore {
    pub mse_freq: f64,
    pub mse_lag: f64,
    pub mse_lag_eval: f64,
}

/// Replicate key for sample size index `t_index`; keeps every `(T, r)` on
/// its own random stream.
pub fn replicate_key(t_index: usize, replicate: usize) -> u64 {
    ((t_index as u64) << 32) | replicate as u64
}

/// Simulates and fits one replicate. `Ok(None)` means the ridge guard fired.
pub fn run_replicate(
    cfg: &StudyConfig,
    sched: &TuningSchedule,
    t_index: usize,
    replicate: usize,
    truth_curve: &[LinOp],
    truth_bank: &FilterBank,
) -> Result<Option<ReplicateScore>> {
    let grid = cfg.grid()?;
    let kernel = SmoothingKernel::by_name(&cfg.kernel, cfg.kernel_order)?;
    let pair = simulate_replicate(&cfg.spec, grid, sched.t_len, cfg.seed, replicate_key(t_index, replicate))?;
    let inversion = match cfg.estimator {
        Estimator::Tikhonov => Inversion::Tikhonov { zeta: sched.zeta },
        Estimator::Truncation(rule) => Inversion::Truncation {
            rank: rule.rank(sched, grid.m()),
        },
    };
    let fit = match estimate_filter_with(&pair.x, &pair.y, &kernel, sched.bandwidth, inversion, cfg.l_eval) {
        Ok(fit) => fit,
        Err(Error::RidgeNotPositive { .. }) | Err(Error::Rank { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(ReplicateScore {
        mse_freq: mse_frequency_curves(fit.qhat.ops(), truth_curve)?,
        mse_lag: mse_lag_curves(fit.qhat.ops(), truth_curve)?,
        mse_lag_eval: fit.bank.squared_distance(truth_bank)?,
    }))
}

/// Runs the full study. Replicates run in parallel; aggregation folds them
/// in replicate order so the result does not depend on scheduling.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let schedules = cfg.validate()?;
    let grid = cfg.grid()?;
    let truth = GroundTruth::new(cfg.spec.clone(), grid)?;
    let truth_bank = truth.filter();
    let mut rows = Vec::with_capacity(schedules.len());
    for (t_index, sched) in schedules.iter().enumerate() {
        let truth_curve = truth.transfer_curve(sched.t_len);
        let scores: Vec<Option<ReplicateScore>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, sched, t_index, r, &truth_curve, &truth_bank))
            .collect::<Result<_>>()?;
        rows.push(aggregate(sched, &scores));
    }
    Ok(StudyResult::from_rows(rows, schedules[0].rate_exponent))
}

fn aggregate(sched: &TuningSchedule, scores: &[Option<ReplicateScore>]) -> StudyRow {
    let ok: Vec<&ReplicateScore> = scores.iter().flatten().collect();
    let n = ok.len();
    let mean = |f: fn(&ReplicateScore) -> f64| -> Option<f64> {
        (n > 0).then(|| ok.iter().map(|s| f(s)).sum::<f64>() / n as f64)
    };
    let freq_mean = mean(|s| s.mse_freq);
    let freq_se = freq_mean.filter(|_| n >= 2).map(|mu| {
        let var = ok.iter().map(|s| (s.mse_freq - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    StudyRow {
        t_len: sched.t_len,
        bandwidth: sched.bandwidth,
        zeta: sched.zeta,
        mse_freq_mean: freq_mean,
        mse_freq_se: freq_se,
        mse_lag_mean: mean(|s| s.mse_lag),
        guard_failures: scores.len() - n,
        replicates: Some(scores.len()),
        mse_lag_eval_mean: mean(|s| s.mse_lag_eval),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Plain OLS standard error; needs at least three points.
    pub slope_se: Option<f64>,
}

/// OLS fit of `log y` on `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} abscissae but {} ordinates", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Parameter("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_loglog_ln(&lx, &ly).ok_or_else(|| Error::Parameter("log-log fit needs two distinct abscissae".into()))
}

fn fit_loglog_ln(lx: &[f64], ly: &[f64]) -> Option<LineFit> {
    let n = lx.len();
    if n < 2 {
        return None;
    }
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (n > 2).then(|| {
        let rss: f64 = lx
            .iter()
            .zip(ly)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    });
    Some(LineFit {
        slope,
        intercept,
        slope_se,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // ties share the average rank
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation, ties averaged.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(Error::Config(format!("unsupported format '{other}'"))),
        }
    }
}

pub fn emit(result: &StudyResult, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => emit_csv(&result.rows),
        Format::Json => Ok(serde_json::to_vec_pretty(result)?),
        Format::Svg => Ok(emit_svg(result).into_bytes()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_csv(rows: &[StudyRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.t_len.to_string(),
            r.bandwidth.to_string(),
            r.zeta.to_string(),
            opt(r.mse_freq_mean),
            opt(r.mse_freq_se),
            opt(r.mse_lag_mean),
            r.guard_failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reads rows written by [`emit_csv`]; columns outside the CSV layout come
/// back as `None`.
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<StudyRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let num = |field: &str, name: &str| -> Result<f64> {
        field
            .parse()
            .map_err(|_| Error::Format(format!("bad {name} value '{field}'")))
    };
    let maybe = |field: &str, name: &str| -> Result<Option<f64>> {
        if field.is_empty() {
            Ok(None)
        } else {
            num(field, name).map(Some)
        }
    };
    let int = |field: &str, name: &str| -> Result<usize> {
        field
            .parse()
            .map_err(|_| Error::Format(format!("bad {name} value '{field}'")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(StudyRow {
            t_len: int(&rec[0], "T")?,
            bandwidth: num(&rec[1], "B_T")?,
            zeta: num(&rec[2], "zeta_T")?,
            mse_freq_mean: maybe(&rec[3], "mse_freq_mean")?,
            mse_freq_se: maybe(&rec[4], "mse_freq_se")?,
            mse_lag_mean: maybe(&rec[5], "mse_lag_mean")?,
            guard_failures: int(&rec[6], "guard_failures")?,
            replicates: None,
            mse_lag_eval_mean: None,
        });
    }
    Ok(rows)
}

/// Log-log scatter of the mean errors with the OLS line (solid) and a
/// reference line of the predicted slope through the centroid (dashed).
pub fn emit_svg(result: &StudyResult) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    let pts: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter_map(|r| r.mse_freq_mean.map(|v| ((r.t_len as f64).log10(), v.log10())))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">mse_freq vs T (log-log)</text>"#,
        W / 2.0
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let xm = 0.1 * (x1 - x0).max(0.1);
    let ym = 0.1 * (y1 - y0).max(0.1);
    let (x0, x1, y0, y1) = (x0 - xm, x1 + xm, y0 - ym, y1 + ym);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        svg,
        r#"<path d="M{a},{b} L{a},{c} L{d},{c}" stroke="black" fill="none"/>"#,
        a = PAD,
        b = PAD,
        c = H - PAD,
        d = W - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">log10 T</text>"#,
        W / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {})">log10 mse</text>"#,
        H / 2.0,
        H / 2.0
    );
    for &(x, y) in &pts {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/>"#, sx(x), sy(y));
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let line = |slope: f64, intercept: f64, style: &str, svg: &mut String| {
        let (xa, xb) = (x0 + xm, x1 - xm);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            sx(xa),
            sy(intercept + slope * xa),
            sx(xb),
            sy(intercept + slope * xb)
        );
    };
    if let Some(slope) = result.fitted_slope {
        line(slope, cy - slope * cx, r#"stroke="steelblue" stroke-width="2""#, &mut svg);
    }
    let p = result.predicted_slope;
    line(p, cy - p * cx, r#"stroke="firebrick" stroke-dasharray="6 4""#, &mut svg);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">fitted slope {} / predicted {}</text>"#,
        PAD + 10.0,
        PAD + 14.0,
        result.fitted_slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "n/a".into()),
        format_args!("{p:.3}")
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn small_config() -> StudyConfig {
        StudyConfig {
            m: 16,
            t_list: vec![64],
            replicates: 2,
            l_eval: 2,
            spec: ProcessSpec {
                modes: 4,
                ..Default::default()
            },
            ..StudyConfig::default_study()
        }
    }

    #[test]
    fn mse_examples() {
        let g = GridContext::new(32).unwrap();
        let truth = GroundTruth::new(ProcessSpec::default(), g).unwrap();
        let q = truth.transfer_curve(64);
        assert_eq!(mse_frequency_curves(&q, &q).unwrap(), 0.0);
        let zeros = vec![LinOp::zeros(g); 64];
        // direct summation against the lag-domain energy of the true filter
        let direct = 2.0 * PI * truth.filter().hs_energy();
        let got = mse_frequency_curves(&zeros, &q).unwrap();
        assert!((got - direct).abs() <= 1e-9 * direct);
        // errors q and 2q
        let off_once: Vec<LinOp> = q.iter().map(|op| op.scale(Complex64::from(2.0))).collect();
        let off_twice: Vec<LinOp> = q.iter().map(|op| op.scale(Complex64::from(3.0))).collect();
        let e1 = mse_frequency_curves(&off_once, &q).unwrap();
        let e2 = mse_frequency_curves(&off_twice, &q).unwrap();
        assert!((e2 - 4.0 * e1).abs() <= 1e-12 * e2);
        assert!(mse_frequency_curves(&q[..10], &q).is_err());
    }

    #[test]
    fn parseval_between_metrics() {
        let g = GridContext::new(8).unwrap();
        let truth = GroundTruth::new(ProcessSpec { modes: 2, ..Default::default() }, g).unwrap();
        let q = truth.transfer_curve(32);
        let other: Vec<LinOp> = q
            .iter()
            .enumerate()
            .map(|(s, op)| op.scale(Complex64::new(1.0 + 0.1 * s as f64, 0.3)))
            .collect();
        let f = mse_frequency_curves(&other, &q).unwrap();
        let l = mse_lag_curves(&other, &q).unwrap();
        assert!((f - 2.0 * PI * l).abs() <= 1e-10 * f);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config();
        assert!(cfg.validate().is_ok());
        cfg.t_list = vec![100];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.t_list = vec![128, 64];
        assert!(cfg.validate().is_err());
        cfg = small_config();
        cfg.replicates = 1;
        assert!(cfg.validate().is_err());
        cfg = small_config();
        cfg.gamma = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::Schedule(_))));
        cfg = small_config();
        cfg.kernel = "box".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json() {
        let cfg: StudyConfig = serde_json::from_str(
            r#"{"T_list": [64, 128], "replicates": 3, "alpha": 2, "beta": 2, "gamma": 0.25, "seed": 1,
                "estimator": {"truncation": "matched"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.m, 32);
        assert_eq!(cfg.l_eval, 3);
        assert_eq!(cfg.estimator, Estimator::Truncation(KRule::Matched));
        let back: StudyConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let fixed: Estimator = serde_json::from_str(r#"{"truncation": {"fixed": 4}}"#).unwrap();
        assert_eq!(fixed, Estimator::Truncation(KRule::Fixed(4)));
        let tik: Estimator = serde_json::from_str(r#""tikhonov""#).unwrap();
        assert_eq!(tik, Estimator::Tikhonov);
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = small_config();
        let a = emit(&run_study(&cfg).unwrap(), Format::Json).unwrap();
        let b = emit(&run_study(&cfg).unwrap(), Format::Json).unwrap();
        assert_eq!(a, b);
        let res = run_study(&cfg).unwrap();
        let row = &res.rows[0];
        let f = row.mse_freq_mean.unwrap();
        assert!((f - 2.0 * PI * row.mse_lag_mean.unwrap()).abs() <= 1e-9 * f);
        assert_eq!(row.guard_failures, 0);
        assert!((res.predicted_slope + 0.25).abs() < 1e-15);
    }

    #[test]
    fn truncation_study_runs() {
        let cfg = StudyConfig {
            estimator: Estimator::Truncation(KRule::Matched),
            ..small_config()
        };
        let res = run_study(&cfg).unwrap();
        assert!(res.rows[0].mse_freq_mean.unwrap() > 0.0);
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let x: Vec<f64> = (8..=16).map(|k| 2f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t.powf(-0.37)).collect();
        let fit = fit_loglog(&x, &y).unwrap();
        assert!((fit.slope + 0.37).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(fit.slope_se.unwrap() < 1e-10);
        assert!(fit_loglog(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let empty = emit_csv(&[]).unwrap();
        assert_eq!(empty, b"T,B_T,zeta_T,mse_freq_mean,mse_freq_se,mse_lag_mean,guard_failures\n");
        let rows = vec![
            StudyRow {
                t_len: 256,
                bandwidth: 0.25,
                zeta: 256f64.powf(-1.0 / 3.0),
                mse_freq_mean: Some(0.1234567890123),
                mse_freq_se: Some(1e-5),
                mse_lag_mean: Some(0.1234567890123 / (2.0 * PI)),
                guard_failures: 0,
                replicates: Some(10),
                mse_lag_eval_mean: Some(0.01),
            },
            StudyRow {
                t_len: 512,
                bandwidth: 0.2,
                zeta: 0.125,
                mse_freq_mean: None,
                mse_freq_se: None,
                mse_lag_mean: None,
                guard_failures: 2,
                replicates: None,
                mse_lag_eval_mean: None,
            },
        ];
        let bytes = emit_csv(&rows).unwrap();
        let parsed = parse_csv(&bytes).unwrap();
        assert_eq!(emit_csv(&parsed).unwrap(), bytes);
        assert_eq!(parsed[0].zeta, rows[0].zeta);
        assert!(parse_csv(b"a,b\n1,2\n").is_err());
    }

    #[test]
    fn svg_and_format_names() {
        let res = StudyResult::from_rows(
            vec![
                StudyRow {
                    t_len: 256,
                    bandwidth: 0.25,
                    zeta: 0.16,
                    mse_freq_mean: Some(0.2),
                    mse_freq_se: Some(0.01),
                    mse_lag_mean: Some(0.2 / (2.0 * PI)),
                    guard_failures: 0,
                    replicates: Some(2),
                    mse_lag_eval_mean: None,
                },
                StudyRow {
                    t_len: 512,
                    bandwidth: 0.21,
                    zeta: 0.125,
                    mse_freq_mean: Some(0.15),
                    mse_freq_se: Some(0.01),
                    mse_lag_mean: Some(0.15 / (2.0 * PI)),
                    guard_failures: 0,
                    replicates: Some(2),
                    mse_lag_eval_mean: None,
                },
            ],
            -0.25,
        );
        let svg = String::from_utf8(emit(&res, Format::Svg).unwrap()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<line").count(), 2);
        assert!("CSV".parse::<Format>().is_ok());
        assert!(matches!("xml".parse::<Format>(), Err(Error::Config(_))));
    }
}
