//! Functional DFTs, periodogram operators and kernel-smoothed spectral
//! density estimators.
//!
//! Conventions:
//!
//! ```text
//! X̃_s        = T^{-1/2} Σ_t X_t e^{-iν_s t},         ν_s = 2πs/T
//! P^{YX}_s    = Ỹ_s ⊗ X̃_s                           (E P^{XX}_s ≈ 2π F^{XX}_{ν_s})
//! W^{(T)}(x)  = B^{-1} Σ_k W((x + 2kπ)/B)
//! F̂^{YX}_{s'} = Σ_s w_{s'-s} P^{YX}_s / 2π,          w_k = (2π/T) W^{(T)}(ν_k)
//! ```
//!
//! The weights `w_k` form a Riemann sum of `∫W^{(T)} = 1`, so they add up to
//! one up to `O(1/(T B))`; the remaining `1/2π` turns the periodogram scale
//! into the spectral density scale `F_ω = (2π)⁻¹ Σ_t e^{-itω} 𝓡_t`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opcore::{tensor, GridContext, GridFunc, LinOp, LinOpJson};

const TWO_PI: f64 = 2.0 * PI;

/// A finite stretch `X_0, …, X_{T-1}` of grid functions (rows index time).
#[derive(Clone, Debug, PartialEq)]
pub struct FuncSeries {
    grid: GridContext,
    data: DMatrix<f64>,
}

impl FuncSeries {
    pub fn new(grid: GridContext, data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() != grid.m() {
            return Err(Error::Dimension(format!(
                "series has {} columns on a grid of {}",
                data.ncols(),
                grid.m()
            )));
        }
        if data.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "series length {} is below 2",
                data.nrows()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("series data"));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> GridContext {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn at(&self, t: usize) -> GridFunc {
        let row: Vec<f64> = self.data.row(t).iter().copied().collect();
        GridFunc::from_real(self.grid, &row).expect("row length matches grid")
    }

    /// Circular delay by `shift` steps: `X'_t = X_{t - shift mod T}`.
    pub fn delayed(&self, shift: usize) -> Self {
        let t_len = self.len();
        let data = DMatrix::from_fn(t_len, self.grid.m(), |t, k| {
            self.data[((t + t_len - shift % t_len) % t_len, k)]
        });
        Self {
            grid: self.grid,
            data,
        }
    }

    /// Writes the `m=<int>,T=<int>` header followed by one row per time point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let header = [format!("m={}", self.grid.m()), format!("T={}", self.len())];
        w.write_record(&header).map_err(csv_err)?;
        for t in 0..self.len() {
            w.write_record(self.data.row(t).iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Format("empty series CSV".into()))?
            .map_err(csv_err)?;
        let field = |rec: &csv::StringRecord, idx: usize, key: &str| -> Result<usize> {
            rec.get(idx)
                .and_then(|f| f.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("series header must be `m=<int>,T=<int>`, got {rec:?}")))
        };
        let m = field(&header, 0, "m=")?;
        let t_len = field(&header, 1, "T=")?;
        let grid = GridContext::new(m)?;
        let mut values = Vec::with_capacity(m * t_len);
        let mut rows = 0;
        for rec in records {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != m {
                return Err(Error::Dimension(format!(
                    "row {} has {} values, header says m={m}",
                    rows + 1,
                    rec.len()
                )));
            }
            for f in rec.iter() {
                values.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad number {f:?}: {e}")))?,
                );
            }
            rows += 1;
        }
        if rows != t_len {
            return Err(Error::Dimension(format!(
                "series has {rows} rows, header says T={t_len}"
            )));
        }
        Self::new(grid, DMatrix::from_row_slice(t_len, m, &values))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Functional DFT at all Fourier frequencies; row `s` holds `X̃_{ν_s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DftStack {
    grid: GridContext,
    coeffs: DMatrix<Complex64>,
}

impl DftStack {
    pub fn grid(&self) -> GridContext {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    pub fn coeffs(&self) -> &DMatrix<Complex64> {
        &self.coeffs
    }

    pub fn at(&self, s: usize) -> Result<GridFunc> {
        self.check_index(s)?;
        GridFunc::new(self.grid, self.coeffs.row(s).transpose())
    }

    pub fn freqs(&self) -> Vec<f64> {
        fourier_freqs(self.len())
    }

    fn check_index(&self, s: usize) -> Result<()> {
        if s >= self.len() {
            return Err(Error::Parameter(format!(
                "frequency index {s} out of range for T={}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Inverse transform back to the time domain.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let t_len = self.len();
        let ifft = FftPlanner::new().plan_fft_inverse(t_len);
        let scale = 1.0 / (t_len as f64).sqrt();
        let mut out = DMatrix::zeros(t_len, self.grid.m());
        for k in 0..self.grid.m() {
            let mut col: Vec<Complex64> = self.coeffs.column(k).iter().copied().collect();
            ifft.process(&mut col);
            for (t, v) in col.iter().enumerate() {
                out[(t, k)] = v.re * scale;
            }
        }
        out
    }
}

/// `ν_s = 2πs/T` for `s = 0..T`.
pub fn fourier_freqs(t_len: usize) -> Vec<f64> {
    (0..t_len).map(|s| TWO_PI * s as f64 / t_len as f64).collect()
}

pub fn fdft(series: &FuncSeries) -> DftStack {
    let t_len = series.len();
    let m = series.grid.m();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(t_len);
    let scale = 1.0 / (t_len as f64).sqrt();
    let columns: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut col: Vec<Complex64> = series.data.column(k).iter().map(|&v| v.into()).collect();
            fft.process(&mut col);
            col.iter_mut().for_each(|v| *v *= scale);
            col
        })
        .collect();
    let mut coeffs = DMatrix::from_fn(t_len, m, |s, k| columns[k][s]);
    // Real input: make the Hermitian symmetry across frequencies exact.
    for s in 1..t_len.div_ceil(2) {
        for k in 0..m {
            coeffs[(t_len - s, k)] = coeffs[(s, k)].conj();
        }
    }
    for k in 0..m {
        coeffs[(0, k)].im = 0.0;
        if t_len % 2 == 0 {
            coeffs[(t_len / 2, k)].im = 0.0;
        }
    }
    DftStack {
        grid: series.grid,
        coeffs,
    }
}

/// `X̃_{ν_s} ⊗ X̃_{ν_s}`.
pub fn periodogram(stack: &DftStack, s: usize) -> Result<LinOp> {
    let x = stack.at(s)?;
    tensor(&x, &x)
}

/// `Ỹ_{ν_s} ⊗ X̃_{ν_s}`.
pub fn cross_periodogram(stack_y: &DftStack, stack_x: &DftStack, s: usize) -> Result<LinOp> {
    check_pair(stack_y, stack_x)?;
    tensor(&stack_y.at(s)?, &stack_x.at(s)?)
}

fn check_pair(a: &DftStack, b: &DftStack) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Dimension(format!(
            "grids differ: m={} vs m={}",
            a.grid.m(),
            b.grid.m()
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ: T={} vs T={}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Compactly supported even smoothing weight `W(u) = Σ_k c_k u^{2k}` on
/// `[-1, 1]`, zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingKernel {
    name: String,
    order: usize,
    even_coeffs: Vec<f64>,
}

impl SmoothingKernel {
    /// `0.75 (1 - u²)`, order 2.
    pub fn epanechnikov() -> Self {
        Self {
            name: "epanechnikov".into(),
            order: 2,
            even_coeffs: vec![0.75, -0.75],
        }
    }

    /// Even quartic `a + b u² + c u⁴` with unit mass, vanishing second
    /// moment and `W(±1) = 0`; order 4 and negative near the edges.
    pub fn quartic() -> Self {
        // Rows: ∫W = 1, ∫u²W = 0, W(1) = 0.
        let system = nalgebra::Matrix3::new(
            2.0, 2.0 / 3.0, 2.0 / 5.0,
            2.0 / 3.0, 2.0 / 5.0, 2.0 / 7.0,
            1.0, 1.0, 1.0,
        );
        let rhs = nalgebra::Vector3::new(1.0, 0.0, 0.0);
        let sol = system
            .lu()
            .solve(&rhs)
            .expect("moment system is nonsingular");
        Self {
            name: "quartic".into(),
            order: 4,
            even_coeffs: sol.iter().copied().collect(),
        }
    }

    /// Looks up a built-in kernel. `order`, when given, must match.
    pub fn by_name(name: &str, order: Option<usize>) -> Result<Self> {
        let kernel = match name.to_ascii_lowercase().as_str() {
            "epanechnikov" => Self::epanechnikov(),
            "quartic" | "order4" => Self::quartic(),
            other => {
                return Err(Error::Parameter(format!(
                    "unknown kernel {other:?} (expected epanechnikov or quartic)"
                )))
            }
        };
        match order {
            Some(p) if p != kernel.order => Err(Error::Parameter(format!(
                "kernel {} has order {}, not {p}",
                kernel.name, kernel.order
            ))),
            _ => Ok(kernel),
        }
    }

    pub fn by_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::epanechnikov()),
            4 => Ok(Self::quartic()),
            p => Err(Error::Parameter(format!("no built-in kernel of order {p}"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn even_coeffs(&self) -> &[f64] {
        &self.even_coeffs
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let u2 = u * u;
        self.even_coeffs.iter().rev().fold(0.0, |acc, &c| acc * u2 + c)
    }
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth > 0.0 && bandwidth <= PI) {
        return Err(Error::Parameter(format!(
            "bandwidth must lie in (0, π], got {bandwidth}"
        )));
    }
    Ok(())
}

/// `W^{(T)}(x) = B⁻¹ Σ_k W((x + 2kπ)/B)`.
pub fn periodized_weight(kernel: &SmoothingKernel, bandwidth: f64, x: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(periodized_unchecked(kernel, bandwidth, x))
}

fn periodized_unchecked(kernel: &SmoothingKernel, bandwidth: f64, x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // With B ≤ π only the copies at r and r - 2π can reach the support.
    (kernel.eval(r / bandwidth) + kernel.eval((r - TWO_PI) / bandwidth)) / bandwidth
}

/// Normalized lag-free weights `w_k = (2π/T) W^{(T)}(ν_k)`, `k = 0..T`.
pub fn smoothing_weights(kernel: &SmoothingKernel, bandwidth: f64, t_len: usize) -> Result<Vec<f64>> {
    check_bandwidth(bandwidth)?;
    let step = TWO_PI / t_len as f64;
    Ok(fourier_freqs(t_len)
        .into_iter()
        .map(|nu| step * periodized_unchecked(kernel, bandwidth, nu))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Auto,
    Cross,
}

/// Operators indexed by Fourier frequency `ν_s`, `s = 0..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCurve {
    kind: CurveKind,
    bandwidth: f64,
    ops: Vec<LinOp>,
}

impl SpectralCurve {
    pub fn new(kind: CurveKind, bandwidth: f64, ops: Vec<LinOp>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Err(Error::Dimension("spectral curve needs at least one frequency".into()));
        };
        let grid = first.grid();
        if ops.iter().any(|op| op.grid() != grid) {
            return Err(Error::Dimension("spectral curve mixes grids".into()));
        }
        Ok(Self {
            kind,
            bandwidth,
            ops,
        })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn ops(&self) -> &[LinOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn grid(&self) -> GridContext {
        self.ops[0].grid()
    }

    pub fn at(&self, s: usize) -> &LinOp {
        &self.ops[s]
    }

    /// Largest violation of `ops[T-s] = conj(ops[s])`, relative to the
    /// largest operator norm in the curve.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let t_len = self.len();
        let scale = self.ops.iter().map(LinOp::hs_norm).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        (0..t_len)
            .map(|s| {
                let mirror = &self.ops[(t_len - s) % t_len];
                (mirror.action() - self.ops[s].action().map(|z| z.conj())).norm()
            })
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_json(&self) -> SpectralCurveJson {
        SpectralCurveJson {
            kind: self.kind,
            bandwidth: self.bandwidth,
            ops: self.ops.iter().map(LinOp::to_json).collect(),
        }
    }

    pub fn from_json(json: &SpectralCurveJson) -> Result<Self> {
        let ops = json
            .ops
            .iter()
            .map(LinOp::from_json)
            .collect::<Result<Vec<_>>>()?;
        Self::new(json.kind, json.bandwidth, ops)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurveJson {
    pub kind: CurveKind,
    pub bandwidth: f64,
    pub ops: Vec<LinOpJson>,
}

/// Kernel-smoothed (cross-)spectral density estimate at every Fourier
/// frequency. `stack_b = None` gives the auto-spectrum of `stack_a`;
/// otherwise the estimate of `F^{AB}` built from `Ã ⊗ B̃`.
pub fn smooth_spectrum(
    stack_a: &DftStack,
    stack_b: Option<&DftStack>,
    kernel: &SmoothingKernel,
    bandwidth: f64,
) -> Result<SpectralCurve> {
    let (kind, stack_b) = match stack_b {
        Some(b) => {
            check_pair(stack_a, b)?;
            (CurveKind::Cross, b)
        }
        None => (CurveKind::Auto, stack_a),
    };
    let weights = smoothing_weights(kernel, bandwidth, stack_a.len())?;
    let entries = convolve_periodograms(&stack_a.coeffs, &stack_b.coeffs, &weights, kind);
    let t_len = stack_a.len();
    let m = stack_a.grid.m();
    let norm = 1.0 / (TWO_PI * m as f64);

    let mut actions: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(m, m); t_len];
    for ((i, j), series) in entries {
        for (s, v) in series.into_iter().enumerate() {
            let v = v * norm;
            actions[s][(i, j)] = v;
            if kind == CurveKind::Auto && i != j {
                actions[s][(j, i)] = v.conj();
            }
        }
    }
    if kind == CurveKind::Auto {
        for a in actions.iter_mut() {
            for k in 0..m {
                a[(k, k)].im = 0.0;
            }
        }
    }
    // Reflect the upper half so that ops[T-s] = conj(ops[s]) holds exactly.
    for s in 1..t_len.div_ceil(2) {
        actions[t_len - s] = actions[s].map(|z| z.conj());
    }
    for s in [0, t_len / 2] {
        if s == 0 || t_len % 2 == 0 {
            actions[s].iter_mut().for_each(|z| z.im = 0.0);
        }
    }
    let grid = stack_a.grid;
    let ops = actions
        .into_iter()
        .map(|a| LinOp::from_action(grid, a))
        .collect::<Result<Vec<_>>>()?;
    SpectralCurve::new(kind, bandwidth, ops)
}

/// Smoothed estimate at an arbitrary frequency,
/// `Σ_s (2π/T) W^{(T)}(ω − ν_s) (Ã_s ⊗ B̃_s) / 2π`.
pub fn smooth_spectrum_at(
    stack_a: &DftStack,
    stack_b: Option<&DftStack>,
    kernel: &SmoothingKernel,
    bandwidth: f64,
    omega: f64,
) -> Result<LinOp> {
    check_bandwidth(bandwidth)?;
    if !omega.is_finite() {
        return Err(Error::NonFinite("frequency"));
    }
    let stack_b = match stack_b {
        Some(b) => {
            check_pair(stack_a, b)?;
            b
        }
        None => stack_a,
    };
    let t_len = stack_a.len();
    let m = stack_a.grid.m();
    let step = TWO_PI / t_len as f64;
    let mut scaled = stack_a.coeffs.clone();
    for (s, nu) in fourier_freqs(t_len).into_iter().enumerate() {
        let w = step * periodized_unchecked(kernel, bandwidth, omega - nu) / (TWO_PI * m as f64);
        scaled.row_mut(s).iter_mut().for_each(|z| *z *= w);
    }
    LinOp::from_action(stack_a.grid, scaled.transpose() * stack_b.coeffs.map(|z| z.conj()))
}

/// For every grid pair `(i, j)` the circular convolution over frequency
/// `Σ_s w_{s'-s} A[s,i] conj(B[s,j])`, computed with FFTs. Auto curves only
/// compute `i ≤ j`.
fn convolve_periodograms(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    weights: &[f64],
    kind: CurveKind,
) -> Vec<((usize, usize), Vec<Complex64>)> {
    let t_len = a.nrows();
    let m = a.ncols();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(t_len);
    let inv = planner.plan_fft_inverse(t_len);
    let mut w_hat: Vec<Complex64> = weights.iter().map(|&w| w.into()).collect();
    fwd.process(&mut w_hat);
    let inv_len = 1.0 / t_len as f64;
    w_hat.iter_mut().for_each(|z| *z *= inv_len);

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| {
            let start = if kind == CurveKind::Auto { i } else { 0 };
            (start..m).map(move |j| (i, j))
        })
        .collect();
    pairs
        .into_par_iter()
        .map_init(
            || vec![Complex64::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())],
            |scratch, (i, j)| {
                let mut buf: Vec<Complex64> =
                    (0..t_len).map(|s| a[(s, i)] * b[(s, j)].conj()).collect();
                fwd.process_with_scratch(&mut buf, scratch);
                buf.iter_mut().zip(&w_hat).for_each(|(z, w)| *z *= w);
                inv.process_with_scratch(&mut buf, scratch);
                ((i, j), buf)
            },
        )
        .collect()
}

/// Numerical moments `∫ W(u) u^j du`, `j = 0..=p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub kernel: String,
    pub order: usize,
    pub moments: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl std::fmt::Display for MomentReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "kernel {} (order {})", self.kernel, self.order)?;
        writeln!(f, "{:>3}  {:>22}  target", "j", "moment")?;
        for (j, m) in self.moments.iter().enumerate() {
            let target = match j {
                0 => "1",
                j if j < self.order => "0",
                _ => "-",
            };
            writeln!(f, "{j:>3}  {m:>22.15e}  {target}")?;
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

pub const MOMENT_QUADRATURE_INTERVALS: usize = 10_000;
pub const MOMENT_TOL: f64 = 1e-8;

pub fn kernel_moment_check(kernel: &SmoothingKernel, p: usize) -> MomentReport {
    let moments: Vec<f64> = (0..=p)
        .map(|j| simpson(|u| kernel.eval_closed(u) * u.powi(j as i32), -1.0, 1.0, MOMENT_QUADRATURE_INTERVALS))
        .collect();
    let pass = (moments[0] - 1.0).abs() <= MOMENT_TOL
        && moments[1..p.max(1)].iter().all(|m| m.abs() <= MOMENT_TOL);
    MomentReport {
        kernel: kernel.name.clone(),
        order: p,
        moments,
        tolerance: MOMENT_TOL,
        pass,
    }
}

impl SmoothingKernel {
    /// The polynomial on the closed interval `[-1, 1]`, for quadrature.
    fn eval_closed(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        let u2 = u * u;
        self.even_coeffs.iter().rev().fold(0.0, |acc, &c| acc * u2 + c)
    }
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let x = a + h * k as f64;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}
