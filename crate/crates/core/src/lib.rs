//! Smoothed Fourier-Tikhonov estimation of the filter coupling two
//! functional time series.
//!
//! Functions on `[0, 1]` are discretized on a midpoint grid and operators
//! are stored as action matrices (integral kernel divided by the grid size),
//! so matrix Schatten norms coincide with operator Schatten norms.
//!
//! The pipeline is
//!
//! ```text
//! FuncSeries --fdft--> DftStack --smooth_spectrum--> SpectralCurve (F^XX, F^YX)
//!     --estimate_q per frequency--> Q-hat curve --inverse DFT--> FilterBank
//! ```
//!
//! [`simulate`] produces coupled series with closed-form ground truth and
//! [`experiments`] runs Monte Carlo convergence studies on top of both.

pub mod error;
pub mod experiments;
pub mod opcore;
pub mod regression;
pub mod simulate;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use opcore::{GridContext, GridFunc, LinOp, SchattenOrder};
pub use regression::{FilterBank, FilterEstimate, TuningSchedule};
pub use simulate::{GroundTruth, ProcessSpec, SimulatedPair};
pub use spectral::{CurveKind, DftStack, FuncSeries, SmoothingKernel, SpectralCurve};

pub use num_complex::Complex64;
