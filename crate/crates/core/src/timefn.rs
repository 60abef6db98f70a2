//! Declarative 1-periodic intensity functions.
//!
//! Intensities are restricted to a closed grammar (constants, sinusoids,
//! piecewise-constant profiles, non-negative scalings, sums and products)
//! instead of arbitrary callbacks. Every form in the grammar is 1-periodic
//! and locally integrable, configs stay serializable, and suprema over a
//! period can be bounded reliably.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use std::f64::consts::TAU;

/// Grid resolution used when a supremum or infimum over one period has no
/// closed form (sums and products). 4096 is divisible by 4, so the quarter
/// points where lone sinusoids peak are hit exactly.
pub const PERIOD_GRID: usize = 4096;

/// A non-negative, 1-periodic function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TimeFunction {
    /// `value`
    Constant { value: f64 },
    /// `offset + amplitude * sin(2 pi t)`
    Sinusoid { offset: f64, amplitude: f64 },
    /// `offset + amplitude * cos(2 pi t)`
    Cosinusoid { offset: f64, amplitude: f64 },
    /// Constant on each of `values.len()` equal subintervals of `[0,1)`,
    /// extended periodically.
    PiecewiseConstant { values: Vec<f64> },
    /// `factor * inner(t)` with `factor >= 0`.
    Scaled { factor: f64, inner: Box<TimeFunction> },
    Sum { terms: Vec<TimeFunction> },
    Product { factors: Vec<TimeFunction> },
}

impl TimeFunction {
    pub fn constant(value: f64) -> Self {
        TimeFunction::Constant { value }
    }

    pub fn sinusoid(offset: f64, amplitude: f64) -> Self {
        TimeFunction::Sinusoid { offset, amplitude }
    }

    pub fn cosinusoid(offset: f64, amplitude: f64) -> Self {
        TimeFunction::Cosinusoid { offset, amplitude }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Sinusoid { offset, amplitude } => offset + amplitude * (TAU * t).sin(),
            TimeFunction::Cosinusoid { offset, amplitude } => offset + amplitude * (TAU * t).cos(),
            TimeFunction::PiecewiseConstant { values } => {
                let frac = t - t.floor();
                let idx = ((frac * values.len() as f64) as usize).min(values.len() - 1);
                values[idx]
            }
            TimeFunction::Scaled { factor, inner } => factor * inner.eval(t),
            TimeFunction::Sum { terms } => terms.iter().map(|f| f.eval(t)).sum(),
            TimeFunction::Product { factors } => factors.iter().map(|f| f.eval(t)).product(),
        }
    }

    /// Rejects any form that can evaluate to a negative (or non-finite)
    /// value. A sinusoid with `|amplitude| > offset` is rejected outright
    /// rather than clamped: silent clamping would corrupt every bound
    /// computed downstream.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            TimeFunction::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return bad(format!("constant intensity must be finite and >= 0, got {value}"));
                }
            }
            TimeFunction::Sinusoid { offset, amplitude }
            | TimeFunction::Cosinusoid { offset, amplitude } => {
                if !offset.is_finite() || !amplitude.is_finite() {
                    return bad("sinusoid parameters must be finite".into());
                }
                if *offset < amplitude.abs() {
                    return bad(format!(
                        "sinusoid dips negative: offset {offset} < |amplitude| {}",
                        amplitude.abs()
                    ));
                }
            }
            TimeFunction::PiecewiseConstant { values } => {
                if values.is_empty() {
                    return bad("piecewise-constant intensity needs at least one value".into());
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("piecewise-constant values must be finite and >= 0".into());
                }
            }
            TimeFunction::Scaled { factor, inner } => {
                if !factor.is_finite() || *factor < 0.0 {
                    return bad(format!("scale factor must be finite and >= 0, got {factor}"));
                }
                inner.validate()?;
            }
            TimeFunction::Sum { terms } => {
                if terms.is_empty() {
                    return bad("empty sum".into());
                }
                for f in terms {
                    f.validate()?;
                }
            }
            TimeFunction::Product { factors } => {
                if factors.is_empty() {
                    return bad("empty product".into());
                }
                for f in factors {
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    /// True when the function does not actually depend on `t`.
    pub fn is_constant(&self) -> bool {
        match self {
            TimeFunction::Constant { .. } => true,
            TimeFunction::Sinusoid { amplitude, .. }
            | TimeFunction::Cosinusoid { amplitude, .. } => *amplitude == 0.0,
            TimeFunction::PiecewiseConstant { values } => values.windows(2).all(|w| w[0] == w[1]),
            TimeFunction::Scaled { factor, inner } => *factor == 0.0 || inner.is_constant(),
            TimeFunction::Sum { terms } => terms.iter().all(|f| f.is_constant()),
            TimeFunction::Product { factors } => factors.iter().all(|f| f.is_constant()),
        }
    }

    /// Supremum over one period. Exact for the pure forms; sums and
    /// products fall back to a `PERIOD_GRID` scan (which is still exact for
    /// the presets used here, whose extrema sit on quarter points).
    pub fn sup_period(&self) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Sinusoid { offset, amplitude }
            | TimeFunction::Cosinusoid { offset, amplitude } => offset + amplitude.abs(),
            TimeFunction::PiecewiseConstant { values } => values.iter().copied().fold(0.0, f64::max),
            TimeFunction::Scaled { factor, inner } => factor * inner.sup_period(),
            _ => self.grid_extremum(f64::max),
        }
    }

    /// Infimum over one period; same conventions as [`sup_period`](Self::sup_period).
    pub fn inf_period(&self) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Sinusoid { offset, amplitude }
            | TimeFunction::Cosinusoid { offset, amplitude } => offset - amplitude.abs(),
            TimeFunction::PiecewiseConstant { values } => {
                values.iter().copied().fold(f64::INFINITY, f64::min)
            }
            TimeFunction::Scaled { factor, inner } => factor * inner.inf_period(),
            _ => self.grid_extremum(f64::min),
        }
    }

    fn grid_extremum(&self, pick: fn(f64, f64) -> f64) -> f64 {
        (0..PERIOD_GRID)
            .map(|j| self.eval(j as f64 / PERIOD_GRID as f64))
            .reduce(pick)
            .unwrap()
    }
}
