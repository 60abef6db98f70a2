//! Closed forms for the column functionals of `B* = D B D^{-1}`, their
//! aggregates, and the ergodicity bound curves built from them.
//!
//! For each class the i-th column of `B*` has sum `-alpha_i(t)` and absolute
//! sum `chi_i(t)`, with
//!
//! ```text
//! alpha(t) = inf_i alpha_i(t),   beta(t) = sup_i alpha_i(t),
//! chi(t)   = sup_i chi_i(t),
//! ```
//!
//! so that the logarithmic norms satisfy `gamma(B*)_1 = -alpha(t)` and
//! `gamma(-B*)_1 = chi(t)`. The solution operator of `z' = B z + f` is then
//! squeezed between `e^{-int chi}` and `e^{-int alpha}`, which is the whole
//! content of the bound curves below; the periodic constants
//! `a = int_0^1 alpha`, `K = sup_{|t-s|<=1} int_s^t alpha`, `R = e^K`,
//! `F = sup_t ||f(t)||_1D` feed the exponential corollary bounds
//! `(4FR/a) e^{-at}` and `(FR/(a W*)) e^{-at}`.
//!
//! The closed forms are evaluated from the model rates directly, never from
//! a materialized matrix; the matrix route in the generator module is the
//! independent oracle they are tested against.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dseq::{norm_1d, DSequence, NormConstants};
use crate::error::{Error, Result};
use crate::generator::{positivity_on_grid, PositivityVerdict, POSITIVITY_TOL};
use crate::model::{ModelSpec, QueueClass, StateRule};

/// Grid cells per unit time for the cumulative integral behind `K`.
const K_GRID: usize = 2048;
/// Grid points over one period for the supremum behind `F`.
const F_GRID: usize = 1024;
/// Time points per period in the positivity pre-check of a report.
const POSITIVITY_GRID: usize = 64;
/// Relative tolerance deciding that `alpha_i`, `chi_i` have stopped
/// depending on `i` at the end of the scanned range.
const TAIL_SETTLE_RTOL: f64 = 1e-9;

/// `alpha_i(t)`: minus the i-th column sum of `B*(t)` (infinite form).
pub fn alpha_i(model: &ModelSpec, d: &DSequence, i: usize, t: f64) -> Result<f64> {
    column_functional(model, d, i, t, -1.0)
}

/// `chi_i(t)`: the i-th absolute column sum of `B*(t)` (infinite form,
/// valid under the positivity condition).
pub fn chi_i(model: &ModelSpec, d: &DSequence, i: usize, t: f64) -> Result<f64> {
    column_functional(model, d, i, t, 1.0)
}

/// Shared body of `alpha_i` / `chi_i`: `sign = -1` keeps the transfer terms
/// subtractive (column sum), `sign = +1` flips them additive (absolute
/// column sum).
fn column_functional(model: &ModelSpec, d: &DSequence, i: usize, t: f64, sign: f64) -> Result<f64> {
    if i < 1 {
        return Err(Error::Domain("column index starts at 1".into()));
    }
    let r = model.rates_at(t)?;
    let s = model.servers as usize;
    let di = d.d(i);
    let service = match model.class {
        QueueClass::Bd | QueueClass::BatchArrival => {
            // the d_0 mu_0 convention: no inflow-from-below term at i = 1
            let from_below =
                if i >= 2 { sign * (d.d(i - 1) / di) * r.mu(i - 1) } else { 0.0 };
            r.mu(i) + from_below
        }
        QueueClass::BatchService | QueueClass::BatchBoth => {
            // the diagonal carries the full service outflow of the column
            let mut acc: f64 = (1..=s.min(i)).map(|k| r.mu(k)).sum();
            let mu_i = r.mu(i);
            let lo = if i > s { i - s } else { 1 };
            for k in lo..i {
                acc += sign * (r.mu(i - k) - mu_i) * (d.d(k) / di);
            }
            acc
        }
    };
    let arrivals = if model.class.batch_arrivals() {
        let mut acc = 0.0;
        for k in 1..=s {
            acc += (1.0 + sign * d.d(k + i) / di) * r.lambda(k);
        }
        acc
    } else {
        r.lambda(i - 1) + sign * (d.d(i + 1) / di) * r.lambda(i)
    };
    Ok(service + arrivals)
}

/// `alpha(t)`, `beta(t)`, `chi(t)` from a finite scan over `i = 1..=j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    /// True when `alpha_i` and `chi_i` are numerically constant at the end
    /// of the scanned range, so the finite inf/sup equal the infinite ones.
    pub tail_settled: bool,
}

/// Index horizon past which `alpha_i(t)` is constant in `i` for every
/// class: beyond the d-sequence head, the batch support and any state-rule
/// table, all rates and weight ratios repeat.
pub fn default_j_max(model: &ModelSpec, d: &DSequence) -> usize {
    let table = match &model.state_rules {
        Some(r) => {
            let len = |rule: &StateRule| match rule {
                StateRule::Table(t) => t.len(),
                _ => 0,
            };
            len(&r.lambda).max(len(&r.mu))
        }
        None => 0,
    };
    d.head_len() + model.servers as usize + table + 50
}

/// Scans the closed forms over `i = 1..=j_max`.
pub fn aggregate(model: &ModelSpec, d: &DSequence, t: f64, j_max: usize) -> Result<Aggregate> {
    if j_max < 3 {
        return Err(Error::Domain("index horizon must be >= 3".into()));
    }
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    let mut chi: f64 = 0.0;
    let mut last_alpha = [0.0f64; 3];
    let mut last_chi = [0.0f64; 3];
    for i in 1..=j_max {
        let ai = alpha_i(model, d, i, t)?;
        let ci = chi_i(model, d, i, t)?;
        alpha = alpha.min(ai);
        beta = beta.max(ai);
        chi = chi.max(ci);
        last_alpha = [last_alpha[1], last_alpha[2], ai];
        last_chi = [last_chi[1], last_chi[2], ci];
    }
    let settled = |v: &[f64; 3]| {
        let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (v[0] - v[2]).abs() <= TAIL_SETTLE_RTOL * scale
            && (v[1] - v[2]).abs() <= TAIL_SETTLE_RTOL * scale
    };
    Ok(Aggregate { alpha, beta, chi, tail_settled: settled(&last_alpha) && settled(&last_chi) })
}

/// A validated model + d-sequence pair with its scan horizon; the callable
/// form of the aggregates.
#[derive(Debug, Clone)]
pub struct RateFunctions {
    model: ModelSpec,
    d: DSequence,
    j_max: usize,
}

impl RateFunctions {
    pub fn new(model: ModelSpec, d: DSequence) -> Result<Self> {
        model.validate()?;
        let j_max = default_j_max(&model, &d);
        Ok(RateFunctions { model, d, j_max })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn d(&self) -> &DSequence {
        &self.d
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn aggregate_at(&self, t: f64) -> Result<Aggregate> {
        aggregate(&self.model, &self.d, t, self.j_max)
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.aggregate_at(t)?.alpha)
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        Ok(self.aggregate_at(t)?.beta)
    }

    pub fn chi(&self, t: f64) -> Result<f64> {
        Ok(self.aggregate_at(t)?.chi)
    }
}

/// Logarithmic norm induced by the column-sum (l1) norm:
/// `sup_j (m_jj + sum_{i != j} |m_ij|)`.
pub fn log_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| {
            (0..m.nrows())
                .map(|i| if i == j { m[(j, j)] } else { m[(i, j)].abs() })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Adaptive Simpson quadrature on `[a, b]`; returns the integral and an
/// error estimate.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse<F: FnMut(f64) -> f64>(
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
        err: &mut f64,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            *err += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    let mut err = 0.0;
    let value = recurse(&mut f, a, b, fa, fm, fb, whole, tol, 30, &mut err);
    (value, err)
}

/// The forcing vector `f(t)` of the reduced system: rates from state 0 into
/// states `1..`, indexed from state 1. Length 1 for single-arrival classes,
/// `S` for batch-arrival classes.
pub fn forcing_vector(model: &ModelSpec, t: f64) -> Result<Vec<f64>> {
    let s = model.servers as usize;
    let len = if model.class.batch_arrivals() { s } else { 1 };
    let mut f = vec![0.0; len];
    model.for_each_transition(0, t, len + 1, |target, rate| {
        f[target - 1] += rate;
    })?;
    Ok(f)
}

/// `a`, `K`, `R`, `F` of the exponential weak-ergodicity corollary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicConstants {
    /// `a = int_0^1 alpha(t) dt`.
    pub a: f64,
    /// `K = sup_{|t-s| <= 1} int_s^t alpha(u) du`; always >= 0 (`s = t`).
    pub k: f64,
    /// `R = e^K`.
    pub r: f64,
    /// `F = sup_{t in [0,1]} ||f(t)||_1D`.
    pub f: f64,
    pub quadrature_error_estimate: f64,
}

/// Computes the periodic constants. Assumes the positivity condition was
/// already checked (the report operation does so); the quadrature itself
/// does not need it.
pub fn periodic_constants(
    model: &ModelSpec,
    d: &DSequence,
    quadrature_tol: f64,
) -> Result<PeriodicConstants> {
    let rf = RateFunctions::new(model.clone(), d.clone())?;
    let f_sup = (0..F_GRID)
        .map(|j| forcing_vector(model, j as f64 / F_GRID as f64).map(|f| norm_1d(&f, d)))
        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
    if model.is_homogeneous() {
        let alpha = rf.alpha(0.0)?;
        let k = alpha.max(0.0);
        return Ok(PeriodicConstants { a: alpha, k, r: k.exp(), f: f_sup, quadrature_error_estimate: 0.0 });
    }
    let alpha = |t: f64| rf.alpha(t).expect("validated model, t >= 0");
    let (a, qerr) = adaptive_simpson(alpha, 0.0, 1.0, quadrature_tol);
    // cumulative integral over [0, 2] so every window of length 1 within the
    // period structure is covered; per-cell 3-point Simpson
    let h = 1.0 / K_GRID as f64;
    let mut cum = Vec::with_capacity(2 * K_GRID + 1);
    cum.push(0.0);
    let mut prev = alpha(0.0);
    for j in 0..2 * K_GRID {
        let t0 = j as f64 * h;
        let fm = alpha(t0 + 0.5 * h);
        let fb = alpha(t0 + h);
        cum.push(cum[j] + h / 6.0 * (prev + 4.0 * fm + fb));
        prev = fb;
    }
    let mut k: f64 = 0.0;
    for j in 0..cum.len() {
        let lo = j.saturating_sub(K_GRID);
        for i in lo..=j {
            k = k.max(cum[j] - cum[i]);
        }
    }
    Ok(PeriodicConstants { a, k, r: k.exp(), f: f_sup, quadrature_error_estimate: qerr })
}

/// What the bound machinery can certify for a given model and d-sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Time-constant intensities with `alpha > 0`.
    StronglyErgodic,
    /// Positivity holds and `a = int_0^1 alpha > 0`.
    WeaklyErgodic,
    /// Positivity fails, `a <= 0`, or the index scan did not settle.
    Inconclusive,
}

/// Certificate summary for one model / d-sequence pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub verdict: Verdict,
    pub positivity: PositivityVerdict,
    pub periodic: PeriodicConstants,
    /// Certified lower bound on the decay parameter (homogeneous case only).
    pub decay_lower_bound: Option<f64>,
    /// `W`, `W*` of the d-sequence, when its tail grows.
    pub norm_constants: Option<NormConstants>,
    pub j_max: usize,
    pub tail_settled: bool,
}

/// Runs the positivity scan, the periodic constants and the verdict logic.
/// `n_check` is the truncation used for the positivity matrices.
pub fn bounds_report(
    model: &ModelSpec,
    d: &DSequence,
    n_check: usize,
    quadrature_tol: f64,
) -> Result<BoundsReport> {
    model.validate()?;
    let positivity = positivity_on_grid(model, d, n_check, POSITIVITY_GRID, POSITIVITY_TOL)?;
    let periodic = periodic_constants(model, d, quadrature_tol)?;
    let rf = RateFunctions::new(model.clone(), d.clone())?;
    let agg0 = rf.aggregate_at(0.0)?;
    let verdict = if !positivity.ok || !agg0.tail_settled {
        Verdict::Inconclusive
    } else if model.is_homogeneous() && agg0.alpha > 0.0 {
        Verdict::StronglyErgodic
    } else if periodic.a > 0.0 {
        Verdict::WeaklyErgodic
    } else {
        Verdict::Inconclusive
    };
    let decay = if verdict == Verdict::StronglyErgodic { Some(agg0.alpha) } else { None };
    Ok(BoundsReport {
        verdict,
        positivity,
        periodic,
        decay_lower_bound: decay,
        norm_constants: d.constants().ok(),
        j_max: rf.j_max(),
        tail_settled: agg0.tail_settled,
    })
}

/// Certified lower bound on the decay parameter of a homogeneous chain.
pub fn decay_parameter_bound(model: &ModelSpec, d: &DSequence) -> Result<f64> {
    if !model.is_homogeneous() {
        return Err(Error::Unsupported(
            "decay parameter is defined for time-constant intensities only".into(),
        ));
    }
    let alpha = RateFunctions::new(model.clone(), d.clone())?.alpha(0.0)?;
    if alpha <= 0.0 {
        return Err(Error::Precondition(format!(
            "alpha = {alpha} is not positive: no decay certificate"
        )));
    }
    Ok(alpha)
}

/// Evaluable bound curves for a fixed pair of initial distributions over
/// states `0..=N` (`p[0]` is the empty-system probability).
#[derive(Debug, Clone)]
pub struct BoundCurves {
    rates: RateFunctions,
    quad_tol: f64,
    homogeneous: Option<Aggregate>,
    /// Per-period integrals of (alpha, beta, chi) for the periodic branch.
    per_period: (f64, f64, f64),
    init_1d: f64,
    /// All weighted tail sums of the initial z-difference are nonnegative.
    sign_ok: bool,
    /// One of the initial vectors is e_0, so `W*` replaces `2/W` in the
    /// expectation bound.
    use_w_star: bool,
    constants: Option<NormConstants>,
    /// `(F, R_eff, a_eff)`: the homogeneous branch takes `R = 1, a = alpha`.
    corollary: Option<(f64, f64, f64)>,
}

fn is_e0(p: &[f64]) -> bool {
    !p.is_empty() && (p[0] - 1.0).abs() <= 1e-12 && p[1..].iter().all(|v| v.abs() <= 1e-15)
}

/// Builds the two-sided and weak-ergodicity bound curves plus the
/// explicit exponential corollary curves.
pub fn bound_curves(
    model: &ModelSpec,
    d: &DSequence,
    p_a0: &[f64],
    p_b0: &[f64],
    quadrature_tol: f64,
) -> Result<BoundCurves> {
    if p_a0.len() != p_b0.len() || p_a0.is_empty() {
        return Err(Error::Domain("initial vectors must share a nonzero length".into()));
    }
    let rates = RateFunctions::new(model.clone(), d.clone())?;
    let diff: Vec<f64> = p_a0[1..].iter().zip(&p_b0[1..]).map(|(a, b)| a - b).collect();
    let init_1d = norm_1d(&diff, d);
    let mut tail = 0.0;
    let mut sign_ok = true;
    for v in diff.iter().rev() {
        tail += v;
        sign_ok &= tail >= -1e-12;
    }
    let homogeneous =
        if model.is_homogeneous() { Some(rates.aggregate_at(0.0)?) } else { None };
    let per_period = match &homogeneous {
        Some(_) => (0.0, 0.0, 0.0),
        None => {
            let int = |pick: fn(&Aggregate) -> f64| {
                adaptive_simpson(
                    |t| pick(&rates.aggregate_at(t).expect("validated model, t >= 0")),
                    0.0,
                    1.0,
                    quadrature_tol,
                )
                .0
            };
            (int(|a| a.alpha), int(|a| a.beta), int(|a| a.chi))
        }
    };
    let constants = d.constants().ok();
    let (a_eff, r_eff) = match &homogeneous {
        Some(agg) => (agg.alpha, 1.0),
        None => {
            let pc = periodic_constants(model, d, quadrature_tol)?;
            (pc.a, pc.r)
        }
    };
    let corollary = if a_eff > 0.0 {
        let f_sup = (0..F_GRID)
            .map(|j| forcing_vector(model, j as f64 / F_GRID as f64).map(|f| norm_1d(&f, d)))
            .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
        Some((f_sup, r_eff, a_eff))
    } else {
        None
    };
    Ok(BoundCurves {
        rates,
        quad_tol: quadrature_tol,
        homogeneous,
        per_period,
        init_1d,
        sign_ok,
        use_w_star: is_e0(p_a0) || is_e0(p_b0),
        constants,
        corollary,
    })
}

impl BoundCurves {
    pub fn initial_1d(&self) -> f64 {
        self.init_1d
    }

    pub fn sign_condition_holds(&self) -> bool {
        self.sign_ok
    }

    fn integral(&self, t: f64, pick: fn(&Aggregate) -> f64, per_period: f64) -> f64 {
        if let Some(agg) = &self.homogeneous {
            return pick(agg) * t;
        }
        let whole = t.floor();
        let frac = t - whole;
        let (partial, _) = adaptive_simpson(
            |u| pick(&self.rates.aggregate_at(u).expect("validated model, t >= 0")),
            0.0,
            frac,
            self.quad_tol,
        );
        whole * per_period + partial
    }

    fn int_alpha(&self, t: f64) -> f64 {
        self.integral(t, |a| a.alpha, self.per_period.0)
    }

    /// Upper branch of the two-sided `||.||_1D` bound:
    /// `e^{-int_0^t alpha} ||.||_1D(0)`.
    pub fn upper_1d(&self, t: f64) -> f64 {
        (-self.int_alpha(t)).exp() * self.init_1d
    }

    /// Lower branch of the two-sided `||.||_1D` bound:
    /// `e^{-int_0^t chi} ||.||_1D(0)`.
    pub fn lower_1d(&self, t: f64) -> f64 {
        (-self.integral(t, |a| a.chi, self.per_period.2)).exp() * self.init_1d
    }

    /// Total-variation-style bound `4 e^{-int alpha} ||z-diff(0)||_1D` on
    /// the l1 distance of the distributions.
    pub fn upper_tv(&self, t: f64) -> f64 {
        4.0 * self.upper_1d(t)
    }

    /// Expectation-norm bound `(2/W) e^{-int alpha} ||z-diff(0)||_1D`, with
    /// `1/W*` replacing `2/W` when one initial vector is `e_0`.
    pub fn upper_1e(&self, t: f64) -> Result<f64> {
        let c = self.constants.ok_or_else(|| {
            Error::Precondition("expectation bound needs W > 0 (growing d-tail)".into())
        })?;
        let factor = if self.use_w_star { 1.0 / c.w_star } else { 2.0 / c.w };
        Ok(factor * self.upper_1d(t))
    }

    /// Lower bound `e^{-int beta} ||.||_1D(0)`, valid only under the sign
    /// condition `D(p*(0) - p**(0)) >= 0`.
    pub fn lower_beta(&self, t: f64) -> Result<f64> {
        if !self.sign_ok {
            return Err(Error::Precondition(
                "the beta lower bound needs D(p*(0) - p**(0)) >= 0 componentwise".into(),
            ));
        }
        Ok((-self.integral(t, |a| a.beta, self.per_period.1)).exp() * self.init_1d)
    }

    /// Corollary curve `(4 F R / a) e^{-a t}` for the l1 distance to the
    /// limiting regime (homogeneous branch: `R = 1`, `a = alpha`).
    pub fn corollary_tv(&self, t: f64) -> Result<f64> {
        let (f, r, a) = self.corollary.ok_or_else(|| {
            Error::Precondition("corollary curves need a > 0".into())
        })?;
        Ok(4.0 * f * r / a * (-a * t).exp())
    }

    /// Corollary curve `(F R / (a W*)) e^{-a t}` for the mean.
    pub fn corollary_mean(&self, t: f64) -> Result<f64> {
        let (f, r, a) = self.corollary.ok_or_else(|| {
            Error::Precondition("corollary curves need a > 0".into())
        })?;
        let c = self.constants.ok_or_else(|| {
            Error::Precondition("mean corollary needs W* (growing d-tail)".into())
        })?;
        Ok(f * r / (a * c.w_star) * (-a * t).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_a, build_reduced, transform_bstar};
    use crate::timefn::TimeFunction;
    use approx::assert_relative_eq;

    fn mm1() -> ModelSpec {
        ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(1.0),
            TimeFunction::constant(4.0),
        )
    }

    #[test]
    fn class_i_frozen_values() {
        let d = DSequence::geometric(2.0).unwrap();
        let m = mm1();
        assert_relative_eq!(alpha_i(&m, &d, 1, 0.0).unwrap(), 3.0);
        for i in 2..12 {
            assert_relative_eq!(alpha_i(&m, &d, i, 0.0).unwrap(), 1.0);
        }
        assert_relative_eq!(chi_i(&m, &d, 1, 0.0).unwrap(), 7.0);
        for i in 2..12 {
            assert_relative_eq!(chi_i(&m, &d, i, 0.0).unwrap(), 9.0);
        }
        assert!(alpha_i(&m, &d, 0, 0.0).is_err());
    }

    #[test]
    fn pure_death_telescopes() {
        let mut m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(0.0),
            TimeFunction::constant(1.0),
        );
        m.state_rules = Some(crate::model::StateRules {
            lambda: StateRule::One,
            mu: StateRule::One,
        });
        let d = DSequence::all_ones();
        assert_relative_eq!(alpha_i(&m, &d, 1, 0.0).unwrap(), 1.0);
        for i in 2..10 {
            assert_relative_eq!(alpha_i(&m, &d, i, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_rates_give_zero_chi() {
        for class in QueueClass::ALL {
            let m = ModelSpec::new(
                class,
                3,
                TimeFunction::constant(0.0),
                TimeFunction::constant(0.0),
            );
            let d = DSequence::geometric(1.5).unwrap();
            for i in 1..8 {
                assert_eq!(chi_i(&m, &d, i, 0.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn aggregate_frozen_values() {
        let agg =
            aggregate(&mm1(), &DSequence::geometric(2.0).unwrap(), 0.0, 60).unwrap();
        assert_relative_eq!(agg.alpha, 1.0);
        assert_relative_eq!(agg.beta, 3.0);
        assert_relative_eq!(agg.chi, 9.0);
        assert!(agg.tail_settled);
        assert!(agg.alpha <= agg.beta);
        assert!(agg.chi >= -agg.alpha);
    }

    /// Closed forms against the matrix route, all classes, a nontrivial
    /// time point. Indices above `N - S` feel the truncation, so only the
    /// unaffected range is compared.
    #[test]
    fn column_sum_oracle_small() {
        let d = {
            let head = vec![1.0, 1.0, 1.2, 1.5, 2.0];
            DSequence::new(head, 1.4).unwrap()
        };
        for class in QueueClass::ALL {
            let m = ModelSpec::new(
                class,
                3,
                TimeFunction::sinusoid(2.0, 1.0),
                TimeFunction::cosinusoid(3.0, 0.5),
            );
            let n = 25;
            let t = 0.37;
            let a = build_a(&m, n, t).unwrap();
            let (b, _) = build_reduced(&a).unwrap();
            let bstar = transform_bstar(&b, &d);
            for i in 1..=n - 3 {
                let col_sum: f64 = bstar.column(i - 1).iter().sum();
                let col_abs: f64 = bstar.column(i - 1).iter().map(|v| v.abs()).sum();
                assert_relative_eq!(
                    alpha_i(&m, &d, i, t).unwrap(),
                    -col_sum,
                    epsilon = 1e-10,
                    max_relative = 1e-10
                );
                assert_relative_eq!(
                    chi_i(&m, &d, i, t).unwrap(),
                    col_abs,
                    epsilon = 1e-10,
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn log_norm_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 2.0, -3.0]);
        assert_relative_eq!(log_norm(&m), -1.0);
        assert_relative_eq!(log_norm(&DMatrix::zeros(3, 3)), 0.0);
        assert_relative_eq!(log_norm(&DMatrix::identity(3, 3)), 1.0);
    }

    /// `gamma(B*) = -alpha`, `gamma(-B*) = chi` on a truncation large
    /// enough that the boundary columns do not bind.
    #[test]
    fn log_norm_matches_aggregates() {
        let d = DSequence::geometric(2.0).unwrap();
        let m = mm1();
        let a = build_a(&m, 40, 0.0).unwrap();
        let (b, _) = build_reduced(&a).unwrap();
        let bstar = transform_bstar(&b, &d);
        let agg = aggregate(&m, &d, 0.0, 60).unwrap();
        assert_relative_eq!(log_norm(&bstar), -agg.alpha, epsilon = 1e-10);
        assert_relative_eq!(log_norm(&(-&bstar)), agg.chi, epsilon = 1e-10);
    }

    #[test]
    fn simpson_on_smooth_integrands() {
        let (v, e) = adaptive_simpson(|t| 2.0 + (std::f64::consts::TAU * t).sin(), 0.0, 1.0, 1e-10);
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
        assert!(e < 1e-8);
        let (v, _) = adaptive_simpson(|t| t * t, 0.0, 3.0, 1e-12);
        assert_relative_eq!(v, 9.0, epsilon = 1e-10);
    }

    #[test]
    fn forcing_vectors() {
        let m = ModelSpec::paper_case(QueueClass::Bd, 50.0);
        assert_eq!(forcing_vector(&m, 0.25).unwrap(), vec![100.0]);
        let m2 = ModelSpec::paper_case(QueueClass::BatchArrival, 50.0);
        let f = forcing_vector(&m2, 0.25).unwrap();
        assert_eq!(f.len(), 100);
        assert_relative_eq!(f[0], 1.0);
        assert_relative_eq!(f[99], 0.01);
    }

    #[test]
    fn paper_case_f_is_exact() {
        let pc = periodic_constants(
            &ModelSpec::paper_case(QueueClass::Bd, 50.0),
            &DSequence::paper_s100(),
            1e-8,
        )
        .unwrap();
        assert_relative_eq!(pc.f, 100.0, epsilon = 1e-9);
        assert!(pc.k >= 0.0);
        assert!(pc.a <= pc.k + 1e-12);
        assert_relative_eq!(pc.r, pc.k.exp());
    }

    #[test]
    fn homogeneous_constants() {
        let pc = periodic_constants(&mm1(), &DSequence::geometric(2.0).unwrap(), 1e-8).unwrap();
        assert_relative_eq!(pc.a, 1.0);
        assert_relative_eq!(pc.k, 1.0);
        assert_relative_eq!(pc.r, 1.0f64.exp());
        assert_eq!(pc.quadrature_error_estimate, 0.0);
        assert_relative_eq!(pc.f, 1.0); // f = (lambda) with d_1 = 1
    }

    #[test]
    fn scale_covariance() {
        let d = DSequence::paper_s100();
        let base = ModelSpec::paper_case(QueueClass::Bd, 20.0);
        let mut scaled = base.clone();
        let c = 2.5;
        scaled.lambda = TimeFunction::Scaled { factor: c, inner: Box::new(base.lambda.clone()) };
        scaled.mu = TimeFunction::Scaled { factor: c, inner: Box::new(base.mu.clone()) };
        let j = default_j_max(&base, &d);
        for t in [0.0, 0.31, 0.8] {
            let a0 = aggregate(&base, &d, t, j).unwrap();
            let a1 = aggregate(&scaled, &d, t, j).unwrap();
            assert_relative_eq!(a1.alpha, c * a0.alpha, max_relative = 1e-12);
            assert_relative_eq!(a1.beta, c * a0.beta, max_relative = 1e-12);
            assert_relative_eq!(a1.chi, c * a0.chi, max_relative = 1e-12);
        }
        let pc0 = periodic_constants(&base, &d, 1e-10).unwrap();
        let pc1 = periodic_constants(&scaled, &d, 1e-10).unwrap();
        assert_relative_eq!(pc1.a, c * pc0.a, max_relative = 1e-6);
        assert_relative_eq!(pc1.f, c * pc0.f, max_relative = 1e-12);
    }

    #[test]
    fn decay_bound_cases() {
        let d = DSequence::geometric(2.0).unwrap();
        assert_relative_eq!(decay_parameter_bound(&mm1(), &d).unwrap(), 1.0);
        let inhom = ModelSpec::paper_case(QueueClass::Bd, 10.0);
        assert!(matches!(
            decay_parameter_bound(&inhom, &DSequence::paper_s100()),
            Err(Error::Unsupported(_))
        ));
        // lambda > mu with flat-ish weights: alpha <= 0, no certificate
        let heavy = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(4.0),
            TimeFunction::constant(1.0),
        );
        assert!(matches!(
            decay_parameter_bound(&heavy, &DSequence::geometric(1.01).unwrap()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn report_verdicts() {
        let d = DSequence::geometric(2.0).unwrap();
        let rep = bounds_report(&mm1(), &d, 40, 1e-8).unwrap();
        assert_eq!(rep.verdict, Verdict::StronglyErgodic);
        assert_eq!(rep.decay_lower_bound, Some(1.0));
        assert!(rep.positivity.ok);

        let heavy = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(4.0),
            TimeFunction::constant(1.0),
        );
        let rep = bounds_report(&heavy, &DSequence::geometric(1.01).unwrap(), 40, 1e-8).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert_eq!(rep.decay_lower_bound, None);
    }

    #[test]
    fn curves_homogeneous_and_degenerate() {
        let d = DSequence::geometric(2.0).unwrap();
        let mut p_a = vec![0.0; 11];
        p_a[1] = 1.0; // e_1
        let mut p_b = vec![0.0; 11];
        p_b[0] = 1.0; // e_0
        let curves = bound_curves(&mm1(), &d, &p_a, &p_b, 1e-8).unwrap();
        let init = curves.initial_1d();
        assert_relative_eq!(init, 1.0); // ||e_1 z-part||_1D = d_1
        // alpha = 1: the TV curve is 4 e^{-t} init
        assert_relative_eq!(curves.upper_tv(2.0), 4.0 * (-2.0f64).exp(), max_relative = 1e-12);
        // t = 0: both sides of the two-sided bound collapse to the initial norm
        assert_relative_eq!(curves.upper_1d(0.0), init);
        assert_relative_eq!(curves.lower_1d(0.0), init);
        // sign condition holds (e_1 vs e_0), beta = 3
        assert!(curves.sign_condition_holds());
        assert_relative_eq!(curves.lower_beta(1.0).unwrap(), (-3.0f64).exp(), max_relative = 1e-12);
        // e_0 initial: W* branch of the expectation bound
        assert_relative_eq!(curves.upper_1e(0.0).unwrap(), 1.0); // W* = 1
        // corollaries with R = 1, a = 1, F = 1, W* = 1
        assert_relative_eq!(curves.corollary_tv(0.0).unwrap(), 4.0);
        assert_relative_eq!(curves.corollary_mean(0.0).unwrap(), 1.0);
    }

    #[test]
    fn curves_reject_missing_sign_condition() {
        let d = DSequence::geometric(2.0).unwrap();
        let mut p_a = vec![0.0; 6];
        p_a[0] = 1.0;
        let mut p_b = vec![0.0; 6];
        p_b[2] = 1.0;
        // p_a - p_b has tail sums <= 0: the beta bound must refuse
        let curves = bound_curves(&mm1(), &d, &p_a, &p_b, 1e-8).unwrap();
        assert!(!curves.sign_condition_holds());
        assert!(matches!(curves.lower_beta(1.0), Err(Error::Precondition(_))));
        // the unsigned bounds still work
        assert!(curves.upper_1d(1.0) > 0.0);
    }

    #[test]
    fn periodic_curve_matches_hand_integral() {
        // class I, lambda = 2(1+sin 2 pi t), mu = 4, d = 2^(j-1):
        // alpha_i(t) = mu - mu/2 + lambda(t)(1 - 2) = -2 sin(2 pi t) for
        // i >= 2, alpha_1 = 4 - lambda(t) = alpha_i + 2, so the inf is the
        // i >= 2 branch; int_0^t alpha = (cos(2 pi t) - 1)/pi.
        let m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::sinusoid(2.0, 2.0),
            TimeFunction::constant(4.0),
        );
        let d = DSequence::geometric(2.0).unwrap();
        let mut p_a = vec![0.0; 8];
        p_a[1] = 1.0;
        let mut p_b = vec![0.0; 8];
        p_b[0] = 1.0;
        let curves = bound_curves(&m, &d, &p_a, &p_b, 1e-10).unwrap();
        for t in [0.3, 1.0, 2.7] {
            let hand = ((std::f64::consts::TAU * t).cos() - 1.0) / std::f64::consts::PI;
            assert_relative_eq!(curves.upper_1d(t), (-hand).exp(), max_relative = 1e-7);
        }
    }
}
