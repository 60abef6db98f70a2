//! Numerical solution of the truncated forward Kolmogorov system
//! `dp/dt = A(t) p` and the characteristics derived from it.
//!
//! The integrator is an explicit embedded Runge-Kutta 5(4) pair with an
//! adaptive step, a matrix-free derivative (`A(t) p` is accumulated
//! transition by transition in `O(N S)`), and a step ceiling `0.5 / L`
//! where `L` bounds the diagonal of the generator, so the method stays
//! inside its stability region. Solutions are monitored, never repaired: a
//! state vector leaving the simplex beyond the contracted tolerances
//! aborts the run.
//!
//! The limiting 1-periodic regime is approximated as in the source
//! program: solve from `X(0) = 0` past a mixing horizon `t*`, read
//! `p_0(t)` and the mean off the window `[t*, t*+1]`, and certify the
//! truncation empirically by doubling `N` until the curves stop moving.

use serde::{Deserialize, Serialize};

use crate::bounds::{adaptive_simpson, log_norm, RateFunctions};
use crate::dseq::{norm_1d, norm_1e, DSequence};
use crate::error::{Error, Result};
use crate::generator::{build_a, build_reduced, positivity_on_grid, transform_bstar, POSITIVITY_TOL};
use crate::model::ModelSpec;

/// Largest negative entry tolerated in a solution vector.
const OMEGA_MIN: f64 = -1e-10;
/// Largest drift of the vector sum away from 1.
const OMEGA_SUM: f64 = 1e-9;
/// Sample points per unit window for limiting curves.
const WINDOW_SAMPLES: usize = 201;
/// Period-over-period drift larger than this multiple of the truncation
/// tolerance pushes `t*` further out.
const DRIFT_FACTOR: f64 = 10.0;
/// How far past the requested `t*` the automatic raise may go.
const T_STAR_SLACK: usize = 8;

/// Counters and extremes collected along one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Largest accepted local error divided by the step size.
    pub max_error_rate: f64,
    pub min_step: f64,
}

/// A solved trajectory of the truncated system on states `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    /// One probability vector of length `n + 1` per grid point.
    pub states: Vec<Vec<f64>>,
    pub n: usize,
    pub stats: SolverStats,
}

impl Trajectory {
    /// `(p_0, mean)` at grid index `idx`.
    pub fn characteristics_at(&self, idx: usize) -> (f64, f64) {
        characteristics(&self.states[idx])
    }
}

/// `(p_0, sum_k k p_k)` of a probability vector.
pub fn characteristics(p: &[f64]) -> (f64, f64) {
    let mean = p.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    (p[0], mean)
}

/// Dormand-Prince 5(4) coefficients.
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Rhs<'a> {
    model: &'a ModelSpec,
    n: usize,
}

impl Rhs<'_> {
    /// `out = A(t) y`, accumulated per transition; the diagonal is the
    /// negative outflow, so columns of the implied matrix sum to zero
    /// exactly.
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let r = self.model.rates_at(t)?;
        let s = self.model.servers as usize;
        out.fill(0.0);
        let batch_arr = self.model.class.batch_arrivals();
        let batch_srv = self.model.class.batch_service();
        for src in 0..=self.n {
            let mass = y[src];
            let mut outflow = 0.0;
            if batch_arr {
                for k in 1..=s.min(self.n - src) {
                    let rate = r.lambda(k);
                    out[src + k] += rate * mass;
                    outflow += rate;
                }
            } else if src < self.n {
                let rate = r.lambda(src);
                out[src + 1] += rate * mass;
                outflow += rate;
            }
            if batch_srv {
                for k in 1..=s.min(src) {
                    let rate = r.mu(k);
                    out[src - k] += rate * mass;
                    outflow += rate;
                }
            } else if src >= 1 {
                let rate = r.mu(src);
                out[src - 1] += rate * mass;
                outflow += rate;
            }
            out[src] -= outflow * mass;
        }
        Ok(())
    }
}

fn check_omega(y: &[f64], t: f64) -> Result<()> {
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for v in y {
        min = min.min(*v);
        sum += v;
    }
    if min < OMEGA_MIN {
        return Err(Error::Solver(format!(
            "solution left the simplex at t = {t}: min entry {min:e}"
        )));
    }
    if (sum - 1.0).abs() > OMEGA_SUM {
        return Err(Error::Solver(format!(
            "probability mass drifted at t = {t}: sum - 1 = {:e}",
            sum - 1.0
        )));
    }
    Ok(())
}

/// Integrates from `t0` to `t1`, invoking `record` at either every
/// accepted step (targets = None) or exactly at the given sorted target
/// times (which must lie within the span; `t0` itself is recorded first).
fn integrate(
    model: &ModelSpec,
    n: usize,
    p0: &[f64],
    t0: f64,
    t1: f64,
    tol: f64,
    targets: Option<&[f64]>,
    record: &mut dyn FnMut(f64, &[f64]),
) -> Result<SolverStats> {
    if p0.len() != n + 1 {
        return Err(Error::Domain(format!(
            "initial vector length {} does not match truncation {}",
            p0.len(),
            n + 1
        )));
    }
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::Domain("solver tolerance must be positive".into()));
    }
    if t1 < t0 || t0 < 0.0 {
        return Err(Error::Domain("time span must satisfy 0 <= t0 <= t1".into()));
    }
    check_omega(p0, t0)?;
    if let Some(ts) = targets {
        if ts.windows(2).any(|w| w[1] <= w[0]) || ts.iter().any(|t| *t < t0 || *t > t1 + 1e-12) {
            return Err(Error::Domain("target times must be increasing and inside the span".into()));
        }
    }
    let l = model.local_bound_l(n)?;
    let h_max = if l > 0.0 { (0.5 / l).min(t1 - t0) } else { t1 - t0 };
    let rhs = Rhs { model, n };
    let mut stats = SolverStats { min_step: f64::INFINITY, ..Default::default() };
    let mut t = t0;
    let mut y = p0.to_vec();
    let mut next_target = 0usize;
    if targets.is_none() {
        record(t, &y);
    }
    if t1 == t0 {
        if let Some(ts) = targets {
            for target in ts {
                record(*target, &y);
            }
        }
        stats.min_step = 0.0;
        return Ok(stats);
    }
    let dim = n + 1;
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut ytmp = vec![0.0; dim];
    rhs.eval(t, &y, &mut k[0])?;
    let mut h = h_max;
    loop {
        // hit the next target (or the end) exactly
        let bound = match targets {
            Some(ts) if next_target < ts.len() => ts[next_target],
            _ => t1,
        };
        if bound - t <= 1e-14 * (1.0 + t) {
            if let Some(ts) = targets {
                if next_target < ts.len() {
                    record(ts[next_target], &y);
                    next_target += 1;
                    continue;
                }
            }
            break;
        }
        let h_step = h.min(bound - t);
        if h_step < 1e-12 * (1.0 + t.abs()) {
            return Err(Error::Solver(format!(
                "step size collapsed at t = {t} (stiffness bound L = {l})"
            )));
        }
        // six derivative stages (k[0] is FSAL from the previous step)
        let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (stage, coeffs) in stages.iter().enumerate() {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate() {
                    acc += c * k[j][i];
                }
                ytmp[i] = y[i] + h_step * acc;
            }
            rhs.eval(t + C[stage] * h_step, &ytmp, &mut k[stage + 1])?;
        }
        // fifth-order solution into ytmp
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += B[j] * k[j][i];
            }
            ytmp[i] = y[i] + h_step * acc;
        }
        rhs.eval(t + h_step, &ytmp, &mut k[6])?;
        let mut err = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            err += (h_step * e).abs();
        }
        // the contract is local error per unit time
        let budget = tol * h_step;
        if err <= budget {
            t += h_step;
            std::mem::swap(&mut y, &mut ytmp);
            k.swap(0, 6); // FSAL
            check_omega(&y, t)?;
            stats.steps_accepted += 1;
            stats.max_error_rate = stats.max_error_rate.max(err / h_step);
            stats.min_step = stats.min_step.min(h_step);
            let at_target = matches!(targets, Some(ts) if next_target < ts.len()
                && (t - ts[next_target]).abs() <= 1e-12 * (1.0 + t));
            if at_target {
                record(t, &y);
                next_target += 1;
            } else if targets.is_none() {
                record(t, &y);
            }
        } else {
            stats.steps_rejected += 1;
        }
        let scale = if err > 0.0 { 0.9 * (budget / err).powf(0.2) } else { 5.0 };
        h = (h_step * scale.clamp(0.2, 5.0)).min(h_max);
    }
    Ok(stats)
}

/// Solves `dp/dt = A(t) p` over `span`, recording every accepted step.
pub fn solve(
    model: &ModelSpec,
    n: usize,
    p0: &[f64],
    span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    model.validate()?;
    let mut grid = Vec::new();
    let mut states = Vec::new();
    let stats = integrate(model, n, p0, span.0, span.1, tol, None, &mut |t, y| {
        grid.push(t);
        states.push(y.to_vec());
    })?;
    Ok(Trajectory { grid, states, n, stats })
}

/// Solves over `[t0, max(samples)]`, recording exactly at the sample times
/// (the initial point `t0` is recorded only if listed).
pub fn solve_at(
    model: &ModelSpec,
    n: usize,
    p0: &[f64],
    t0: f64,
    samples: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::Domain("need at least one sample time".into()));
    }
    let t1 = *samples.last().unwrap();
    let mut grid = Vec::new();
    let mut states = Vec::new();
    let stats = integrate(model, n, p0, t0, t1, tol, Some(samples), &mut |t, y| {
        grid.push(t);
        states.push(y.to_vec());
    })?;
    Ok(Trajectory { grid, states, n, stats })
}

/// The standard basis vector `e_k` on states `0..=n`.
pub fn unit_vector(n: usize, k: usize) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[k] = 1.0;
    p
}

/// Approximated limiting characteristics on one period window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingCharacteristics {
    /// `[t*, t* + 1]`, after any automatic raise of `t*`.
    pub window: (f64, f64),
    pub grid: Vec<f64>,
    pub p0_curve: Vec<f64>,
    pub mean_curve: Vec<f64>,
    /// Sup-norm movement of the curves under the last doubling of `N`.
    pub truncation_error_estimate: f64,
    pub n_used: usize,
    /// Period-over-period drift at the final `t*`; large drift means the
    /// window is not yet in the limiting regime.
    pub drift: f64,
}

struct WindowCurves {
    p0: Vec<f64>,
    mean: Vec<f64>,
    drift: f64,
}

/// Solves `[0, t*+2]` from `e_0` and reads the curves off `[t*, t*+1]`;
/// drift compares them with the following period.
fn window_run(model: &ModelSpec, n: usize, t_star: f64, solver_tol: f64) -> Result<WindowCurves> {
    let m = WINDOW_SAMPLES - 1;
    let samples: Vec<f64> = (0..=2 * m).map(|j| t_star + j as f64 / m as f64).collect();
    let traj = solve_at(model, n, &unit_vector(n, 0), 0.0, &samples, solver_tol)?;
    let (mut p0, mut mean) = (Vec::with_capacity(m + 1), Vec::with_capacity(m + 1));
    let mut drift: f64 = 0.0;
    for j in 0..=m {
        let (a0, a1) = characteristics(&traj.states[j]);
        let (b0, b1) = characteristics(&traj.states[j + m]);
        p0.push(a0);
        mean.push(a1);
        drift = drift.max((a0 - b0).abs()).max((a1 - b1).abs());
    }
    Ok(WindowCurves { p0, mean, drift })
}

/// Approximates the limiting `p_0(t)` and mean curves with empirical
/// truncation control: `N` doubles from `n_initial` until the curves move
/// less than `tol_truncation`, and `t*` is raised when the window drifts
/// period over period.
pub fn limiting_regime(
    model: &ModelSpec,
    n_initial: usize,
    n_cap: usize,
    tol_truncation: f64,
    t_star: f64,
    solver_tol: f64,
) -> Result<LimitingCharacteristics> {
    model.validate()?;
    if n_initial < 1 || n_initial > n_cap {
        return Err(Error::Domain("need 1 <= n_initial <= n_cap".into()));
    }
    let mut t_used = t_star;
    let mut cur = window_run(model, n_initial, t_used, solver_tol)?;
    for _ in 0..T_STAR_SLACK {
        if cur.drift <= DRIFT_FACTOR * tol_truncation {
            break;
        }
        t_used += 1.0;
        cur = window_run(model, n_initial, t_used, solver_tol)?;
    }
    let mut n = n_initial;
    loop {
        let n_next = 2 * n;
        if n_next > n_cap {
            return Err(Error::TruncationCap { cap: n_cap, tol: tol_truncation });
        }
        let next = window_run(model, n_next, t_used, solver_tol)?;
        let moved = cur
            .p0
            .iter()
            .zip(&next.p0)
            .chain(cur.mean.iter().zip(&next.mean))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if moved < tol_truncation {
            let m = WINDOW_SAMPLES - 1;
            return Ok(LimitingCharacteristics {
                window: (t_used, t_used + 1.0),
                grid: (0..=m).map(|j| t_used + j as f64 / m as f64).collect(),
                p0_curve: next.p0,
                mean_curve: next.mean,
                truncation_error_estimate: moved,
                n_used: n_next,
                drift: next.drift,
            });
        }
        cur = next;
        n = n_next;
    }
}

/// One sample time of a convergence experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub dist_l1: f64,
    pub dist_1d: f64,
    pub dist_1e: f64,
    pub upper_1d: f64,
    /// Lower branch of the two-sided bound, via `chi`.
    pub lower_chi: f64,
    pub upper_tv: f64,
    /// `(2/W)` bound on the expectation distance; absent for flat d-tails.
    pub upper_1e: Option<f64>,
    /// `beta` lower bound; present only under the sign condition and when
    /// the truncated-matrix rates were available.
    pub lower_beta: Option<f64>,
    pub ok: bool,
}

/// Measured distances along two trajectories against the bound curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub all_ok: bool,
    pub sign_condition: bool,
    /// True when the aggregates were taken from the truncated matrix
    /// (exact for the truncated chain, required for the `beta` lower
    /// bound); false means closed-form infinite-index aggregates, whose
    /// upper bounds remain valid for the truncated chain.
    pub truncated_rates: bool,
}

/// Truncation size up to which the dense-matrix rate aggregates are used.
const TRUNCATED_RATES_MAX_N: usize = 64;
/// Quadrature cells per sample interval for the dense-matrix rates.
const TRUNCATED_RATE_CELLS: usize = 16;

fn truncated_aggregates(model: &ModelSpec, d: &DSequence, n: usize, t: f64) -> Result<(f64, f64, f64)> {
    let a = build_a(model, n, t)?;
    let (b, _) = build_reduced(&a)?;
    let bstar = transform_bstar(&b, d);
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    for j in 0..bstar.ncols() {
        let s: f64 = bstar.column(j).iter().sum();
        alpha = alpha.min(-s);
        beta = beta.max(-s);
    }
    Ok((alpha, beta, log_norm(&(-bstar))))
}

/// Solves two trajectories and checks the measured distances against the
/// two-sided bound curves at `samples` evenly spaced times over `span`.
pub fn convergence_experiment(
    model: &ModelSpec,
    d: &DSequence,
    n: usize,
    p0_a: &[f64],
    p0_b: &[f64],
    span: (f64, f64),
    samples: usize,
    solver_tol: f64,
) -> Result<ComparisonTable> {
    if samples < 2 || span.1 <= span.0 {
        return Err(Error::Domain("need >= 2 samples over a nonempty span".into()));
    }
    let pos = positivity_on_grid(model, d, n.min(TRUNCATED_RATES_MAX_N.max(40)), 16, POSITIVITY_TOL)?;
    if !pos.ok {
        return Err(Error::Precondition(format!(
            "positivity fails (min off-diagonal entry {:e}): the bound curves do not apply",
            pos.min_entry
        )));
    }
    let times: Vec<f64> = (0..samples)
        .map(|j| span.0 + (span.1 - span.0) * j as f64 / (samples - 1) as f64)
        .collect();
    let traj_a = solve_at(model, n, p0_a, span.0, &times, solver_tol)?;
    let traj_b = solve_at(model, n, p0_b, span.0, &times, solver_tol)?;

    // cumulative integrals of (alpha, beta, chi) from span.0 to each sample
    let truncated = n <= TRUNCATED_RATES_MAX_N;
    let mut cum = vec![(0.0f64, 0.0f64, 0.0f64)];
    if truncated {
        let mut acc = (0.0, 0.0, 0.0);
        for w in times.windows(2) {
            let h = (w[1] - w[0]) / TRUNCATED_RATE_CELLS as f64;
            for c in 0..TRUNCATED_RATE_CELLS {
                let t0 = w[0] + c as f64 * h;
                let fa = truncated_aggregates(model, d, n, t0)?;
                let fm = truncated_aggregates(model, d, n, t0 + 0.5 * h)?;
                let fb = truncated_aggregates(model, d, n, t0 + h)?;
                acc.0 += h / 6.0 * (fa.0 + 4.0 * fm.0 + fb.0);
                acc.1 += h / 6.0 * (fa.1 + 4.0 * fm.1 + fb.1);
                acc.2 += h / 6.0 * (fa.2 + 4.0 * fm.2 + fb.2);
            }
            cum.push(acc);
        }
    } else {
        let rf = RateFunctions::new(model.clone(), d.clone())?;
        let mut acc = (0.0, 0.0, 0.0);
        for w in times.windows(2) {
            let agg = |pick: fn(&crate::bounds::Aggregate) -> f64| {
                adaptive_simpson(
                    |t| pick(&rf.aggregate_at(t).expect("validated model, t >= 0")),
                    w[0],
                    w[1],
                    1e-10,
                )
                .0
            };
            acc.0 += agg(|a| a.alpha);
            acc.1 += agg(|a| a.beta);
            acc.2 += agg(|a| a.chi);
            cum.push(acc);
        }
    }

    let diff0: Vec<f64> = p0_a[1..].iter().zip(&p0_b[1..]).map(|(a, b)| a - b).collect();
    let init_1d = norm_1d(&diff0, d);
    let mut tail = 0.0;
    let mut sign_condition = true;
    for v in diff0.iter().rev() {
        tail += v;
        sign_condition &= tail >= -1e-12;
    }
    let w_const = d.constants().ok().map(|c| c.w);
    let slack = 1e-8 * (1.0 + init_1d);
    let mut rows = Vec::with_capacity(times.len());
    let mut all_ok = true;
    for (idx, &t) in times.iter().enumerate() {
        let pa = &traj_a.states[idx];
        let pb = &traj_b.states[idx];
        let dist_l1: f64 = pa.iter().zip(pb).map(|(a, b)| (a - b).abs()).sum();
        let z: Vec<f64> = pa[1..].iter().zip(&pb[1..]).map(|(a, b)| a - b).collect();
        let dist_1d = norm_1d(&z, d);
        let dist_1e = norm_1e(&z);
        let (ia, ib, ic) = cum[idx];
        let upper_1d = (-ia).exp() * init_1d;
        let lower_chi = (-ic).exp() * init_1d;
        let upper_tv = 4.0 * upper_1d;
        let upper_1e = w_const.map(|w| 2.0 / w * upper_1d);
        let lower_beta =
            if sign_condition && truncated { Some((-ib).exp() * init_1d) } else { None };
        let mut ok = dist_1d <= upper_1d + slack
            && dist_1d + slack >= lower_chi
            && dist_l1 <= upper_tv + slack;
        if let Some(u) = upper_1e {
            ok &= dist_1e <= u + slack;
        }
        if let Some(l) = lower_beta {
            ok &= dist_1d + slack >= l;
        }
        all_ok &= ok;
        rows.push(ComparisonRow {
            t,
            dist_l1,
            dist_1d,
            dist_1e,
            upper_1d,
            lower_chi,
            upper_tv,
            upper_1e,
            lower_beta,
            ok,
        });
    }
    Ok(ComparisonTable { rows, all_ok, sign_condition, truncated_rates: truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QueueClass;
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
    fn characteristics_trivial() {
        assert_eq!(characteristics(&[1.0, 0.0, 0.0]), (1.0, 0.0));
        let mut e5 = vec![0.0; 8];
        e5[5] = 1.0;
        assert_eq!(characteristics(&e5), (0.0, 5.0));
        assert_eq!(characteristics(&[0.25; 4]), (0.25, 1.5));
    }

    #[test]
    fn zero_rates_are_identity() {
        let m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(0.0),
            TimeFunction::constant(0.0),
        );
        let p0 = vec![0.25, 0.25, 0.25, 0.25, 0.0, 0.0];
        let traj = solve(&m, 5, &p0, (0.0, 3.0), 1e-10).unwrap();
        for y in &traj.states {
            for (a, b) in y.iter().zip(&p0) {
                assert_relative_eq!(a, b);
            }
        }
    }

    #[test]
    fn mm1_reaches_geometric_stationary_law() {
        let n = 100;
        let traj = solve(&mm1(), n, &unit_vector(n, 0), (0.0, 10.0), 1e-10).unwrap();
        let p = traj.states.last().unwrap();
        let rho: f64 = 0.25;
        let tv: f64 = (0..=n)
            .map(|k| (p[k] - (1.0 - rho) * rho.powi(k as i32)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-6, "TV distance to geometric law = {tv}");
        // the trajectory respects the simplex all along (solve aborts
        // otherwise, so reaching this point already certifies it)
        assert!(traj.stats.steps_accepted > 0);
    }

    #[test]
    fn sampled_solve_matches_full_solve() {
        let n = 40;
        let m = ModelSpec::new(
            QueueClass::BatchArrival,
            3,
            TimeFunction::sinusoid(2.0, 2.0),
            TimeFunction::constant(3.0),
        );
        let full = solve(&m, n, &unit_vector(n, 0), (0.0, 2.0), 1e-10).unwrap();
        let sampled = solve_at(&m, n, &unit_vector(n, 0), 0.0, &[1.0, 2.0], 1e-10).unwrap();
        assert_relative_eq!(sampled.grid[1], 2.0);
        let end_full = full.states.last().unwrap();
        let end_sampled = sampled.states.last().unwrap();
        let diff: f64 =
            end_full.iter().zip(end_sampled).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff < 1e-9, "endpoint mismatch {diff}");
    }

    #[test]
    fn halving_tolerance_stays_within_budget() {
        let n = 60;
        let m = ModelSpec::paper_case(QueueClass::BatchService, 10.0);
        let coarse = solve_at(&m, n, &unit_vector(n, 0), 0.0, &[2.0], 1e-8).unwrap();
        let fine = solve_at(&m, n, &unit_vector(n, 0), 0.0, &[2.0], 1e-11).unwrap();
        let diff: f64 = coarse.states[0]
            .iter()
            .zip(&fine.states[0])
            .map(|(a, b)| (a - b).abs())
            .sum();
        // the coarse run promises local error <= 1e-8 per unit time over 2 units
        assert!(diff < 2.0 * 1e-8 * 10.0, "solution moved by {diff}");
    }

    #[test]
    fn convergence_envelope_mm1() {
        let n = 30;
        let d = DSequence::geometric(2.0).unwrap();
        let table = convergence_experiment(
            &mm1(),
            &d,
            n,
            &unit_vector(n, 5),
            &unit_vector(n, 0),
            (0.0, 3.0),
            20,
            1e-10,
        )
        .unwrap();
        assert!(table.truncated_rates);
        assert!(table.sign_condition);
        assert!(table.all_ok, "rows: {:?}", table.rows.iter().filter(|r| !r.ok).collect::<Vec<_>>());
        // t = 0 row: distances equal the initial norm, bounds collapse onto it
        let r0 = table.rows[0];
        assert_relative_eq!(r0.dist_1d, r0.upper_1d);
        assert_relative_eq!(r0.dist_1d, r0.lower_chi);
        assert!(r0.lower_beta.is_some());
    }

    #[test]
    fn identical_initials_stay_identical() {
        let n = 20;
        let d = DSequence::geometric(2.0).unwrap();
        let table = convergence_experiment(
            &mm1(),
            &d,
            n,
            &unit_vector(n, 3),
            &unit_vector(n, 3),
            (0.0, 2.0),
            10,
            1e-10,
        )
        .unwrap();
        assert!(table.all_ok);
        for r in &table.rows {
            assert!(r.dist_1d <= 1e-12 && r.dist_l1 <= 1e-12);
        }
    }

    #[test]
    fn limiting_regime_small_model() {
        // scaled-down periodic system: S = 5, modest load
        let m = ModelSpec::new(
            QueueClass::Bd,
            5,
            TimeFunction::sinusoid(2.0, 2.0),
            TimeFunction::cosinusoid(3.0, 1.0),
        );
        let lim = limiting_regime(&m, 16, 256, 1e-6, 3.0, 1e-10).unwrap();
        assert!(lim.truncation_error_estimate < 1e-6);
        assert_eq!(lim.grid.len(), lim.p0_curve.len());
        assert_eq!(lim.p0_curve.len(), lim.mean_curve.len());
        assert!(lim.p0_curve.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(lim.drift < 1e-5);
        // curve endpoints one period apart nearly agree in the limit regime
        let gap = (lim.p0_curve[0] - lim.p0_curve[lim.p0_curve.len() - 1]).abs();
        assert!(gap < 1e-4, "period mismatch {gap}");
    }

    #[test]
    fn truncation_cap_error() {
        let m = ModelSpec::paper_case(QueueClass::Bd, 50.0);
        assert!(matches!(
            limiting_regime(&m, 64, 100, 1e-12, 1.0, 1e-8),
            Err(Error::TruncationCap { cap: 100, .. })
        ));
    }
}
