//! Monte-Carlo oracle: exact path sampling of the truncated chain by
//! thinning against a dominating rate.
//!
//! Candidate events arrive at the constant rate `L_dom >= sup_t q(x, t)`
//! for every reachable `x`; at a candidate time the specific transition
//! `x -> y` is accepted with probability `q_{xy}(t) / L_dom`, otherwise
//! the path self-loops. No time discretization is involved, so the
//! sampled law is exact for the truncated chain and serves as an
//! independent check of the Kolmogorov solver.
//!
//! Randomness is counter-based: one base seed, one stream per path, so
//! results are bit-for-bit reproducible and paths could be drawn in any
//! order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kolmogorov::Trajectory;
use crate::model::ModelSpec;

use std::io::Write;

/// Safety margin on top of the grid-sup dominating rate.
const DOMINATOR_MARGIN: f64 = 1.05;
/// z-score threshold against the ODE solution; slightly raised when many
/// grid points multiply the comparisons.
const Z_THRESHOLD: f64 = 3.0;
const Z_THRESHOLD_MANY: f64 = 3.5;
const MANY_GRID_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Initial state `X(0)`.
    pub x0: usize,
    /// Times at which the path state is recorded; strictly increasing.
    pub sample_grid: Vec<f64>,
    /// Truncation: the paths live on `{0..=n}`.
    pub n: usize,
}

/// Per-time state histograms over all paths, plus transition tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub grid: Vec<f64>,
    /// `histograms[ti][k]` = number of paths in state `k` at `grid[ti]`.
    pub histograms: Vec<Vec<u64>>,
    pub n_paths: usize,
    pub n: usize,
    /// `transition_counts[x][y]` = accepted jumps `x -> y` over all paths.
    pub transition_counts: Vec<Vec<u64>>,
}

impl EmpiricalDistribution {
    /// `p_hat_k` at grid index `ti`.
    pub fn p_hat(&self, ti: usize, k: usize) -> f64 {
        self.histograms[ti][k] as f64 / self.n_paths as f64
    }

    /// `(estimate, standard error)` for `p_0` at grid index `ti`.
    pub fn p0_with_se(&self, ti: usize) -> (f64, f64) {
        let p = self.p_hat(ti, 0);
        (p, (p * (1.0 - p) / self.n_paths as f64).sqrt())
    }

    /// `(estimate, standard error)` for the mean state at grid index `ti`.
    pub fn mean_with_se(&self, ti: usize) -> (f64, f64) {
        let inv = 1.0 / self.n_paths as f64;
        let mut mean = 0.0;
        let mut second = 0.0;
        for (k, c) in self.histograms[ti].iter().enumerate() {
            let w = *c as f64 * inv;
            mean += k as f64 * w;
            second += (k as f64) * (k as f64) * w;
        }
        let var = (second - mean * mean).max(0.0);
        (mean, (var / self.n_paths as f64).sqrt())
    }

    /// CSV rows `(t, state, count, p_hat, se)`; zero-count states are
    /// skipped.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,state,count,p_hat,se")?;
        for (ti, t) in self.grid.iter().enumerate() {
            for (k, c) in self.histograms[ti].iter().enumerate() {
                if *c == 0 {
                    continue;
                }
                let p = self.p_hat(ti, k);
                let se = (p * (1.0 - p) / self.n_paths as f64).sqrt();
                writeln!(out, "{t:.17e},{k},{c},{p:.17e},{se:.17e}")?;
            }
        }
        Ok(())
    }
}

/// Prefix sums of the harmonic series: `h[m] = 1 + 1/2 + ... + 1/m`.
/// Both batch laws are `base / k`, so their total over `k <= m` is
/// `base * h[m]`.
fn harmonic_prefix(s: usize) -> Vec<f64> {
    let mut h = vec![0.0; s + 1];
    for k in 1..=s {
        h[k] = h[k - 1] + 1.0 / k as f64;
    }
    h
}

pub fn simulate(model: &ModelSpec, cfg: &SimConfig) -> Result<EmpiricalDistribution> {
    model.validate()?;
    if cfg.n_paths < 1 {
        return Err(Error::Config("need at least one path".into()));
    }
    if cfg.sample_grid.is_empty() || cfg.sample_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("sample grid must be nonempty and strictly increasing".into()));
    }
    if cfg.sample_grid[0] < 0.0 {
        return Err(Error::Config("sample times must be >= 0".into()));
    }
    if cfg.x0 > cfg.n {
        return Err(Error::Config(format!("x0 = {} outside truncation {}", cfg.x0, cfg.n)));
    }
    let n = cfg.n;
    let s = model.servers as usize;
    let l_dom = DOMINATOR_MARGIN * model.local_bound_l(n)?;
    let horizon = *cfg.sample_grid.last().unwrap();
    let h = harmonic_prefix(s);
    let batch_arr = model.class.batch_arrivals();
    let batch_srv = model.class.batch_service();

    let mut histograms = vec![vec![0u64; n + 1]; cfg.sample_grid.len()];
    let mut transitions = vec![vec![0u64; n + 1]; n + 1];
    for path in 0..cfg.n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        let mut t = 0.0f64;
        let mut x = cfg.x0;
        let mut next_sample = 0usize;
        loop {
            let t_next = if l_dom > 0.0 {
                t - (1.0 - rng.random::<f64>()).ln() / l_dom
            } else {
                f64::INFINITY
            };
            while next_sample < cfg.sample_grid.len() && cfg.sample_grid[next_sample] <= t_next {
                histograms[next_sample][x] += 1;
                next_sample += 1;
            }
            if next_sample >= cfg.sample_grid.len() || t_next > horizon {
                break;
            }
            t = t_next;
            let r = model.rates_at(t)?;
            let arr_total = if batch_arr {
                r.lambda(1) * h[s.min(n - x)]
            } else if x < n {
                r.lambda(x)
            } else {
                0.0
            };
            let srv_total = if batch_srv { r.mu(1) * h[s.min(x)] } else { r.mu(x) };
            let total = arr_total + srv_total;
            if total > l_dom {
                return Err(Error::DominatorUnderestimate { total, dominator: l_dom, t });
            }
            let u = rng.random::<f64>() * l_dom;
            let y = if u < arr_total {
                if batch_arr {
                    // batch size k with rate lambda(1)/k, walked cumulatively
                    let mut acc = 0.0;
                    let mut k = 1;
                    let cap = s.min(n - x);
                    while k < cap {
                        acc += r.lambda(1) / k as f64;
                        if u < acc {
                            break;
                        }
                        k += 1;
                    }
                    x + k
                } else {
                    x + 1
                }
            } else if u < total {
                if batch_srv {
                    let v = u - arr_total;
                    let mut acc = 0.0;
                    let mut k = 1;
                    let cap = s.min(x);
                    while k < cap {
                        acc += r.mu(1) / k as f64;
                        if v < acc {
                            break;
                        }
                        k += 1;
                    }
                    x - k
                } else {
                    x - 1
                }
            } else {
                x // thinned: self-loop
            };
            if y != x {
                transitions[x][y] += 1;
                x = y;
            }
        }
    }
    Ok(EmpiricalDistribution {
        grid: cfg.sample_grid.clone(),
        histograms,
        n_paths: cfg.n_paths,
        n,
        transition_counts: transitions,
    })
}

/// One grid time of an ODE / Monte-Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub t: f64,
    /// Total-variation distance between empirical and ODE distributions.
    pub tv: f64,
    pub z_p0: f64,
    pub z_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub threshold: f64,
    pub pass: bool,
}

/// z-scores of the empirical `p_0` and mean against the ODE trajectory at
/// the shared grid times.
pub fn compare_to_ode(emp: &EmpiricalDistribution, traj: &Trajectory) -> Result<CompareReport> {
    if emp.grid.len() != traj.grid.len()
        || emp.grid.iter().zip(&traj.grid).any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::Usage("empirical and ODE grids do not match".into()));
    }
    if emp.n != traj.n {
        return Err(Error::Usage("empirical and ODE truncations do not match".into()));
    }
    let threshold =
        if emp.grid.len() > MANY_GRID_POINTS { Z_THRESHOLD_MANY } else { Z_THRESHOLD };
    let mut rows = Vec::with_capacity(emp.grid.len());
    let mut pass = true;
    for (ti, &t) in emp.grid.iter().enumerate() {
        let p = &traj.states[ti];
        let tv: f64 =
            (0..=emp.n).map(|k| (emp.p_hat(ti, k) - p[k]).abs()).sum::<f64>() / 2.0;
        let (p0_hat, p0_se) = emp.p0_with_se(ti);
        let (mean_hat, mean_se) = emp.mean_with_se(ti);
        let (p0, mean) = crate::kolmogorov::characteristics(p);
        let z = |diff: f64, se: f64| {
            if diff == 0.0 {
                0.0
            } else {
                diff.abs() / se.max(1e-300)
            }
        };
        let row = CompareRow {
            t,
            tv,
            z_p0: z(p0_hat - p0, p0_se),
            z_mean: z(mean_hat - mean, mean_se),
        };
        pass &= row.z_p0 < threshold && row.z_mean < threshold;
        rows.push(row);
    }
    Ok(CompareReport { rows, threshold, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmogorov::{solve_at, unit_vector};
    use crate::model::{QueueClass, StateRule, StateRules};
    use crate::timefn::TimeFunction;

    fn pure_birth(rate: f64) -> ModelSpec {
        let mut m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(rate),
            TimeFunction::constant(0.0),
        );
        m.state_rules = Some(StateRules { lambda: StateRule::One, mu: StateRule::One });
        m
    }

    #[test]
    fn deterministic_given_seed() {
        let m = ModelSpec::paper_case(QueueClass::BatchService, 5.0);
        let cfg = SimConfig {
            n_paths: 50,
            seed: 42,
            x0: 0,
            sample_grid: vec![0.5, 1.0],
            n: 60,
        };
        let a = simulate(&m, &cfg).unwrap();
        let b = simulate(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let cfg2 = SimConfig { seed: 43, ..cfg };
        assert_ne!(simulate(&m, &cfg2).unwrap(), a);
    }

    #[test]
    fn zero_rates_freeze_paths() {
        let m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(0.0),
            TimeFunction::constant(0.0),
        );
        let cfg = SimConfig {
            n_paths: 20,
            seed: 7,
            x0: 3,
            sample_grid: vec![1.0, 5.0],
            n: 10,
        };
        let emp = simulate(&m, &cfg).unwrap();
        for ti in 0..2 {
            assert_eq!(emp.histograms[ti][3], 20);
        }
    }

    #[test]
    fn poisson_mean_and_idle_probability() {
        let cfg = SimConfig {
            n_paths: 100_000,
            seed: 1,
            x0: 0,
            sample_grid: vec![1.0],
            n: 40,
        };
        let emp = simulate(&pure_birth(2.0), &cfg).unwrap();
        let (mean, se) = emp.mean_with_se(0);
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
        let (p0, p0_se) = emp.p0_with_se(0);
        let expect = (-2.0f64).exp();
        assert!((p0 - expect).abs() < 3.0 * p0_se.max(1e-4), "p0 {p0} expect {expect}");
    }

    #[test]
    fn three_state_transition_frequencies() {
        // constant birth-death on {0,1,2}: lambda = 1, mu = 2, stationary
        // pi ~ (1, 1/2, 1/4) / 1.75
        let mut m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(1.0),
            TimeFunction::constant(2.0),
        );
        m.state_rules = Some(StateRules { lambda: StateRule::One, mu: StateRule::One });
        let cfg = SimConfig {
            n_paths: 400,
            seed: 9,
            x0: 0,
            sample_grid: vec![400.0],
            n: 2,
        };
        let emp = simulate(&m, &cfg).unwrap();
        let total: u64 = emp.transition_counts.iter().flatten().sum();
        assert!(total > 200_000, "only {total} transitions");
        // long-run flow rates: up-jumps from k at pi_k * lambda, down at
        // pi_k * mu
        let pi = [1.0 / 1.75, 0.5 / 1.75, 0.25 / 1.75];
        let flows = [
            (0usize, 1usize, pi[0] * 1.0),
            (1, 2, pi[1] * 1.0),
            (1, 0, pi[1] * 2.0),
            (2, 1, pi[2] * 2.0),
        ];
        let flow_total: f64 = flows.iter().map(|f| f.2).sum();
        for (x, y, flow) in flows {
            let observed = emp.transition_counts[x][y] as f64 / total as f64;
            let expect = flow / flow_total;
            let se = (expect * (1.0 - expect) / total as f64).sqrt();
            assert!(
                (observed - expect).abs() < 4.0 * se.max(1e-3),
                "flow {x}->{y}: observed {observed} expect {expect}"
            );
        }
    }

    #[test]
    fn batch_sizes_follow_inverse_k_law() {
        let m = ModelSpec::new(
            QueueClass::BatchArrival,
            4,
            TimeFunction::constant(8.0),
            TimeFunction::constant(1.0),
        );
        let cfg = SimConfig {
            n_paths: 2000,
            seed: 3,
            x0: 0,
            sample_grid: vec![30.0],
            n: 200,
        };
        let emp = simulate(&m, &cfg).unwrap();
        // arrivals x -> x + k, truncation-safe region only
        let mut counts = [0f64; 4];
        for x in 0..=150usize {
            for k in 1..=4usize {
                counts[k - 1] += emp.transition_counts[x][x + k] as f64;
            }
        }
        let total: f64 = counts.iter().sum();
        assert!(total > 50_000.0);
        let weight: f64 = (1..=4).map(|k| 1.0 / k as f64).sum();
        let mut chi2 = 0.0;
        for k in 1..=4usize {
            let expect = total * (1.0 / k as f64) / weight;
            chi2 += (counts[k - 1] - expect).powi(2) / expect;
        }
        // chi-square, 3 degrees of freedom, 1% critical value
        assert!(chi2 < 11.34, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn matches_ode_and_detects_faults() {
        let m = ModelSpec::new(
            QueueClass::Bd,
            3,
            TimeFunction::sinusoid(2.0, 2.0),
            TimeFunction::constant(2.0),
        );
        let n = 40;
        let grid = vec![1.0, 2.0];
        let cfg = SimConfig { n_paths: 20_000, seed: 11, x0: 0, sample_grid: grid.clone(), n };
        let emp = simulate(&m, &cfg).unwrap();
        let traj = solve_at(&m, n, &unit_vector(n, 0), 0.0, &grid, 1e-10).unwrap();
        let report = compare_to_ode(&emp, &traj).unwrap();
        assert!(report.pass, "rows: {:?}", report.rows);

        // wrong service intensity: the comparison must flag it
        let mut wrong = m.clone();
        wrong.mu = TimeFunction::constant(3.0);
        let bad = solve_at(&wrong, n, &unit_vector(n, 0), 0.0, &grid, 1e-10).unwrap();
        let report = compare_to_ode(&emp, &bad).unwrap();
        assert!(!report.pass, "fault not detected: {:?}", report.rows);

        // identical inputs: exact zeros
        let self_traj = Trajectory {
            grid: grid.clone(),
            states: (0..grid.len())
                .map(|ti| (0..=n).map(|k| emp.p_hat(ti, k)).collect())
                .collect(),
            n,
            stats: Default::default(),
        };
        let report = compare_to_ode(&emp, &self_traj).unwrap();
        assert!(report.pass);
        for row in &report.rows {
            assert_eq!(row.z_p0, 0.0);
            assert_eq!(row.z_mean, 0.0);
            assert_eq!(row.tv, 0.0);
        }

        // mismatched grids are a usage error
        let short = Trajectory {
            grid: vec![1.0],
            states: vec![vec![0.0; n + 1]],
            n,
            stats: Default::default(),
        };
        assert!(matches!(compare_to_ode(&emp, &short), Err(Error::Usage(_))));
    }
}
