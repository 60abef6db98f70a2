//! The four queue classes and their per-state / per-batch-size rates.
//!
//! All four models live on the state space `{0, 1, 2, ...}` counting
//! customers in the system:
//!
//! * class I  (`Bd`)           — birth-death: state-dependent arrival and
//!   service rates `lambda_n(t)`, `mu_n(t)`;
//! * class II (`BatchArrival`) — batch arrivals `lambda_k(t) = lambda(t)/(S k)`
//!   for `1 <= k <= S`, service `mu_n(t) = min(n,S) mu(t)`;
//! * class III (`BatchService`) — batch service `mu_k(t) = mu(t)/k` for
//!   `1 <= k <= S`, state-dependent single arrivals;
//! * class IV (`BatchBoth`)    — both batch rules at once.
//!
//! Rates for batch sizes above the server count `S` vanish.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timefn::TimeFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueClass {
    /// Class I: state-dependent birth-death.
    Bd,
    /// Class II: batch arrivals, state-dependent service.
    BatchArrival,
    /// Class III: batch service, state-dependent arrival.
    BatchService,
    /// Class IV: batch arrivals and batch service.
    BatchBoth,
}

impl QueueClass {
    pub fn batch_arrivals(self) -> bool {
        matches!(self, QueueClass::BatchArrival | QueueClass::BatchBoth)
    }

    pub fn batch_service(self) -> bool {
        matches!(self, QueueClass::BatchService | QueueClass::BatchBoth)
    }

    pub fn label(self) -> &'static str {
        match self {
            QueueClass::Bd => "I",
            QueueClass::BatchArrival => "II",
            QueueClass::BatchService => "III",
            QueueClass::BatchBoth => "IV",
        }
    }

    pub const ALL: [QueueClass; 4] = [
        QueueClass::Bd,
        QueueClass::BatchArrival,
        QueueClass::BatchService,
        QueueClass::BatchBoth,
    ];
}

/// State-dependent multiplier `m(n)` applied to a base intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRule {
    /// `m(n) = 1` for every state.
    One,
    /// `m(n) = min(n, S)` — the multiserver saturation rule.
    MinServers,
    /// Explicit table `m(n) = table[n]`; states beyond the table hold the
    /// last value.
    Table(Vec<f64>),
}

impl StateRule {
    pub fn multiplier(&self, n: usize, servers: u32) -> f64 {
        match self {
            StateRule::One => 1.0,
            StateRule::MinServers => n.min(servers as usize) as f64,
            StateRule::Table(t) => {
                if t.is_empty() {
                    1.0
                } else {
                    t[n.min(t.len() - 1)]
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let StateRule::Table(t) = self {
            if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config("state-rule table entries must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Per-state rules for the sides of the model that allow them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRules {
    #[serde(default = "default_lambda_rule")]
    pub lambda: StateRule,
    #[serde(default = "default_mu_rule")]
    pub mu: StateRule,
}

fn default_lambda_rule() -> StateRule {
    StateRule::One
}

fn default_mu_rule() -> StateRule {
    StateRule::MinServers
}

impl Default for StateRules {
    fn default() -> Self {
        StateRules { lambda: default_lambda_rule(), mu: default_mu_rule() }
    }
}

/// One of the four queue classes with its intensity functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub class: QueueClass,
    pub servers: u32,
    pub lambda: TimeFunction,
    pub mu: TimeFunction,
    /// Optional state dependence. The arrival rule applies to classes I and
    /// III (single arrivals), the service rule to classes I and II (single
    /// services); the batch sides of II-IV are fixed by the batch laws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_rules: Option<StateRules>,
}

impl ModelSpec {
    pub fn new(class: QueueClass, servers: u32, lambda: TimeFunction, mu: TimeFunction) -> Self {
        ModelSpec { class, servers, lambda, mu, state_rules: None }
    }

    /// The worked numerical setup: `S = 100`,
    /// `lambda(t) = level (1 + sin 2 pi t)`, `mu(t) = 3 + cos 2 pi t`.
    pub fn paper_case(class: QueueClass, level: f64) -> Self {
        ModelSpec::new(
            class,
            100,
            TimeFunction::sinusoid(level, level),
            TimeFunction::cosinusoid(3.0, 1.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.servers < 1 {
            return Err(Error::Config("server count must be >= 1".into()));
        }
        self.lambda.validate()?;
        self.mu.validate()?;
        if let Some(rules) = &self.state_rules {
            rules.lambda.validate()?;
            rules.mu.validate()?;
            if self.class.batch_arrivals() && rules.lambda != default_lambda_rule() {
                return Err(Error::Config(
                    "batch-arrival classes fix the arrival law 1/(S k); a lambda state rule is not allowed".into(),
                ));
            }
            if self.class.batch_service() && rules.mu != default_mu_rule() {
                return Err(Error::Config(
                    "batch-service classes fix the service law mu/k; a mu state rule is not allowed".into(),
                ));
            }
        }
        Ok(())
    }

    fn lambda_multiplier(&self, n: usize) -> f64 {
        match &self.state_rules {
            Some(r) => r.lambda.multiplier(n, self.servers),
            None => 1.0,
        }
    }

    fn mu_multiplier(&self, n: usize) -> f64 {
        match &self.state_rules {
            Some(r) => r.mu.multiplier(n, self.servers),
            None => StateRule::MinServers.multiplier(n, self.servers),
        }
    }

    /// Arrival rate at time `t`. `k` is a batch size (>= 1) for classes
    /// II/IV and the current state (>= 0) for classes I/III.
    pub fn eval_lambda(&self, k: usize, t: f64) -> Result<f64> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
        }
        if self.class.batch_arrivals() {
            if k == 0 {
                return Err(Error::Domain("batch size must be >= 1".into()));
            }
            if k > self.servers as usize {
                return Ok(0.0);
            }
            Ok(self.lambda.eval(t) / (self.servers as f64 * k as f64))
        } else {
            Ok(self.lambda.eval(t) * self.lambda_multiplier(k))
        }
    }

    /// Service rate at time `t`. `k` is a batch size for classes III/IV and
    /// the current state for classes I/II; `k = 0` yields 0 (nothing to
    /// serve in an empty system).
    pub fn eval_mu(&self, k: usize, t: f64) -> Result<f64> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
        }
        if k == 0 {
            return Ok(0.0);
        }
        if self.class.batch_service() {
            if k > self.servers as usize {
                return Ok(0.0);
            }
            Ok(self.mu.eval(t) / k as f64)
        } else {
            Ok(self.mu.eval(t) * self.mu_multiplier(k))
        }
    }

    /// True when every intensity is constant in time.
    pub fn is_homogeneous(&self) -> bool {
        self.lambda.is_constant() && self.mu.is_constant()
    }

    /// Freezes the base intensities at time `t`, so per-state and per-batch
    /// rates in inner loops cost a multiplication instead of a sinusoid
    /// evaluation.
    pub fn rates_at(&self, t: f64) -> Result<RatesAt<'_>> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
        }
        Ok(RatesAt { model: self, lam: self.lambda.eval(t), mu: self.mu.eval(t) })
    }

    /// Visits every transition out of `state` on the truncated space
    /// `{0..=n}` with its rate at time `t`. Arrivals that would overflow the
    /// truncation are deleted (the mass stays put).
    pub fn for_each_transition<F: FnMut(usize, f64)>(
        &self,
        state: usize,
        t: f64,
        n: usize,
        mut visit: F,
    ) -> Result<()> {
        let s = self.servers as usize;
        if self.class.batch_arrivals() {
            for k in 1..=s.min(n.saturating_sub(state)) {
                visit(state + k, self.eval_lambda(k, t)?);
            }
        } else if state < n {
            visit(state + 1, self.eval_lambda(state, t)?);
        }
        if self.class.batch_service() {
            for k in 1..=s.min(state) {
                visit(state - k, self.eval_mu(k, t)?);
            }
        } else if state >= 1 {
            visit(state - 1, self.eval_mu(state, t)?);
        }
        Ok(())
    }

    /// Total outflow rate from `state` at time `t` on `{0..=n}`.
    pub fn total_outflow(&self, state: usize, t: f64, n: usize) -> Result<f64> {
        let mut total = 0.0;
        self.for_each_transition(state, t, n, |_, r| total += r)?;
        Ok(total)
    }

    /// Conservative uniform bound `L` on the diagonal of the truncated
    /// generator: each transition rate is replaced by its supremum over one
    /// period before summing, then the per-state totals are maximized over
    /// `{0..=n}`. Dominates `|q_ii(t)|` for every `t`, so it bounds the
    /// stiffness of the Kolmogorov system and dominates the thinning rate.
    pub fn local_bound_l(&self, n: usize) -> Result<f64> {
        if n < 1 {
            return Err(Error::Domain("truncation size must be >= 1".into()));
        }
        let s = self.servers as usize;
        let lam_sup = self.lambda.sup_period();
        let mu_sup = self.mu.sup_period();
        let mut worst: f64 = 0.0;
        for state in 0..=n {
            let mut total = 0.0;
            if self.class.batch_arrivals() {
                for k in 1..=s.min(n - state) {
                    total += lam_sup / (s as f64 * k as f64);
                }
            } else if state < n {
                total += lam_sup * self.lambda_multiplier(state);
            }
            if self.class.batch_service() {
                for k in 1..=s.min(state) {
                    total += mu_sup / k as f64;
                }
            } else if state >= 1 {
                total += mu_sup * self.mu_multiplier(state);
            }
            worst = worst.max(total);
        }
        Ok(worst)
    }
}

/// Base intensities frozen at one time point; see [`ModelSpec::rates_at`].
#[derive(Debug, Clone, Copy)]
pub struct RatesAt<'a> {
    model: &'a ModelSpec,
    lam: f64,
    mu: f64,
}

impl RatesAt<'_> {
    /// Same indexing convention as [`ModelSpec::eval_lambda`]; a batch size
    /// of 0 yields 0 here instead of an error.
    pub fn lambda(&self, k: usize) -> f64 {
        if self.model.class.batch_arrivals() {
            if k < 1 || k > self.model.servers as usize {
                return 0.0;
            }
            self.lam / (self.model.servers as f64 * k as f64)
        } else {
            self.lam * self.model.lambda_multiplier(k)
        }
    }

    /// Same indexing convention as [`ModelSpec::eval_mu`].
    pub fn mu(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if self.model.class.batch_service() {
            if k > self.model.servers as usize {
                return 0.0;
            }
            self.mu / k as f64
        } else {
            self.mu * self.model.mu_multiplier(k)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn batch_model(class: QueueClass) -> ModelSpec {
        ModelSpec::paper_case(class, 50.0)
    }

    #[test]
    fn batch_arrival_rates() {
        let m = batch_model(QueueClass::BatchArrival);
        // lambda(0.25) = 100, k = 1 -> 100/(100*1)
        assert_relative_eq!(m.eval_lambda(1, 0.25).unwrap(), 1.0);
        // batch sizes above S vanish
        assert_eq!(m.eval_lambda(101, 0.0).unwrap(), 0.0);
        assert!(m.eval_lambda(0, 0.0).is_err());
    }

    #[test]
    fn bd_constant_rates() {
        let m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(1.0),
            TimeFunction::constant(2.0),
        );
        assert_relative_eq!(m.eval_lambda(7, 3.5).unwrap(), 1.0);
        assert!(m.eval_lambda(7, -1.0).is_err());
    }

    #[test]
    fn service_rates() {
        let m = batch_model(QueueClass::BatchArrival);
        // min(150, 100) * mu(0) = 100 * 4
        assert_relative_eq!(m.eval_mu(150, 0.0).unwrap(), 400.0);
        let m3 = batch_model(QueueClass::BatchService);
        assert_relative_eq!(m3.eval_mu(4, 0.0).unwrap(), 1.0);
        assert_eq!(m3.eval_mu(0, 0.0).unwrap(), 0.0);
        assert_eq!(m.eval_mu(0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn local_bound_simple_bd() {
        // lambda = 1, mu_n = min(n,1)*2, N = 5: interior outflow 3.
        let m = ModelSpec::new(
            QueueClass::Bd,
            1,
            TimeFunction::constant(1.0),
            TimeFunction::constant(2.0),
        );
        assert_relative_eq!(m.local_bound_l(5).unwrap(), 3.0);
    }

    #[test]
    fn local_bound_paper_case() {
        // sup lambda = 100 (sin peak) plus sup mu_n = 400 (cos peak), taken
        // separately: conservative bound 500.
        let m = ModelSpec::paper_case(QueueClass::Bd, 50.0);
        assert_relative_eq!(m.local_bound_l(155).unwrap(), 500.0);
    }

    #[test]
    fn local_bound_batch_both_by_summation() {
        let m = ModelSpec::new(
            QueueClass::BatchBoth,
            2,
            TimeFunction::constant(1.0),
            TimeFunction::constant(1.0),
        );
        // brute-force oracle: sum the batch rates state by state
        let n = 3;
        let mut expect: f64 = 0.0;
        for state in 0..=n {
            let mut total = 0.0;
            for k in 1..=2usize.min(n - state) {
                total += 1.0 / (2.0 * k as f64);
            }
            for k in 1..=2usize.min(state) {
                total += 1.0 / k as f64;
            }
            expect = expect.max(total);
        }
        assert_relative_eq!(m.local_bound_l(n).unwrap(), expect);
    }

    #[test]
    fn batch_arrival_total_intensity_matches_normalization() {
        let m = batch_model(QueueClass::BatchArrival);
        for t in [0.0, 0.13, 0.77] {
            let total: f64 = (1..=100).map(|k| m.eval_lambda(k, t).unwrap()).sum();
            let expect: f64 =
                m.lambda.eval(t) * (1..=100).map(|k| 1.0 / (100.0 * k as f64)).sum::<f64>();
            assert_relative_eq!(total, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn rates_nonnegative_everywhere() {
        for class in QueueClass::ALL {
            let m = ModelSpec::paper_case(class, 20.0);
            for k in 0..120 {
                for j in 0..7 {
                    let t = j as f64 / 7.0;
                    if k >= 1 || !class.batch_arrivals() {
                        assert!(m.eval_lambda(k.max(1), t).unwrap() >= 0.0);
                    }
                    assert!(m.eval_mu(k, t).unwrap() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn frozen_rates_match_eval() {
        for class in QueueClass::ALL {
            let m = ModelSpec::paper_case(class, 30.0);
            let r = m.rates_at(0.37).unwrap();
            for k in 1..=110usize {
                assert_relative_eq!(r.lambda(k), m.eval_lambda(k, 0.37).unwrap());
                assert_relative_eq!(r.mu(k), m.eval_mu(k, 0.37).unwrap());
            }
        }
    }

    #[test]
    fn state_rule_validation() {
        let mut m = ModelSpec::paper_case(QueueClass::BatchArrival, 10.0);
        m.state_rules =
            Some(StateRules { lambda: StateRule::Table(vec![1.0, 2.0]), mu: StateRule::MinServers });
        assert!(m.validate().is_err());
        let mut m = ModelSpec::paper_case(QueueClass::Bd, 10.0);
        m.state_rules =
            Some(StateRules { lambda: StateRule::Table(vec![1.0, 2.0]), mu: StateRule::MinServers });
        assert!(m.validate().is_ok());
    }
}
