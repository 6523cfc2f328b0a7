//! The explicit parameter schedule `(T, S, h, N)` under which In-and-Out
//! reaches Rényi error `ε` with probability at least `1 - ε`, and the
//! inequalities that schedule has to satisfy.
//!
//! All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest iteration count the planner will hand out.
pub const MAX_STEPS: f64 = 2_147_483_648.0;

/// Hypotheses of the complexity guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    /// Rényi order, `q >= 2`.
    pub q: f64,
    /// Target Rényi error in `(0, 1/2)`.
    pub eps: f64,
    /// Warmness of the initial distribution.
    #[serde(rename = "M")]
    pub warmness: f64,
    /// Poincaré constant of the uniform law on the body.
    #[serde(rename = "C_PI")]
    pub c_pi: f64,
    pub alpha: f64,
    /// Growth rate as supplied; values below `1/n` are raised to `1/n` when planning.
    pub beta: f64,
    pub n: u32,
}

impl PlanInputs {
    pub fn new(q: f64, eps: f64, warmness: f64, c_pi: f64, alpha: f64, beta: f64, n: u32) -> Result<Self> {
        let inputs = Self { q, eps, warmness, c_pi, alpha, beta, n };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.q, self.eps, self.warmness, self.c_pi, self.alpha, self.beta];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("plan inputs must be finite"));
        }
        if !(self.q >= 2.0) {
            return Err(invalid(format!("q must be >= 2, got {}", self.q)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(invalid(format!("eps must lie in (0, 1/2), got {}", self.eps)));
        }
        if !(self.warmness >= 1.0) {
            return Err(invalid(format!("M must be >= 1, got {}", self.warmness)));
        }
        if !(self.c_pi >= 1.0) {
            return Err(invalid(format!("C_PI must be >= 1, got {}", self.c_pi)));
        }
        if !(self.alpha >= 1.0) {
            return Err(invalid(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) {
            return Err(invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.n < 2 {
            return Err(invalid(format!("n must be >= 2, got {}", self.n)));
        }
        Ok(())
    }

    /// `max(β, 1/n)`.
    pub fn effective_beta(&self) -> f64 {
        self.beta.max(1.0 / self.n as f64)
    }
}

/// A fully evaluated parameter schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub eps_prime: f64,
    pub eta: f64,
    /// `4 q C_PI β² n² (n + log(3(n+1)αM/η)) log(M/ε')`.
    pub z: f64,
    /// `2 z log z` before rounding.
    #[serde(rename = "T_real")]
    pub steps_unrounded: f64,
    #[serde(rename = "T")]
    pub steps: u64,
    #[serde(rename = "S")]
    pub s: f64,
    pub h: f64,
    /// Per-iteration attempt threshold.
    #[serde(rename = "N")]
    pub threshold: u64,
    #[serde(rename = "T0")]
    pub t0: u64,
    #[serde(rename = "T_tilde")]
    pub t_tilde: f64,
}

/// `(1 + h/C_PI)` in log form, the per-step contraction rate.
fn contraction_log(h: f64, c_pi: f64) -> f64 {
    (h / c_pi).ln_1p()
}

/// `z` from which the iteration count `T = 2 z log z` is built.
pub fn iteration_helper_z(inputs: &PlanInputs) -> f64 {
    let n = inputs.n as f64;
    let beta = inputs.effective_beta();
    let eps_prime = inputs.eps / 2.0;
    let eta = inputs.eps / 8.0;
    let inner = n + (3.0 * (n + 1.0) * inputs.alpha * inputs.warmness / eta).ln();
    4.0 * inputs.q * inputs.c_pi * beta * beta * n * n * inner * (inputs.warmness / eps_prime).ln()
}

/// Step size `1 / (2β²n³(1 + log((n+1)αS)/n))`.
pub fn step_size(inputs: &PlanInputs, s: f64) -> f64 {
    let n = inputs.n as f64;
    let beta = inputs.effective_beta();
    1.0 / (2.0 * beta * beta * n * n * n * (1.0 + ((n + 1.0) * inputs.alpha * s).ln() / n))
}

/// Evaluate the full schedule. `T` is rounded up and `S` recomputed from the
/// rounded `T`; `N` is rounded up.
pub fn plan(inputs: &PlanInputs) -> Result<Plan> {
    inputs.validate()?;
    let eps_prime = inputs.eps / 2.0;
    let eta = inputs.eps / 8.0;
    let z = iteration_helper_z(inputs);
    let steps_unrounded = 2.0 * z * z.ln();
    if !(steps_unrounded <= MAX_STEPS) {
        return Err(Error::DeskScaleExceeded { steps: steps_unrounded });
    }
    let steps = steps_unrounded.ceil() as u64;
    let s = 3.0 * steps as f64 * inputs.warmness / eta;
    let h = step_size(inputs, s);
    let threshold = (8.0 * inputs.alpha * s * s.ln()).ceil();
    if !(threshold < u64::MAX as f64) {
        return Err(Error::DeskScaleExceeded { steps: steps_unrounded });
    }
    let rate = contraction_log(h, inputs.c_pi);
    // The initial divergence is bounded by log M.
    let t0 = (inputs.q * (inputs.warmness.ln() - 1.0) / (2.0 * rate)).ceil().max(0.0) as u64;
    let t_tilde = t0 as f64 + inputs.q * (1.0 / eps_prime).ln() / rate;
    Ok(Plan { eps_prime, eta, z, steps_unrounded, steps, s, h, threshold: threshold as u64, t0, t_tilde })
}

/// `64 M α z (log(6Mz/η))²`, the bound on the expected total number of
/// membership queries over all planned iterations.
pub fn expected_trials_bound(inputs: &PlanInputs, plan: &Plan) -> f64 {
    let m = inputs.warmness;
    let l = (6.0 * m * plan.z / plan.eta).ln();
    64.0 * m * inputs.alpha * plan.z * l * l
}

/// For `z >= 2`, `y >= 2 z log z` should imply `y / log y >= z`. Returns
/// `None` when the premise does not hold and the conclusion otherwise.
pub fn log_bound_implication(z: f64, y: f64) -> Option<bool> {
    if z >= 2.0 && y >= 2.0 * z * z.ln() {
        Some(y / y.ln() >= z)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    fn require(&mut self, ok: bool, check: &str, detail: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(Violation { check: check.to_string(), detail: detail() });
        }
    }
}

/// Re-verify the inequalities every planned schedule must satisfy.
pub fn check_plan_consistency(plan: &Plan, inputs: &PlanInputs) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let n = inputs.n as f64;
    let beta = inputs.effective_beta();
    let steps = plan.steps as f64;

    report.require(plan.s >= 3.0, "S >= 3", || format!("S = {}", plan.s));
    report.require(plan.h <= 1.0 / (2.0 * n), "h <= 1/(2n)", || format!("h = {}, 1/(2n) = {}", plan.h, 1.0 / (2.0 * n)));

    let rhs = 2.0 * inputs.q * inputs.c_pi / plan.h * (inputs.warmness / plan.eps_prime).ln();
    report.require(steps >= rhs, "T >= 2 q C_PI log(M/eps') / h", || format!("T = {steps}, rhs = {rhs}"));
    report.require(steps >= plan.t_tilde, "T >= T_tilde", || format!("T = {steps}, T_tilde = {}", plan.t_tilde));

    let s_expected = 3.0 * steps * inputs.warmness / plan.eta;
    report.require(plan.s == s_expected, "S = 3TM/eta", || format!("S = {}, 3TM/eta = {s_expected}", plan.s));

    let h_cap = 1.0 / (2.0 * beta * beta * n * n * n * 1f64.max(((n + 1.0) * inputs.alpha * plan.s).ln() / n));
    report.require(plan.h <= h_cap, "h within success bound", || format!("h = {}, cap = {h_cap}", plan.h));

    let n_needed = 8.0 * inputs.alpha * plan.s * plan.s.ln();
    report.require(plan.threshold as f64 >= n_needed, "N >= 8 alpha S log S", || {
        format!("N = {}, 8 alpha S log S = {n_needed}", plan.threshold)
    });

    match log_bound_implication(plan.z, steps) {
        Some(true) => {}
        Some(false) => report.require(false, "T / log T >= z", || format!("T = {steps}, z = {}", plan.z)),
        None => report.require(false, "z >= 2 and T >= 2 z log z", || format!("T = {steps}, z = {}", plan.z)),
    }
    report
}

/// `(1 + h/C_PI)^{-(T - T0)/q} + 4η`, the Rényi error of a successful run.
pub fn renyi_error_bound(plan: &Plan, inputs: &PlanInputs, eta_actual: f64) -> Result<f64> {
    if plan.steps < plan.t0 {
        return Err(invalid(format!("T = {} is below T0 = {}", plan.steps, plan.t0)));
    }
    if !(0.0..=0.5).contains(&eta_actual) {
        return Err(invalid(format!("eta must lie in [0, 1/2], got {eta_actual}")));
    }
    let rate = contraction_log(plan.h, inputs.c_pi);
    let exponent = -((plan.steps - plan.t0) as f64) / inputs.q;
    Ok((exponent * rate).exp() + 4.0 * eta_actual)
}
