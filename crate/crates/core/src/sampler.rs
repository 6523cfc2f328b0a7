//! The In-and-Out chain and its untruncated form, the Proximal Sampler.
//!
//! One iteration moves `x ∈ X` out to `y = x + √h Z` and then back in by
//! rejection: Gaussian proposals around `y` are drawn until one lands in `X`.
//! In-and-Out gives up after `N` proposals; the Proximal Sampler never does
//! (here it only has a safety cap).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{Body, DEFAULT_REJECTION_TRIES};
use crate::error::{invalid, Result};
use crate::planner::Plan;
use crate::rng::{chain_rng, chain_seed, start_rng};

/// The three numbers a chain needs: iterations, step size, attempt threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub steps: u64,
    pub h: f64,
    pub threshold: u64,
}

impl ChainParams {
    pub fn new(steps: u64, h: f64, threshold: u64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid(format!("step size must be positive, got {h}")));
        }
        if threshold == 0 {
            return Err(invalid("attempt threshold must be >= 1"));
        }
        Ok(Self { steps, h, threshold })
    }

    /// Same schedule with at most `max_steps` iterations.
    pub fn truncated(self, max_steps: u64) -> Self {
        Self { steps: self.steps.min(max_steps), ..self }
    }
}

impl From<&Plan> for ChainParams {
    fn from(plan: &Plan) -> Self {
        Self { steps: plan.steps, h: plan.h, threshold: plan.threshold }
    }
}

fn gaussian_around<R: Rng + ?Sized>(center: &[f64], sqrt_h: f64, rng: &mut R, out: &mut [f64]) {
    for (o, c) in out.iter_mut().zip(center) {
        let z: f64 = rng.sample(StandardNormal);
        *o = c + sqrt_h * z;
    }
}

/// `y ~ N(x, h I)`.
pub fn forward_step<R: Rng + ?Sized>(x: &[f64], h: f64, rng: &mut R) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    gaussian_around(x, h.sqrt(), rng, &mut y);
    y
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackwardOutcome {
    Accepted { x: Vec<f64>, attempts: u64 },
    /// All `threshold` proposals missed the body.
    Exhausted { attempts: u64 },
}

fn backward_into<R: Rng + ?Sized>(y: &[f64], sqrt_h: f64, threshold: u64, body: &Body, rng: &mut R, out: &mut [f64]) -> Option<u64> {
    for attempt in 1..=threshold {
        gaussian_around(y, sqrt_h, rng, out);
        if body.contains(out) {
            return Some(attempt);
        }
    }
    None
}

/// Rejection-sample `N(y, h I)` restricted to the body, with at most
/// `threshold` proposals.
pub fn backward_step<R: Rng + ?Sized>(y: &[f64], h: f64, threshold: u64, body: &Body, rng: &mut R) -> BackwardOutcome {
    let mut x = vec![0.0; y.len()];
    match backward_into(y, h.sqrt(), threshold, body, rng, &mut x) {
        Some(attempts) => BackwardOutcome::Accepted { x, attempts },
        None => BackwardOutcome::Exhausted { attempts: threshold },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success { x: Vec<f64> },
    /// The backward step of iteration `iteration` exhausted its attempts.
    Failure { iteration: u64, y: Vec<f64> },
    /// Safety cap of the Proximal Sampler hit at iteration `iteration`.
    CapExceeded { iteration: u64, y: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcome: Outcome,
    /// Attempts used by each iteration. The last entry of a failed run is the
    /// exhausted threshold.
    pub trials_per_iteration: Vec<u64>,
    pub total_trials: u64,
    pub seed: u64,
}

impl RunResult {
    pub fn is_success(&self) -> bool {
        matches!(self.outcome, Outcome::Success { .. })
    }

    pub fn final_point(&self) -> Option<&[f64]> {
        match &self.outcome {
            Outcome::Success { x } => Some(x),
            _ => None,
        }
    }

    /// Iteration at which the run stopped early, if it did.
    pub fn failed_at(&self) -> Option<u64> {
        match &self.outcome {
            Outcome::Success { .. } => None,
            Outcome::Failure { iteration, .. } | Outcome::CapExceeded { iteration, .. } => Some(*iteration),
        }
    }
}

/// One accepted iteration, as written to trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub x: Vec<f64>,
    pub attempts: u64,
}

fn check_start(body: &Body, x0: &[f64]) -> Result<()> {
    if x0.len() != body.dim() {
        return Err(invalid(format!("start point has dimension {}, body has {}", x0.len(), body.dim())));
    }
    if !body.contains(x0) {
        return Err(invalid("start point is outside the body"));
    }
    Ok(())
}

fn run_chain(
    body: &Body,
    x0: &[f64],
    params: &ChainParams,
    seed: u64,
    capped: bool,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> RunResult {
    let mut rng: ChaCha8Rng = chain_rng(seed);
    let sqrt_h = params.h.sqrt();
    let mut x = x0.to_vec();
    let mut y = vec![0.0; x.len()];
    let mut trials = Vec::with_capacity(params.steps.min(1 << 20) as usize);
    let mut total = 0u64;
    for iteration in 0..params.steps {
        gaussian_around(&x, sqrt_h, &mut rng, &mut y);
        match backward_into(&y, sqrt_h, params.threshold, body, &mut rng, &mut x) {
            Some(attempts) => {
                trials.push(attempts);
                total += attempts;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceRecord { iteration, x: x.clone(), attempts });
                }
            }
            None => {
                trials.push(params.threshold);
                total += params.threshold;
                let outcome = if capped {
                    Outcome::CapExceeded { iteration, y }
                } else {
                    Outcome::Failure { iteration, y }
                };
                return RunResult { outcome, trials_per_iteration: trials, total_trials: total, seed };
            }
        }
    }
    RunResult { outcome: Outcome::Success { x }, trials_per_iteration: trials, total_trials: total, seed }
}

/// Run In-and-Out for `params.steps` iterations from `x0`.
pub fn run_in_and_out(body: &Body, x0: &[f64], params: &ChainParams, seed: u64) -> Result<RunResult> {
    check_start(body, x0)?;
    Ok(run_chain(body, x0, params, seed, false, None))
}

/// [`run_in_and_out`] that also returns every accepted iterate.
pub fn run_in_and_out_traced(body: &Body, x0: &[f64], params: &ChainParams, seed: u64) -> Result<(RunResult, Vec<TraceRecord>)> {
    check_start(body, x0)?;
    let mut trace = Vec::new();
    let result = run_chain(body, x0, params, seed, false, Some(&mut trace));
    Ok((result, trace))
}

/// The Proximal Sampler: In-and-Out without a threshold. `attempt_cap` is a
/// safety valve; hitting it yields [`Outcome::CapExceeded`].
pub fn run_proximal_ideal(body: &Body, x0: &[f64], h: f64, steps: u64, seed: u64, attempt_cap: u64) -> Result<RunResult> {
    check_start(body, x0)?;
    let params = ChainParams::new(steps, h, attempt_cap)?;
    Ok(run_chain(body, x0, &params, seed, true, None))
}

/// Source of chain starting points.
pub trait WarmStart: Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;

    /// Certified warmness `M` of the start distribution.
    fn warmness(&self) -> f64;
}

/// Exact uniform starts by bbox rejection (`M = 1`).
pub struct UniformStart<'a> {
    pub body: &'a Body,
}

impl WarmStart for UniformStart<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.body.sample_uniform(rng, DEFAULT_REJECTION_TRIES)
    }

    fn warmness(&self) -> f64 {
        1.0
    }
}

/// Every chain starts at the same point; no warmness is certified.
pub struct FixedStart(pub Vec<f64>);

impl WarmStart for FixedStart {
    fn draw(&self, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }

    fn warmness(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_chains: u64,
    pub failures: u64,
    pub failure_fraction: f64,
    pub mean_total_trials: f64,
    pub max_total_trials: u64,
    pub steps: u64,
    /// `(iteration, count)` of failures, sorted by iteration.
    pub failures_by_iteration: Vec<(u64, u64)>,
}

/// Trend of the per-iteration failure rate over equal-width iteration bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTrend {
    pub bins: Vec<TrendBin>,
    /// Weighted least-squares slope of failure rate against bin index.
    pub slope: f64,
    pub slope_std_error: f64,
    /// One-sided 95% test of `slope > 0` is not significant.
    pub non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBin {
    pub first_iteration: u64,
    /// Chain-iterations attempted in the bin.
    pub exposure: u64,
    pub failures: u64,
}

impl EnsembleSummary {
    fn from_runs(runs: &[RunResult], steps: u64) -> Self {
        let n = runs.len() as u64;
        let mut by_iter = std::collections::BTreeMap::new();
        for r in runs {
            if let Some(k) = r.failed_at() {
                *by_iter.entry(k).or_insert(0u64) += 1;
            }
        }
        let failures = by_iter.values().sum::<u64>();
        let total: u128 = runs.iter().map(|r| r.total_trials as u128).sum();
        Self {
            n_chains: n,
            failures,
            failure_fraction: failures as f64 / n as f64,
            mean_total_trials: total as f64 / n as f64,
            max_total_trials: runs.iter().map(|r| r.total_trials).max().unwrap_or(0),
            steps,
            failures_by_iteration: by_iter.into_iter().collect(),
        }
    }

    /// Bin iterations into `n_bins` and test whether the failure hazard grows.
    pub fn failure_trend(&self, n_bins: u64) -> FailureTrend {
        let n_bins = n_bins.clamp(1, self.steps.max(1));
        let width = self.steps.max(1).div_ceil(n_bins);
        let mut bins = Vec::new();
        let mut alive = self.n_chains;
        let mut fails = self.failures_by_iteration.iter().peekable();
        let mut start = 0;
        while start < self.steps.max(1) {
            let end = (start + width).min(self.steps.max(1));
            let mut exposure = 0u64;
            let mut failures = 0u64;
            // Chains alive at iteration k contribute one unit of exposure.
            let mut k = start;
            while k < end {
                let next_fail = fails.peek().map(|(it, _)| *it).filter(|it| *it < end);
                let upto = next_fail.unwrap_or(end);
                exposure += alive * (upto - k);
                k = upto;
                if let Some(&&(it, c)) = fails.peek() {
                    if it == k && k < end {
                        exposure += alive;
                        failures += c;
                        alive -= c;
                        fails.next();
                        k += 1;
                    }
                }
            }
            bins.push(TrendBin { first_iteration: start, exposure, failures });
            start = end;
        }
        let total_exposure: u64 = bins.iter().map(|b| b.exposure).sum();
        let total_failures: u64 = bins.iter().map(|b| b.failures).sum();
        if total_failures == 0 || total_exposure == 0 || bins.len() < 2 {
            return FailureTrend { bins, slope: 0.0, slope_std_error: 0.0, non_increasing: true };
        }
        let pooled = total_failures as f64 / total_exposure as f64;
        let var_unit = pooled * (1.0 - pooled);
        // Weights are inverse variances of the per-bin rates.
        let pts: Vec<(f64, f64, f64)> = bins
            .iter()
            .enumerate()
            .filter(|(_, b)| b.exposure > 0)
            .map(|(i, b)| (i as f64, b.failures as f64 / b.exposure as f64, b.exposure as f64 / var_unit))
            .collect();
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
        let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return FailureTrend { bins, slope: 0.0, slope_std_error: 0.0, non_increasing: true };
        }
        let slope = sxy / sxx;
        let se = (1.0 / sxx).sqrt();
        FailureTrend { bins, slope, slope_std_error: se, non_increasing: slope <= 1.645 * se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub runs: Vec<RunResult>,
    /// Starting point of each chain.
    pub starts: Vec<Vec<f64>>,
    pub summary: EnsembleSummary,
}

/// Run `n_chains` independent chains. Chain `i` uses seed
/// `chain_seed(seed, i)`; its start is drawn from a separate stream of that
/// seed, so chain `i` equals `run_in_and_out(body, start_i, params, chain_seed(seed, i))`.
pub fn run_ensemble(body: &Body, warm_start: &dyn WarmStart, params: &ChainParams, n_chains: u64, seed: u64) -> Result<EnsembleResult> {
    if n_chains == 0 {
        return Err(invalid("n_chains must be >= 1"));
    }
    let per_chain: Vec<Result<(Vec<f64>, RunResult)>> = (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let s = chain_seed(seed, i);
            let x0 = warm_start.draw(&mut start_rng(s))?;
            let run = run_in_and_out(body, &x0, params, s)?;
            Ok((x0, run))
        })
        .collect();
    let mut runs = Vec::with_capacity(n_chains as usize);
    let mut starts = Vec::with_capacity(n_chains as usize);
    for r in per_chain {
        let (x0, run) = r?;
        starts.push(x0);
        runs.push(run);
    }
    let summary = EnsembleSummary::from_runs(&runs, params.steps);
    Ok(EnsembleResult { runs, starts, summary })
}
