//! Monte-Carlo checks of the sampler's quantitative guarantees, plus
//! brute-force 2-D oracles for distance, volume and uniformity.
//!
//! Estimators that take a `seed` split their samples into fixed-size chunks,
//! each with its own stream, so results do not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{Body, DEFAULT_REJECTION_TRIES};
use crate::error::{invalid, Error, Result};
use crate::planner::Plan;
use crate::rng::{chain_rng, chain_seed};
use crate::specfun::chi_tail;

const CHUNK: u64 = 256;

/// Default number of inner proposals per outer sample when estimating local
/// conductance inside the failure and trial checks.
pub const DEFAULT_INNER_MC: u64 = 10_000;

/// Inner estimates that see no hit are retried with 10x more proposals up to
/// this many in total; after that the sample counts as a certain failure.
pub const INNER_MC_CAP: u64 = 10_000_000;

pub const GRID_RESOLUTION: usize = 400;

/// Compensated summation (Neumaier).
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Sum and sum-of-squares of a per-sample statistic, reduced in chunk order
/// so the result is independent of scheduling.
fn parallel_moments<F>(n: u64, seed: u64, f: F) -> Result<(f64, f64)>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Result<(Sum, Sum)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(chain_seed(seed, c));
            let (mut s1, mut s2) = (Sum::default(), Sum::default());
            for _ in 0..CHUNK.min(n - c * CHUNK) {
                let v = f(&mut rng)?;
                s1.add(v);
                s2.add(v * v);
            }
            Ok((s1, s2))
        })
        .collect();
    let (mut s1, mut s2) = (Sum::default(), Sum::default());
    for p in partial {
        let (a, b) = p?;
        s1.add(a.value());
        s2.add(b.value());
    }
    let mean = s1.value() / n as f64;
    let var = (s2.value() / n as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n as f64).sqrt()))
}

fn proposal<R: Rng + ?Sized>(center: &[f64], sqrt_h: f64, rng: &mut R, out: &mut [f64]) {
    for (o, c) in out.iter_mut().zip(center) {
        let z: f64 = rng.sample(StandardNormal);
        *o = c + sqrt_h * z;
    }
}

/// Fraction of `n_mc` proposals `y + √h Z` that land in the body, with its
/// binomial standard error.
pub fn local_conductance_mc<R: Rng + ?Sized>(body: &Body, y: &[f64], h: f64, n_mc: u64, rng: &mut R) -> Result<(f64, f64)> {
    if n_mc < 100 {
        return Err(invalid(format!("n_mc must be >= 100, got {n_mc}")));
    }
    if !(h > 0.0) {
        return Err(invalid("h must be positive"));
    }
    let hits = count_hits(body, y, h.sqrt(), n_mc, rng);
    let p = hits as f64 / n_mc as f64;
    Ok((p, (p * (1.0 - p) / n_mc as f64).sqrt()))
}

fn count_hits<R: Rng + ?Sized>(body: &Body, y: &[f64], sqrt_h: f64, m: u64, rng: &mut R) -> u64 {
    let mut x = vec![0.0; y.len()];
    let mut hits = 0;
    for _ in 0..m {
        proposal(y, sqrt_h, rng, &mut x);
        hits += body.contains(&x) as u64;
    }
    hits
}

/// `E[min{Geom(p), N}] = (1 − (1−p)^N) / p`, and `N` when `p = 0`.
pub fn expected_trials_closed_form(p: f64, n: u64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 {
        return n as f64;
    }
    -(n as f64 * (-p).ln_1p()).exp_m1() / p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Satisfied,
    ViolatedBeyond3SE,
}

/// An empirical estimate set against the theoretical bound it should obey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub empirical: f64,
    pub theoretical_bound: f64,
    pub mc_std_error: f64,
    pub n_samples: u64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, empirical: f64, theoretical_bound: f64, mc_std_error: f64, n_samples: u64) -> Self {
        let verdict = if empirical <= theoretical_bound + 3.0 * mc_std_error {
            Verdict::Satisfied
        } else {
            Verdict::ViolatedBeyond3SE
        };
        Self { name: name.into(), empirical, theoretical_bound, mc_std_error, n_samples, verdict, note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn is_satisfied(&self) -> bool {
        self.verdict == Verdict::Satisfied
    }
}

/// Brute-force 2-D oracle: cell-center membership on a regular grid over the
/// body's bounding box.
#[derive(Debug, Clone)]
pub struct GridOracle {
    body: Body,
    resolution: usize,
    lo: [f64; 2],
    cell: [f64; 2],
    member: Vec<bool>,
    member_cells: Vec<u32>,
    boundary: Vec<[f64; 2]>,
}

impl GridOracle {
    pub fn new(body: &Body, resolution: usize) -> Result<Self> {
        if body.dim() != 2 {
            return Err(Error::Unsupported(format!("grid oracle is 2-D only, body has dimension {}", body.dim())));
        }
        if resolution == 0 {
            return Err(invalid("resolution must be >= 1"));
        }
        let bb = body.bbox();
        let lo = [bb.lo[0], bb.lo[1]];
        let cell = [(bb.hi[0] - bb.lo[0]) / resolution as f64, (bb.hi[1] - bb.lo[1]) / resolution as f64];
        let r = resolution;
        let member: Vec<bool> = (0..r * r)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % r, k / r);
                body.contains(&[lo[0] + (i as f64 + 0.5) * cell[0], lo[1] + (j as f64 + 0.5) * cell[1]])
            })
            .collect();
        let mut member_cells = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..r {
            for i in 0..r {
                if !member[j * r + i] {
                    continue;
                }
                member_cells.push((j * r + i) as u32);
                let edge = i == 0 || j == 0 || i == r - 1 || j == r - 1;
                if edge || !member[j * r + i - 1] || !member[j * r + i + 1] || !member[(j - 1) * r + i] || !member[(j + 1) * r + i] {
                    boundary.push([lo[0] + (i as f64 + 0.5) * cell[0], lo[1] + (j as f64 + 0.5) * cell[1]]);
                }
            }
        }
        Ok(Self { body: body.clone(), resolution, lo, cell, member, member_cells, boundary })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell[0] * self.cell[1]
    }

    pub fn cell_diameter(&self) -> f64 {
        self.cell[0].hypot(self.cell[1])
    }

    pub fn is_member(&self, i: usize, j: usize) -> bool {
        self.member[j * self.resolution + i]
    }

    pub fn member_count(&self) -> usize {
        self.member_cells.len()
    }

    pub fn volume(&self) -> f64 {
        self.member_cells.len() as f64 * self.cell_volume()
    }

    /// Distance to the body, accurate to about one cell diameter.
    pub fn distance(&self, y: &[f64]) -> f64 {
        if self.body.contains(y) {
            return 0.0;
        }
        self.boundary
            .iter()
            .map(|c| (y[0] - c[0]).hypot(y[1] - c[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact draw from the uniform law on the union of member cells.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        if self.member_cells.is_empty() {
            return Err(invalid("grid oracle has no member cells"));
        }
        let k = self.member_cells[rng.random_range(0..self.member_cells.len())] as usize;
        let (i, j) = (k % self.resolution, k / self.resolution);
        Ok(vec![
            self.lo[0] + (i as f64 + rng.random::<f64>()) * self.cell[0],
            self.lo[1] + (j as f64 + rng.random::<f64>()) * self.cell[1],
        ])
    }
}

enum DistanceMethod {
    Analytic,
    Grid(GridOracle),
}

impl DistanceMethod {
    fn for_body(body: &Body) -> Result<Self> {
        if body.has_distance() {
            Ok(Self::Analytic)
        } else if body.dim() == 2 {
            Ok(Self::Grid(GridOracle::new(body, GRID_RESOLUTION)?))
        } else {
            Err(Error::Unsupported(format!(
                "no distance function for this {}-D body and grid probing is 2-D only",
                body.dim()
            )))
        }
    }

    fn distance(&self, body: &Body, y: &[f64]) -> f64 {
        match self {
            Self::Analytic => body.distance(y).expect("analytic distance registered"),
            Self::Grid(g) => g.distance(y),
        }
    }

    fn note(&self) -> Option<String> {
        match self {
            Self::Analytic => None,
            Self::Grid(g) => Some(format!("distance from a {0}x{0} grid, accurate to {1:.3e}", g.resolution, g.cell_diameter())),
        }
    }
}

fn certificate(body: &Body) -> Result<(f64, f64)> {
    body.growth()
        .map(|g| (g.alpha, g.beta))
        .ok_or_else(|| invalid("body has no volume-growth certificate"))
}

/// Under stationarity, `Pr(dist(Y, X) > r) ≤ α(n+1) Q_{2n}(r/√h)`, where
/// `X` is uniform on the body and `Y = X + √h Z`. Requires `h ≤ 1/(2n³β²)`.
pub fn stationary_escape_check(body: &Body, h: f64, r: f64, n_mc: u64, seed: u64) -> Result<BoundCheck> {
    let (alpha, beta) = certificate(body)?;
    let n = body.dim() as f64;
    if !(h > 0.0) || !(r >= 0.0) || n_mc == 0 {
        return Err(invalid("need h > 0, r >= 0 and n_mc >= 1"));
    }
    let h_max = 1.0 / (2.0 * n * n * n * beta * beta);
    if h > h_max {
        return Err(Error::HypothesisViolation(format!("escape bound needs h <= 1/(2 n^3 beta^2) = {h_max:.6e}, got h = {h:.6e}")));
    }
    let method = DistanceMethod::for_body(body)?;
    let sqrt_h = h.sqrt();
    let (p, _) = parallel_moments(n_mc, seed, |rng| {
        let x = body.sample_uniform(rng, DEFAULT_REJECTION_TRIES)?;
        let mut y = vec![0.0; x.len()];
        proposal(&x, sqrt_h, rng, &mut y);
        Ok((method.distance(body, &y) > r) as u8 as f64)
    })?;
    let bound = alpha * (n + 1.0) * chi_tail(2 * body.dim() as u32, r / sqrt_h)?;
    let se = (p * (1.0 - p) / n_mc as f64).sqrt();
    let check = BoundCheck::new(format!("stationary_escape(r={r})"), p, bound, se, n_mc);
    Ok(match method.note() {
        Some(note) => check.with_note(note),
        None => check,
    })
}

fn check_smoothed_hypotheses(body: &Body, plan: &Plan) -> Result<(f64, f64)> {
    let (alpha, beta) = certificate(body)?;
    let n = body.dim() as f64;
    let s = plan.s;
    let h_max = 1.0 / (2.0 * n * n * beta * beta * n.max(((n + 1.0) * alpha * s).ln()));
    if plan.h > h_max {
        return Err(Error::HypothesisViolation(format!(
            "need h <= 1/(2 n^2 beta^2 max(n, log((n+1) alpha S))) = {h_max:.6e}, got h = {:.6e}",
            plan.h
        )));
    }
    let n_min = 8.0 * alpha * s * s.ln();
    if (plan.threshold as f64) < n_min {
        return Err(Error::HypothesisViolation(format!("need N >= 8 alpha S log S = {n_min:.6e}, got N = {}", plan.threshold)));
    }
    if !(s > 1.0) {
        return Err(Error::HypothesisViolation(format!("need S > 1, got {s}")));
    }
    Ok((alpha, beta))
}

/// Draw `Y ~ π_h` and estimate `ℓ_h(Y)`. `None` means no inner proposal hit
/// the body even after escalation.
fn smoothed_conductance(body: &Body, sqrt_h: f64, inner_mc: u64, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    let x = body.sample_uniform(rng, DEFAULT_REJECTION_TRIES)?;
    let mut y = vec![0.0; x.len()];
    proposal(&x, sqrt_h, rng, &mut y);
    let (mut hits, mut total, mut batch) = (0u64, 0u64, inner_mc);
    loop {
        hits += count_hits(body, &y, sqrt_h, batch, rng);
        total += batch;
        if hits > 0 {
            return Ok(Some(hits as f64 / total as f64));
        }
        if total >= INNER_MC_CAP {
            return Ok(None);
        }
        batch = (batch * 9).min(INNER_MC_CAP - total);
    }
}

pub const FAILURE_BIAS_NOTE: &str =
    "inner Monte-Carlo estimate of local conductance biases E[(1-l)^N] upward; zero-hit samples count as certain failure";

/// `F(h, N) = E_{π_h}[(1 − ℓ_h(Y))^N] ≤ 3/S` for a schedule meeting the
/// step-size and threshold hypotheses.
pub fn stationary_failure_check(body: &Body, plan: &Plan, n_mc: u64, inner_mc: u64, seed: u64) -> Result<BoundCheck> {
    check_smoothed_hypotheses(body, plan)?;
    if n_mc == 0 || inner_mc == 0 {
        return Err(invalid("n_mc and inner_mc must be >= 1"));
    }
    let sqrt_h = plan.h.sqrt();
    let n = plan.threshold as f64;
    let (f, se) = parallel_moments(n_mc, seed, |rng| {
        Ok(match smoothed_conductance(body, sqrt_h, inner_mc, rng)? {
            Some(l) => (n * (-l).ln_1p()).exp(),
            None => 1.0,
        })
    })?;
    Ok(BoundCheck::new("stationary_failure", f, 3.0 / plan.s, se, n_mc).with_note(FAILURE_BIAS_NOTE))
}

/// `E_{π_h}[E min{Geom(ℓ_h(Y)), N}] ≤ 16 α log S`.
pub fn expected_trials_check(body: &Body, plan: &Plan, n_mc: u64, inner_mc: u64, seed: u64) -> Result<BoundCheck> {
    let (alpha, _) = check_smoothed_hypotheses(body, plan)?;
    if n_mc == 0 || inner_mc == 0 {
        return Err(invalid("n_mc and inner_mc must be >= 1"));
    }
    let sqrt_h = plan.h.sqrt();
    let (m, se) = parallel_moments(n_mc, seed, |rng| {
        Ok(match smoothed_conductance(body, sqrt_h, inner_mc, rng)? {
            Some(l) => expected_trials_closed_form(l, plan.threshold),
            None => plan.threshold as f64,
        })
    })?;
    Ok(BoundCheck::new("expected_trials", m, 16.0 * alpha * plan.s.ln(), se, n_mc))
}

/// Monte-Carlo estimate of `Vol(X ⊕ B_t) / Vol(X)` by sampling the inflated
/// bounding box.
pub fn enlarged_volume_ratio_mc(body: &Body, t: f64, n_mc: u64, seed: u64) -> Result<(f64, f64)> {
    if !(t >= 0.0) || n_mc == 0 {
        return Err(invalid("need t >= 0 and n_mc >= 1"));
    }
    let method = DistanceMethod::for_body(body)?;
    let volume = match (body.exact_volume(), &method) {
        (Some(v), _) => v,
        (None, DistanceMethod::Grid(g)) => g.volume(),
        (None, DistanceMethod::Analytic) => return Err(Error::Unsupported("body volume unknown".into())),
    };
    let outer = body.bbox().inflate(t);
    let (p, _) = parallel_moments(n_mc, seed, |rng| {
        let mut x = vec![0.0; body.dim()];
        outer.sample_uniform(rng, &mut x);
        let inside = if t == 0.0 { body.contains(&x) } else { method.distance(body, &x) <= t };
        Ok(inside as u8 as f64)
    })?;
    let scale = outer.volume() / volume;
    Ok((p * scale, scale * (p * (1.0 - p) / n_mc as f64).sqrt()))
}

/// Result of a goodness-of-fit test of samples against the uniform law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityTest {
    pub n_samples: u64,
    /// Cells after merging those with expected count below 5.
    pub n_bins: usize,
    pub tv_estimate: f64,
    pub chi_square: f64,
    pub df: u32,
    pub p_value: f64,
}

fn chi_square_test(observed: &[u64], probs: &[f64], outside: u64) -> Result<UniformityTest> {
    let total = observed.iter().sum::<u64>() + outside;
    if total == 0 {
        return Err(invalid("no samples"));
    }
    let nf = total as f64;
    let tv = 0.5 * (observed.iter().zip(probs).map(|(&o, &p)| (o as f64 / nf - p).abs()).sum::<f64>() + outside as f64 / nf);

    // Cells with too little expected mass go into one pooled bin, together
    // with samples that fell outside every cell.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_e, mut pooled_o) = (0.0, outside as f64);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * nf;
        if e < 5.0 {
            pooled_e += e;
            pooled_o += o as f64;
        } else {
            bins.push((o as f64, e));
        }
    }
    if pooled_e > 0.0 || pooled_o > 0.0 {
        if pooled_e >= 5.0 || bins.is_empty() {
            bins.push((pooled_o, pooled_e));
        } else {
            let k = (0..bins.len()).min_by(|&a, &b| bins[a].1.total_cmp(&bins[b].1)).unwrap();
            bins[k].0 += pooled_o;
            bins[k].1 += pooled_e;
        }
    }
    let stat: f64 = bins
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let df = bins.len().saturating_sub(1) as u32;
    let p_value = if df == 0 {
        1.0
    } else if stat.is_infinite() {
        0.0
    } else {
        chi_tail(df, stat.sqrt())?
    };
    Ok(UniformityTest { n_samples: total, n_bins: bins.len(), tv_estimate: tv, chi_square: stat, df, p_value })
}

/// Compare 2-D samples with the uniform law on the body over a
/// `resolution × resolution` grid on its bounding box. Cell masses come from
/// a fine membership bitmap.
pub fn grid_tv_check(body: &Body, samples: &[Vec<f64>], resolution: usize) -> Result<UniformityTest> {
    if body.dim() != 2 {
        return Err(Error::Unsupported("grid uniformity test is 2-D only".into()));
    }
    if resolution == 0 {
        return Err(invalid("resolution must be >= 1"));
    }
    let sub = 800usize.div_ceil(resolution);
    let fine = GridOracle::new(body, resolution * sub)?;
    let mut mass = vec![0.0; resolution * resolution];
    let total = fine.member_count() as f64;
    for &k in &fine.member_cells {
        let (i, j) = (k as usize % fine.resolution, k as usize / fine.resolution);
        mass[(j / sub) * resolution + i / sub] += 1.0 / total;
    }
    let occupied = mass.iter().filter(|&&m| m > 0.0).count();
    if (samples.len() as u64) < 50 * occupied as u64 {
        return Err(invalid(format!(
            "need at least 50 samples per occupied cell: {} samples for {occupied} cells",
            samples.len()
        )));
    }
    let bb = body.bbox();
    let mut counts = vec![0u64; mass.len()];
    let mut outside = 0;
    for x in samples {
        if x.len() != 2 || !bb.contains(x) {
            outside += 1;
            continue;
        }
        let cell = |d: usize| (((x[d] - bb.lo[d]) / (bb.hi[d] - bb.lo[d]) * resolution as f64) as usize).min(resolution - 1);
        counts[cell(1) * resolution + cell(0)] += 1;
    }
    chi_square_test(&counts, &mass, outside)
}

/// A partition of a body into cells of known uniform mass.
pub trait Partition: Sync {
    fn n_cells(&self) -> usize;
    fn cell(&self, x: &[f64]) -> Option<usize>;
    fn mass(&self, cell: usize) -> f64;
}

/// Equal-area polar cells of the annulus `r_in ≤ |x − c| ≤ r_out` (a disk
/// when `r_in = 0`): `rings` radial bands times `sectors` angular wedges.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPartition {
    center: [f64; 2],
    radii: Vec<f64>,
    sectors: usize,
}

impl PolarPartition {
    pub fn new(center: [f64; 2], r_in: f64, r_out: f64, rings: usize, sectors: usize) -> Result<Self> {
        if !(0.0 <= r_in && r_in < r_out) || rings == 0 || sectors == 0 {
            return Err(invalid("need 0 <= r_in < r_out and at least one ring and sector"));
        }
        let (a, b) = (r_in * r_in, r_out * r_out);
        let radii = (0..=rings).map(|k| (a + (b - a) * k as f64 / rings as f64).sqrt()).collect();
        Ok(Self { center, radii, sectors })
    }
}

impl Partition for PolarPartition {
    fn n_cells(&self) -> usize {
        (self.radii.len() - 1) * self.sectors
    }

    fn cell(&self, x: &[f64]) -> Option<usize> {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let r = dx.hypot(dy);
        if r < self.radii[0] || r > *self.radii.last().unwrap() {
            return None;
        }
        let ring = self.radii[1..].partition_point(|&b| b < r).min(self.radii.len() - 2);
        let frac = (dy.atan2(dx) + std::f64::consts::PI) / std::f64::consts::TAU;
        let sector = ((frac * self.sectors as f64) as usize).min(self.sectors - 1);
        Some(ring * self.sectors + sector)
    }

    fn mass(&self, _cell: usize) -> f64 {
        1.0 / self.n_cells() as f64
    }
}

/// `k × k` equal cells of an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGridPartition {
    lo: Vec<f64>,
    hi: Vec<f64>,
    k: usize,
}

impl BoxGridPartition {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, k: usize) -> Result<Self> {
        if lo.len() != 2 || hi.len() != 2 || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) || k == 0 {
            return Err(invalid("need a non-degenerate 2-D box and k >= 1"));
        }
        Ok(Self { lo, hi, k })
    }
}

impl Partition for BoxGridPartition {
    fn n_cells(&self) -> usize {
        self.k * self.k
    }

    fn cell(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for d in 0..2 {
            if x[d] < self.lo[d] || x[d] > self.hi[d] {
                return None;
            }
            idx[d] = (((x[d] - self.lo[d]) / (self.hi[d] - self.lo[d]) * self.k as f64) as usize).min(self.k - 1);
        }
        Some(idx[1] * self.k + idx[0])
    }

    fn mass(&self, _cell: usize) -> f64 {
        1.0 / self.n_cells() as f64
    }
}

/// Chi-square test of samples against the exact cell masses of `partition`.
pub fn partition_uniformity_check(partition: &dyn Partition, samples: &[Vec<f64>]) -> Result<UniformityTest> {
    let mut counts = vec![0u64; partition.n_cells()];
    let mut outside = 0;
    for x in samples {
        match partition.cell(x) {
            Some(c) => counts[c] += 1,
            None => outside += 1,
        }
    }
    let probs: Vec<f64> = (0..partition.n_cells()).map(|c| partition.mass(c)).collect();
    chi_square_test(&counts, &probs, outside)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Satisfied,
    Violated,
    HypothesisViolation,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub status: CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<BoundCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniformity: Option<UniformityTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ReportEntry {
    fn from_error(name: String, e: Error) -> Self {
        let status = match e {
            Error::HypothesisViolation(_) => CheckStatus::HypothesisViolation,
            Error::Unsupported(_) => CheckStatus::Skipped,
            _ => CheckStatus::Error,
        };
        Self { name, status, check: None, uniformity: None, reason: Some(e.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub seed: u64,
    pub n_mc: u64,
    pub resolution: usize,
    pub entries: Vec<ReportEntry>,
}

impl DiagnosticsReport {
    pub fn new(seed: u64, n_mc: u64, resolution: usize) -> Self {
        Self { seed, n_mc, resolution, entries: Vec::new() }
    }

    pub fn push_bound(&mut self, name: impl Into<String>, result: Result<BoundCheck>) {
        let name = name.into();
        self.entries.push(match result {
            Ok(c) => ReportEntry {
                name,
                status: if c.is_satisfied() { CheckStatus::Satisfied } else { CheckStatus::Violated },
                check: Some(c),
                uniformity: None,
                reason: None,
            },
            Err(e) => ReportEntry::from_error(name, e),
        });
    }

    /// Uniformity passes when the chi-square p-value is at least `min_p`.
    pub fn push_uniformity(&mut self, name: impl Into<String>, result: Result<UniformityTest>, min_p: f64) {
        let name = name.into();
        self.entries.push(match result {
            Ok(u) => ReportEntry {
                name,
                status: if u.p_value >= min_p { CheckStatus::Satisfied } else { CheckStatus::Violated },
                check: None,
                uniformity: Some(u),
                reason: None,
            },
            Err(e) => ReportEntry::from_error(name, e),
        });
    }

    /// No entry violated, erred or had its hypotheses fail. Skips are fine.
    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| matches!(e.status, CheckStatus::Satisfied | CheckStatus::Skipped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{BBox, CertificateSource, GrowthCertificate};
    use crate::planner::{plan, PlanInputs};

    fn disk() -> Body {
        Body::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    fn annulus() -> Body {
        let outer = Body::ball(vec![0.0, 0.0], 1.0).unwrap();
        let hole = Body::ball(vec![0.0, 0.0], 0.5).unwrap();
        Body::exclusion(outer, hole, 0.75 * std::f64::consts::PI).unwrap()
    }

    #[test]
    fn conductance_examples() {
        let mut rng = chain_rng(1);
        let big = Body::cuboid(vec![-1e6, -1e6], vec![1e6, 1e6]).unwrap();
        assert_eq!(local_conductance_mc(&big, &[0.0, 0.0], 1.0, 1000, &mut rng).unwrap(), (1.0, 0.0));
        let half = Body::from_predicate(BBox::new(vec![-50.0, -50.0], vec![50.0, 50.0]).unwrap(), |x| x[0] <= 0.0);
        let (p, se) = local_conductance_mc(&half, &[0.0, 0.0], 1.0, 10_000, &mut rng).unwrap();
        assert!((p - 0.5).abs() <= 3.0 * se, "{p} {se}");
        assert!(local_conductance_mc(&half, &[0.0, 0.0], 1.0, 99, &mut rng).is_err());
    }

    #[test]
    fn closed_form_trials() {
        assert_eq!(expected_trials_closed_form(1.0, 7), 1.0);
        assert_eq!(expected_trials_closed_form(0.0, 7), 7.0);
        assert!((expected_trials_closed_form(0.5, 3) - 1.75).abs() < 1e-15);
        assert!((expected_trials_closed_form(1e-12, 5) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn verdict_rule() {
        assert!(BoundCheck::new("a", 1.3, 1.0, 0.1, 10).is_satisfied());
        assert!(!BoundCheck::new("a", 1.31, 1.0, 0.1, 10).is_satisfied());
    }

    #[test]
    fn escape_examples() {
        let h = 1.0 / 16.0;
        let c = stationary_escape_check(&disk(), h, 0.0, 2000, 3).unwrap();
        assert!((c.theoretical_bound - 3.0).abs() < 1e-12);
        assert!(c.is_satisfied());
        let c = stationary_escape_check(&disk(), h, 1.0, 20_000, 3).unwrap();
        assert!((c.theoretical_bound - 3.0 * chi_tail(4, 4.0).unwrap()).abs() < 1e-15);
        assert!(c.is_satisfied(), "{c:?}");
        for r in [0.25, 0.5, 1.0] {
            assert!(stationary_escape_check(&annulus(), h, r, 20_000, 4).unwrap().is_satisfied());
        }
        let err = stationary_escape_check(&disk(), 0.1, 1.0, 100, 3).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolation(_)));
    }

    #[test]
    fn escape_is_deterministic() {
        let a = stationary_escape_check(&disk(), 0.05, 0.1, 3000, 9).unwrap();
        let b = stationary_escape_check(&disk(), 0.05, 0.1, 3000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smoothed_checks_on_disk() {
        let inputs = PlanInputs::new(2.0, 0.2, 1.0, 1.0, 1.0, 1.0, 2).unwrap();
        let p = plan(&inputs).unwrap();
        let f = stationary_failure_check(&disk(), &p, 2000, 2000, 1).unwrap();
        assert!(f.is_satisfied(), "{f:?}");
        let t = expected_trials_check(&disk(), &p, 2000, 2000, 1).unwrap();
        assert!(t.is_satisfied(), "{t:?}");
        let bad = Plan { threshold: 1, ..p };
        assert!(matches!(stationary_failure_check(&disk(), &bad, 10, 10, 1), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn trials_with_full_conductance() {
        // A body so wide that every proposal lands inside.
        let huge = Body::cuboid(vec![-1e9, -1e9], vec![1e9, 1e9]).unwrap();
        let p = plan(&PlanInputs::new(2.0, 0.2, 1.0, 1.0, 1.0, 1e-9, 2).unwrap()).unwrap();
        let t = expected_trials_check(&huge, &p, 200, 100, 2).unwrap();
        assert_eq!(t.empirical, 1.0);
        assert!(t.is_satisfied());
    }

    #[test]
    fn grid_oracle_volume() {
        for (body, v) in [(disk(), std::f64::consts::PI), (annulus(), 0.75 * std::f64::consts::PI)] {
            let g = GridOracle::new(&body, 400).unwrap();
            assert!((g.volume() / v - 1.0).abs() < 0.01);
        }
        let g = GridOracle::new(&disk(), 400).unwrap();
        assert!((g.distance(&[2.0, 0.0]) - 1.0).abs() < g.cell_diameter());
        assert!(GridOracle::new(&Body::ball(vec![0.0; 3], 1.0).unwrap(), 10).is_err());
    }

    #[test]
    fn grid_tv_examples() {
        let body = disk();
        let g = GridOracle::new(&body, 400).unwrap();
        let mut rng = chain_rng(5);
        let samples: Vec<Vec<f64>> = (0..100_000).map(|_| g.sample_uniform(&mut rng).unwrap()).collect();
        let t = grid_tv_check(&body, &samples, 16).unwrap();
        assert!(t.tv_estimate <= 0.03, "{t:?}");

        let point = vec![vec![0.01, 0.01]; 20_000];
        let t = grid_tv_check(&body, &point, 16).unwrap();
        assert!(t.tv_estimate > 0.95 && t.p_value < 1e-10);
        assert!(grid_tv_check(&body, &samples[..100], 16).is_err());
    }

    #[test]
    fn enlarged_ratio_examples() {
        let (r, se) = enlarged_volume_ratio_mc(&disk(), 0.0, 50_000, 1).unwrap();
        assert!((r - 1.0).abs() <= 3.0 * se.max(1e-3));
        let (r, se) = enlarged_volume_ratio_mc(&disk(), 1.0, 100_000, 2).unwrap();
        assert!((r - 4.0).abs() <= 3.0 * se, "{r} {se}");
        let (r, se) = enlarged_volume_ratio_mc(&annulus(), 0.5, 100_000, 3).unwrap();
        assert!(r <= 3.0 + 3.0 * se);
    }

    #[test]
    fn enlarged_ratio_unsupported_without_distance() {
        let b = Body::halfspace_polytope(
            (0..5).flat_map(|d| [(0..5).map(|k| (k == d) as u8 as f64).collect(), (0..5).map(|k| -((k == d) as u8 as f64)).collect()]).collect(),
            vec![1.0; 10],
            vec![0.0; 5],
            1.0,
        )
        .unwrap()
        .with_growth(GrowthCertificate::new(1.0, 1.0, CertificateSource::Convex).unwrap());
        assert!(matches!(enlarged_volume_ratio_mc(&b, 0.5, 10, 1), Err(Error::Unsupported(_))));
        assert!(matches!(stationary_escape_check(&b, 1e-4, 0.5, 10, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn polar_partition_cells() {
        let p = PolarPartition::new([0.0, 0.0], 0.5, 1.0, 4, 4).unwrap();
        assert_eq!(p.n_cells(), 16);
        assert_eq!(p.cell(&[0.2, 0.0]), None);
        assert_eq!(p.cell(&[1.2, 0.0]), None);
        let mut rng = chain_rng(3);
        let body = annulus();
        let samples: Vec<Vec<f64>> = (0..20_000).map(|_| body.sample_uniform(&mut rng, 1000).unwrap()).collect();
        let t = partition_uniformity_check(&p, &samples).unwrap();
        assert!(t.p_value >= 0.001, "{t:?}");
        let skewed: Vec<Vec<f64>> = samples.iter().filter(|x| x[0] > -0.3).cloned().collect();
        assert!(partition_uniformity_check(&p, &skewed).unwrap().p_value < 1e-6);
    }

    #[test]
    fn report_status() {
        let mut r = DiagnosticsReport::new(1, 10, 16);
        r.push_bound("a", Ok(BoundCheck::new("a", 0.0, 1.0, 0.0, 1)));
        r.push_bound("b", Err(Error::Unsupported("x".into())));
        assert!(r.all_satisfied());
        r.push_bound("c", Err(Error::HypothesisViolation("x".into())));
        assert!(!r.all_satisfied());
        assert_eq!(r.entries[2].status, CheckStatus::HypothesisViolation);
    }
}
