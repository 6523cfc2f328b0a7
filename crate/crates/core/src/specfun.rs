//! Chi-distribution tails, chi normalizing constants and the closed-form
//! Gaussian/Gamma inequalities the sampler's guarantees rest on.
//!
//! Everything here is evaluated in log space where magnitudes can overflow:
//! certificates are allowed to carry dimensions far past the point where
//! `Γ(n/2)` leaves the `f64` range.

use crate::error::{invalid, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const MAX_ITER: usize = 200_000;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;

/// Lanczos coefficients, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(a) - [(a - ½) ln a - a + ½ ln 2π]` for `a >= 10`.
fn stirling_correction(a: f64) -> f64 {
    let inv = 1.0 / a;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0
        + inv2
            * (-1.0 / 360.0
                + inv2
                    * (1.0 / 1260.0
                        + inv2 * (-1.0 / 1680.0 + inv2 * (1.0 / 1188.0 - inv2 * (691.0 / 360_360.0))))))
}

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_correction(x);
    }
    if x < 0.5 {
        return ln_gamma(x + 1.0) - x.ln();
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln(x^a e^{-x} / Γ(a))`, the common prefactor of both incomplete-gamma
/// expansions. For large `a` the leading terms cancel almost exactly, so the
/// Stirling-scaled form is used there.
fn ln_gamma_prefactor(a: f64, x: f64) -> f64 {
    if a < 10.0 {
        a * x.ln() - x - ln_gamma(a)
    } else {
        let d = (x - a) / a;
        a * (d.ln_1p() - d) + 0.5 * a.ln() - LN_SQRT_2PI - stirling_correction(a)
    }
}

/// Series for P(a, x); converges quickly for `x < a + 1`.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() + ln_gamma_prefactor(a, x)).exp()
}

/// Modified Lentz continued fraction for Q(a, x); used for `x >= a + 1`.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (h.ln() + ln_gamma_prefactor(a, x)).exp()
}

/// Regularized upper incomplete gamma `Q(a, x) = Γ(a, x) / Γ(a)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(invalid(format!("regularized_gamma_q needs a > 0, x >= 0 (a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok((1.0 - lower_series(a, x)).max(0.0))
    } else {
        Ok(upper_continued_fraction(a, x).min(1.0))
    }
}

/// Regularized lower incomplete gamma `P(a, x) = 1 - Q(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(invalid(format!("regularized_gamma_p needs a > 0, x >= 0 (a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(lower_series(a, x).min(1.0))
    } else {
        Ok((1.0 - upper_continued_fraction(a, x)).max(0.0))
    }
}

/// How a [`ChiTail`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMethod {
    RegularizedGamma,
    /// Finite Poisson sum, available only for even degrees of freedom.
    ClosedFormEven,
}

/// The tail `Q_m(r) = Pr(‖Z‖ >= r)` of a standard Gaussian in `R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChiTail {
    m: u32,
    method: TailMethod,
}

impl ChiTail {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(invalid("chi tail needs m >= 1"));
        }
        Ok(Self { m, method: TailMethod::RegularizedGamma })
    }

    pub fn with_method(m: u32, method: TailMethod) -> Result<Self> {
        let tail = Self::new(m)?;
        if method == TailMethod::ClosedFormEven && m % 2 != 0 {
            return Err(invalid(format!("closed form needs even m, got {m}")));
        }
        Ok(Self { method, ..tail })
    }

    pub fn degrees_of_freedom(&self) -> u32 {
        self.m
    }

    pub fn method(&self) -> TailMethod {
        self.method
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(invalid(format!("chi tail needs r >= 0, got {r}")));
        }
        let s = 0.5 * r * r;
        match self.method {
            TailMethod::RegularizedGamma => regularized_gamma_q(0.5 * self.m as f64, s),
            TailMethod::ClosedFormEven => {
                // e^{-s} Σ_{k < m/2} s^k / k!
                if s == 0.0 {
                    return Ok(1.0);
                }
                let ln_s = s.ln();
                let mut ln_term = -s;
                let mut sum = ln_term.exp();
                for k in 1..(self.m / 2) {
                    ln_term += ln_s - (k as f64).ln();
                    sum += ln_term.exp();
                }
                Ok(sum.min(1.0))
            }
        }
    }
}

/// `Q_m(r)`, the probability that an `m`-dimensional standard Gaussian has
/// norm at least `r`.
pub fn chi_tail(m: u32, r: f64) -> Result<f64> {
    ChiTail::new(m)?.eval(r)
}

/// `ln N_n` with `N_n = 2^{n/2 - 1} Γ(n/2)`, the normalizer of the chi density
/// `r^{n-1} e^{-r²/2} / N_n`.
pub fn ln_chi_norm_const(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(invalid("chi normalizing constant needs n >= 1"));
    }
    let half = 0.5 * n as f64;
    Ok((half - 1.0) * std::f64::consts::LN_2 + ln_gamma(half))
}

/// `N_n = 2^{n/2 - 1} Γ(n/2)`. Overflows to infinity for very large `n`;
/// use [`ln_chi_norm_const`] there.
pub fn chi_norm_const(n: u32) -> Result<f64> {
    Ok(ln_chi_norm_const(n)?.exp())
}

/// Outcome of evaluating `(√h n β)^i N_{n+i} / N_n` for `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaRatioReport {
    /// Whether `h <= 1 / (2 n³ β²)`, the regime where every term is bounded by 1.
    pub in_regime: bool,
    pub all_within: bool,
    pub max_term: f64,
    pub argmax: u32,
    pub terms: Vec<f64>,
}

pub fn check_gamma_ratio_bound(h: f64, n: u32, beta: f64) -> Result<GammaRatioReport> {
    if !(h > 0.0) || n == 0 || !(beta > 0.0) {
        return Err(invalid(format!(
            "gamma ratio check needs h > 0, n >= 1, beta > 0 (h={h}, n={n}, beta={beta})"
        )));
    }
    let nf = n as f64;
    let in_regime = h <= 1.0 / (2.0 * nf * nf * nf * beta * beta);
    let ln_base = h.sqrt().ln() + nf.ln() + beta.ln();
    let ln_nn = ln_chi_norm_const(n)?;
    let mut terms = Vec::with_capacity(n as usize + 1);
    terms.push(1.0);
    for i in 1..=n {
        let ln_term = i as f64 * ln_base + ln_chi_norm_const(n + i)? - ln_nn;
        terms.push(ln_term.exp());
    }
    let (argmax, max_term) = terms
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, t)| if t > best.1 { (i, t) } else { best });
    Ok(GammaRatioReport {
        in_regime,
        all_within: terms.iter().all(|&t| t <= 1.0),
        max_term,
        argmax: argmax as u32,
        terms,
    })
}

/// `exp(-(r - √n)² / 2)`, an upper bound on `Q_n(r)` valid for `r >= √n`.
pub fn gaussian_concentration_bound(n: u32, r: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("concentration bound needs n >= 1"));
    }
    let root = (n as f64).sqrt();
    if !(r >= root) {
        return Err(invalid(format!("concentration bound only holds for r >= sqrt(n) = {root}, got {r}")));
    }
    let gap = r - root;
    Ok((-0.5 * gap * gap).exp())
}
