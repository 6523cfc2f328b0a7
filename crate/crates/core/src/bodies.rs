//! Membership-oracle bodies and their `(α, β)` volume-growth certificates.
//!
//! A certificate `(α, β)` asserts `Vol(X ⊕ B_t) ≤ α (1 + tβ)^n Vol(X)` for every
//! `t > 0`. Primitive convex bodies get theirs from an inscribed ball
//! (`β = 1/r`); the combinators propagate certificates through union,
//! exclusion and star-shaped gluing. Bodies are immutable and cheap to clone.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::specfun::ln_gamma;

/// Axis-aligned box guaranteed to contain a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("bounding box corners must share a positive dimension"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(invalid("bounding box needs finite lo <= hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// The box grown by `t` on every side.
    pub fn inflate(&self, t: f64) -> BBox {
        BBox {
            lo: self.lo.iter().map(|l| l - t).collect(),
            hi: self.hi.iter().map(|h| h + t).collect(),
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, l), h) in out.iter_mut().zip(&self.lo).zip(&self.hi) {
            *o = l + (h - l) * rng.random::<f64>();
        }
    }
}

/// Which construction produced a growth certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateSource {
    Convex,
    StarShaped,
    Union,
    Exclusion,
    Manual,
    NaiveBallSandwich,
}

/// An `(α, β)` volume-growth certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub alpha: f64,
    pub beta: f64,
    pub source: CertificateSource,
}

impl GrowthCertificate {
    pub fn new(alpha: f64, beta: f64, source: CertificateSource) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidCertificate(format!("alpha must be a finite value >= 1, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidCertificate(format!("beta must be finite and > 0, got {beta}")));
        }
        Ok(Self { alpha, beta, source })
    }

    /// The certified upper bound on `Vol(X_t) / Vol(X)`.
    pub fn growth_bound(&self, t: f64, dim: usize) -> f64 {
        self.alpha * (1.0 + t * self.beta).powi(dim as i32)
    }
}

/// A ball `B(center, radius)` known to lie inside a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let half = 0.5 * n as f64;
    (half * std::f64::consts::PI.ln() - ln_gamma(half + 1.0)).exp()
}

type Predicate = dyn Fn(&[f64]) -> bool + Send + Sync;

#[derive(Clone)]
enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Cuboid { lo: Vec<f64>, hi: Vec<f64> },
    Polytope { a: Vec<Vec<f64>>, b: Vec<f64> },
    Union(Vec<Body>),
    Exclusion { outer: Body, hole: Body, hole_ball_inside: bool },
    Custom(Arc<Predicate>),
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Shape::Cuboid { lo, hi } => write!(f, "Box({lo:?}, {hi:?})"),
            Shape::Polytope { a, .. } => write!(f, "Polytope({} rows)", a.len()),
            Shape::Union(parts) => f.debug_tuple("Union").field(parts).finish(),
            Shape::Exclusion { outer, hole, .. } => write!(f, "Exclusion({outer:?} \\ {hole:?})"),
            Shape::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug)]
struct BodyInner {
    shape: Shape,
    dim: usize,
    bbox: BBox,
    exact_volume: Option<f64>,
    growth: Option<GrowthCertificate>,
    inner_ball: Option<InnerBall>,
    convex: bool,
}

/// A compact body accessed through its membership oracle, plus the geometric
/// metadata the planner and diagnostics rely on.
#[derive(Debug, Clone)]
pub struct Body(Arc<BodyInner>);

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_point(what: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(invalid(format!("{what} must have dimension >= 1")));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite coordinates")));
    }
    Ok(())
}

impl Body {
    fn from_inner(inner: BodyInner) -> Self {
        Body(Arc::new(inner))
    }

    /// Closed Euclidean ball.
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_point("ball center", &center)?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("ball radius must be positive, got {radius}")));
        }
        let n = center.len();
        let bbox = BBox {
            lo: center.iter().map(|c| c - radius).collect(),
            hi: center.iter().map(|c| c + radius).collect(),
        };
        Ok(Self::from_inner(BodyInner {
            dim: n,
            bbox,
            exact_volume: Some(unit_ball_volume(n) * radius.powi(n as i32)),
            growth: Some(GrowthCertificate::new(1.0, 1.0 / radius, CertificateSource::Convex)?),
            inner_ball: Some(InnerBall { center: center.clone(), radius }),
            convex: true,
            shape: Shape::Ball { center, radius },
        }))
    }

    /// Closed axis-aligned box `[lo, hi]`.
    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_point("box lo", &lo)?;
        check_point("box hi", &hi)?;
        if lo.len() != hi.len() {
            return Err(invalid("box corners have different dimensions"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l)) {
            return Err(invalid("box is degenerate: need lo < hi on every axis"));
        }
        let min_side = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
        let radius = 0.5 * min_side;
        let center = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let bbox = BBox { lo: lo.clone(), hi: hi.clone() };
        Ok(Self::from_inner(BodyInner {
            dim: lo.len(),
            exact_volume: Some(bbox.volume()),
            bbox,
            growth: Some(GrowthCertificate::new(1.0, 1.0 / radius, CertificateSource::Convex)?),
            inner_ball: Some(InnerBall { center, radius }),
            convex: true,
            shape: Shape::Cuboid { lo, hi },
        }))
    }

    /// Polytope `{x : A x ≤ b}` with a caller-certified inscribed ball. The
    /// bounding box is derived by vertex enumeration, so this is meant for
    /// modest row counts in low dimension.
    pub fn halfspace_polytope(a: Vec<Vec<f64>>, b: Vec<f64>, inner_center: Vec<f64>, inner_radius: f64) -> Result<Self> {
        check_point("polytope inner-ball center", &inner_center)?;
        let n = inner_center.len();
        if a.is_empty() || a.len() != b.len() {
            return Err(invalid("polytope needs matching non-empty A and b"));
        }
        if a.iter().any(|row| row.len() != n) {
            return Err(invalid("every polytope row must match the inner-ball dimension"));
        }
        if a.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(invalid("polytope data must be finite"));
        }
        if !(inner_radius > 0.0) {
            return Err(invalid(format!("inner radius must be positive, got {inner_radius}")));
        }
        for (i, (row, bi)) in a.iter().zip(&b).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let reach = row.iter().zip(&inner_center).map(|(r, c)| r * c).sum::<f64>() + inner_radius * norm;
            if reach > *bi + 1e-12 * (1.0 + bi.abs()) {
                return Err(Error::InvalidCertificate(format!(
                    "inner ball leaves halfspace {i}: a·c + r‖a‖ = {reach} > b = {bi}"
                )));
            }
        }
        let bbox = polytope_bbox(&a, &b, n)?;
        Ok(Self::from_inner(BodyInner {
            dim: n,
            bbox,
            exact_volume: None,
            growth: Some(GrowthCertificate::new(1.0, 1.0 / inner_radius, CertificateSource::Convex)?),
            inner_ball: Some(InnerBall { center: inner_center, radius: inner_radius }),
            convex: true,
            shape: Shape::Polytope { a, b },
        }))
    }

    /// A body given by an arbitrary predicate. Membership is clipped to `bbox`.
    /// No certificate or volume is attached; use the `with_*` builders.
    pub fn from_predicate<F>(bbox: BBox, membership: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        Self::from_inner(BodyInner {
            dim: bbox.dim(),
            bbox,
            exact_volume: None,
            growth: None,
            inner_ball: None,
            convex: false,
            shape: Shape::Custom(Arc::new(membership)),
        })
    }

    /// Union of certified parts. `union_volume` is the caller-supplied volume
    /// of the union itself; overlaps inflate `α` by `Σ Vol(X^i) / Vol(X)`.
    pub fn union(parts: Vec<Body>, union_volume: f64) -> Result<Self> {
        let (dim, bbox) = common_frame(&parts, "union")?;
        let mut vols = Vec::with_capacity(parts.len());
        let mut certs = Vec::with_capacity(parts.len());
        for (i, p) in parts.iter().enumerate() {
            let v = p.exact_volume().ok_or_else(|| invalid(format!("union part {i} has no exact volume")))?;
            let c = p.growth().ok_or_else(|| invalid(format!("union part {i} has no growth certificate")))?;
            vols.push(v);
            certs.push(c);
        }
        let total: f64 = vols.iter().sum();
        if !(union_volume > 0.0) || union_volume > total {
            return Err(invalid(format!(
                "union volume must lie in (0, Σ Vol = {total}], got {union_volume}"
            )));
        }
        let alpha_max = certs.iter().map(|c| c.alpha).fold(1.0, f64::max);
        let beta_max = certs.iter().map(|c| c.beta).fold(0.0, f64::max);
        let n = dim as i32;
        let weighted: f64 = vols.iter().zip(&certs).map(|(v, c)| v * (c.beta / beta_max).powi(n)).sum::<f64>() / total;
        let beta = (beta_max * weighted.powf(1.0 / dim as f64)).min(beta_max);
        let growth = GrowthCertificate::new(alpha_max * total / union_volume, beta, CertificateSource::Union)?;
        let inner_ball = largest_inner_ball(&parts);
        Ok(Self::from_inner(BodyInner {
            shape: Shape::Union(parts),
            dim,
            bbox,
            exact_volume: Some(union_volume),
            growth: Some(growth),
            inner_ball,
            convex: false,
        }))
    }

    /// `outer` with the interior of `hole` removed; the result stays closed.
    pub fn exclusion(outer: Body, hole: Body, remaining_volume: f64) -> Result<Self> {
        if outer.dim() != hole.dim() {
            return Err(invalid("exclusion operands have different dimensions"));
        }
        let cert = outer.growth().ok_or_else(|| invalid("exclusion outer body has no growth certificate"))?;
        let outer_vol = outer.exact_volume().ok_or_else(|| invalid("exclusion outer body has no exact volume"))?;
        if !(remaining_volume > 0.0) || remaining_volume > outer_vol {
            return Err(invalid(format!(
                "remaining volume must lie in (0, Vol(outer) = {outer_vol}], got {remaining_volume}"
            )));
        }
        let growth = GrowthCertificate::new(cert.alpha * outer_vol / remaining_volume, cert.beta, CertificateSource::Exclusion)?;
        let hole_ball_inside = hole_ball_contained(&outer, &hole);
        Ok(Self::from_inner(BodyInner {
            dim: outer.dim(),
            bbox: outer.bbox().clone(),
            exact_volume: Some(remaining_volume),
            growth: Some(growth),
            inner_ball: None,
            convex: false,
            shape: Shape::Exclusion { outer, hole, hole_ball_inside },
        }))
    }

    /// Star-shaped union of convex parts whose common core contains the ball
    /// of radius `core_inner_radius` at the origin. The core claim is trusted;
    /// a probe check that each part contains that ball runs here.
    pub fn star_shaped(parts: Vec<Body>, core_inner_radius: f64) -> Result<Self> {
        if !(core_inner_radius > 0.0) || !core_inner_radius.is_finite() {
            return Err(invalid(format!("core inner radius must be positive, got {core_inner_radius}")));
        }
        let (dim, bbox) = common_frame(&parts, "star-shaped body")?;
        if let Some(i) = parts.iter().position(|p| !p.is_convex()) {
            return Err(invalid(format!("star-shaped part {i} is not convex")));
        }
        let origin = vec![0.0; dim];
        for (i, p) in parts.iter().enumerate() {
            if !ball_probes_inside(p, &origin, core_inner_radius, 0x5eed_0000 + i as u64) {
                return Err(Error::InvalidCertificate(format!(
                    "star-shaped part {i} does not contain the core ball of radius {core_inner_radius}"
                )));
            }
        }
        let growth = GrowthCertificate::new(1.0, 1.0 / core_inner_radius, CertificateSource::StarShaped)?;
        Ok(Self::from_inner(BodyInner {
            shape: Shape::Union(parts),
            dim,
            bbox,
            exact_volume: None,
            growth: Some(growth),
            inner_ball: Some(InnerBall { center: origin, radius: core_inner_radius }),
            convex: false,
        }))
    }

    fn rebuild(&self, f: impl FnOnce(&mut BodyInner)) -> Self {
        let mut inner = BodyInner {
            shape: self.0.shape.clone(),
            dim: self.0.dim,
            bbox: self.0.bbox.clone(),
            exact_volume: self.0.exact_volume,
            growth: self.0.growth,
            inner_ball: self.0.inner_ball.clone(),
            convex: self.0.convex,
        };
        f(&mut inner);
        Self::from_inner(inner)
    }

    /// Attach a known volume.
    pub fn with_exact_volume(&self, volume: f64) -> Result<Self> {
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(invalid(format!("volume must be positive, got {volume}")));
        }
        Ok(self.rebuild(|b| b.exact_volume = Some(volume)))
    }

    /// Replace the growth certificate (e.g. with a naive sandwich bound).
    pub fn with_growth(&self, growth: GrowthCertificate) -> Self {
        self.rebuild(|b| b.growth = Some(growth))
    }

    pub fn with_inner_ball(&self, ball: InnerBall) -> Result<Self> {
        if ball.center.len() != self.dim() || !(ball.radius > 0.0) {
            return Err(invalid("inner ball must match the body dimension and have positive radius"));
        }
        Ok(self.rebuild(|b| b.inner_ball = Some(ball)))
    }

    /// Declare a custom body convex, making it usable as a star-shaped part.
    pub fn assume_convex(&self) -> Self {
        self.rebuild(|b| b.convex = true)
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn bbox(&self) -> &BBox {
        &self.0.bbox
    }

    pub fn exact_volume(&self) -> Option<f64> {
        self.0.exact_volume
    }

    pub fn growth(&self) -> Option<GrowthCertificate> {
        self.0.growth
    }

    pub fn inner_ball(&self) -> Option<&InnerBall> {
        self.0.inner_ball.as_ref()
    }

    pub fn is_convex(&self) -> bool {
        self.0.convex
    }

    /// The membership oracle `1_X(x)`.
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.0.dim);
        match &self.0.shape {
            Shape::Ball { center, radius } => dist2(x, center) <= radius * radius,
            Shape::Cuboid { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *l <= *v && *v <= *h),
            Shape::Polytope { a, b } => a.iter().zip(b).all(|(row, bi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() <= *bi),
            Shape::Union(parts) => parts.iter().any(|p| p.contains(x)),
            Shape::Exclusion { outer, hole, .. } => outer.contains(x) && !hole.contains_interior(x),
            Shape::Custom(f) => self.0.bbox.contains(x) && f(x),
        }
    }

    /// Membership in the interior. Exact for the primitive shapes; for unions
    /// it is the union of part interiors, which differs from the true interior
    /// only on a null set.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        match &self.0.shape {
            Shape::Ball { center, radius } => dist2(x, center) < radius * radius,
            Shape::Cuboid { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *l < *v && *v < *h),
            Shape::Polytope { a, b } => a.iter().zip(b).all(|(row, bi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() < *bi),
            Shape::Union(parts) => parts.iter().any(|p| p.contains_interior(x)),
            Shape::Exclusion { outer, hole, .. } => outer.contains_interior(x) && !hole.contains(x),
            Shape::Custom(_) => self.contains(x),
        }
    }

    /// Closed-form `dist(x, X)` when one is known for this body.
    pub fn distance(&self, x: &[f64]) -> Option<f64> {
        match &self.0.shape {
            Shape::Ball { center, radius } => Some((dist2(x, center).sqrt() - radius).max(0.0)),
            Shape::Cuboid { lo, hi } => Some(
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (l, h))| {
                        let d = (l - v).max(v - h).max(0.0);
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt(),
            ),
            Shape::Union(parts) => {
                let mut best = f64::INFINITY;
                for p in parts {
                    best = best.min(p.distance(x)?);
                }
                Some(best)
            }
            Shape::Exclusion { outer, hole, hole_ball_inside: true } => {
                let Shape::Ball { center, radius } = &hole.0.shape else { unreachable!() };
                let r = dist2(x, center).sqrt();
                if r < *radius {
                    Some(radius - r)
                } else {
                    // The open hole sits inside `outer`, so the nearest point
                    // of `outer` to an outside point is never removed.
                    outer.distance(x)
                }
            }
            _ => None,
        }
    }

    pub fn has_distance(&self) -> bool {
        match &self.0.shape {
            Shape::Ball { .. } | Shape::Cuboid { .. } => true,
            Shape::Union(parts) => parts.iter().all(Body::has_distance),
            Shape::Exclusion { hole_ball_inside, .. } => *hole_ball_inside,
            _ => false,
        }
    }

    /// Exact uniform draw by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, max_tries: u64) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        for _ in 0..max_tries {
            self.0.bbox.sample_uniform(rng, &mut x);
            if self.contains(&x) {
                return Ok(x);
            }
        }
        Err(Error::Unsupported(format!("bbox rejection found no interior point in {max_tries} tries")))
    }
}

/// Default rejection budget for [`Body::sample_uniform`].
pub const DEFAULT_REJECTION_TRIES: u64 = 100_000_000;

/// `((R/r)^n, 1/R)` for a body sandwiched between balls `B_r ⊆ X ⊆ B_R`.
pub fn naive_sandwich_certificate(r: f64, big_r: f64, n: u32) -> Result<GrowthCertificate> {
    if !(r > 0.0) || !(big_r >= r) || !big_r.is_finite() {
        return Err(invalid(format!("sandwich needs 0 < r <= R, got r={r}, R={big_r}")));
    }
    if n == 0 {
        return Err(invalid("sandwich needs n >= 1"));
    }
    GrowthCertificate::new((big_r / r).powi(n as i32), 1.0 / big_r, CertificateSource::NaiveBallSandwich)
}

fn common_frame(parts: &[Body], what: &str) -> Result<(usize, BBox)> {
    let first = parts.first().ok_or_else(|| invalid(format!("{what} needs at least one part")))?;
    let dim = first.dim();
    if parts.iter().any(|p| p.dim() != dim) {
        return Err(invalid(format!("{what} parts have different dimensions")));
    }
    let bbox = parts.iter().skip(1).fold(first.bbox().clone(), |acc, p| acc.hull(p.bbox()));
    Ok((dim, bbox))
}

fn largest_inner_ball(parts: &[Body]) -> Option<InnerBall> {
    parts
        .iter()
        .filter_map(|p| p.inner_ball())
        .max_by(|a, b| a.radius.total_cmp(&b.radius))
        .cloned()
}

fn hole_ball_contained(outer: &Body, hole: &Body) -> bool {
    let Shape::Ball { center, radius } = &hole.0.shape else { return false };
    if !outer.has_distance() {
        return false;
    }
    match &outer.0.shape {
        Shape::Ball { center: oc, radius: or } => dist2(center, oc).sqrt() + radius <= *or,
        Shape::Cuboid { lo, hi } => center.iter().zip(lo.iter().zip(hi)).all(|(c, (l, h))| c - radius >= *l && c + radius <= *h),
        _ => false,
    }
}

/// Probe the sphere of radius `r(1 - 1e-9)` around `center` (axis points plus
/// random directions) and report whether every probe is inside `body`.
fn ball_probes_inside(body: &Body, center: &[f64], r: f64, seed: u64) -> bool {
    let n = center.len();
    let rr = r * (1.0 - 1e-9);
    let mut probe = center.to_vec();
    for i in 0..n {
        for s in [-1.0, 1.0] {
            probe.copy_from_slice(center);
            probe[i] += s * rr;
            if !body.contains(&probe) {
                return false;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut dir = vec![0.0; n];
    for _ in 0..256 {
        for d in dir.iter_mut() {
            *d = rng.sample::<f64, _>(normal);
        }
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        for ((p, c), d) in probe.iter_mut().zip(center).zip(&dir) {
            *p = c + rr * d / norm;
        }
        if !body.contains(&probe) {
            return false;
        }
    }
    true
}

const MAX_COMBINATIONS: u64 = 2_000_000;

fn binomial(m: usize, k: usize) -> u64 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((m - i) as u64) / (i as u64 + 1))
}

fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > m {
        return;
    }
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Bounding box of `{A x ≤ b}` from its vertices, after proving boundedness
/// by showing the recession cone `{d : A d ≤ 0}` has no extreme ray.
fn polytope_bbox(a: &[Vec<f64>], b: &[f64], n: usize) -> Result<BBox> {
    let m = a.len();
    if binomial(m, n) > MAX_COMBINATIONS || (n > 1 && binomial(m, n - 1) > MAX_COMBINATIONS) {
        return Err(Error::Unsupported(format!("polytope with {m} rows in dimension {n} is too large for vertex enumeration")));
    }
    let scale = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-9 * scale;

    let mut unbounded = false;
    if n == 1 {
        unbounded = [-1.0, 1.0].iter().any(|d| a.iter().all(|row| row[0] * d <= tol));
    } else {
        for_each_combination(m, n - 1, |rows| {
            if unbounded {
                return;
            }
            // Null direction of the (n-1)×n subsystem via signed cofactors.
            let mut d = vec![0.0; n];
            for (j, dj) in d.iter_mut().enumerate() {
                let minor = DMatrix::from_fn(n - 1, n - 1, |r, c| a[rows[r]][if c < j { c } else { c + 1 }]);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                *dj = sign * minor.determinant();
            }
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= tol.powi((n - 1) as i32) {
                return;
            }
            for s in [-1.0, 1.0] {
                if a.iter().all(|row| s * row.iter().zip(&d).map(|(r, v)| r * v).sum::<f64>() / norm <= tol) {
                    unbounded = true;
                }
            }
        });
    }
    if unbounded {
        return Err(invalid("polytope is unbounded"));
    }

    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut found = false;
    for_each_combination(m, n, |rows| {
        let sys = DMatrix::from_fn(n, n, |r, c| a[rows[r]][c]);
        let rhs = nalgebra::DVector::from_fn(n, |r, _| b[rows[r]]);
        let Some(x) = sys.lu().solve(&rhs) else { return };
        if x.iter().any(|v| !v.is_finite()) {
            return;
        }
        let feasible = a.iter().zip(b).all(|(row, bi)| {
            row.iter().zip(x.iter()).map(|(r, v)| r * v).sum::<f64>() <= bi + 1e-9 * (1.0 + bi.abs())
        });
        if feasible {
            found = true;
            for (k, v) in x.iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
    });
    if !found {
        return Err(invalid("polytope has no vertices"));
    }
    // Widen by a hair so boundary points solved with rounding stay inside.
    let pad: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 1e-12 * (1.0 + l.abs().max(h.abs()))).collect();
    BBox::new(
        lo.iter().zip(&pad).map(|(l, p)| l - p).collect(),
        hi.iter().zip(&pad).map(|(h, p)| h + p).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn ball_examples() {
        let disk = Body::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(disk.contains(&[0.5, 0.0]));
        assert!(!disk.contains(&[1.5, 0.0]));
        let g = disk.growth().unwrap();
        assert_eq!((g.alpha, g.beta, g.source), (1.0, 1.0, CertificateSource::Convex));
        assert_eq!(Body::ball(vec![0.0, 0.0], 2.0).unwrap().growth().unwrap().beta, 0.5);
        let b3 = Body::ball(vec![0.0; 3], 1.0).unwrap();
        assert!(close(b3.exact_volume().unwrap(), 4.0 * PI / 3.0));
        assert!(matches!(Body::ball(vec![0.0], 0.0), Err(Error::InvalidArgument(_))));
        assert!(Body::ball(vec![0.0], -1.0).is_err());
    }

    #[test]
    fn box_examples() {
        let sq = Body::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(sq.growth().unwrap().beta, 2.0);
        let tall = Body::cuboid(vec![0.0, 0.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(tall.growth().unwrap().beta, 2.0);
        assert_eq!(tall.exact_volume(), Some(4.0));
        assert_eq!(tall.inner_ball().unwrap().radius, 0.5);
        assert!(matches!(Body::cuboid(vec![0.0, 0.0], vec![0.0, 1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn polytope_examples() {
        let a = vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]];
        let b = vec![0.0, 0.0, 2.0];
        let tri = Body::halfspace_polytope(a.clone(), b.clone(), vec![0.5, 0.5], 0.5).unwrap();
        assert_eq!(tri.growth().unwrap().beta, 2.0);
        assert_eq!(tri.exact_volume(), None);
        assert!(tri.contains(&[1.0, 1.0]) && !tri.contains(&[1.5, 1.5]));
        let bb = tri.bbox();
        assert!(bb.lo.iter().all(|v| v.abs() < 1e-9) && bb.hi.iter().all(|v| (v - 2.0).abs() < 1e-9));
        assert!(matches!(
            Body::halfspace_polytope(a, b, vec![0.5, 0.5], 10.0),
            Err(Error::InvalidCertificate(_))
        ));
    }

    #[test]
    fn polytope_rejects_unbounded() {
        // Quadrant x >= 0, y >= 0.
        let a = vec![vec![-1.0, 0.0], vec![0.0, -1.0]];
        assert!(Body::halfspace_polytope(a, vec![0.0, 0.0], vec![1.0, 1.0], 0.5).is_err());
        // Slab 0 <= x <= 1 in the plane: rank deficient.
        let a = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        assert!(Body::halfspace_polytope(a, vec![0.0, 1.0], vec![0.5, 0.0], 0.5).is_err());
    }

    #[test]
    fn square_polytope_matches_box() {
        let a = vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0]];
        let poly = Body::halfspace_polytope(a, vec![0.0, 1.0, 0.0, 1.0], vec![0.5, 0.5], 0.5).unwrap();
        let sq = Body::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probe_box = BBox::new(vec![-0.5, -0.5], vec![1.5, 1.5]).unwrap();
        let mut x = vec![0.0; 2];
        for _ in 0..1000 {
            probe_box.sample_uniform(&mut rng, &mut x);
            assert_eq!(poly.contains(&x), sq.contains(&x), "{x:?}");
        }
    }

    #[test]
    fn union_examples() {
        let d1 = Body::ball(vec![-2.0, 0.0], 1.0).unwrap();
        let d2 = Body::ball(vec![2.0, 0.0], 1.0).unwrap();
        let u = Body::union(vec![d1.clone(), d2], 2.0 * PI).unwrap();
        let g = u.growth().unwrap();
        assert!(close(g.alpha, 1.0) && close(g.beta, 1.0));
        assert_eq!(g.source, CertificateSource::Union);
        assert_eq!(u.bbox().lo, vec![-3.0, -1.0]);

        let twice = Body::union(vec![d1.clone(), d1.clone()], PI).unwrap().growth().unwrap();
        assert!(close(twice.alpha, 2.0) && close(twice.beta, 1.0));

        let p1 = Body::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap().with_growth(GrowthCertificate::new(1.0, 1.0, CertificateSource::Manual).unwrap());
        let p2 = Body::cuboid(vec![5.0, 0.0], vec![8.0, 1.0]).unwrap().with_growth(GrowthCertificate::new(2.0, 2.0, CertificateSource::Manual).unwrap());
        let mixed = Body::union(vec![p1, p2], 4.0).unwrap().growth().unwrap();
        assert!(close(mixed.alpha, 2.0));
        assert!(close(mixed.beta, 3.25f64.sqrt()), "{}", mixed.beta);

        assert!(Body::union(vec![d1.clone()], 2.0 * PI).is_err());
        let custom = Body::from_predicate(BBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), |_| true);
        assert!(Body::union(vec![d1, custom], 1.0).is_err());
    }

    #[test]
    fn exclusion_examples() {
        let outer = Body::ball(vec![0.0, 0.0], 1.0).unwrap();
        let hole = Body::ball(vec![0.0, 0.0], 0.5).unwrap();
        let ann = Body::exclusion(outer.clone(), hole.clone(), 0.75 * PI).unwrap();
        let g = ann.growth().unwrap();
        assert!(close(g.alpha, 4.0 / 3.0) && close(g.beta, 1.0));
        assert!(ann.contains(&[0.5, 0.0]), "hole boundary stays inside");
        assert!(!ann.contains(&[0.2, 0.0]));
        assert!(ann.has_distance());
        assert!(close(ann.distance(&[0.2, 0.0]).unwrap(), 0.3));
        assert!(close(ann.distance(&[0.0, 1.5]).unwrap(), 0.5));
        assert_eq!(ann.distance(&[0.7, 0.0]), Some(0.0));

        // A hole of zero volume leaves the certificate unchanged.
        let same = Body::exclusion(outer.clone(), hole.clone(), PI).unwrap().growth().unwrap();
        assert_eq!((same.alpha, same.beta), (1.0, 1.0));
        assert!(Body::exclusion(outer.clone(), hole.clone(), 1.01 * PI).is_err());
        assert!(Body::exclusion(outer, hole, 0.0).is_err());
    }

    #[test]
    fn star_examples() {
        let h = Body::cuboid(vec![-2.0, -0.5], vec![2.0, 0.5]).unwrap();
        let v = Body::cuboid(vec![-0.5, -2.0], vec![0.5, 2.0]).unwrap();
        let cross = Body::star_shaped(vec![h.clone(), v], 0.5).unwrap();
        let g = cross.growth().unwrap();
        assert_eq!((g.alpha, g.beta, g.source), (1.0, 2.0, CertificateSource::StarShaped));
        assert!(cross.contains(&[1.9, 0.0]) && cross.contains(&[0.0, -1.9]) && !cross.contains(&[1.0, 1.0]));

        let single = Body::star_shaped(vec![Body::ball(vec![0.0, 0.0], 0.8).unwrap()], 0.8).unwrap();
        assert_eq!(single.growth().unwrap().beta, 1.0 / 0.8);

        assert!(Body::star_shaped(vec![h.clone()], 0.0).is_err());
        let ann = Body::exclusion(Body::ball(vec![0.0, 0.0], 1.0).unwrap(), Body::ball(vec![0.0, 0.0], 0.5).unwrap(), 0.75 * PI).unwrap();
        assert!(Body::star_shaped(vec![h.clone(), ann], 0.1).is_err());
        assert!(matches!(Body::star_shaped(vec![h], 0.6), Err(Error::InvalidCertificate(_))));
    }

    #[test]
    fn sandwich_examples() {
        let g = naive_sandwich_certificate(1.0, 1.0, 5).unwrap();
        assert_eq!((g.alpha, g.beta), (1.0, 1.0));
        let g = naive_sandwich_certificate(1.0, 2.0, 3).unwrap();
        assert_eq!((g.alpha, g.beta, g.source), (8.0, 0.5, CertificateSource::NaiveBallSandwich));
        assert!(naive_sandwich_certificate(2.0, 1.0, 2).is_err());
    }

    #[test]
    fn box_distance() {
        let sq = Body::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(close(sq.distance(&[2.0, 2.0]).unwrap(), 2f64.sqrt()));
        assert_eq!(sq.distance(&[0.5, 0.5]), Some(0.0));
        assert!(close(sq.distance(&[-0.25, 0.5]).unwrap(), 0.25));
    }

    #[test]
    fn combination_enumeration() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen.first().unwrap(), &vec![0, 1]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3]);
        let mut count = 0;
        for_each_combination(3, 0, |_| count += 1);
        assert_eq!(count, 1);
    }
}
