//! Base map, singularity sets, fibre maps and the circle skew-product
//! `(x, u) -> (f x, u + phi(x))`.
//!
//! Circle coordinates live in `[0, 1)` and are reduced after every addition.
//! Birkhoff sums of the fibre map are kept as real lifts.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};

/// Reduce a real number to its representative in `[0, 1)`.
pub fn wrap_unit(u: f64) -> f64 {
    let r = u - u.floor();
    // `u - floor(u)` rounds up to 1.0 for tiny negative inputs.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two points of the circle `R / Z`.
pub fn circle_distance(u: f64, v: f64) -> f64 {
    let d = wrap_unit(u - v);
    d.min(1.0 - d)
}

/// One affine branch `x -> slope * x + offset` on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub offset: f64,
}

impl Branch {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.offset
    }
}

/// A piecewise affine expanding map of `[0, 1]`.
///
/// Branch domains are half-open and contiguous. Interior breakpoints and the
/// right end `1` are rejected on evaluation; `0` belongs to the first branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMap {
    branches: Vec<Branch>,
    expansion_floor: f64,
}

impl BaseMap {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidParameter("base map needs a branch".into()));
        }
        if branches[0].lo != 0.0 || branches[branches.len() - 1].hi != 1.0 {
            return Err(Error::InvalidParameter(
                "branch domains must cover [0, 1]".into(),
            ));
        }
        for pair in branches.windows(2) {
            if pair[0].hi != pair[1].lo {
                return Err(Error::InvalidParameter(format!(
                    "branch domains are not contiguous at {}",
                    pair[0].hi
                )));
            }
        }
        let mut floor = f64::INFINITY;
        for b in &branches {
            if !(b.lo < b.hi) {
                return Err(Error::InvalidParameter(format!(
                    "empty branch [{}, {})",
                    b.lo, b.hi
                )));
            }
            let (y0, y1) = (b.apply(b.lo), b.apply(b.hi));
            let (ymin, ymax) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
            if ymin < -1e-12 || ymax > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "branch [{}, {}) does not map into [0, 1]",
                    b.lo, b.hi
                )));
            }
            floor = floor.min(b.slope.abs());
        }
        if floor <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "expansion floor {floor} must exceed 1"
            )));
        }
        Ok(Self {
            branches,
            expansion_floor: floor,
        })
    }

    /// The doubling map `x -> 2x mod 1`.
    pub fn doubling() -> Self {
        Self {
            branches: vec![
                Branch {
                    lo: 0.0,
                    hi: 0.5,
                    slope: 2.0,
                    offset: 0.0,
                },
                Branch {
                    lo: 0.5,
                    hi: 1.0,
                    slope: 2.0,
                    offset: -1.0,
                },
            ],
            expansion_floor: 2.0,
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn expansion_floor(&self) -> f64 {
        self.expansion_floor
    }

    pub fn is_doubling(&self) -> bool {
        *self == Self::doubling()
    }

    /// Interior breakpoints together with the right end of the interval.
    pub fn endpoints(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.hi).collect()
    }

    pub fn branch_index(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { x });
        }
        if x == 1.0 {
            return Err(Error::BranchEndpoint { x });
        }
        let idx = self
            .branches
            .iter()
            .position(|b| b.contains(x))
            .ok_or(Error::OutOfDomain { x })?;
        if idx > 0 && x == self.branches[idx].lo {
            return Err(Error::BranchEndpoint { x });
        }
        Ok(idx)
    }

    /// `f(x)`, in `[0, 1)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let b = &self.branches[self.branch_index(x)?];
        Ok(b.apply(x).clamp(0.0, 1.0 - f64::EPSILON / 2.0))
    }

    /// `Df(x)`. Defined at an interior breakpoint when the adjacent slopes agree.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        match self.branch_index(x) {
            Ok(i) => Ok(self.branches[i].slope),
            Err(Error::BranchEndpoint { x }) if x < 1.0 => {
                let i = self.branches.iter().position(|b| b.lo == x).unwrap();
                let (left, right) = (self.branches[i - 1].slope, self.branches[i].slope);
                if left == right {
                    Ok(right)
                } else {
                    Err(Error::BranchEndpoint { x })
                }
            }
            Err(e) => Err(e),
        }
    }

    /// `f^n(x)`.
    pub fn iterate(&self, x: f64, n: usize) -> Result<f64> {
        let mut y = x;
        for index in 0..n {
            y = self
                .eval(y)
                .map_err(|_| Error::ExcludedIterate { index, x: y })?;
        }
        Ok(y)
    }

    /// The points `x, f x, ..., f^{n-1} x`.
    pub fn orbit(&self, x: f64, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut y = x;
        for index in 0..n {
            if index > 0 {
                y = self
                    .eval(y)
                    .map_err(|_| Error::ExcludedIterate { index: index - 1, x: y })?;
            }
            out.push(y);
        }
        // the last point must itself be a valid evaluation point
        if let Some(&last) = out.last() {
            self.branch_index(last)
                .map_err(|_| Error::ExcludedIterate { index: n - 1, x: last })?;
        }
        Ok(out)
    }
}

/// A finite set of singular points in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularitySet {
    points: Vec<f64>,
}

impl SingularitySet {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("singularity set is empty".into()));
        }
        if let Some(bad) = points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!(
                "singularity {bad} lies outside [0, 1]"
            )));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(w) = points.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "singularity {} declared twice",
                w[0]
            )));
        }
        Ok(Self { points })
    }

    /// `S = {1}`.
    pub fn right_end() -> Self {
        Self { points: vec![1.0] }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn contains(&self, x: f64) -> bool {
        self.points.contains(&x)
    }

    pub fn dist(&self, x: f64) -> f64 {
        self.points
            .iter()
            .map(|&p| (x - p).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Truncated distance: `dist(x, S)` when it is below `delta`, else `1`.
    pub fn dist_trunc(&self, delta: f64, x: f64) -> f64 {
        let d = self.dist(x);
        if d < delta {
            d
        } else {
            1.0
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A fibre map given by user supplied value and derivative evaluators.
#[derive(Clone)]
pub struct TableFibre {
    pub name: String,
    pub value: RealFn,
    pub derivative: RealFn,
    pub singularities: SingularitySet,
    pub singular_exponent: f64,
    pub twist_constant: f64,
}

/// The closed family of fibre maps `phi: [0, 1] -> R`.
#[derive(Clone)]
pub enum FibreMap {
    /// `phi(x) = (1 - x)^a`, singular at `1`.
    Power { a: f64 },
    /// Bounded, continuous, unbounded twist at `1/2`:
    /// `2 - 2x - sqrt(1 - 2x)` left of `1/2`, `2 - 2x + sqrt(2x - 1)` right of it.
    SmoothCounterexample,
    /// The doubling coboundary `phi(x) = x^{-a} - (2x mod 1)^{-a}`.
    Coboundary { a: f64 },
    Table(TableFibre),
}

impl fmt::Debug for FibreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FibreMap::Power { a } => write!(f, "Power {{ a: {a} }}"),
            FibreMap::SmoothCounterexample => write!(f, "SmoothCounterexample"),
            FibreMap::Coboundary { a } => write!(f, "Coboundary {{ a: {a} }}"),
            FibreMap::Table(t) => write!(f, "Table({})", t.name),
        }
    }
}

impl FibreMap {
    pub fn power(a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power exponent a = {a} must lie in (0, 1]"
            )));
        }
        Ok(FibreMap::Power { a })
    }

    pub fn coboundary(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coboundary exponent a = {a} must be positive"
            )));
        }
        Ok(FibreMap::Coboundary { a })
    }

    pub fn label(&self) -> String {
        match self {
            FibreMap::Power { .. } => "power".into(),
            FibreMap::SmoothCounterexample => "smooth_counterexample".into(),
            FibreMap::Coboundary { .. } => "coboundary".into(),
            FibreMap::Table(t) => t.name.clone(),
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        match self {
            FibreMap::Power { a } | FibreMap::Coboundary { a } => Some(*a),
            _ => None,
        }
    }

    pub fn singularities(&self) -> SingularitySet {
        match self {
            FibreMap::Power { .. } => SingularitySet::right_end(),
            FibreMap::SmoothCounterexample => SingularitySet { points: vec![0.5] },
            FibreMap::Coboundary { .. } => SingularitySet {
                points: vec![0.0, 0.5, 1.0],
            },
            FibreMap::Table(t) => t.singularities.clone(),
        }
    }

    /// The exponent `s` in `|Dphi / Df| <= C dist(x, S)^{-s}` (doubling base).
    pub fn singular_exponent(&self) -> f64 {
        match self {
            FibreMap::Power { a } => 1.0 - a,
            FibreMap::SmoothCounterexample => 0.5,
            FibreMap::Coboundary { a } => 1.0 + a,
            FibreMap::Table(t) => t.singular_exponent,
        }
    }

    /// The constant `C` in `|Dphi / Df| <= C dist(x, S)^{-s}` (doubling base).
    pub fn twist_constant(&self) -> f64 {
        match self {
            FibreMap::Power { .. } => 0.5,
            FibreMap::SmoothCounterexample => 3.0 / (2.0 * std::f64::consts::SQRT_2),
            FibreMap::Coboundary { a } => 1.5 * a,
            FibreMap::Table(t) => t.twist_constant,
        }
    }

    fn check(&self, x: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { x });
        }
        if self.singularities().contains(x) {
            return Err(Error::Singularity { x });
        }
        Ok(())
    }

    /// `phi(x)` as a real lift.
    pub fn value(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            FibreMap::Power { a } => (1.0 - x).powf(*a),
            FibreMap::SmoothCounterexample => {
                if x < 0.5 {
                    2.0 - 2.0 * x - (1.0 - 2.0 * x).sqrt()
                } else {
                    2.0 - 2.0 * x + (2.0 * x - 1.0).sqrt()
                }
            }
            FibreMap::Coboundary { a } => x.powf(-a) - doubling_image(x).powf(-a),
            FibreMap::Table(t) => (t.value)(x),
        })
    }

    /// `Dphi(x)`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            FibreMap::Power { a } => -a * (1.0 - x).powf(a - 1.0),
            FibreMap::SmoothCounterexample => {
                if x < 0.5 {
                    -2.0 + (1.0 - 2.0 * x).powf(-0.5)
                } else {
                    -2.0 + (2.0 * x - 1.0).powf(-0.5)
                }
            }
            FibreMap::Coboundary { a } => {
                -a * x.powf(-a - 1.0) + 2.0 * a * doubling_image(x).powf(-a - 1.0)
            }
            FibreMap::Table(t) => (t.derivative)(x),
        })
    }
}

fn doubling_image(x: f64) -> f64 {
    let y = 2.0 * x;
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

/// `|Dphi(x)| / |Df(x)|`.
pub fn twist_ratio(fib: &FibreMap, map: &BaseMap, x: f64) -> Result<f64> {
    let df = map.derivative(x)?;
    Ok(fib.derivative(x)?.abs() / df.abs())
}

/// Birkhoff sum `S_n phi(x) = sum_{j < n} phi(f^j x)`, kept as a real lift.
pub fn birkhoff_sum(map: &BaseMap, fib: &FibreMap, x: f64, n: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut y = x;
    for index in 0..n {
        if index > 0 {
            y = map
                .eval(y)
                .map_err(|_| Error::ExcludedIterate { index: index - 1, x: y })?;
        }
        sum += fib.value(y).map_err(|e| match e {
            Error::Singularity { x } => Error::ExcludedIterate { index, x },
            other => other,
        })?;
    }
    Ok(sum)
}

/// A point of `[0, 1] x S^1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewState {
    pub x: f64,
    pub u: f64,
}

impl SkewState {
    pub fn new(x: f64, u: f64) -> Self {
        Self { x, u: wrap_unit(u) }
    }

    /// Max of the base distance and the circle distance.
    pub fn distance(&self, other: &SkewState) -> f64 {
        (self.x - other.x)
            .abs()
            .max(circle_distance(self.u, other.u))
    }
}

/// `(x, u) -> (f x, u + phi(x) mod 1)`.
pub fn skew_step(map: &BaseMap, fib: &FibreMap, z: SkewState) -> Result<SkewState> {
    let phi = fib.value(z.x)?;
    let x = map.eval(z.x)?;
    Ok(SkewState::new(x, z.u + phi))
}

/// Exact orbit of the doubling map on a binary expansion.
///
/// The point is held as a 128-bit fraction; iterating shifts the expansion
/// left. When fewer than 64 significant bits remain, 64 fresh bits are drawn
/// from the supplied source. Lebesgue-typical points have i.i.d. fair binary
/// digits, so the lazily extended expansion is an exact sample of the orbit
/// of a uniform point rather than a rounded floating point orbit, which
/// would collapse to `0` after about 53 steps.
#[derive(Debug, Clone, Copy)]
pub struct DoublingOrbit {
    bits: u128,
    valid: u32,
}

impl DoublingOrbit {
    /// A uniformly random starting point.
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let hi = rng.next_u64() as u128;
        let lo = rng.next_u64() as u128;
        Self {
            bits: (hi << 64) | lo,
            valid: 128,
        }
    }

    /// Starts from the leading 53 bits of `x in [0, 1)`; later digits come
    /// from the refill source.
    pub fn from_f64(x: f64) -> Self {
        let m = (wrap_unit(x) * (1u64 << 53) as f64) as u128;
        Self {
            bits: m << 75,
            valid: 53,
        }
    }

    /// Current point, taken at the midpoint of its 53-bit dyadic interval
    /// so it never coincides with `0`, `1/2` or `1`.
    pub fn point(&self) -> f64 {
        ((self.bits >> 75) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn step<R: RngCore>(&mut self, rng: &mut R) {
        self.bits <<= 1;
        self.valid -= 1;
        if self.valid < 64 {
            self.bits |= (rng.next_u64() as u128) << (64 - self.valid);
            self.valid += 64;
        }
    }
}

/// Map and fibre selection parsed from a `key=value` configuration.
///
/// Recognised keys: `map` (`doubling`), `fibre`
/// (`power | smooth_counterexample | coboundary`), `a`, `singularities`
/// (comma separated list, checked against the fibre's own set).
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub map: BaseMap,
    pub fibre: FibreMap,
    pub singularities: SingularitySet,
}

impl SystemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = None;
        let mut fibre = None;
        let mut a = None;
        let mut sing = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "map" => map = Some(value.to_string()),
                "fibre" | "fiber" => fibre = Some(value.to_string()),
                "a" => {
                    a = Some(value.parse::<f64>().map_err(|_| {
                        Error::Config(format!("line {}: bad real '{value}'", lineno + 1))
                    })?)
                }
                "singularities" => {
                    let pts = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| {
                            Error::Config(format!("line {}: bad list '{value}'", lineno + 1))
                        })?;
                    sing = Some(SingularitySet::new(pts)?);
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        let map = match map.as_deref().unwrap_or("doubling") {
            "doubling" => BaseMap::doubling(),
            other => return Err(Error::Config(format!("unknown map '{other}'"))),
        };
        let a = a.unwrap_or(0.5);
        let fibre = match fibre.as_deref().unwrap_or("power") {
            "power" => FibreMap::power(a)?,
            "smooth_counterexample" => FibreMap::SmoothCounterexample,
            "coboundary" => FibreMap::coboundary(a)?,
            other => return Err(Error::Config(format!("unknown fibre '{other}'"))),
        };
        let own = fibre.singularities();
        let singularities = match sing {
            Some(s) => {
                if let Some(p) = own.points().iter().find(|p| !s.contains(**p)) {
                    return Err(Error::Config(format!(
                        "singularities must include {p}, a singular point of the {} fibre",
                        fibre.label()
                    )));
                }
                s
            }
            None => own,
        };
        Ok(Self {
            map,
            fibre,
            singularities,
        })
    }
}
