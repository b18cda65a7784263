//! Monte Carlo correlations of the skew-product, exponential rate fits and
//! the measure of the slow-recurrence sets.
//!
//! The sampling measure is Lebesgue on `[0, 1) x S^1`, which is invariant for
//! the doubling skew-product. Orbits of the doubling map are generated
//! exactly through [`DoublingOrbit`].

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{BaseMap, DoublingOrbit, FibreMap, SingularitySet};
use crate::error::{Error, Result};
use crate::tower::GRID_OFFSET;

/// Number of jackknife blocks (and RNG streams) used by the estimators.
pub const BLOCKS: usize = 64;

pub type Evaluator = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;
pub type ModeEvaluator = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Correlations and `g` means with one block removed.
type LeaveOneOut = (Vec<Complex64>, Vec<Complex64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// `Y x S^1` with `Y = (0, 1/2)`; the evaluator is forced to vanish outside.
    Base,
    Everywhere,
}

/// A complex observable `g(x, u)` on `[0, 1) x S^1`, `u in R/Z`, optionally
/// with its Fourier modes `g_k(x)` so that `g = sum_k g_k(x) e^{2 pi i k u}`.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub support: Support,
    eval: Evaluator,
    modes: Vec<(i64, ModeEvaluator)>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("modes", &self.modes.iter().map(|(k, _)| *k).collect::<Vec<_>>())
            .finish()
    }
}

fn in_base(x: f64) -> bool {
    x > 0.0 && x < 0.5
}

/// Smooth bump supported on `Y`, peak `1` at `x = 1/4`.
pub fn bump(x: f64) -> f64 {
    let t = 4.0 * x - 1.0;
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

impl Observable {
    pub fn custom(
        name: impl Into<String>,
        support: Support,
        eval: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            support,
            eval: Arc::new(eval),
            modes: Vec::new(),
        }
    }

    /// `e^{2 pi i k u} bump(x)`.
    pub fn mode(k: i64) -> Self {
        let kk = k as f64;
        Self {
            name: format!("mode{k}"),
            support: Support::Base,
            eval: Arc::new(move |x, u| {
                let b = bump(x);
                if b == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::cis(TAU * (kk * u).rem_euclid(1.0)) * b
                }
            }),
            modes: vec![(k, Arc::new(|x| Complex64::new(bump(x), 0.0)))],
        }
    }

    /// `1_Y(x)`, constant along the fibre.
    pub fn base_indicator() -> Self {
        let ind = |x: f64| Complex64::new(if in_base(x) { 1.0 } else { 0.0 }, 0.0);
        Self {
            name: "indicator".into(),
            support: Support::Base,
            eval: Arc::new(move |x, _| ind(x)),
            modes: vec![(0, Arc::new(ind))],
        }
    }

    pub fn with_modes(mut self, modes: Vec<(i64, ModeEvaluator)>) -> Self {
        self.modes = modes;
        self
    }

    pub fn modes(&self) -> &[(i64, ModeEvaluator)] {
        &self.modes
    }

    /// The complex conjugate observable.
    pub fn conj(&self) -> Self {
        let f = self.eval.clone();
        Self {
            name: format!("conj({})", self.name),
            support: self.support,
            eval: Arc::new(move |x, u| f(x, u).conj()),
            modes: self
                .modes
                .iter()
                .map(|(k, m)| {
                    let m = m.clone();
                    (-k, Arc::new(move |x: f64| m(x).conj()) as ModeEvaluator)
                })
                .collect(),
        }
    }

    pub fn eval(&self, x: f64, u: f64) -> Complex64 {
        if self.support == Support::Base && !in_base(x) {
            return Complex64::new(0.0, 0.0);
        }
        (self.eval)(x, u)
    }

    /// Largest gap between `g` and its declared mode expansion on a
    /// `grid x grid` lattice; `None` when no modes are declared.
    pub fn mode_reconstruction_error(&self, grid: usize) -> Option<f64> {
        if self.modes.is_empty() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for i in 0..grid {
            let x = (i as f64 + GRID_OFFSET) / grid as f64;
            for j in 0..grid {
                let u = (j as f64 + 0.5) / grid as f64;
                let approx: Complex64 = self
                    .modes
                    .iter()
                    .map(|(k, m)| {
                        let v = if self.support == Support::Base && !in_base(x) {
                            Complex64::new(0.0, 0.0)
                        } else {
                            m(x)
                        };
                        v * Complex64::cis(TAU * (*k as f64 * u).rem_euclid(1.0))
                    })
                    .sum();
                worst = worst.max((approx - self.eval(x, u)).norm());
            }
        }
        Some(worst)
    }
}

/// `g_k(x) = int g(x, u) e^{-2 pi i k u} du` by the `m`-point trapezoidal rule,
/// exact for trigonometric polynomials of degree below `m / 2`.
pub fn fourier_coeff(
    g: &Observable,
    k: i64,
    m: usize,
) -> Result<impl Fn(f64) -> Complex64 + Send + Sync> {
    if m < 4 {
        return Err(Error::InvalidParameter(format!(
            "fibre quadrature needs at least 4 points (got {m})"
        )));
    }
    let g = g.clone();
    let twiddle: Vec<(f64, Complex64)> = (0..m)
        .map(|j| {
            let u = j as f64 / m as f64;
            (u, Complex64::cis(-TAU * ((k as f64) * u).rem_euclid(1.0)))
        })
        .collect();
    Ok(move |x: f64| {
        twiddle.iter().map(|&(u, w)| g.eval(x, u) * w).sum::<Complex64>() / m as f64
    })
}

/// Sample orbit source for the base map.
enum Orbit {
    Exact(DoublingOrbit),
    Float(f64),
}

impl Orbit {
    fn start(map: &BaseMap, rng: &mut ChaCha8Rng) -> Self {
        if map.is_doubling() {
            Orbit::Exact(DoublingOrbit::random(rng))
        } else {
            Orbit::Float(rng.random())
        }
    }

    fn point(&self) -> f64 {
        match self {
            Orbit::Exact(o) => o.point(),
            Orbit::Float(x) => *x,
        }
    }

    fn step(&mut self, map: &BaseMap, rng: &mut ChaCha8Rng) -> Option<()> {
        match self {
            Orbit::Exact(o) => o.step(rng),
            Orbit::Float(x) => *x = map.eval(*x).ok()?,
        }
        Some(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub lags: Vec<usize>,
    pub estimates: Vec<Complex64>,
    pub standard_errors: Vec<f64>,
    /// Empirical mean of `g` at each lag with its standard error.
    pub mean_g: Vec<Complex64>,
    pub mean_g_se: Vec<f64>,
    pub mean_h: Complex64,
    pub sample_count: usize,
    pub seed: u64,
    /// Samples redrawn because the orbit met an excluded point.
    pub resamples: usize,
}

impl CorrelationSeries {
    /// A series with given values at lags `0..len` (synthetic inputs).
    pub fn from_values(estimates: Vec<Complex64>, standard_errors: Vec<f64>) -> Result<Self> {
        if estimates.len() != standard_errors.len() {
            return Err(Error::InvalidParameter(
                "estimates and standard errors differ in length".into(),
            ));
        }
        let n = estimates.len();
        Ok(Self {
            lags: (0..n).collect(),
            estimates,
            standard_errors,
            mean_g: vec![Complex64::new(0.0, 0.0); n],
            mean_g_se: vec![0.0; n],
            mean_h: Complex64::new(0.0, 0.0),
            sample_count: 0,
            seed: 0,
            resamples: 0,
        })
    }
}

#[derive(Clone)]
struct BlockSums {
    count: usize,
    resamples: usize,
    g: Vec<Complex64>,
    h: Complex64,
    gh: Vec<Complex64>,
}

impl BlockSums {
    fn new(lags: usize) -> Self {
        Self {
            count: 0,
            resamples: 0,
            g: vec![Complex64::new(0.0, 0.0); lags],
            h: Complex64::new(0.0, 0.0),
            gh: vec![Complex64::new(0.0, 0.0); lags],
        }
    }

    fn add(&mut self, other: &Self, sign: f64) {
        self.count = (self.count as f64 + sign * other.count as f64) as usize;
        self.h += other.h * sign;
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += b * sign;
        }
        for (a, b) in self.gh.iter_mut().zip(&other.gh) {
            *a += b * sign;
        }
    }

    fn correlation(&self) -> Vec<Complex64> {
        let c = self.count as f64;
        let mh = self.h / c;
        self.gh.iter().zip(&self.g).map(|(gh, g)| gh / c - (g / c) * mh).collect()
    }
}

/// Runs `samples` draws split over [`BLOCKS`] independent streams of the
/// seeded generator and returns the series with jackknife errors. `path`
/// fills `g` along one orbit and returns `h` at the start, or `None` to
/// request a redraw.
fn run_blocks<F>(n_max: usize, samples: usize, seed: u64, path: F) -> Result<CorrelationSeries>
where
    F: Fn(&mut ChaCha8Rng, &mut [Complex64]) -> Option<Complex64> + Sync,
{
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let lags = n_max + 1;
    let blocks = BLOCKS.min(samples);
    let per_block = |b: usize| samples / blocks + usize::from(b < samples % blocks);
    let sums: Vec<BlockSums> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut acc = BlockSums::new(lags);
            let mut buf = vec![Complex64::new(0.0, 0.0); lags];
            let mut done = 0;
            while done < per_block(b) {
                let Some(h) = path(&mut rng, &mut buf) else {
                    acc.resamples += 1;
                    if acc.resamples > 1000 * (done + 1) {
                        return Err(Error::InvalidParameter(
                            "sampler keeps hitting excluded points".into(),
                        ));
                    }
                    continue;
                };
                acc.h += h;
                for ((g, gh), v) in acc.g.iter_mut().zip(acc.gh.iter_mut()).zip(&buf) {
                    *g += v;
                    *gh += v * h;
                }
                acc.count += 1;
                done += 1;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = BlockSums::new(lags);
    for s in &sums {
        total.add(s, 1.0);
    }
    let estimates = total.correlation();
    let c = total.count as f64;
    let mean_g: Vec<Complex64> = total.g.iter().map(|g| g / c).collect();

    // delete-one-block jackknife
    let (se, mean_g_se) = if blocks < 2 {
        (vec![0.0; lags], vec![0.0; lags])
    } else {
        let loo: Vec<LeaveOneOut> = sums
            .iter()
            .map(|s| {
                let mut rest = total.clone();
                rest.add(s, -1.0);
                let cr = rest.count as f64;
                (rest.correlation(), rest.g.iter().map(|g| g / cr).collect())
            })
            .collect();
        let b = blocks as f64;
        let spread = |pick: &dyn Fn(&LeaveOneOut) -> Complex64| {
            let mean: Complex64 = loo.iter().map(pick).sum::<Complex64>() / b;
            ((b - 1.0) / b * loo.iter().map(|l| (pick(l) - mean).norm_sqr()).sum::<f64>()).sqrt()
        };
        (
            (0..lags).map(|n| spread(&|l| l.0[n])).collect(),
            (0..lags).map(|n| spread(&|l| l.1[n])).collect(),
        )
    };
    Ok(CorrelationSeries {
        lags: (0..lags).collect(),
        estimates,
        standard_errors: se,
        mean_g,
        mean_g_se,
        mean_h: total.h / c,
        sample_count: total.count,
        seed,
        resamples: sums.iter().map(|s| s.resamples).sum(),
    })
}

/// `C(n) = E[g(f^n z) h(z)] - E[g(f^n z)] E[h(z)]`, `z` uniform on
/// `[0, 1) x S^1`, for `n = 0..=n_max`. Deterministic for a fixed seed.
pub fn correlation_mc(
    map: &BaseMap,
    fib: &FibreMap,
    g: &Observable,
    h: &Observable,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    run_blocks(n_max, samples, seed, |rng, buf| {
        let mut orbit = Orbit::start(map, rng);
        let mut u: f64 = rng.random();
        let x0 = orbit.point();
        let h0 = h.eval(x0, u);
        let lags = buf.len();
        for (n, slot) in buf.iter_mut().enumerate() {
            let x = orbit.point();
            *slot = g.eval(x, u);
            if n + 1 < lags {
                u = (u + fib.value(x).ok()?).rem_euclid(1.0);
                orbit.step(map, rng)?;
            }
        }
        Some(h0)
    })
}

/// Correlations of base observables under the base map alone.
pub fn base_correlation_mc(
    map: &BaseMap,
    g: &(dyn Fn(f64) -> f64 + Sync),
    h: &(dyn Fn(f64) -> f64 + Sync),
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    run_blocks(n_max, samples, seed, |rng, buf| {
        let mut orbit = Orbit::start(map, rng);
        let h0 = h(orbit.point());
        let lags = buf.len();
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(g(orbit.point()), 0.0);
            if n + 1 < lags {
                orbit.step(map, rng)?;
            }
        }
        Some(Complex64::new(h0, 0.0))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub theta: f64,
    /// Standard error of the fitted log-slope.
    pub confidence: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Weighted root mean square of the log residuals over the window.
    pub residual_rms: f64,
    pub window: (usize, usize),
    /// First lag at which `|C| <= 3 se`, if reached.
    pub noise_floor: Option<usize>,
}

/// Weighted least squares of `log y` on `x`; returns (slope, intercept,
/// slope standard error, weighted rms residual).
fn log_linear_fit(points: &[(f64, f64, f64)]) -> (f64, f64, f64, f64) {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let sx: f64 = points.iter().map(|p| p.2 * p.0).sum();
    let sy: f64 = points.iter().map(|p| p.2 * p.1.ln()).sum();
    let sxx: f64 = points.iter().map(|p| p.2 * p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * p.0 * p.1.ln()).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let resid: Vec<f64> = points.iter().map(|p| p.1.ln() - intercept - slope * p.0).collect();
    let m = points.len() as f64;
    let wrss: f64 = points.iter().zip(&resid).map(|(p, r)| p.2 * r * r).sum();
    let dof = (m - 2.0).max(1.0);
    let slope_se = (wrss / dof * sw / det).sqrt();
    let rms = (wrss / sw).sqrt();
    (slope, intercept, slope_se, rms)
}

/// Fits `|C(n)| ~ A theta^n` over the signal window: lags from `n_min` up to
/// the first lag (at most `n_max`) where `|C| <= 3 se`. Weights are
/// `(|C| / se)^2`, or uniform when the errors vanish.
pub fn fit_rate(series: &CorrelationSeries, n_min: usize, n_max: usize) -> Result<RateFit> {
    let last = n_max.min(series.lags.len().saturating_sub(1));
    let mut pts = Vec::new();
    let mut noise_floor = None;
    for n in n_min..=last {
        let c = series.estimates[n].norm();
        let se = series.standard_errors[n];
        if !(c > 3.0 * se) || c == 0.0 {
            noise_floor = Some(series.lags[n]);
            break;
        }
        let w = if se > 0.0 { (c / se).powi(2) } else { 1.0 };
        pts.push((series.lags[n] as f64, c, w));
    }
    if pts.len() < 3 {
        return Err(Error::NoiseFloor {
            lag: noise_floor.unwrap_or(last),
        });
    }
    let (slope, intercept, slope_se, rms) = log_linear_fit(&pts);
    Ok(RateFit {
        theta: slope.exp(),
        confidence: slope_se,
        slope,
        intercept,
        residual_rms: rms,
        window: (pts[0].0 as usize, pts[pts.len() - 1].0 as usize),
        noise_floor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct RecurrenceParams {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl RecurrenceParams {
    pub fn new(epsilon: f64, delta: f64, lambda: f64) -> Result<Self> {
        if !(epsilon > 0.0 && delta > 0.0 && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "recurrence parameters must be positive (epsilon = {epsilon}, delta = {delta}, lambda = {lambda})"
            )));
        }
        Ok(Self { epsilon, delta, lambda })
    }
}

/// For one starting point, the largest `n <= cap` at which the averaged
/// recurrence exceeds `epsilon`, and the largest at which the averaged
/// expansion is below `lambda` (`0` when never).
fn last_times(map: &BaseMap, s: &SingularitySet, p: &RecurrenceParams, x: f64, cap: usize, index: usize) -> (usize, usize) {
    let mut orbit = if map.is_doubling() {
        Orbit::Exact(DoublingOrbit::from_f64(x))
    } else {
        Orbit::Float(x)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(index as u64);
    let (mut rec, mut exp) = (0.0, 0.0);
    let (mut last_p, mut last_q) = (0, 0);
    for n in 1..=cap {
        let y = orbit.point();
        let d = s.dist_trunc(p.delta, y);
        let Ok(df) = map.derivative(y) else {
            // an excluded point: the orbit sits on S from here on
            return (cap, last_q);
        };
        rec += -d.ln();
        exp += df.abs().ln();
        if rec / n as f64 > p.epsilon {
            last_p = n;
        }
        if exp / (n as f64) < p.lambda {
            last_q = n;
        }
        if n < cap && orbit.step(map, &mut rng).is_none() {
            return (cap, last_q);
        }
    }
    (last_p, last_q)
}

fn sweep(
    map: &BaseMap,
    s: &SingularitySet,
    p: &RecurrenceParams,
    grid: usize,
    cap: usize,
) -> Vec<(usize, usize)> {
    (0..grid)
        .into_par_iter()
        .map(|i| last_times(map, s, p, (i as f64 + GRID_OFFSET) / grid as f64, cap, i))
        .collect()
}

/// Fractions of the grid in `P_{eps,N}` and `Q_{eps,N}`, the "for some
/// `n >= N`" quantifier evaluated for `N <= n <= cap`.
pub fn recurrence_measure(
    map: &BaseMap,
    s: &SingularitySet,
    p: &RecurrenceParams,
    n: usize,
    grid: usize,
    cap: usize,
) -> Result<(f64, f64)> {
    if n == 0 || grid == 0 || cap < n {
        return Err(Error::InvalidParameter(format!(
            "recurrence needs N >= 1, grid >= 1 and cap >= N (got N = {n}, grid = {grid}, cap = {cap})"
        )));
    }
    let lasts = sweep(map, s, p, grid, cap);
    let frac = |f: &dyn Fn(&(usize, usize)) -> bool| lasts.iter().filter(|l| f(l)).count() as f64 / grid as f64;
    Ok((frac(&|l| l.0 >= n), frac(&|l| l.1 >= n)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub params: RecurrenceParams,
    pub n_values: Vec<usize>,
    pub cap: usize,
    pub grid: usize,
    pub p_measure: Vec<f64>,
    pub q_measure: Vec<f64>,
}

/// Measures for every `N` with one common cap `cap_factor * max N`, so the
/// sets are nested and the measures non-increasing.
pub fn recurrence_report(
    map: &BaseMap,
    s: &SingularitySet,
    p: &RecurrenceParams,
    n_values: &[usize],
    grid: usize,
    cap_factor: usize,
) -> Result<RecurrenceReport> {
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    if n_values.is_empty() || n_values.contains(&0) || grid == 0 || cap_factor == 0 {
        return Err(Error::InvalidParameter(
            "recurrence needs N values >= 1, grid >= 1 and cap factor >= 1".into(),
        ));
    }
    let cap = cap_factor * max_n;
    let lasts = sweep(map, s, p, grid, cap);
    let frac = |f: &dyn Fn(&(usize, usize)) -> bool| lasts.iter().filter(|l| f(l)).count() as f64 / grid as f64;
    Ok(RecurrenceReport {
        params: *p,
        n_values: n_values.to_vec(),
        cap,
        grid,
        p_measure: n_values.iter().map(|&n| frac(&|l| l.0 >= n)).collect(),
        q_measure: n_values.iter().map(|&n| frac(&|l| l.1 >= n)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub theta: f64,
    pub confidence: f64,
    pub used: usize,
    /// Zero measures left out of the fit.
    pub excluded_zero: usize,
    /// Every measure was zero: nothing to fit, already negligible.
    pub negligible: bool,
}

/// Fits `measure ~ C theta^N` over the nonzero entries.
pub fn recurrence_decay_fit(n_values: &[usize], measures: &[f64]) -> Result<DecayFit> {
    if n_values.len() != measures.len() {
        return Err(Error::InvalidParameter("N values and measures differ in length".into()));
    }
    let pts: Vec<(f64, f64, f64)> = n_values
        .iter()
        .zip(measures)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&n, &m)| (n as f64, m, 1.0))
        .collect();
    let excluded_zero = measures.len() - pts.len();
    if pts.is_empty() {
        return Ok(DecayFit {
            theta: 0.0,
            confidence: 0.0,
            used: 0,
            excluded_zero,
            negligible: true,
        });
    }
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "decay fit needs at least 3 nonzero measures (got {})",
            pts.len()
        )));
    }
    let (slope, _, slope_se, _) = log_linear_fit(&pts);
    Ok(DecayFit {
        theta: slope.exp(),
        confidence: slope_se,
        used: pts.len(),
        excluded_zero,
        negligible: false,
    })
}
