//! Pointwise certification of `(b, sigma, delta)`-hyperbolic times.
//!
//! `n` is a hyperbolic time for `x` when, for every `1 <= k <= n`,
//! `prod_{j=n-k}^{n-1} |Df(f^j x)|^{-1} <= sigma^k` and
//! `dist_delta(f^{n-k} x, S) >= sigma^{b k}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{BaseMap, SingularitySet};
use crate::error::{Error, Result};
use crate::tower::{InducedScheme, GRID_OFFSET};

// Relative slack on the product inequality; the doubling products are exact.
const PRODUCT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct HypTimeParams {
    pub b: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl HypTimeParams {
    pub fn new(b: f64, sigma: f64, delta: f64) -> Result<Self> {
        if !(b > 0.0) || !(sigma > 0.0 && sigma < 1.0) || !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hyperbolic time parameters need b > 0, 0 < sigma < 1, delta > 0 \
                 (got b = {b}, sigma = {sigma}, delta = {delta})"
            )));
        }
        Ok(Self { b, sigma, delta })
    }

    /// `(b, sigma, delta) = (1.5, 1/2, 1/4)`, certified for every cell of the
    /// doubling scheme.
    pub fn canonical() -> Self {
        Self {
            b: 1.5,
            sigma: 0.5,
            delta: 0.25,
        }
    }
}

fn orbit_avoiding(map: &BaseMap, s: &SingularitySet, x: f64, n: usize) -> Result<Vec<f64>> {
    let orbit = map.orbit(x, n)?;
    if let Some((index, &y)) = orbit.iter().enumerate().find(|(_, y)| s.contains(**y)) {
        return Err(Error::ExcludedIterate { index, x: y });
    }
    Ok(orbit)
}

/// Checks both inequalities on a precomputed orbit `x, ..., f^{n-1} x`.
fn check_orbit(
    map: &BaseMap,
    s: &SingularitySet,
    p: &HypTimeParams,
    orbit: &[f64],
    n: usize,
) -> Result<bool> {
    let mut product = 1.0;
    for k in 1..=n {
        let y = orbit[n - k];
        product /= map.derivative(y)?.abs();
        let contraction = p.sigma.powi(k as i32);
        if product > contraction * (1.0 + PRODUCT_SLACK) {
            return Ok(false);
        }
        if s.dist_trunc(p.delta, y) < p.sigma.powf(p.b * k as f64) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `n` is a `(b, sigma, delta)`-hyperbolic time for `x`.
pub fn is_hyperbolic_time(
    map: &BaseMap,
    s: &SingularitySet,
    p: &HypTimeParams,
    x: f64,
    n: usize,
) -> Result<bool> {
    if n == 0 {
        return Err(Error::InvalidParameter("hyperbolic times start at n = 1".into()));
    }
    let orbit = orbit_avoiding(map, s, x, n)?;
    check_orbit(map, s, p, &orbit, n)
}

/// Smallest hyperbolic time `n <= n_max`, if any.
pub fn first_hyperbolic_time(
    map: &BaseMap,
    s: &SingularitySet,
    p: &HypTimeParams,
    x: f64,
    n_max: usize,
) -> Result<Option<usize>> {
    if n_max == 0 {
        return Ok(None);
    }
    let orbit = orbit_avoiding(map, s, x, n_max)?;
    for n in 1..=n_max {
        if check_orbit(map, s, p, &orbit, n)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Fraction of the grid `(i + offset) / grid_size` lying in `H_n(b, sigma, delta)`.
/// Grid points whose orbit meets an excluded point count as outside.
pub fn hyperbolic_fraction(
    map: &BaseMap,
    s: &SingularitySet,
    p: &HypTimeParams,
    n: usize,
    grid_size: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("hyperbolic times start at n = 1".into()));
    }
    if grid_size == 0 {
        return Err(Error::InvalidParameter("grid size must be positive".into()));
    }
    let hits: usize = (0..grid_size)
        .into_par_iter()
        .filter(|&i| {
            let x = (i as f64 + GRID_OFFSET) / grid_size as f64;
            matches!(is_hyperbolic_time(map, s, p, x, n), Ok(true))
        })
        .count();
    Ok(hits as f64 / grid_size as f64)
}

/// Per-cell outcome of certifying that `R = l` is a hyperbolic time on `Y_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellCertificate {
    pub level: u32,
    pub points: usize,
    pub passed: usize,
    pub failed: usize,
    /// Pairs `(x, k)` with `dist(f^{l-k} x, 1) < 2^{-(k+1)}`, `1 <= k < l`.
    pub distance_bound_failures: usize,
    /// Smallest ratio `dist(f^{l-k} x, 1) / 2^{-(k+1)}` seen in the cell.
    pub min_distance_ratio: f64,
}

/// Sweeps `points_per_cell` samples of every `Y_l`, `l <= l_max`, checking that
/// `l` is a hyperbolic time together with the distance bound
/// `dist(f^{l-k} x, 1) >= 2^{-(k+1)}`.
pub fn certify_return_times(
    scheme: &InducedScheme,
    s: &SingularitySet,
    p: &HypTimeParams,
    l_max: u32,
    points_per_cell: usize,
) -> Result<Vec<CellCertificate>> {
    let map = scheme.base_map();
    (1..=l_max)
        .into_par_iter()
        .map(|level| {
            let mut cert = CellCertificate {
                level,
                points: points_per_cell,
                passed: 0,
                failed: 0,
                distance_bound_failures: 0,
                min_distance_ratio: f64::INFINITY,
            };
            let n = level as usize;
            for x in scheme.cell_samples(level, points_per_cell)? {
                let orbit = orbit_avoiding(map, s, x, n)?;
                if check_orbit(map, s, p, &orbit, n)? {
                    cert.passed += 1;
                } else {
                    cert.failed += 1;
                }
                for k in 1..n {
                    let ratio = (1.0 - orbit[n - k]) / 2f64.powi(-(k as i32) - 1);
                    cert.min_distance_ratio = cert.min_distance_ratio.min(ratio);
                    if ratio < 1.0 {
                        cert.distance_bound_failures += 1;
                    }
                }
            }
            Ok(cert)
        })
        .collect()
}
