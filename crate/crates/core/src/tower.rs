//! The first-return inducing scheme on `Y = (0, 1/2)` for the doubling map.
//!
//! Cells are `Y_l = (a_l, a_{l+1})` with `a_l = 1/2 - 2^{-l}`, return time
//! `R = l` on `Y_l`, and `F = f^l` maps `Y_l` affinely onto `Y`:
//! `F(x) = 2^l x - (2^{l-1} - 1)`. The scheme is truncated at a level `L`;
//! the discarded mass `|Y \ (Y_1 u ... u Y_L)| = 2^{-(L+1)}` is reported.

use rand::Rng;
use serde::Serialize;

use crate::dynamics::{birkhoff_sum, BaseMap, FibreMap, SkewState};
use crate::error::{Error, Result};

/// Largest truncation level whose cells are distinguishable in `f64`.
pub const MAX_LEVELS: u32 = 53;

/// Half the fractional part of the golden mean; offsets sample grids away
/// from dyadic rationals.
pub const GRID_OFFSET: f64 = 0.309_016_994_374_947_45;

#[derive(Debug, Clone, PartialEq)]
pub struct InducedScheme {
    levels: u32,
    map: BaseMap,
}

/// `a_l = 1/2 - 2^{-l}`.
pub fn boundary(level: u32) -> f64 {
    0.5 - pow2(-(level as i32))
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

impl InducedScheme {
    pub fn new(levels: u32) -> Result<Self> {
        if levels == 0 || levels > MAX_LEVELS {
            return Err(Error::InvalidParameter(format!(
                "truncation level {levels} must lie in 1..={MAX_LEVELS}"
            )));
        }
        Ok(Self {
            levels,
            map: BaseMap::doubling(),
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn base_map(&self) -> &BaseMap {
        &self.map
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level == 0 {
            return Err(Error::InvalidParameter("cell index starts at 1".into()));
        }
        if level > self.levels {
            return Err(Error::Truncated {
                level,
                max: self.levels,
            });
        }
        Ok(())
    }

    /// Closed endpoints `(a_l, a_{l+1})` of `Y_l`.
    pub fn cell(&self, level: u32) -> Result<(f64, f64)> {
        self.check_level(level)?;
        Ok((boundary(level), boundary(level + 1)))
    }

    /// Lebesgue length of `Y_l`, `2^{-(l+1)}`.
    pub fn cell_length(level: u32) -> f64 {
        pow2(-(level as i32) - 1)
    }

    /// Normalised measure `|Y_l| / |Y| = 2^{-l}`.
    pub fn cell_measure(level: u32) -> f64 {
        pow2(-(level as i32))
    }

    /// Lebesgue measure of the discarded cells, `2^{-(L+1)}`.
    pub fn truncation_deficit(&self) -> f64 {
        pow2(-(self.levels as i32) - 1)
    }

    /// The same deficit relative to `|Y|`, `2^{-L}`.
    pub fn normalized_deficit(&self) -> f64 {
        pow2(-(self.levels as i32))
    }

    /// The index `l` with `x in Y_l`.
    pub fn locate_cell(&self, x: f64) -> Result<u32> {
        if !(x > 0.0 && x < 0.5) {
            return Err(Error::NotInBase { x });
        }
        if x < 0.25 {
            return Ok(1);
        }
        if x == 0.25 {
            return Err(Error::CellBoundary { x, level: 2 });
        }
        // exact for x in [1/4, 1/2]
        let d = 0.5 - x;
        let bits = d.to_bits();
        let exponent = ((bits >> 52) & 0x7ff) as i32 - 1023;
        let mantissa = bits & ((1u64 << 52) - 1);
        if mantissa == 0 {
            return Err(Error::CellBoundary {
                x,
                level: (-exponent) as u32,
            });
        }
        // 2^{-(l+1)} < d < 2^{-l}
        let level = (-exponent - 1) as u32;
        self.check_level(level)?;
        Ok(level)
    }

    pub fn return_time(&self, x: f64) -> Result<u32> {
        self.locate_cell(x)
    }

    /// `F(x) = f^{R(x)}(x)`, computed by iterating the base map.
    pub fn induced_map(&self, x: f64) -> Result<f64> {
        let level = self.locate_cell(x)?;
        self.map.iterate(x, level as usize)
    }

    /// The affine form of `F` on `Y_l`, `2^l x - (2^{l-1} - 1)`.
    pub fn affine_branch(level: u32, x: f64) -> f64 {
        pow2(level as i32) * x - (pow2(level as i32 - 1) - 1.0)
    }

    /// `xi_l(y) = 2^{-l} y + 1/2 - 2^{-l}`, the inverse branch onto `Y_l`.
    pub fn inverse_branch(&self, level: u32, y: f64) -> Result<f64> {
        self.check_level(level)?;
        if !(0.0..=0.5).contains(&y) {
            return Err(Error::NotInBase { x: y });
        }
        Ok(Self::xi(level, y))
    }

    fn xi(level: u32, y: f64) -> f64 {
        let h = pow2(-(level as i32));
        y * h + 0.5 - h
    }

    /// The orbit `f^t(xi_l(y))`, `t = 0..l`, from the closed forms
    /// `1 - f^t(xi_l y) = 2^{t-l}(1 - y)` for `t >= 1`.
    pub fn branch_orbit(level: u32, y: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(level as usize);
        out.push(Self::xi(level, y));
        for t in 1..level {
            out.push(1.0 - pow2(t as i32 - level as i32) * (1.0 - y));
        }
        out
    }

    /// `Phi(xi_l(y))` summed along [`branch_orbit`](Self::branch_orbit).
    pub fn branch_fibre(&self, fib: &FibreMap, level: u32, y: f64) -> Result<f64> {
        self.check_level(level)?;
        Self::branch_orbit(level, y)
            .into_iter()
            .map(|z| fib.value(z))
            .sum()
    }

    /// Induced fibre map `Phi(x) = sum_{k < R(x)} phi(f^k x)` as a real lift.
    pub fn induced_fibre(&self, fib: &FibreMap, x: f64) -> Result<f64> {
        let level = self.locate_cell(x)?;
        birkhoff_sum(&self.map, fib, x, level as usize)
    }

    /// Induced twist `DPhi(x) / DF(x)`.
    pub fn induced_twist(&self, fib: &FibreMap, x: f64) -> Result<f64> {
        let level = self.locate_cell(x)? as usize;
        let orbit = self.map.orbit(x, level)?;
        let mut partial = 1.0; // Df^j(x)
        let mut numer = 0.0;
        for &y in &orbit {
            numer += fib.derivative(y)? * partial;
            partial *= self.map.derivative(y)?;
        }
        Ok(numer / partial)
    }

    /// Sample points inside `Y_l`, offset away from dyadic rationals.
    pub fn cell_samples(&self, level: u32, count: usize) -> Result<Vec<f64>> {
        let (lo, hi) = self.cell(level)?;
        let width = hi - lo;
        Ok((0..count)
            .map(|j| lo + (j as f64 + GRID_OFFSET) / count as f64 * width)
            .collect())
    }

    pub fn tower_point(&self, x: f64, level: u32, u: f64) -> Result<TowerPoint> {
        let r = self.return_time(x)?;
        if level >= r {
            return Err(Error::InvalidLevel {
                level,
                return_time: r,
            });
        }
        Ok(TowerPoint {
            x,
            level,
            u: crate::dynamics::wrap_unit(u),
        })
    }

    /// A random point of the truncated tower: `x` uniform on the retained
    /// cells, level uniform below `R(x)`.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> TowerPoint {
        loop {
            let x: f64 = rng.random::<f64>() * 0.5;
            if let Ok(r) = self.return_time(x) {
                let level = rng.random_range(0..r);
                let u: f64 = rng.random();
                return TowerPoint { x, level, u };
            }
        }
    }

    /// The tower skew-product: climb one level, or at the top apply
    /// `(F x, 0, u + Phi(x))`.
    pub fn tower_step(&self, fib: &FibreMap, p: TowerPoint) -> Result<TowerPoint> {
        let r = self.return_time(p.x)?;
        if p.level >= r {
            return Err(Error::InvalidLevel {
                level: p.level,
                return_time: r,
            });
        }
        if p.level + 1 < r {
            return Ok(TowerPoint {
                level: p.level + 1,
                ..p
            });
        }
        let phi = self.induced_fibre(fib, p.x)?;
        let fx = self.induced_map(p.x)?;
        self.tower_point(fx, 0, p.u + phi)
    }

    /// Projection `(x, l, u) -> (f^l x, u + S_l phi(x))`.
    pub fn project(&self, fib: &FibreMap, p: TowerPoint) -> Result<SkewState> {
        let r = self.return_time(p.x)?;
        if p.level >= r {
            return Err(Error::InvalidLevel {
                level: p.level,
                return_time: r,
            });
        }
        let sum = birkhoff_sum(&self.map, fib, p.x, p.level as usize)?;
        let x = self.map.iterate(p.x, p.level as usize)?;
        Ok(SkewState::new(x, p.u + sum))
    }

    pub fn describe(&self) -> TowerDescription {
        TowerDescription {
            base: (0.0, 0.5),
            levels: self.levels,
            cells: (1..=self.levels)
                .map(|l| CellInfo {
                    level: l,
                    lower: boundary(l),
                    upper: boundary(l + 1),
                    return_time: l,
                    length: Self::cell_length(l),
                    measure: Self::cell_measure(l),
                })
                .collect(),
            truncation_deficit: self.truncation_deficit(),
            normalized_deficit: self.normalized_deficit(),
        }
    }
}

/// A point `(x, l, u)` of the tower skew-product, `l < R(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerPoint {
    pub x: f64,
    pub level: u32,
    pub u: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellInfo {
    pub level: u32,
    pub lower: f64,
    pub upper: f64,
    pub return_time: u32,
    pub length: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerDescription {
    pub base: (f64, f64),
    pub levels: u32,
    pub cells: Vec<CellInfo>,
    pub truncation_deficit: f64,
    pub normalized_deficit: f64,
}

/// Uniform twist bound `C / (1 - sigma^{1 - b s})` at hyperbolic times.
pub fn twist_bound_constant(c: f64, sigma: f64, b: f64, s: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) || c <= 0.0 || b <= 0.0 || s < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "twist bound needs C > 0, sigma in (0,1), b > 0, s >= 0 (got {c}, {sigma}, {b}, {s})"
        )));
    }
    if b * s >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "twist bound needs b s < 1 (b = {b}, s = {s})"
        )));
    }
    Ok(c / (1.0 - sigma.powf(1.0 - b * s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellTwist {
    pub level: u32,
    pub sup_twist: f64,
    pub points: usize,
}

/// Supremum of `|DPhi / DF|` over sample points of each cell `l <= l_max`.
pub fn twist_suprema(
    scheme: &InducedScheme,
    fib: &FibreMap,
    l_max: u32,
    points_per_cell: usize,
) -> Result<Vec<CellTwist>> {
    use rayon::prelude::*;
    (1..=l_max)
        .into_par_iter()
        .map(|level| {
            let mut sup = 0.0f64;
            for x in scheme.cell_samples(level, points_per_cell)? {
                sup = sup.max(scheme.induced_twist(fib, x)?.abs());
            }
            Ok(CellTwist {
                level,
                sup_twist: sup,
                points: points_per_cell,
            })
        })
        .collect()
}

/// Partial sums `sum_{l <= n} 2^{-l} e^{sigma0 l}` for `n = 1..=l_max`,
/// i.e. the truncated integrals of `e^{sigma0 R}` against `mu_Y`.
pub fn tail_partial_sums(sigma0: f64, l_max: u32) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=l_max)
        .map(|l| {
            acc += (sigma0 * l as f64 - l as f64 * std::f64::consts::LN_2).exp();
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::skew_step;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn scheme() -> InducedScheme {
        InducedScheme::new(40).unwrap()
    }

    #[test]
    fn locate_cell_examples() {
        let s = scheme();
        assert_eq!(s.locate_cell(1.0 / 3.0).unwrap(), 2);
        assert_eq!(s.locate_cell(1.0 / 7.0).unwrap(), 1);
        assert_eq!(s.locate_cell(0.45).unwrap(), 4);
        assert_eq!(s.locate_cell(1e-300).unwrap(), 1);
        assert_eq!(
            s.locate_cell(0.375),
            Err(Error::CellBoundary { x: 0.375, level: 3 })
        );
        assert!(matches!(s.locate_cell(0.25), Err(Error::CellBoundary { .. })));
        assert!(matches!(s.locate_cell(0.0), Err(Error::NotInBase { .. })));
        assert!(matches!(s.locate_cell(0.6), Err(Error::NotInBase { .. })));
        let deep = 0.5 - 3.0 * 2f64.powi(-43);
        assert_eq!(s.locate_cell(deep), Err(Error::Truncated { level: 41, max: 40 }));
    }

    #[test]
    fn scheme_bounds() {
        assert!(InducedScheme::new(0).is_err());
        assert!(InducedScheme::new(54).is_err());
        let s = InducedScheme::new(53).unwrap();
        let (lo, hi) = s.cell(53).unwrap();
        assert!(lo < hi);
        assert!(matches!(scheme().cell(41), Err(Error::Truncated { .. })));
    }

    #[test]
    fn induced_map_examples() {
        let s = scheme();
        assert!((s.induced_map(1.0 / 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.induced_map(1.0 / 7.0).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!((s.induced_map(11.0 / 31.0).unwrap() - 13.0 / 31.0).abs() < 1e-14);
        assert!((s.induced_map(13.0 / 31.0).unwrap() - 11.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_branch_examples() {
        let s = scheme();
        assert!((s.inverse_branch(1, 1.0 / 3.0).unwrap() - 1.0 / 6.0).abs() < 1e-16);
        assert!((s.inverse_branch(2, 1.0 / 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!((s.inverse_branch(3, 3.0 / 7.0).unwrap() - 3.0 / 7.0).abs() < 1e-16);
        assert!(matches!(s.inverse_branch(41, 0.1), Err(Error::Truncated { .. })));
        for level in 1..=30 {
            let fixed = (2f64.powi(level - 1) - 1.0) / (2f64.powi(level) - 1.0);
            let x = s.inverse_branch(level as u32, fixed).unwrap();
            assert!((x - fixed).abs() < 1e-15);
        }
    }

    #[test]
    fn induced_fibre_examples() {
        let s = scheme();
        let a = 0.41;
        let fib = FibreMap::power(a).unwrap();
        let x = 0.1;
        assert!((s.induced_fibre(&fib, x).unwrap() - 0.9f64.powf(a)).abs() < 1e-15);
        let third = s.induced_fibre(&fib, 1.0 / 3.0).unwrap();
        let expected = (2.0f64 / 3.0).powf(a) + (1.0f64 / 3.0).powf(a);
        assert!((third - expected).abs() < 1e-14);
        let two = s.induced_fibre(&fib, 1.0 / 7.0).unwrap() + s.induced_fibre(&fib, 2.0 / 7.0).unwrap();
        let expected = (6.0f64 / 7.0).powf(a) + (5.0f64 / 7.0).powf(a) + (3.0f64 / 7.0).powf(a);
        assert!((two - expected).abs() < 1e-14);
    }

    #[test]
    fn branch_fibre_agrees_with_iterated_fibre() {
        let s = scheme();
        let fib = FibreMap::power(0.5).unwrap();
        for level in 1..=30 {
            for y in [0.013, 0.2, 0.377, 0.49] {
                let x = s.inverse_branch(level, y).unwrap();
                let direct = s.induced_fibre(&fib, x).unwrap();
                let closed = s.branch_fibre(&fib, level, y).unwrap();
                // the iterated orbit loses log2(2^l) bits near 1
                let tol = 1e-15 * pow2(level as i32);
                assert!((direct - closed).abs() < tol, "level {level} y {y}");
            }
        }
    }

    #[test]
    fn induced_twist_examples() {
        let s = scheme();
        let fib = FibreMap::power(0.5).unwrap();
        let x = 0.2;
        let expected = -0.25 * (1.0f64 - x).powf(-0.5);
        assert!((s.induced_twist(&fib, x).unwrap() - expected).abs() < 1e-15);
        let bound = twist_bound_constant(0.5, 0.5, 1.5, 0.5).unwrap();
        assert!((bound - 0.5 / (1.0 - 2f64.powf(-0.25))).abs() < 1e-15);
        assert!((bound - 3.142607).abs() < 1e-6);
        assert!(twist_bound_constant(0.5, 0.5, 2.5, 0.5).is_err());
    }

    #[test]
    fn induced_twist_matches_finite_differences() {
        let s = scheme();
        let fib = FibreMap::power(0.5).unwrap();
        for level in [1u32, 2, 5, 9] {
            for x in s.cell_samples(level, 5).unwrap() {
                let h = InducedScheme::cell_length(level) * 1e-6;
                let dphi = (s.induced_fibre(&fib, x + h).unwrap()
                    - s.induced_fibre(&fib, x - h).unwrap())
                    / (2.0 * h);
                let fd = dphi / 2f64.powi(level as i32);
                let exact = s.induced_twist(&fib, x).unwrap();
                assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1.0), "l={level} x={x}");
            }
        }
    }

    #[test]
    fn twist_suprema_respect_bound() {
        let s = scheme();
        for &a in &[0.4, 0.5, 0.8] {
            let fib = FibreMap::power(a).unwrap();
            let b = 1.0 + 0.5 * (1.0 / (1.0 - a) - 1.0);
            let bound = twist_bound_constant(0.5, 0.5, b.max(1.01), 1.0 - a).unwrap();
            for cell in twist_suprema(&s, &fib, 30, 200).unwrap() {
                assert!(cell.sup_twist <= bound, "a={a} {cell:?} bound={bound}");
            }
        }
    }

    #[test]
    fn tower_step_examples() {
        let s = scheme();
        let fib = FibreMap::power(0.5).unwrap();
        let p = s.tower_point(0.4, 0, 0.3).unwrap();
        assert_eq!(s.tower_step(&fib, p).unwrap(), TowerPoint { x: 0.4, level: 1, u: 0.3 });

        let x = 0.1;
        let p = s.tower_point(x, 0, 0.7).unwrap();
        let q = s.tower_step(&fib, p).unwrap();
        assert_eq!(q.level, 0);
        assert_eq!(q.x, 0.2);
        assert!((q.u - (0.7 + 0.9f64.sqrt()).fract()).abs() < 1e-15);

        let one = FibreMap::power(1.0).unwrap();
        let p = s.tower_point(1.0 / 3.0, 1, 0.0).unwrap();
        let q = s.tower_step(&one, p).unwrap();
        assert!((q.x - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(q.level, 0);
        assert!(crate::dynamics::circle_distance(q.u, 0.0) < 1e-15);

        assert!(matches!(
            s.tower_point(0.1, 1, 0.0),
            Err(Error::InvalidLevel { level: 1, return_time: 1 })
        ));
        let bad = TowerPoint { x: 0.1, level: 3, u: 0.0 };
        assert!(s.tower_step(&fib, bad).is_err());
    }

    #[test]
    fn projection_examples() {
        let s = scheme();
        let one = FibreMap::power(1.0).unwrap();
        let p = s.tower_point(0.3, 0, 0.4).unwrap();
        assert_eq!(s.project(&one, p).unwrap(), SkewState::new(0.3, 0.4));
        let p = s.tower_point(1.0 / 3.0, 1, 0.0).unwrap();
        let z = s.project(&one, p).unwrap();
        assert!((z.x - 2.0 / 3.0).abs() < 1e-15);
        assert!((z.u - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conjugacy_on_random_points() {
        let s = scheme();
        let fib = FibreMap::power(0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = s.random_point(&mut rng);
            let Ok(next) = s.tower_step(&fib, p) else { continue };
            let lhs = s.project(&fib, next).unwrap();
            let rhs = skew_step(s.base_map(), &fib, s.project(&fib, p).unwrap()).unwrap();
            assert!(lhs.distance(&rhs) < 1e-10, "{p:?}");
        }
    }

    #[test]
    fn birkhoff_consistency() {
        let s = scheme();
        let fib = FibreMap::power(0.3).unwrap();
        for level in 1..=12 {
            for x in s.cell_samples(level, 7).unwrap() {
                let mut p = s.tower_point(x, 0, 0.125).unwrap();
                for _ in 0..level {
                    p = s.tower_step(&fib, p).unwrap();
                }
                let fx = s.induced_map(x).unwrap();
                let phi = s.induced_fibre(&fib, x).unwrap();
                assert_eq!(p.level, 0);
                assert!((p.x - fx).abs() < 1e-15);
                assert!(crate::dynamics::circle_distance(p.u, 0.125 + phi) < 1e-13);
            }
        }
    }

    #[test]
    fn markov_measure_expansion_laws() {
        let s = scheme();
        for level in 1..=40 {
            let (lo, hi) = s.cell(level).unwrap();
            assert!((InducedScheme::affine_branch(level, lo) - 0.0).abs() < 1e-12);
            assert!((InducedScheme::affine_branch(level, hi) - 0.5).abs() < 1e-12);
            assert_eq!((hi - lo) / 0.5, 2f64.powi(-(level as i32)));
            if level <= 30 {
                for x in s.cell_samples(level, 3).unwrap() {
                    let mut df = 1.0;
                    for y in s.base_map().orbit(x, level as usize).unwrap() {
                        df *= s.base_map().derivative(y).unwrap();
                    }
                    assert_eq!(df, 2f64.powi(level as i32));
                    // f^k o xi_l is affine with slope 2^{k-l} <= 1
                    assert!(2f64.powi(-(level as i32)) <= 1.0);
                }
            }
        }
        let total: f64 = (1..=40).map(InducedScheme::cell_measure).sum();
        assert!((total + s.normalized_deficit() - 1.0).abs() < 1e-15);
        assert_eq!(s.truncation_deficit(), 2f64.powi(-41));
    }

    #[test]
    fn tail_sums_threshold() {
        let below = tail_partial_sums(0.6, 500);
        let limit = (0.6 - std::f64::consts::LN_2).exp();
        let limit = limit / (1.0 - limit);
        assert!((below[499] - limit).abs() < 1e-9);
        let above = tail_partial_sums(0.75, 400);
        assert!(above[399] > 1e9);
        assert!(above.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn description_lists_cells() {
        let d = InducedScheme::new(5).unwrap().describe();
        assert_eq!(d.cells.len(), 5);
        assert_eq!(d.cells[1].lower, 0.25);
        assert_eq!(d.cells[1].upper, 0.375);
        assert_eq!(d.truncation_deficit, 2f64.powi(-6));
    }

    proptest! {
        #[test]
        fn inverse_branch_is_right_inverse(level in 1u32..=40, y in 0.0f64..0.5) {
            let s = scheme();
            let x = s.inverse_branch(level, y).unwrap();
            let (lo, hi) = s.cell(level).unwrap();
            prop_assert!(x >= lo && x <= hi);
            // rounding x to a double costs 2^l ulp(1/2) after expansion
            let tol = 4.0 * f64::EPSILON * pow2(level as i32);
            prop_assert!((InducedScheme::affine_branch(level, x) - y).abs() < tol);
            if let Ok(fx) = s.induced_map(x) {
                prop_assert!((fx - y).abs() < tol);
            }
        }

        #[test]
        fn located_cell_contains_point(x in 0.0f64..0.5) {
            let s = scheme();
            if let Ok(level) = s.locate_cell(x) {
                let (lo, hi) = s.cell(level).unwrap();
                prop_assert!(lo < x && x < hi);
                let fx = s.induced_map(x).unwrap();
                prop_assert!(fx > 0.0 && fx < 0.5);
            }
        }
    }
}
