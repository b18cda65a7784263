//! Periodic-orbit obstruction to `Phi` being cohomologous to a function that
//! is constant on each cell `Y_l`.
//!
//! Take fixed points `x in cl(Y_n)`, `x' in cl(Y_m)` of `F` and a 2-cycle
//! `y in Y_n`, `y' = F y in Y_m`. A locally constant cohomologous function
//! forces `Phi(x) + Phi(x') = Phi(y) + Phi(y')`, so a nonzero difference
//! certifies the obstruction. A zero difference proves nothing.

use serde::Serialize;

use crate::dynamics::FibreMap;
use crate::error::{Error, Result};
use crate::tower::InducedScheme;

/// Values below this magnitude are reported as inconclusive.
pub const INCONCLUSIVE_BELOW: f64 = 1e-9;

/// A rational point `num / den` of `[0, 1)`; the doubling map acts exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dyadic {
    pub num: u64,
    pub den: u64,
}

impl Dyadic {
    fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `2x mod 1`.
    pub fn double(&self) -> Self {
        Self::new((2 * self.num) % self.den, self.den)
    }
}

/// Fixed points of `F` in cells `n`, `m` and the 2-cycle alternating between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicTriple {
    pub cells: (u32, u32),
    pub fixed_n: Dyadic,
    pub fixed_m: Dyadic,
    pub cycle: (Dyadic, Dyadic),
}

impl PeriodicTriple {
    pub fn fp_n(&self) -> f64 {
        self.fixed_n.value()
    }

    pub fn fp_m(&self) -> f64 {
        self.fixed_m.value()
    }

    pub fn cycle_values(&self) -> (f64, f64) {
        (self.cycle.0.value(), self.cycle.1.value())
    }
}

// offset c_l = 2^{l-1} - 1 in F(x) = 2^l x - c_l on Y_l
fn offset(level: u32) -> u64 {
    (1u64 << (level - 1)) - 1
}

/// Solves `xi_n(x) = x`, `xi_m(x') = x'` and `y = xi_n(xi_m(y))` exactly:
/// `x = c_n / (2^n - 1)` and `y = (2^m c_n + c_m) / (2^{n+m} - 1)`.
pub fn find_periodic_triple(scheme: &InducedScheme, n: u32, m: u32) -> Result<PeriodicTriple> {
    if n == m {
        return Err(Error::InvalidParameter(format!(
            "periodic triple needs distinct cells (got {n}, {m})"
        )));
    }
    for level in [n, m] {
        scheme.cell(level)?;
    }
    if n + m > 62 {
        return Err(Error::InvalidParameter(format!(
            "cells ({n}, {m}) exceed exact rational range"
        )));
    }
    let fixed = |l: u32| Dyadic::new(offset(l), (1u64 << l) - 1);
    let den = (1u64 << (n + m)) - 1;
    let y = Dyadic::new((1u64 << m) * offset(n) + offset(m), den);
    let y_prime = Dyadic::new((1u64 << n) * offset(m) + offset(n), den);
    Ok(PeriodicTriple {
        cells: (n, m),
        fixed_n: fixed(n),
        fixed_m: fixed(m),
        cycle: (y, y_prime),
    })
}

/// `sum_{j < steps} phi(f^j x)` along the exact rational orbit of `x`.
pub fn orbit_sum(fib: &FibreMap, start: Dyadic, steps: u32) -> Result<f64> {
    let mut point = start;
    let mut sum = 0.0;
    for index in 0..steps as usize {
        let x = point.value();
        sum += fib.value(x).map_err(|e| match e {
            Error::Singularity { x } => Error::ExcludedIterate { index, x },
            other => other,
        })?;
        point = point.double();
    }
    Ok(sum)
}

/// `Phi(x) + Phi(x') - Phi(y) - Phi(y')` in the real lift.
pub fn obstruction(fib: &FibreMap, t: &PeriodicTriple) -> Result<f64> {
    let (n, m) = t.cells;
    let fixed = orbit_sum(fib, t.fixed_n, n)? + orbit_sum(fib, t.fixed_m, m)?;
    let cycle = orbit_sum(fib, t.cycle.0, n)? + orbit_sum(fib, t.cycle.1, m)?;
    Ok(fixed - cycle)
}

/// `1 + (2/3)^a + (1/3)^a - (6/7)^a - (5/7)^a - (3/7)^a`.
pub fn chi(a: f64) -> f64 {
    let p = |r: f64| r.powf(a);
    1.0 + p(2.0 / 3.0) + p(1.0 / 3.0) - p(6.0 / 7.0) - p(5.0 / 7.0) - p(3.0 / 7.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FibreFamily {
    Power,
    Coboundary,
    SmoothCounterexample,
}

impl FibreFamily {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "power" => Ok(Self::Power),
            "coboundary" => Ok(Self::Coboundary),
            "smooth_counterexample" => Ok(Self::SmoothCounterexample),
            other => Err(Error::InvalidParameter(format!("unknown fibre family '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Power => "power",
            Self::Coboundary => "coboundary",
            Self::SmoothCounterexample => "smooth_counterexample",
        }
    }

    pub fn instantiate(&self, a: f64) -> Result<FibreMap> {
        match self {
            Self::Power => FibreMap::power(a),
            Self::Coboundary => FibreMap::coboundary(a),
            Self::SmoothCounterexample => Ok(FibreMap::SmoothCounterexample),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniStatus {
    /// Nonzero obstruction: not cohomologous to a locally constant function.
    NotCohomologous,
    /// `|value| < 1e-9`; this pair cannot decide either way.
    Inconclusive,
    /// The periodic orbits pass through a singular point.
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniRow {
    pub a: f64,
    pub n: u32,
    pub m: u32,
    pub obstruction: Option<f64>,
    pub status: UniStatus,
}

/// Obstruction values for every `(a, (n, m))` combination.
pub fn uni_scan(
    scheme: &InducedScheme,
    family: FibreFamily,
    a_grid: &[f64],
    cell_pairs: &[(u32, u32)],
) -> Result<Vec<UniRow>> {
    if a_grid.is_empty() || cell_pairs.is_empty() {
        return Err(Error::InvalidParameter(
            "uni scan needs a nonempty a-grid and cell list".into(),
        ));
    }
    let triples = cell_pairs
        .iter()
        .map(|&(n, m)| find_periodic_triple(scheme, n, m))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(a_grid.len() * triples.len());
    for &a in a_grid {
        let fib = family.instantiate(a)?;
        for t in &triples {
            let (n, m) = t.cells;
            let row = match obstruction(&fib, t) {
                Ok(v) => UniRow {
                    a,
                    n,
                    m,
                    obstruction: Some(v),
                    status: if v.abs() < INCONCLUSIVE_BELOW {
                        UniStatus::Inconclusive
                    } else {
                        UniStatus::NotCohomologous
                    },
                },
                Err(Error::ExcludedIterate { .. }) => UniRow {
                    a,
                    n,
                    m,
                    obstruction: None,
                    status: UniStatus::Excluded,
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TableFibre;
    use std::sync::Arc;

    fn scheme() -> InducedScheme {
        InducedScheme::new(40).unwrap()
    }

    /// Independent exact oracle: solve `F(y) = y'`, `F(y') = y` by brute
    /// force over numerators for the given denominator.
    fn brute_cycle(n: u32, m: u32) -> (u64, u64, u64) {
        let den = (1u64 << (n + m)) - 1;
        let f = |num: u64, level: u32| -> Option<u64> {
            // F on Y_level in rational form: 2^level * num - c * den
            let c = (1u64 << (level - 1)) - 1;
            let v = (num << level).checked_sub(c * den)?;
            Some(v)
        };
        let s = scheme();
        for num in 1..den / 2 {
            let x = num as f64 / den as f64;
            let Ok(level) = s.locate_cell(x) else { continue };
            if level != n {
                continue;
            }
            let Some(num2) = f(num, n) else { continue };
            let x2 = num2 as f64 / den as f64;
            if s.locate_cell(x2) != Ok(m) {
                continue;
            }
            if f(num2, m) == Some(num) {
                return (num, num2, den);
            }
        }
        panic!("no cycle found for ({n}, {m})");
    }

    #[test]
    fn triple_examples() {
        let t = find_periodic_triple(&scheme(), 1, 2).unwrap();
        assert_eq!(t.fp_n(), 0.0);
        assert_eq!(t.fixed_m, Dyadic::new(1, 3));
        assert_eq!(t.cycle, (Dyadic::new(1, 7), Dyadic::new(2, 7)));

        let t = find_periodic_triple(&scheme(), 2, 3).unwrap();
        assert_eq!(t.fixed_n, Dyadic::new(1, 3));
        assert_eq!(t.fixed_m, Dyadic::new(3, 7));
        assert_eq!(t.cycle, (Dyadic::new(11, 31), Dyadic::new(13, 31)));

        assert!(find_periodic_triple(&scheme(), 2, 2).is_err());
        assert!(matches!(
            find_periodic_triple(&scheme(), 2, 41),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn triples_match_brute_force_oracle() {
        for (n, m) in [(1, 2), (2, 3), (3, 4), (1, 5), (4, 2), (3, 6)] {
            let t = find_periodic_triple(&scheme(), n, m).unwrap();
            let (y, y2, den) = brute_cycle(n, m);
            assert_eq!(t.cycle.0.num * den, y * t.cycle.0.den);
            assert_eq!(t.cycle.1.num * den, y2 * t.cycle.1.den);
        }
    }

    #[test]
    fn triples_are_periodic_under_induced_map() {
        let s = scheme();
        for n in 1..=12 {
            for m in 1..=12 {
                if n == m {
                    continue;
                }
                let t = find_periodic_triple(&s, n, m).unwrap();
                for (x, level) in [(t.fp_n(), n), (t.fp_m(), m)] {
                    if x == 0.0 {
                        continue; // closure point of Y_1
                    }
                    assert_eq!(s.locate_cell(x).unwrap(), level);
                    assert!((s.induced_map(x).unwrap() - x).abs() < 1e-12);
                }
                let (y, y2) = t.cycle_values();
                assert_eq!(s.locate_cell(y).unwrap(), n);
                assert_eq!(s.locate_cell(y2).unwrap(), m);
                assert!((s.induced_map(y).unwrap() - y2).abs() < 1e-12);
                assert!((s.induced_map(y2).unwrap() - y).abs() < 1e-12);
            }
        }
        // general fixed point formula
        for l in 1..=30u32 {
            let x = (2f64.powi(l as i32 - 1) - 1.0) / (2f64.powi(l as i32) - 1.0);
            let t = find_periodic_triple(&s, l, if l == 1 { 2 } else { 1 }).unwrap();
            assert!((t.fp_n() - x).abs() < 1e-16);
        }
    }

    #[test]
    fn chi_examples() {
        assert!(chi(0.0).abs() < 1e-15);
        assert!(chi(1.0).abs() < 1e-15);
        let direct = 1.0 + (2.0f64 / 3.0).sqrt() + (1.0f64 / 3.0).sqrt()
            - (6.0f64 / 7.0).sqrt()
            - (5.0f64 / 7.0).sqrt()
            - (3.0f64 / 7.0).sqrt();
        assert!((chi(0.5) - direct).abs() < 1e-15);
        assert!((chi(0.5) + 0.031781).abs() < 1e-6);
        for i in 1..100 {
            assert!(chi(i as f64 / 100.0) < 0.0);
        }
    }

    #[test]
    fn obstruction_reproduces_chi() {
        let t = find_periodic_triple(&scheme(), 1, 2).unwrap();
        for i in 1..100 {
            let a = i as f64 / 100.0;
            let v = obstruction(&FibreMap::power(a).unwrap(), &t).unwrap();
            assert!((v - chi(a)).abs() < 1e-12, "a={a}");
        }
        let one = obstruction(&FibreMap::power(1.0).unwrap(), &t).unwrap();
        assert!(one.abs() < 1e-15);
    }

    #[test]
    fn coboundary_obstruction_vanishes() {
        for &a in &[0.25, 0.5, 0.75] {
            let fib = FibreMap::coboundary(a).unwrap();
            for (n, m) in [(2, 3), (3, 4), (2, 5), (4, 6)] {
                let t = find_periodic_triple(&scheme(), n, m).unwrap();
                assert!(obstruction(&fib, &t).unwrap().abs() < 1e-10);
            }
            // cell 1's fixed point is the singularity 0
            let t = find_periodic_triple(&scheme(), 1, 2).unwrap();
            assert!(matches!(
                obstruction(&fib, &t),
                Err(Error::ExcludedIterate { index: 0, .. })
            ));
        }
    }

    fn table_coboundary(name: &str, psi: fn(f64) -> f64, dpsi: fn(f64) -> f64) -> FibreMap {
        let f = |x: f64| (2.0 * x) % 1.0;
        FibreMap::Table(TableFibre {
            name: name.into(),
            value: Arc::new(move |x| psi(x) - psi(f(x))),
            derivative: Arc::new(move |x| dpsi(x) - 2.0 * dpsi(f(x))),
            singularities: crate::dynamics::SingularitySet::new(vec![0.5]).unwrap(),
            singular_exponent: 0.0,
            twist_constant: 10.0,
        })
    }

    #[test]
    fn constructed_coboundaries_vanish() {
        let fibres = [
            table_coboundary("square", |x| x * x, |x| 2.0 * x),
            table_coboundary("cubic", |x| x * x * x - x, |x| 3.0 * x * x - 1.0),
            table_coboundary("quartic", |x| 3.0 * x.powi(4) + 0.5 * x, |x| 12.0 * x.powi(3) + 0.5),
            table_coboundary("rational", |x| 1.0 / (1.0 + x), |x| -1.0 / (1.0 + x).powi(2)),
            table_coboundary("sqrt", |x| (1.0 + x).sqrt(), |x| 0.5 / (1.0 + x).sqrt()),
        ];
        for fib in &fibres {
            for (n, m) in [(1, 2), (2, 3), (3, 4), (1, 6), (5, 7)] {
                let t = find_periodic_triple(&scheme(), n, m).unwrap();
                let v = obstruction(fib, &t).unwrap();
                assert!(v.abs() < 1e-10, "{fib:?} ({n},{m}) -> {v}");
            }
        }
    }

    #[test]
    fn scan_flags() {
        let s = scheme();
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let rows = uni_scan(&s, FibreFamily::Power, &grid, &[(1, 2)]).unwrap();
        assert_eq!(rows.len(), 99);
        assert!(rows.iter().all(|r| r.obstruction.unwrap() < 0.0));
        assert!(rows
            .iter()
            .all(|r| r.status == UniStatus::NotCohomologous || r.obstruction.unwrap().abs() < 1e-9));

        let rows = uni_scan(&s, FibreFamily::Coboundary, &[0.3, 0.6], &[(2, 3), (1, 2)]).unwrap();
        assert_eq!(rows[0].status, UniStatus::Inconclusive);
        assert_eq!(rows[1].status, UniStatus::Excluded);

        let rows = uni_scan(&s, FibreFamily::SmoothCounterexample, &[0.5], &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.obstruction.is_some()));

        assert!(uni_scan(&s, FibreFamily::Power, &[], &[(1, 2)]).is_err());
        assert!(uni_scan(&s, FibreFamily::Power, &[0.5], &[]).is_err());
    }
}
