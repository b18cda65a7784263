//! Ulam discretisation of the mode-`k` twisted transfer operators of the
//! induced map, power-iteration spectral radii and the renewal decomposition
//! `T_n = sum over compositions j_1 + ... + j_p = n of R_{j_1} ... R_{j_p}`.
//!
//! Entry `(i, j)` of an [`UlamOperator`] is the average over grid cell `c_j`
//! of `sum_l 2^{-l} e^{-2 pi i k Phi(xi_l x)} 1[xi_l x in c_i]`. The inverse
//! branches are affine, so the cell overlaps are computed exactly and only
//! the phase is integrated by midpoint quadrature. The transfer operator acts
//! on cell averages through the transpose.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::FibreMap;
use crate::error::{Error, Result};
use crate::tower::InducedScheme;

pub const DEFAULT_QUADRATURE: usize = 8;

/// One overlap of `xi_l(c_j)` with a target cell `c_i`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    row: usize,
    /// `2^{-l}` times the fraction of `c_j` mapped into `c_i`.
    weight: f64,
    /// Offset of this piece's `q` phase values.
    nodes: usize,
}

/// Mode-independent part of the discretisation: overlap geometry and the
/// values of `Phi` at the quadrature nodes.
#[derive(Debug, Clone)]
pub struct UlamGeometry {
    grid: usize,
    levels: u32,
    quadrature: usize,
    pieces: Vec<Piece>,
    phi: Vec<f64>,
    /// Start of each column's run in `pieces`; pieces are sorted by column.
    col_start: Vec<usize>,
}

impl UlamGeometry {
    /// Geometry for all branches `l <= L`.
    pub fn new(scheme: &InducedScheme, fib: &FibreMap, grid: usize, quadrature: usize) -> Result<Self> {
        Self::for_levels(scheme, fib, grid, quadrature, 1..=scheme.levels())
    }

    /// Geometry restricted to the given branches.
    pub fn for_levels(
        scheme: &InducedScheme,
        fib: &FibreMap,
        grid: usize,
        quadrature: usize,
        levels: std::ops::RangeInclusive<u32>,
    ) -> Result<Self> {
        if grid == 0 || quadrature == 0 {
            return Err(Error::InvalidParameter(format!(
                "Ulam grid and quadrature sizes must be positive (got N = {grid}, q = {quadrature})"
            )));
        }
        for level in [*levels.start(), *levels.end()] {
            scheme.cell(level)?;
        }
        let columns: Vec<(Vec<Piece>, Vec<f64>)> = (0..grid)
            .into_par_iter()
            .map(|col| column_pieces(scheme, fib, grid, quadrature, col, levels.clone()))
            .collect::<Result<_>>()?;
        let mut pieces = Vec::new();
        let mut phi = Vec::new();
        let mut col_start = Vec::with_capacity(grid + 1);
        for (mut ps, vals) in columns {
            col_start.push(pieces.len());
            for p in &mut ps {
                p.nodes += phi.len();
            }
            pieces.extend(ps);
            phi.extend(vals);
        }
        col_start.push(pieces.len());
        Ok(Self {
            grid,
            levels: scheme.levels(),
            quadrature,
            pieces,
            phi,
            col_start,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// The operator for mode `k`. `M_{-k}` is formed as the entrywise
    /// conjugate of `M_k`, so the two are exact mirror images.
    pub fn operator(&self, k: i64) -> UlamOperator {
        let kk = k.unsigned_abs() as f64;
        let q = self.quadrature;
        let columns: Vec<Vec<(usize, Complex64)>> = (0..self.grid)
            .into_par_iter()
            .map(|col| {
                let mut entries: Vec<(usize, Complex64)> = Vec::new();
                for p in &self.pieces[self.col_start[col]..self.col_start[col + 1]] {
                    let phase = if k == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        let s: Complex64 = self.phi[p.nodes..p.nodes + q]
                            .iter()
                            .map(|&v| Complex64::cis(-TAU * (kk * v).rem_euclid(1.0)))
                            .sum();
                        s / q as f64
                    };
                    let mut value = phase * p.weight;
                    if k < 0 {
                        value = value.conj();
                    }
                    match entries.iter_mut().find(|(r, _)| *r == p.row) {
                        Some((_, v)) => *v += value,
                        None => entries.push((p.row, value)),
                    }
                }
                entries.sort_by_key(|&(r, _)| r);
                entries
            })
            .collect();
        UlamOperator::from_columns(k, self.levels, self.grid, columns)
    }
}

/// Pieces of column `col` for every branch, with `q` nodes of `Phi` each.
fn column_pieces(
    scheme: &InducedScheme,
    fib: &FibreMap,
    grid: usize,
    q: usize,
    col: usize,
    levels: std::ops::RangeInclusive<u32>,
) -> Result<(Vec<Piece>, Vec<f64>)> {
    let h = 0.5 / grid as f64;
    let (x0, x1) = (col as f64 * h, (col + 1) as f64 * h);
    let n = grid as f64;
    let mut pieces = Vec::new();
    let mut phi = Vec::new();
    for level in levels {
        let scale = 2f64.powi(-(level as i32));
        // xi_l in target-cell units: s(x) = N - 2N 2^{-l} (1 - x)
        let s = |x: f64| n - 2.0 * n * scale * (1.0 - x);
        let (s0, s1) = (s(x0), s(x1));
        let first = (s0.floor() as usize).min(grid - 1);
        let last = ((s1.ceil() as usize).max(1) - 1).clamp(first, grid - 1);
        for row in first..=last {
            let lo = s0.max(row as f64);
            let hi = if row == last { s1 } else { s1.min(row as f64 + 1.0) };
            if hi <= lo {
                continue;
            }
            let frac = (hi - lo) / (s1 - s0);
            // back to source coordinates, where the midpoint nodes live
            let (u0, u1) = (
                x0 + (x1 - x0) * (lo - s0) / (s1 - s0),
                x0 + (x1 - x0) * (hi - s0) / (s1 - s0),
            );
            pieces.push(Piece {
                row,
                weight: scale * frac,
                nodes: phi.len(),
            });
            for m in 0..q {
                let y = u0 + (u1 - u0) * (m as f64 + 0.5) / q as f64;
                phi.push(scheme.branch_fibre(fib, level, y)?);
            }
        }
    }
    Ok((pieces, phi))
}

/// Sparse complex matrix in compressed-column form.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamOperator {
    pub k: i64,
    pub levels: u32,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl UlamOperator {
    fn from_columns(k: i64, levels: u32, n: usize, columns: Vec<Vec<(usize, Complex64)>>) -> Self {
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in columns {
            for (r, v) in col {
                row_idx.push(r);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            k,
            levels,
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Builds an operator from a row-major dense matrix (test fixtures).
    pub fn from_dense(k: i64, levels: u32, n: usize, dense: &[Complex64]) -> Result<Self> {
        if dense.len() != n * n || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "dense matrix has {} entries, expected {n}^2",
                dense.len()
            )));
        }
        let columns = (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&i| dense[i * n + j] != Complex64::new(0.0, 0.0))
                    .map(|i| (i, dense[i * n + j]))
                    .collect()
            })
            .collect();
        Ok(Self::from_columns(k, levels, n, columns))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// `M v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (j, &vj) in v.iter().enumerate() {
            for (i, m) in self.column(j) {
                out[i] += m * vj;
            }
        }
        out
    }

    /// `M^T v`: the transfer operator acting on cell averages.
    pub fn apply_transpose(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|j| self.column(j).map(|(i, m)| m * v[i]).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<Complex64> {
        (0..self.n).map(|j| self.column(j).map(|(_, m)| m).sum()).collect()
    }

    pub fn column_abs_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| self.column(j).map(|(_, m)| m.norm()).sum())
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        for j in 0..self.n {
            for (i, m) in self.column(j) {
                out[i * self.n + j] = m;
            }
        }
        out
    }

    /// `self * dense`, both `N x N`, dense row-major.
    fn mul_dense(&self, dense: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let src = &dense[j * n..(j + 1) * n];
            for (i, m) in self.column(j) {
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += m * s;
                }
            }
        }
        out
    }

    /// Writes the binary dump: little-endian `u64 N`, `i64 k`, `u64 L`,
    /// then `N * N` row-major `(re, im)` pairs of `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.k.to_le_bytes())?;
        w.write_all(&(self.levels as u64).to_le_bytes())?;
        for z in self.to_dense() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_binary`](Self::write_binary).
    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> std::io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let k = i64::from_le_bytes(next(&mut r)?);
        let levels = u64::from_le_bytes(next(&mut r)?) as u32;
        let mut dense = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = f64::from_le_bytes(next(&mut r)?);
            let im = f64::from_le_bytes(next(&mut r)?);
            dense.push(Complex64::new(re, im));
        }
        Self::from_dense(k, levels, n, &dense)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
    }
}

/// `M_k` on an `N`-cell grid of `Y` with `q` quadrature nodes per piece.
pub fn build_ulam(
    scheme: &InducedScheme,
    fib: &FibreMap,
    k: i64,
    grid: usize,
    quadrature: usize,
) -> Result<UlamOperator> {
    Ok(UlamGeometry::new(scheme, fib, grid, quadrature)?.operator(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    pub eigenvalue: (f64, f64),
    pub residual: f64,
    pub iterations: usize,
}

/// Dominant eigenvalue modulus by power iteration on `M^T` with
/// renormalisation every step. Converged when `|M^T v - lambda v| < tol`
/// for the unit iterate `v` and its Rayleigh quotient `lambda`.
pub fn spectral_radius(op: &UlamOperator, tol: f64, max_iter: usize) -> Result<RadiusEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive (got {tol})")));
    }
    let n = op.size();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    // deterministic, generic start vector
    let mut v: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(1.0 + 0.1 * ((j * 7919) % 101) as f64 / 101.0, 0.0))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    let mut lambda = Complex64::new(0.0, 0.0);
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let w = op.apply_transpose(&v);
        lambda = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
        residual = norm(
            &w.iter()
                .zip(&v)
                .map(|(b, a)| b - lambda * a)
                .collect::<Vec<_>>(),
        );
        let nw = norm(&w);
        if residual < tol {
            return Ok(RadiusEstimate {
                radius: lambda.norm(),
                eigenvalue: (lambda.re, lambda.im),
                residual,
                iterations: iter,
            });
        }
        if nw == 0.0 {
            // nilpotent on the start vector
            return Ok(RadiusEstimate {
                radius: 0.0,
                eigenvalue: (0.0, 0.0),
                residual: 0.0,
                iterations: iter,
            });
        }
        v = w.into_iter().map(|z| z / nw).collect();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate: lambda.norm(),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeRadius {
    pub k: i64,
    pub radius: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Radii for `k = -k_max..=k_max`, sharing one geometry.
pub fn mode_decay_table(
    scheme: &InducedScheme,
    fib: &FibreMap,
    k_max: i64,
    grid: usize,
    quadrature: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<ModeRadius>> {
    if k_max < 1 {
        return Err(Error::InvalidParameter(format!("k_max must be >= 1 (got {k_max})")));
    }
    let geom = UlamGeometry::new(scheme, fib, grid, quadrature)?;
    (-k_max..=k_max)
        .map(|k| {
            let est = spectral_radius(&geom.operator(k), tol, max_iter)?;
            Ok(ModeRadius {
                k,
                radius: est.radius,
                residual: est.residual,
                iterations: est.iterations,
            })
        })
        .collect()
}

/// `R_{n,k}`: the Ulam block of the single branch `xi_n`.
#[derive(Debug, Clone)]
pub struct RenewalBlock {
    pub n: u32,
    pub k: i64,
    pub matrix: UlamOperator,
}

pub fn renewal_block(
    scheme: &InducedScheme,
    fib: &FibreMap,
    n: u32,
    k: i64,
    grid: usize,
    quadrature: usize,
) -> Result<RenewalBlock> {
    scheme.cell(n)?;
    let geom = UlamGeometry::for_levels(scheme, fib, grid, quadrature, n..=n)?;
    Ok(RenewalBlock {
        n,
        k,
        matrix: geom.operator(k),
    })
}

/// Tail block `A_{n,k} = sum_{n < l <= L} R_{l,k}`: mass that has left `Y`
/// and is still in flight `n` steps later. Zero when `n >= L`.
pub fn tail_block(
    scheme: &InducedScheme,
    fib: &FibreMap,
    n: u32,
    k: i64,
    grid: usize,
    quadrature: usize,
) -> Result<Option<UlamOperator>> {
    if n >= scheme.levels() {
        return Ok(None);
    }
    let geom = UlamGeometry::for_levels(scheme, fib, grid, quadrature, n + 1..=scheme.levels())?;
    Ok(Some(geom.operator(k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenewalReport {
    pub n: u32,
    pub k: i64,
    /// Max entrywise gap between tower time-stepping and the composition sum.
    pub deviation: f64,
    pub compositions: usize,
    /// For `k = 0`: max column defect of `returned + in flight + lost = 1`.
    pub mass_defect: Option<f64>,
}

fn identity(n: usize) -> Vec<Complex64> {
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        m[i * n + i] = Complex64::new(1.0, 0.0);
    }
    m
}

/// Compares two computations of `T_{n,k}` for `n <= 8`:
///
/// * tower time-stepping: mass at level 0 either returns through `R_1` or
///   climbs a pipe of height `j` and returns through `R_j` at the top;
/// * the sum over all compositions `j_1 + ... + j_p = n` of
///   `R_{j_1} ... R_{j_p}`.
pub fn verify_renewal(
    scheme: &InducedScheme,
    fib: &FibreMap,
    n: u32,
    k: i64,
    grid: usize,
    quadrature: usize,
) -> Result<RenewalReport> {
    if n == 0 || n > 8 {
        return Err(Error::InvalidParameter(format!(
            "renewal check supports 1 <= n <= 8 (got {n})"
        )));
    }
    scheme.cell(n)?;
    let blocks: Vec<UlamOperator> = (1..=n)
        .map(|j| renewal_block(scheme, fib, j, k, grid, quadrature).map(|b| b.matrix))
        .collect::<Result<_>>()?;

    // tower time-stepping; pipes[j][h] holds mass that left level 0 h + 1 steps ago
    let mut base = identity(grid);
    let mut history = vec![base.clone()];
    let mut pipes: Vec<Vec<Vec<Complex64>>> = (0..=n as usize).map(|_| Vec::new()).collect();
    for _ in 0..n {
        let mut next = blocks[0].mul_dense(&base);
        for j in 2..=n as usize {
            if pipes[j].len() == j - 1 {
                let top = pipes[j].pop().expect("pipe top");
                let back = blocks[j - 1].mul_dense(&top);
                next.iter_mut().zip(back).for_each(|(a, b)| *a += b);
            }
        }
        for (j, pipe) in pipes.iter_mut().enumerate().skip(2) {
            if j <= n as usize {
                pipe.insert(0, base.clone());
            }
        }
        base = next;
        history.push(base.clone());
    }

    // composition sum, built right to left
    let mut composed = vec![Complex64::new(0.0, 0.0); grid * grid];
    let mut count = 0;
    let mut stack: Vec<(u32, Vec<Complex64>)> = vec![(0, identity(grid))];
    while let Some((used, prod)) = stack.pop() {
        if used == n {
            composed.iter_mut().zip(&prod).for_each(|(a, b)| *a += b);
            count += 1;
            continue;
        }
        for j in 1..=(n - used) {
            stack.push((used + j, blocks[j as usize - 1].mul_dense(&prod)));
        }
    }
    let deviation = base
        .iter()
        .zip(&composed)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    let mass_defect = if k == 0 {
        let col_sums = |m: &[Complex64]| -> Vec<f64> {
            (0..grid).map(|c| (0..grid).map(|r| m[r * grid + c].re).sum()).collect()
        };
        let lost = 2f64.powi(-(scheme.levels() as i32));
        let mut total = col_sums(&history[n as usize]);
        for a in 1..=n {
            let past = &history[(n - a) as usize];
            if let Some(tail) = tail_block(scheme, fib, a, 0, grid, quadrature)? {
                let s = col_sums(&tail.mul_dense(past));
                total.iter_mut().zip(s).for_each(|(t, v)| *t += v);
            }
            let s = col_sums(past);
            total.iter_mut().zip(s).for_each(|(t, v)| *t += lost * v);
        }
        Some(total.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(RenewalReport {
        n,
        k,
        deviation,
        compositions: count,
        mass_defect,
    })
}
