//! Finite-volume discretisation of a transition kernel and the martingale
//! route: spectral gap, Poisson equation and martingale decomposition.
//!
//! All norms are taken in `L²(π_h)`. The discrete operator is built from the
//! symmetric matrix `W_ij = w_i p(x_i, x_j) w_j`, where `w_i` is the π-mass of
//! cell `i`; rows of `W` are normalised to give `P_h` and the normalised row
//! sums give `π_h`, so `π_h` is exactly invariant and `P_h` exactly reversible
//! up to rounding.

use crate::boltzmann::{p_density, Boltzmann};
use crate::chain::{IidPareto, Reciprocal, StationaryDensity};
use crate::error::{Error, Result};
use crate::rng::{open01, Stream};
use crate::stats::CompensatedSum;
use std::fmt::Write as _;

/// A kernel `P(x, dy) = p(x, y) π(dy)` on an interval.
pub trait GridModel {
    fn domain(&self) -> (f64, f64);
    fn pi_density(&self, x: f64) -> f64;
    /// Density of `P(x, ·)` with respect to π.
    fn p_density(&self, x: f64, y: f64) -> f64;
    fn observable(&self, x: f64) -> f64;
    /// True when `p ≡ 1`.
    fn independent(&self) -> bool {
        false
    }
}

impl GridModel for Boltzmann {
    fn domain(&self) -> (f64, f64) {
        (-0.5, 0.5)
    }
    fn pi_density(&self, x: f64) -> f64 {
        Boltzmann::pi_density(self, x)
    }
    fn p_density(&self, x: f64, y: f64) -> f64 {
        p_density(x, y)
    }
    fn observable(&self, x: f64) -> f64 {
        StationaryDensity::observable(self, x)
    }
}

impl GridModel for IidPareto {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn pi_density(&self, _x: f64) -> f64 {
        1.0
    }
    fn p_density(&self, _x: f64, _y: f64) -> f64 {
        1.0
    }
    fn observable(&self, x: f64) -> f64 {
        StationaryDensity::observable(self, x)
    }
    fn independent(&self) -> bool {
        true
    }
}

impl GridModel for Reciprocal {
    fn domain(&self) -> (f64, f64) {
        StationaryDensity::support(self)
    }
    fn pi_density(&self, x: f64) -> f64 {
        StationaryDensity::pdf(self, x)
    }
    fn p_density(&self, _x: f64, _y: f64) -> f64 {
        1.0
    }
    fn observable(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn independent(&self) -> bool {
        true
    }
}

/// Row-stochastic matrix `P_h` with invariant weights `π_h` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedOperator {
    pub grid: Vec<f64>,
    pub pi_weights: Vec<f64>,
    /// Row-major `M × M`.
    pub matrix: Vec<f64>,
    /// Midpoints removed because their cell carries no π-mass.
    pub dropped: Vec<f64>,
}

/// Cell midpoints of `[a, b]`, mirrored exactly when the interval is symmetric.
fn midpoints(a: f64, b: f64, m: usize) -> Vec<f64> {
    let h = (b - a) / m as f64;
    let mut x: Vec<f64> = (0..m).map(|i| a + (i as f64 + 0.5) * h).collect();
    if a == -b {
        for i in 0..m / 2 {
            x[m - 1 - i] = -x[i];
        }
        if m % 2 == 1 {
            x[m / 2] = 0.0;
        }
    }
    x
}

pub fn discretize<G: GridModel>(model: &G, m: usize) -> Result<DiscretizedOperator> {
    if m < 16 {
        return Err(Error::InvalidSpec(format!("grid size {m} below 16")));
    }
    let (a, b) = model.domain();
    let h = (b - a) / m as f64;
    let mut grid = Vec::with_capacity(m);
    let mut mass = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    for x in midpoints(a, b, m) {
        let w = model.pi_density(x) * h;
        if w > 0.0 && w.is_finite() {
            grid.push(x);
            mass.push(w);
        } else {
            dropped.push(x);
        }
    }
    let n = grid.len();
    let mut matrix = vec![0.0; n * n];
    let pi_weights;
    if model.independent() {
        let total: f64 = mass.iter().sum();
        pi_weights = mass.iter().map(|w| w / total).collect::<Vec<_>>();
        for i in 0..n {
            matrix[i * n..(i + 1) * n].copy_from_slice(&pi_weights);
        }
    } else {
        let mut rows = vec![0.0; n];
        for i in 0..n {
            for j in 0..=i {
                let v = mass[i] * model.p_density(grid[i], grid[j]) * mass[j];
                matrix[i * n + j] = v;
                matrix[j * n + i] = v;
            }
        }
        for i in 0..n {
            let mut s = CompensatedSum::new();
            matrix[i * n..(i + 1) * n].iter().for_each(|&v| s.add(v));
            rows[i] = s.value();
            if !(rows[i] > 0.0) {
                return Err(Error::SingularState(format!("cell at {} has no outgoing mass", grid[i])));
            }
        }
        let total: f64 = rows.iter().sum();
        for i in 0..n {
            matrix[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= rows[i]);
        }
        pi_weights = rows.iter().map(|r| r / total).collect();
    }
    Ok(DiscretizedOperator { grid, pi_weights, matrix, dropped })
}

impl DiscretizedOperator {
    /// Operator from an explicit row-stochastic matrix and its invariant law.
    pub fn from_matrix(grid: Vec<f64>, matrix: Vec<f64>, pi_weights: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.len() != n * n || pi_weights.len() != n {
            return Err(Error::GridMismatch(format!("{n} grid points, {} matrix entries, {} weights", matrix.len(), pi_weights.len())));
        }
        let op = Self { grid, pi_weights, matrix, dropped: Vec::new() };
        let rows = op.row_sum_error();
        let fixed = op.fixed_vector_error();
        if rows > 1e-12 || fixed > 1e-10 {
            return Err(Error::InvalidSpec(format!("row-sum error {rows}, invariance error {fixed}")));
        }
        Ok(op)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[i * n..(i + 1) * n]
    }

    /// `P_h f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i).iter().zip(f).map(|(p, v)| p * v).sum()).collect()
    }

    /// `P_h* f` with `(P*)_ij = π_j P_ji / π_i`.
    pub fn apply_adjoint(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let w = self.pi_weights[j] * f[j];
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.matrix[j * n + i] * w;
            }
        }
        out.iter_mut().zip(&self.pi_weights).for_each(|(o, p)| *o /= p);
        out
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        let mut s = CompensatedSum::new();
        f.iter().zip(&self.pi_weights).for_each(|(v, p)| s.add(v * p));
        s.value()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.pi_weights).map(|(v, p)| p * v * v).sum::<f64>().sqrt()
    }

    /// `(Σ π_i |f_i|^p)^{1/p}`.
    pub fn lp_norm(&self, f: &[f64], p: f64) -> f64 {
        f.iter().zip(&self.pi_weights).map(|(v, w)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    pub fn row_sum_error(&self) -> f64 {
        (0..self.len()).map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `‖π_h P_h − π_h‖₁`.
    pub fn fixed_vector_error(&self) -> f64 {
        let n = self.len();
        let mut left = vec![0.0; n];
        for i in 0..n {
            let p = self.pi_weights[i];
            for (l, v) in left.iter_mut().zip(self.row(i)) {
                *l += p * v;
            }
        }
        left.iter().zip(&self.pi_weights).map(|(l, p)| (l - p).abs()).sum()
    }

    /// `max |π_i P_ij − π_j P_ji|`.
    pub fn detailed_balance_error(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                let d = self.pi_weights[i] * self.matrix[i * n + j] - self.pi_weights[j] * self.matrix[j * n + i];
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// Observable sampled at the grid points.
    pub fn sample<G: GridModel>(&self, model: &G) -> Vec<f64> {
        self.grid.iter().map(|&x| model.observable(x)).collect()
    }

    /// `f − Σ π f`.
    pub fn center(&self, f: &[f64]) -> Vec<f64> {
        let m = self.mean(f);
        f.iter().map(|v| v - m).collect()
    }

    /// Index drawn from `π_h`.
    pub fn stationary_index(&self, rng: &mut Stream) -> usize {
        draw_index(&self.pi_weights, rng)
    }

    /// Grid path `X_0 ~ π_h`, then `n` steps of `P_h`.
    pub fn simulate_path(&self, n: usize, rng: &mut Stream) -> Vec<usize> {
        let mut path = Vec::with_capacity(n + 1);
        let mut i = self.stationary_index(rng);
        path.push(i);
        for _ in 0..n {
            i = draw_index(self.row(i), rng);
            path.push(i);
        }
        path
    }
}

fn draw_index(weights: &[f64], rng: &mut Stream) -> usize {
    let u = open01(rng);
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

const GAP_TOL: f64 = 1e-10;
const GAP_MAX_ITER: usize = 100_000;

/// Norm of `P_h` on the π_h-mean-zero subspace of `L²(π_h)`, from power
/// iteration on `P_h* P_h`.
pub fn spectral_gap(op: &DiscretizedOperator) -> Result<f64> {
    let n = op.len();
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5 + 1e-3 * op.grid[i]).collect();
    let mut history = Vec::new();
    let project = |v: &mut Vec<f64>| {
        let m = op.mean(v);
        v.iter_mut().for_each(|x| *x -= m);
        let nv = op.norm(v);
        if nv > 0.0 {
            v.iter_mut().for_each(|x| *x /= nv);
        }
        nv
    };
    if project(&mut v) == 0.0 {
        return Ok(0.0);
    }
    let mut last = f64::INFINITY;
    for it in 0..GAP_MAX_ITER {
        let mut w = op.apply_adjoint(&op.apply(&v));
        let m = op.mean(&w);
        w.iter_mut().for_each(|x| *x -= m);
        // Rayleigh quotient ⟨v, P*P v⟩ with ‖v‖ = 1
        let rq: f64 = v.iter().zip(&w).zip(&op.pi_weights).map(|((a, b), p)| p * a * b).sum::<f64>().max(0.0);
        let a = rq.sqrt();
        history.push(a);
        let nw = op.norm(&w);
        if nw == 0.0 || nw < 1e-300 {
            return Ok(0.0);
        }
        if (a - last).abs() < GAP_TOL && it > 2 {
            return Ok(a.min(1.0));
        }
        last = a;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::NonConvergence { iterations: GAP_MAX_ITER, history })
}

/// Zero-mean solution of `(I − P_h) χ = ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub chi: Vec<f64>,
    /// `‖(I − P_h) χ − ψ‖_∞`.
    pub residual: f64,
    pub terms_used: usize,
}

/// Order in which the Neumann terms are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Summation {
    Forward,
    Reverse,
}

pub fn solve_poisson(op: &DiscretizedOperator, psi: &[f64], tol: f64) -> Result<PoissonSolution> {
    solve_poisson_ordered(op, psi, tol, Summation::Forward)
}

/// `χ = Σ_{n≥0} P_h^n ψ`, stopped once `‖P_h^n ψ‖_∞ < tol (1 − a)`.
pub fn solve_poisson_ordered(op: &DiscretizedOperator, psi: &[f64], tol: f64, order: Summation) -> Result<PoissonSolution> {
    if psi.len() != op.len() {
        return Err(Error::GridMismatch(format!("observable has {} entries for {} cells", psi.len(), op.len())));
    }
    let scale: f64 = psi.iter().zip(&op.pi_weights).map(|(v, p)| v.abs() * p).sum();
    let m = op.mean(psi);
    if m.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotCentered(m));
    }
    let a = spectral_gap(op)?;
    if a >= 1.0 - 1e-8 {
        return Err(Error::NoSpectralGap(a));
    }
    let stop = tol * (1.0 - a);
    let mut terms = vec![psi.to_vec()];
    loop {
        let next = op.apply(terms.last().expect("non-empty"));
        let size = next.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if size < stop {
            break;
        }
        if terms.len() > 10_000_000 {
            return Err(Error::NonConvergence { iterations: terms.len(), history: Vec::new() });
        }
        terms.push(next);
    }
    let n = op.len();
    let mut chi = vec![0.0; n];
    for (i, c) in chi.iter_mut().enumerate() {
        let mut s = CompensatedSum::new();
        match order {
            Summation::Forward => terms.iter().for_each(|t| s.add(t[i])),
            Summation::Reverse => terms.iter().rev().for_each(|t| s.add(t[i])),
        }
        *c = s.value();
    }
    let mean = op.mean(&chi);
    chi.iter_mut().for_each(|c| *c -= mean);
    let residual = poisson_residual(op, &chi, psi);
    if residual > tol {
        return Err(Error::Numeric { what: "Poisson residual above tolerance".into(), residual });
    }
    Ok(PoissonSolution { chi, residual, terms_used: terms.len() })
}

/// `‖(I − P_h) χ − ψ‖_∞`.
pub fn poisson_residual(op: &DiscretizedOperator, chi: &[f64], psi: &[f64]) -> f64 {
    let pc = op.apply(chi);
    chi.iter().zip(&pc).zip(psi).map(|((c, p), s)| (c - p - s).abs()).fold(0.0, f64::max)
}

/// `Z_n = χ(X_n) − P_hχ(X_{n−1})`, `n = 1..=N`, and `P_hχ(X_0) − P_hχ(X_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Martingale {
    pub increments: Vec<f64>,
    pub boundary: f64,
}

pub fn martingale_decompose(op: &DiscretizedOperator, sol: &PoissonSolution, path: &[usize]) -> Result<Martingale> {
    if path.is_empty() {
        return Err(Error::InvalidSpec("empty path".into()));
    }
    if let Some(&bad) = path.iter().find(|&&i| i >= op.len()) {
        return Err(Error::GridMismatch(format!("path index {bad} outside a grid of {}", op.len())));
    }
    let pchi = op.apply(&sol.chi);
    let increments = path.windows(2).map(|w| sol.chi[w[1]] - pchi[w[0]]).collect();
    let boundary = pchi[path[0]] - pchi[*path.last().expect("non-empty")];
    Ok(Martingale { increments, boundary })
}

/// `E[Z_n | X_{n−1} = i] = Σ_j P_ij χ_j − (P_h χ)_i` for every cell.
pub fn conditional_increment_means(op: &DiscretizedOperator, sol: &PoissonSolution) -> Vec<f64> {
    let pchi = op.apply(&sol.chi);
    (0..op.len())
        .map(|i| {
            let mut s = CompensatedSum::new();
            op.row(i).iter().zip(&sol.chi).for_each(|(p, c)| s.add(p * c));
            s.value() - pchi[i]
        })
        .collect()
}

/// `Ψ_N = Ψ 1{|Ψ| ≤ N}`.
pub fn truncate(psi: &[f64], level: f64) -> Vec<f64> {
    psi.iter().map(|&v| if v.abs() <= level { v } else { 0.0 }).collect()
}

/// Solves `(I − P_h) χ_N = Ψ_N − c_N` with `c_N = Σ π_h Ψ_N`.
pub fn truncated_poisson(op: &DiscretizedOperator, psi: &[f64], level: f64, tol: f64) -> Result<(PoissonSolution, f64)> {
    let trunc = truncate(psi, level);
    let c_n = op.mean(&trunc);
    let centred: Vec<f64> = trunc.iter().map(|v| v - c_n).collect();
    Ok((solve_poisson(op, &centred, tol)?, c_n))
}

/// `sup_N ‖P_h Ψ_N‖_{L^{α'}(π_h)}` over a truncation schedule.
pub fn sup_truncated_image_norm(op: &DiscretizedOperator, psi: &[f64], levels: &[f64], alpha_prime: f64) -> f64 {
    levels.iter().map(|&l| op.lp_norm(&op.apply(&truncate(psi, l)), alpha_prime)).fold(0.0, f64::max)
}

impl DiscretizedOperator {
    /// Text form: a line `M=<m>`, then one line per cell with the grid point,
    /// its weight and the matrix row, all in round-trip scientific notation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "M={}", self.len());
        for i in 0..self.len() {
            let _ = write!(s, "{:e} {:e}", self.grid[i], self.pi_weights[i]);
            for v in self.row(i) {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let m = parse_header(lines.next(), "M")?;
        let (mut grid, mut pi, mut matrix) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m * m));
        for (i, line) in lines.enumerate() {
            let vals = parse_reals(line)?;
            if vals.len() != m + 2 {
                return Err(Error::Parse(format!("row {i} has {} fields, expected {}", vals.len(), m + 2)));
            }
            grid.push(vals[0]);
            pi.push(vals[1]);
            matrix.extend_from_slice(&vals[2..]);
        }
        if grid.len() != m {
            return Err(Error::Parse(format!("{} rows for M={m}", grid.len())));
        }
        Ok(Self { grid, pi_weights: pi, matrix, dropped: Vec::new() })
    }
}

impl PoissonSolution {
    /// Text form: `M=<m> residual=<r> terms=<n>`, then one value of χ per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("M={} residual={:e} terms={}\n", self.chi.len(), self.residual, self.terms_used);
        for c in &self.chi {
            let _ = writeln!(s, "{c:e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
        let mut fields = std::collections::HashMap::new();
        for part in head.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {part}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Parse(format!("missing {k}")));
        let m: usize = get("M")?.parse().map_err(|e| Error::Parse(format!("M: {e}")))?;
        let residual: f64 = get("residual")?.parse().map_err(|e| Error::Parse(format!("residual: {e}")))?;
        let terms_used: usize = get("terms")?.parse().map_err(|e| Error::Parse(format!("terms: {e}")))?;
        let chi = lines.map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{l}: {e}")))).collect::<Result<Vec<_>>>()?;
        if chi.len() != m {
            return Err(Error::Parse(format!("{} values for M={m}", chi.len())));
        }
        Ok(Self { chi, residual, terms_used })
    }
}

fn parse_header(line: Option<&str>, key: &str) -> Result<usize> {
    let line = line.ok_or_else(|| Error::Parse("empty input".into()))?;
    let v = line.trim().strip_prefix(key).and_then(|r| r.strip_prefix('=')).ok_or_else(|| Error::Parse(format!("expected {key}=<count>, got {line}")))?;
    v.parse().map_err(|e| Error::Parse(format!("{key}: {e}")))
}

fn parse_reals(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}")))).collect()
}
