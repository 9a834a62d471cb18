//! The fractional heat equation `∂_t u = −D (−∂²_x)^{3/4} u` solved by a
//! Fourier multiplier, and the Monte Carlo solution of the kinetic equation it
//! approximates.
//!
//! Fourier convention: `û(ξ) = ∫ u(x) e^{−iξx} dx`, inverse with `(2π)^{-1}`,
//! so the fractional Laplacian has symbol `|ξ|^{3/2}`.

use crate::chain::{run_functional_from, ChainModel};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::stable::{levy_exponent, LevyExponent, LevyKind, TailSpec};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

/// Stable index of the limit; the Laplacian power is half of it.
pub const STABLE_INDEX: f64 = 1.5;

/// Periodic uniform grid `x_j = −L + j·2L/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidSpec(format!("grid needs L > 0 and a power-of-two size, got L={half_width}, n={points}")));
        }
        Ok(Self { half_width, points })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|j| -self.half_width + j as f64 * h).collect()
    }

    /// Angular frequency of FFT bin `j`.
    pub fn frequency(&self, j: usize) -> f64 {
        let n = self.points as i64;
        let k = if (j as i64) <= n / 2 { j as i64 } else { j as i64 - n };
        PI * k as f64 / self.half_width
    }
}

/// Half-width `L` for which the limit law at time `t` puts less than `mass`
/// outside `[−L, L]`, using its power tail `P(|Z_t| > L) ≈ 2 c t L^{-3/2}`,
/// rounded up to a power of two.
pub fn domain_half_width(d: f64, t: f64, mass: f64) -> f64 {
    // c from D = 2 α c (−Γ(−α) cos(πα/2))
    let a = STABLE_INDEX;
    let c = d / (2.0 * a * (-gamma(-a) * (PI * a / 2.0).cos()));
    let l = (2.0 * c * t.max(1e-12) / mass).powf(1.0 / a);
    l.max(1.0).log2().ceil().exp2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FracHeatField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub t: f64,
    pub diffusivity: f64,
    /// Power of `−∂²_x`, i.e. half the stable index.
    pub alpha_frac: f64,
}

/// Fraction of spectral energy in the top decile of frequencies.
fn top_decile_energy(spec: &[Complex64]) -> f64 {
    let n = spec.len();
    let cut = (0.9 * (n / 2) as f64) as i64;
    let (mut top, mut total) = (0.0, 0.0);
    for (j, v) in spec.iter().enumerate() {
        let k = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
        let e = v.norm_sqr();
        total += e;
        if k.abs() > cut {
            top += e;
        }
    }
    if total > 0.0 {
        top / total
    } else {
        0.0
    }
}

/// Inverse transform of `û0(ξ) exp(−D|ξ|^{3/2} t)` sampled on `grid`.
pub fn frac_heat_solve<F: Fn(f64) -> f64>(u0: F, grid: Grid, t: f64, d: f64) -> Result<FracHeatField> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time {t} must be non-negative")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidSpec(format!("diffusivity {d} must be positive")));
    }
    let x = grid.nodes();
    let n = grid.points;
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(u0(v), 0.0)).collect();
    if buf.iter().any(|v| !v.re.is_finite()) {
        return Err(Error::InvalidSpec("initial profile is not finite on the grid".into()));
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let top = top_decile_energy(&buf);
    if top > 1e-6 {
        return Err(Error::Resolution(format!("{top:.3e} of the spectral energy sits in the top decile")));
    }
    for (j, v) in buf.iter_mut().enumerate() {
        *v *= (-d * grid.frequency(j).abs().powf(STABLE_INDEX) * t).exp() / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(FracHeatField { grid, x, values: buf.iter().map(|c| c.re).collect(), t, diffusivity: d, alpha_frac: STABLE_INDEX / 2.0 })
}

impl FracHeatField {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.step()
    }

    /// Linear interpolation between grid nodes.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let l = self.grid.half_width;
        if !(x >= -l && x < l) {
            return Err(Error::GridMismatch(format!("{x} outside [−{l}, {l})")));
        }
        let pos = (x + l) / self.grid.step();
        let i = (pos.floor() as usize).min(self.grid.points - 1);
        let w = pos - i as f64;
        let next = self.values[(i + 1) % self.grid.points];
        Ok(self.values[i] * (1.0 - w) + next * w)
    }

    /// Value at a grid node; `x` must coincide with a node.
    pub fn node_value(&self, x: f64) -> Result<f64> {
        let pos = (x + self.grid.half_width) / self.grid.step();
        let i = pos.round();
        if (pos - i).abs() > 1e-9 || i < 0.0 || i as usize >= self.grid.points {
            return Err(Error::GridMismatch(format!("{x} is not a grid node")));
        }
        Ok(self.values[i as usize])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,value\n");
        for (x, v) in self.x.iter().zip(&self.values) {
            let _ = writeln!(s, "{x:e},{v:e}");
        }
        s
    }
}

/// `−Re ψ(1)/t̄` for the symmetric exponent built from `tail` with its
/// constants multiplied by the weight moment `A_α`. The quadrature value is
/// returned after checking it against the closed form.
pub fn effective_diffusivity(tail: TailSpec, weight_moment: f64, mean_waiting: f64) -> Result<f64> {
    if !tail.is_symmetric() {
        return Err(Error::InvalidSpec("effective diffusivity needs a symmetric tail".into()));
    }
    let le = LevyExponent::new(LevyKind::TypeII, tail.scaled(weight_moment)?)?;
    let quad = -levy_exponent(&le, 1.0)?.re;
    let closed = le.scale_coefficient();
    let residual = (quad - closed).abs() / closed;
    if residual > 1e-8 {
        return Err(Error::Numeric { what: "Lévy exponent quadrature disagrees with the closed form".into(), residual });
    }
    Ok(quad / mean_waiting)
}

/// [`effective_diffusivity`] for a chain with exponential holding times.
pub fn model_effective_diffusivity<M: ChainModel>(model: &M) -> Result<f64> {
    let tail = model.tail();
    effective_diffusivity(tail, gamma(1.0 + tail.alpha), model.mean_waiting())
}

/// Initial data `u0(x, k)` vanishing for `|x| > radius`.
#[derive(Clone)]
pub struct KineticInitialData {
    pub f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub radius: f64,
}

impl std::fmt::Debug for KineticInitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KineticInitialData {{ radius: {} }}", self.radius)
    }
}

impl KineticInitialData {
    /// Unit-mass Gaussian of standard deviation `width` in `x`, cut at `8·width`,
    /// independent of `k`.
    pub fn gaussian(width: f64) -> Self {
        let radius = 8.0 * width;
        let norm = 1.0 / (width * (2.0 * PI).sqrt());
        Self {
            f: Arc::new(move |x: f64, _k: f64| if x.abs() <= radius { norm * (-0.5 * (x / width).powi(2)).exp() } else { 0.0 }),
            radius,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self { f: Arc::new(move |_, _| value), radius: f64::INFINITY }
    }

    pub fn eval(&self, x: f64, k: f64) -> f64 {
        (self.f)(x, k)
    }

    /// `∫_T u0(x, k) dk` by the midpoint rule on 1024 cells.
    pub fn k_average(&self, x: f64) -> f64 {
        let m = 1024;
        (0..m).map(|j| self.eval(x, -0.5 + (j as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticRow {
    pub x: f64,
    pub k: f64,
    pub mean: f64,
    pub se: f64,
    pub n: f64,
    pub m: usize,
}

/// Monte Carlo estimates of `u(Nt, N^{1/α} x, k)`, one row per `(x, k)` probe.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticTable {
    pub t: f64,
    pub rows: Vec<KineticRow>,
}

impl KineticTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,k,mean,se,N,M\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:e},{:e},{:e},{:e},{},{}", r.x, r.k, r.mean, r.se, r.n, r.m);
        }
        s
    }
}

/// Averages `u0(x + N^{-1/α} ∫_0^{Nt} V(k(s)) ds, k(Nt))` over `paths` paths
/// started at each `k` probe. Every path serves all `x` probes.
#[allow(clippy::too_many_arguments)]
pub fn mc_kinetic_solution<M: ChainModel<State = f64>>(
    model: &M,
    u0: &KineticInitialData,
    n: f64,
    t: f64,
    x_probes: &[f64],
    k_probes: &[f64],
    paths: usize,
    seed: u64,
) -> Result<KineticTable> {
    if !(n >= 1.0) || !(t >= 0.0) || paths < 2 {
        return Err(Error::InvalidSpec(format!("need N ≥ 1, t ≥ 0 and two paths; got N={n}, t={t}, M={paths}")));
    }
    let scale = n.powf(-1.0 / model.tail().alpha);
    let horizon = n * t;
    let mut rows = Vec::with_capacity(x_probes.len() * k_probes.len());
    for (p, &k0) in k_probes.iter().enumerate() {
        let ends: Vec<(f64, f64)> = (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, 0x4B1E_0000 + p as u64, i as u64);
                let (integral, k_end) = run_functional_from(model, k0, horizon, &mut rng);
                (scale * integral, k_end)
            })
            .collect();
        for &x in x_probes {
            let m = paths as f64;
            let mean = ends.iter().map(|&(dx, k)| u0.eval(x + dx, k)).sum::<f64>() / m;
            let var = ends.iter().map(|&(dx, k)| (u0.eval(x + dx, k) - mean).powi(2)).sum::<f64>() / (m - 1.0);
            rows.push(KineticRow { x, k: k0, mean, se: (var / m).sqrt(), n, m: paths });
        }
    }
    Ok(KineticTable { t, rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2kRow {
    pub x: f64,
    /// `∫_T |u − ū|² dk` with uniform weights on the `k` probes.
    pub error: f64,
    /// Delta-method standard error of `error`.
    pub se: f64,
}

/// Squared `L²(dk)` distance between the table and `ū(t, x)` at every `x` probe.
pub fn l2k_error(table: &KineticTable, ubar: &FracHeatField) -> Result<Vec<L2kRow>> {
    if (table.t - ubar.t).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!("table at t={} against a field at t={}", table.t, ubar.t)));
    }
    let mut xs: Vec<f64> = Vec::new();
    for r in &table.rows {
        if !xs.contains(&r.x) {
            xs.push(r.x);
        }
    }
    let ks_of = |x: f64| -> Vec<f64> { table.rows.iter().filter(|r| r.x == x).map(|r| r.k).collect() };
    let reference = ks_of(xs[0]);
    if reference.is_empty() {
        return Err(Error::InsufficientData("empty table".into()));
    }
    let mut out = Vec::with_capacity(xs.len());
    for &x in &xs {
        if ks_of(x) != reference {
            return Err(Error::GridMismatch(format!("k probes differ at x = {x}")));
        }
        let target = ubar.node_value(x)?;
        let rows: Vec<&KineticRow> = table.rows.iter().filter(|r| r.x == x).collect();
        let m = rows.len() as f64;
        let error = rows.iter().map(|r| (r.mean - target).powi(2)).sum::<f64>() / m;
        let var = rows.iter().map(|r| (2.0 * (r.mean - target) * r.se).powi(2) + 2.0 * r.se.powi(4)).sum::<f64>() / (m * m);
        out.push(L2kRow { x, error, se: var.sqrt() });
    }
    Ok(out)
}

/// `K` uniform midpoints of the torus `[−1/2, 1/2)`.
pub fn torus_midpoints(count: usize) -> Vec<f64> {
    (0..count).map(|j| -0.5 + (j as f64 + 0.5) / count as f64).collect()
}
