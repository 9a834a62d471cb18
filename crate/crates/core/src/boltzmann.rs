//! Momentum chain of the linear Boltzmann equation on the torus `[-1/2, 1/2]`.
//!
//! With `q0(k) = sin²(2πk)` and `q1(k) = (4/3) sin⁴(πk)` the scattering kernel
//! factorises as `R(k, k') = 2 [q0(k) q1(k') + q1(k) q0(k')]` and the total
//! cross-section is `R(k) = q0(k) + q1(k)`. Each of `q0, q1` integrates to 1/2,
//! so `R̄ = 1` and `π = R`. The jump kernel is the mixture
//!
//! ```text
//! P(k, dk') = θ(k) q̂0(k') dk' + (1 − θ(k)) q̂1(k') dk',   θ = q1 / (q0 + q1),
//! ```
//!
//! with normalised densities `q̂0 = 2 q0`, `q̂1 = 2 q1`.

use crate::chain::{ChainModel, StationaryDensity};
use crate::error::{Error, Result};
use crate::quad::{integrate, level_intervals, scan_grid};
use crate::rng::{open01, Stream};
use crate::stable::TailSpec;
use std::f64::consts::PI;
use std::sync::Arc;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Dispersion relation `ω` with `c_l |sin πk| ≤ ω(k) ≤ c_u |sin πk|` and
/// `ω'(k) → ±c_ω` as `k → ±0`.
#[derive(Clone)]
pub struct DispersionSpec {
    pub omega: RealFn,
    pub omega_prime: RealFn,
    pub c_omega: f64,
    pub c_l: f64,
    pub c_u: f64,
}

impl std::fmt::Debug for DispersionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DispersionSpec").field("c_omega", &self.c_omega).field("c_l", &self.c_l).field("c_u", &self.c_u).finish()
    }
}

impl DispersionSpec {
    /// `ω(k) = |sin πk|`.
    pub fn lattice() -> Self {
        Self {
            omega: Arc::new(|k: f64| (PI * k).sin().abs()),
            omega_prime: Arc::new(|k: f64| PI * k.signum() * (PI * k).cos()),
            c_omega: PI,
            c_l: 1.0,
            c_u: 1.0,
        }
    }

    /// Checks the two-sided bound on a grid and the slope limit near zero.
    pub fn validate(&self) -> Result<()> {
        if !(self.c_l > 0.0 && self.c_l <= self.c_u) {
            return Err(Error::InvalidSpec(format!("need 0 < c_l ≤ c_u, got {} and {}", self.c_l, self.c_u)));
        }
        for i in 1..2000 {
            let k = -0.5 + i as f64 / 2000.0;
            if k == 0.0 {
                continue;
            }
            let s = (PI * k).sin().abs();
            let w = (self.omega)(k);
            if w < self.c_l * s * (1.0 - 1e-12) || w > self.c_u * s * (1.0 + 1e-12) {
                return Err(Error::InvalidSpec(format!("ω({k}) = {w} violates the bounds")));
            }
        }
        for k in [1e-7, -1e-7] {
            let d = (self.omega_prime)(k);
            if (d.abs() - self.c_omega).abs() > 1e-4 * self.c_omega || d.signum() != k.signum() {
                return Err(Error::InvalidSpec(format!("ω'({k}) = {d} does not approach ±{}", self.c_omega)));
            }
        }
        Ok(())
    }
}

#[inline]
fn sin2(x: f64) -> f64 {
    let s = x.sin();
    s * s
}

pub fn q0(k: f64) -> f64 {
    sin2(2.0 * PI * k)
}

pub fn q1(k: f64) -> f64 {
    let s = sin2(PI * k);
    4.0 / 3.0 * s * s
}

/// `R(k, k')` as written: `(4/3)[2 sin²(2πk) sin²(πk') + 2 sin²(2πk') sin²(πk) − sin²(2πk) sin²(2πk')]`.
pub fn kernel_r(k: f64, k2: f64) -> f64 {
    let (a, b) = (sin2(2.0 * PI * k), sin2(2.0 * PI * k2));
    let (c, d) = (sin2(PI * k), sin2(PI * k2));
    4.0 / 3.0 * (2.0 * a * d + 2.0 * b * c - a * b)
}

/// `R(k) = (4/3) sin²(πk) (1 + 2 cos²(πk))`.
pub fn total_r(k: f64) -> f64 {
    let (s, c) = (PI * k).sin_cos();
    4.0 / 3.0 * s * s * (1.0 + 2.0 * c * c)
}

/// `p(k, k') = R(k, k') / (R(k) R(k'))`.
pub fn p_density(k: f64, k2: f64) -> f64 {
    let (a, b) = (sin2(PI * k), sin2(PI * k2));
    6.0 * (a + b - 2.0 * a * b) / ((3.0 - 2.0 * a) * (3.0 - 2.0 * b))
}

/// Weight `θ(k) = q1/(q0 + q1) = sin²(πk) / (1 + 2 cos²(πk))` of the `q̂0` component.
pub fn theta(k: f64) -> f64 {
    let a = sin2(PI * k);
    a / (3.0 - 2.0 * a)
}

/// `t(k) = 1/R(k)`.
pub fn waiting_t(k: f64) -> Result<f64> {
    if k == 0.0 {
        return Err(Error::SingularState("k = 0 has zero cross-section".into()));
    }
    Ok(1.0 / total_r(k))
}

/// First coordinate of a uniform point in the unit ball of `R^d`, whose
/// density is proportional to `(1 − x²)^{(d−1)/2}`.
#[inline]
fn ball_coordinate<const D: usize>(rng: &mut Stream) -> f64 {
    loop {
        let mut v = [0.0; D];
        let mut r2 = 0.0;
        for c in v.iter_mut() {
            *c = 2.0 * open01(rng) - 1.0;
            r2 += *c * *c;
        }
        if r2 < 1.0 {
            return v[0];
        }
    }
}

/// The Boltzmann momentum chain with a given dispersion.
#[derive(Debug, Clone)]
pub struct Boltzmann {
    dispersion: DispersionSpec,
    lattice: bool,
    r_bar: f64,
    tail: TailSpec,
}

const TAIL_LEVEL: f64 = 1e8;

impl Boltzmann {
    pub fn lattice() -> Self {
        Self::build(DispersionSpec::lattice(), true).expect("lattice dispersion is valid")
    }

    pub fn new(dispersion: DispersionSpec) -> Result<Self> {
        dispersion.validate()?;
        Self::build(dispersion, false)
    }

    fn build(dispersion: DispersionSpec, lattice: bool) -> Result<Self> {
        let r_bar = integrate(total_r, &[-0.5, -0.25, 0.0, 0.25, 0.5], 1e-14, 1e-14, 2000)?.value;
        let mut m = Self { dispersion, lattice, r_bar, tail: TailSpec { alpha: 1.5, c_plus: 1.0, c_minus: 1.0 } };
        let cp = m.tail_constant(&[TAIL_LEVEL])?[0];
        let cm = m.tail_constant_negative(&[TAIL_LEVEL])?[0];
        m.tail = TailSpec::new(1.5, cp, cm)?;
        Ok(m)
    }

    pub fn dispersion(&self) -> &DispersionSpec {
        &self.dispersion
    }

    /// `R̄ = ∫ R dk` by quadrature.
    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    pub fn pi_density(&self, k: f64) -> f64 {
        total_r(k) / self.r_bar
    }

    /// `Ψ(k) = ω'(k) t(k)`.
    pub fn psi_checked(&self, k: f64) -> Result<f64> {
        if k == 0.0 {
            return Err(Error::SingularState("Ψ is singular at k = 0".into()));
        }
        Ok(self.psi_value(k))
    }

    #[inline]
    fn psi_value(&self, k: f64) -> f64 {
        if self.lattice {
            let (s, c) = (PI * k).sin_cos();
            let a = s * s;
            PI * k.signum() * c / (4.0 / 3.0 * a * (3.0 - 2.0 * a))
        } else {
            (self.dispersion.omega_prime)(k) / total_r(k)
        }
    }

    /// A draw from `q̂0 ∝ sin²(2πk)`: `2πk = ± arccos X` with `X` the first
    /// coordinate of a uniform point in the disk.
    pub fn sample_q0(&self, rng: &mut Stream) -> f64 {
        let m = ball_coordinate::<2>(rng).acos() / (2.0 * PI);
        if open01(rng) < 0.5 {
            -m
        } else {
            m
        }
    }

    /// A draw from `q̂1 ∝ sin⁴(πk)`: `π|k| = arccos |X|` with `X` the first
    /// coordinate of a uniform point in the 4-ball.
    pub fn sample_q1(&self, rng: &mut Stream) -> f64 {
        let x = ball_coordinate::<4>(rng);
        let m = x.abs().acos() / PI;
        if x < 0.0 {
            -m
        } else {
            m
        }
    }

    /// One jump with its coupling flag: `δ = 0` when the `q̂0` component fired.
    pub fn mixture_step(&self, k: f64, rng: &mut Stream) -> Result<(f64, u8)> {
        if k == 0.0 {
            return Err(Error::SingularState("no jump out of k = 0".into()));
        }
        Ok(self.step_flagged(k, rng))
    }

    #[inline]
    fn step_flagged(&self, k: f64, rng: &mut Stream) -> (f64, u8) {
        if open01(rng) < theta(k) {
            (self.sample_q0(rng), 0)
        } else {
            (self.sample_q1(rng), 1)
        }
    }

    /// `λ^{3/2} π(Ψ > λ)` by quadrature over the level set.
    pub fn tail_constant(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        lambdas.iter().map(|&l| Ok(l.powf(1.5) * self.level_mass(|v| v > l)?)).collect()
    }

    /// `λ^{3/2} π(Ψ < −λ)`.
    pub fn tail_constant_negative(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        lambdas.iter().map(|&l| Ok(l.powf(1.5) * self.level_mass(|v| v < -l)?)).collect()
    }

    fn level_mass(&self, pred: impl Fn(f64) -> bool) -> Result<f64> {
        let grid = scan_grid(-0.5, 0.5, 2048, &[0.0]);
        let inside = |k: f64| k != 0.0 && pred(self.psi_value(k));
        let mut total = 0.0;
        for (a, b) in level_intervals(inside, &grid) {
            let mut breaks = vec![a];
            if a < 0.0 && b > 0.0 {
                breaks.push(0.0);
            }
            breaks.push(b);
            total += integrate(|k| self.pi_density(k), &breaks, 1e-300, 1e-13, 4000)?.value;
        }
        Ok(total)
    }

    /// Nontrivial eigenvalue of the rank-two operator `P`, `∫ (q̂0 − q̂1) θ dk`.
    pub fn second_eigenvalue(&self) -> Result<f64> {
        let f = |k: f64| 2.0 * (q0(k) - q1(k)) * theta(k);
        Ok(integrate(f, &[-0.5, -0.25, 0.0, 0.25, 0.5], 1e-15, 1e-14, 2000)?.value)
    }

    /// Quantile of π by bisection on its CDF
    /// `k + 1/2 − sin(4πk)/(8π) − sin(2πk)/(3π) + sin(4πk)/(24π)`.
    pub fn pi_quantile(&self, p: f64) -> f64 {
        let cdf = |k: f64| {
            let (s2, s4) = ((2.0 * PI * k).sin(), (4.0 * PI * k).sin());
            k + 0.5 - s4 / (8.0 * PI) - s2 / (3.0 * PI) + s4 / (24.0 * PI)
        };
        let (mut lo, mut hi) = (-0.5, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Start points for regeneration statistics: 32 quantiles of π and
    /// `±10^{-j}`, `j = 1..4`, near the singular point.
    pub fn regen_probes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..32).map(|j| self.pi_quantile((j as f64 + 0.5) / 32.0)).collect();
        for j in 1..=4 {
            let e = 10f64.powi(-j);
            v.push(e);
            v.push(-e);
        }
        v
    }
}

impl ChainModel for Boltzmann {
    type State = f64;

    fn stationary_draw(&self, rng: &mut Stream) -> f64 {
        if open01(rng) < 0.5 {
            self.sample_q0(rng)
        } else {
            self.sample_q1(rng)
        }
    }
    fn step(&self, x: &f64, rng: &mut Stream) -> f64 {
        self.step_flagged(*x, rng).0
    }
    fn psi(&self, x: &f64) -> f64 {
        self.psi_value(*x)
    }
    fn tail(&self) -> TailSpec {
        self.tail
    }
    fn waiting_scale(&self, x: &f64) -> f64 {
        1.0 / total_r(*x)
    }
    fn rate_and_wait(&self, x: &f64) -> (f64, f64) {
        let (s, c) = (PI * *x).sin_cos();
        let a = s * s;
        let r = 4.0 / 3.0 * a * (3.0 - 2.0 * a);
        let v = if self.lattice { PI * x.signum() * c } else { (self.dispersion.omega_prime)(*x) };
        (v, 1.0 / r)
    }
    fn min_waiting_scale(&self) -> f64 {
        2.0 / 3.0
    }
    fn mean_waiting(&self) -> f64 {
        1.0 / self.r_bar
    }
    fn pi_density(&self) -> Option<&dyn StationaryDensity> {
        Some(self)
    }
}

impl StationaryDensity for Boltzmann {
    fn support(&self) -> (f64, f64) {
        (-0.5, 0.5)
    }
    fn pdf(&self, x: f64) -> f64 {
        self.pi_density(x)
    }
    fn observable(&self, x: f64) -> f64 {
        if x == 0.0 {
            f64::NAN
        } else {
            self.psi_value(x)
        }
    }
    fn singular_points(&self) -> Vec<f64> {
        vec![0.0]
    }
}
