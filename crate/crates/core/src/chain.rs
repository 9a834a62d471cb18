//! Markov chains with a heavy-tailed observable.
//!
//! A [`ChainModel`] supplies the transition kernel, exact stationary draws, the
//! observable Ψ and the waiting-time scale `t(x)` of the associated jump
//! process. Runners build the discrete sums, the randomly weighted sums and the
//! continuous-time additive functional on top of it.

use crate::error::{Error, Result};
use crate::quad::{integrate, level_intervals, scan_grid};
use crate::rng::{exp1, open01, Stream};
use crate::stable::TailSpec;
use rayon::prelude::*;
use statrs::function::gamma::gamma;
use std::sync::Arc;

/// A stationary density on an interval of the real line, with the observable
/// written as a function of the same coordinate.
pub trait StationaryDensity {
    fn support(&self) -> (f64, f64);
    fn pdf(&self, x: f64) -> f64;
    fn observable(&self, x: f64) -> f64;
    /// Points inside the support where the observable or the density is singular
    /// or discontinuous.
    fn singular_points(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub trait ChainModel: Sync {
    type State: Clone + Send;

    fn stationary_draw(&self, rng: &mut Stream) -> Self::State;
    fn step(&self, x: &Self::State, rng: &mut Stream) -> Self::State;
    fn psi(&self, x: &Self::State) -> f64;
    fn tail(&self) -> TailSpec;

    /// Waiting-time scale `t(x)`; the holding time in `x` is `t(x) τ` with `τ ~ Exp(1)`.
    fn waiting_scale(&self, _x: &Self::State) -> f64 {
        1.0
    }
    /// `(V(x), t(x))` with `V = Ψ/t`.
    fn rate_and_wait(&self, x: &Self::State) -> (f64, f64) {
        let t = self.waiting_scale(x);
        (self.psi(x) / t, t)
    }
    /// Lower bound `t_*` on the waiting-time scale.
    fn min_waiting_scale(&self) -> f64 {
        1.0
    }
    /// `t̄ = ∫ t dπ`.
    fn mean_waiting(&self) -> f64 {
        1.0
    }
    fn pi_density(&self) -> Option<&dyn StationaryDensity> {
        None
    }
}

/// `S_N = Σ_{n=1}^N Ψ(X_n)` with `X_0 ~ π`.
pub fn run_sum<M: ChainModel>(model: &M, n: usize, rng: &mut Stream) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSpec("N must be at least 1".into()));
    }
    let mut x = model.stationary_draw(rng);
    let mut s = 0.0;
    for _ in 0..n {
        x = model.step(&x, rng);
        s += model.psi(&x);
    }
    Ok(s)
}

/// Law of the i.i.d. multipliers `ρ_n`.
#[derive(Clone)]
pub enum WeightLaw {
    Constant,
    Exponential,
    /// Quantile function on (0, 1) of a positive law.
    Quantile(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for WeightLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightLaw::Constant => write!(f, "Constant"),
            WeightLaw::Exponential => write!(f, "Exponential"),
            WeightLaw::Quantile(_) => write!(f, "Quantile(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub law: WeightLaw,
    /// `A_α = E[ρ^α]`.
    pub alpha_moment: f64,
}

impl WeightSpec {
    pub fn constant() -> Self {
        Self { law: WeightLaw::Constant, alpha_moment: 1.0 }
    }

    pub fn exponential(alpha: f64) -> Self {
        Self { law: WeightLaw::Exponential, alpha_moment: gamma(1.0 + alpha) }
    }

    /// Weights with quantile function `q`; `E[ρ^α]` is computed by quadrature.
    pub fn quantile(q: Arc<dyn Fn(f64) -> f64 + Send + Sync>, alpha: f64) -> Result<Self> {
        let m = integrate(|u| q(u).powf(alpha), &[0.0, 0.5, 1.0], 1e-12, 1e-12, 20_000)?.value;
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidSpec(format!("weight moment E[ρ^α] = {m} must be finite and positive")));
        }
        Ok(Self { law: WeightLaw::Quantile(q), alpha_moment: m })
    }

    pub fn draw(&self, rng: &mut Stream) -> f64 {
        match &self.law {
            WeightLaw::Constant => 1.0,
            WeightLaw::Exponential => exp1(rng),
            WeightLaw::Quantile(q) => q(open01(rng)),
        }
    }
}

/// `S_N(t) = Σ_{n=0}^{⌊Nt⌋} Ψ(X_n) ρ_n`. Each term draws `ρ_n` before stepping.
pub fn run_weighted_sum<M: ChainModel>(model: &M, weights: &WeightSpec, n: usize, t: f64, rng: &mut Stream) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSpec("N must be at least 1".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time t = {t} must be finite and non-negative")));
    }
    let last = (n as f64 * t).floor() as usize;
    let mut x = model.stationary_draw(rng);
    let mut s = 0.0;
    for j in 0..=last {
        s += model.psi(&x) * weights.draw(rng);
        if j < last {
            x = model.step(&x, rng);
        }
    }
    Ok(s)
}

/// Law of the unit-scale holding variable `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Holding {
    #[default]
    Exponential,
    /// `τ` replaced by its mean, 1.
    Deterministic,
}

impl Holding {
    #[inline]
    fn draw(self, rng: &mut Stream) -> f64 {
        match self {
            Holding::Exponential => exp1(rng),
            Holding::Deterministic => 1.0,
        }
    }
}

/// Quantities read off one jump path up to time `Nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalSample {
    /// `Y_N(t) = N^{-1/α} ∫_0^{Nt} V(X(s)) ds`.
    pub y: f64,
    /// `B_N(s_N(t)) = N^{-1/α} Σ_{k=0}^{n(Nt)} Ψ(X_k) τ_k`.
    pub b: f64,
    /// `s_N(t) = n(Nt)/N`.
    pub s: f64,
}

/// Simulates the jump path with jump times `T_0 = 0`, `T_{k+1} = T_k + t(X_k) τ_k`,
/// and `n(u)` defined by `T_{n(u)} ≤ u < T_{n(u)+1}`.
pub fn run_functional_paired<M: ChainModel>(model: &M, n: usize, t: f64, holding: Holding, rng: &mut Stream) -> Result<FunctionalSample> {
    if n == 0 {
        return Err(Error::InvalidSpec("N must be at least 1".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time t = {t} must be finite and non-negative")));
    }
    let scale = (n as f64).powf(-1.0 / model.tail().alpha);
    let horizon = n as f64 * t;
    let mut x = model.stationary_draw(rng);
    let (mut clock, mut integral, mut jumps) = (0.0, 0.0, 0usize);
    loop {
        let tau = holding.draw(rng);
        let ts = model.waiting_scale(&x);
        let hold = ts * tau;
        let psi = model.psi(&x);
        if clock + hold > horizon {
            let partial = integral + (horizon - clock) * psi / ts;
            let full = integral + psi * tau;
            return Ok(FunctionalSample { y: scale * partial, b: scale * full, s: jumps as f64 / n as f64 });
        }
        integral += psi * tau;
        clock += hold;
        jumps += 1;
        x = model.step(&x, rng);
    }
}

/// `Y_N(t)` including the partial last holding interval.
pub fn run_functional<M: ChainModel>(model: &M, n: usize, t: f64, rng: &mut Stream) -> Result<f64> {
    run_functional_paired(model, n, t, Holding::Exponential, rng).map(|f| f.y)
}

/// `∫_0^horizon V(X(s)) ds` for the jump path started at `x0`, with the state
/// occupied at `horizon`.
pub fn run_functional_from<M: ChainModel>(model: &M, x0: M::State, horizon: f64, rng: &mut Stream) -> (f64, M::State) {
    let mut x = x0;
    let (mut clock, mut integral) = (0.0, 0.0);
    loop {
        let hold = exp1(rng);
        let (v, ts) = model.rate_and_wait(&x);
        let hold = ts * hold;
        if clock + hold > horizon {
            return (integral + (horizon - clock) * v, x);
        }
        integral += v * hold;
        clock += hold;
        x = model.step(&x, rng);
    }
}

/// `s_N(t) = n(Nt)/N` for one simulated path.
pub fn time_change_estimate<M: ChainModel>(model: &M, n: usize, t: f64, holding: Holding, rng: &mut Stream) -> Result<f64> {
    run_functional_paired(model, n, t, holding, rng).map(|f| f.s)
}

/// A recorded jump path.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    /// Holding times `t(X_n) τ_n`.
    pub waits: Vec<f64>,
    /// `V(X_n) = Ψ(X_n)/t(X_n)`.
    pub rates: Vec<f64>,
}

impl<S: Clone> Trajectory<S> {
    /// Records jumps until the path time exceeds `horizon`, drawing in the same
    /// order as [`run_functional_paired`].
    pub fn record<M: ChainModel<State = S>>(model: &M, horizon: f64, holding: Holding, rng: &mut Stream) -> Self {
        let mut x = model.stationary_draw(rng);
        let (mut states, mut waits, mut rates) = (Vec::new(), Vec::new(), Vec::new());
        let mut clock = 0.0;
        loop {
            let tau = holding.draw(rng);
            let ts = model.waiting_scale(&x);
            states.push(x.clone());
            waits.push(ts * tau);
            rates.push(model.psi(&x) / ts);
            if clock + ts * tau > horizon {
                return Self { states, waits, rates };
            }
            clock += ts * tau;
            x = model.step(&x, rng);
        }
    }

    /// `∫_a^b V(X(s)) ds` along the recorded path.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        let total: f64 = self.waits.iter().sum();
        if !(0.0 <= a && a <= b && b <= total) {
            return Err(Error::Domain(format!("[{a}, {b}] not inside the recorded range [0, {total}]")));
        }
        let (mut clock, mut acc) = (0.0f64, 0.0f64);
        for (w, v) in self.waits.iter().zip(&self.rates) {
            let lo = clock.max(a);
            let hi = (clock + w).min(b);
            if hi > lo {
                acc += (hi - lo) * v;
            }
            clock += w;
            if clock >= b {
                break;
            }
        }
        Ok(acc)
    }
}

/// Result of a centering computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centering {
    pub value: f64,
    /// Quadrature error estimate, or Monte Carlo standard error.
    pub error: f64,
    /// True when the value is a Monte Carlo estimate.
    pub estimated: bool,
}

/// `c_N = ∫ Ψ 1{|Ψ| ≤ N} dπ`.
///
/// Integrates over the level set `{|Ψ| ≤ N}` when the model exposes a density,
/// otherwise averages `mc_samples` stationary draws.
pub fn centering_c_n<M: ChainModel>(model: &M, n: f64, mc_samples: usize, rng: &mut Stream) -> Result<Centering> {
    if !(n > 0.0) {
        return Err(Error::InvalidSpec(format!("truncation level {n} must be positive")));
    }
    match model.pi_density() {
        Some(d) => truncated_integral(d, n),
        None => {
            if mc_samples < 2 {
                return Err(Error::InsufficientData("no density and no Monte Carlo budget for the centering".into()));
            }
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..mc_samples {
                let v = model.psi(&model.stationary_draw(rng));
                let v = if v.abs() <= n { v } else { 0.0 };
                s += v;
                s2 += v * v;
            }
            let m = mc_samples as f64;
            let mean = s / m;
            let var = (s2 / m - mean * mean).max(0.0) * m / (m - 1.0);
            Ok(Centering { value: mean, error: (var / m).sqrt(), estimated: true })
        }
    }
}

/// `∫ Ψ 1{|Ψ| ≤ level} dπ` for a model with a density.
pub fn truncated_integral(d: &dyn StationaryDensity, level: f64) -> Result<Centering> {
    let (a, b) = d.support();
    let sing = d.singular_points();
    let grid = scan_grid(a, b, 512, &sing);
    let inside = |x: f64| d.observable(x).abs() <= level;
    let (mut value, mut error) = (0.0, 0.0);
    for (lo, hi) in level_intervals(inside, &grid) {
        let mut breaks = vec![lo];
        breaks.extend(sing.iter().copied().filter(|&s| s > lo && s < hi));
        breaks.push(hi);
        let q = integrate(|x| d.pdf(x) * d.observable(x), &breaks, 1e-14, 1e-14, 20_000)?;
        value += q.value;
        error += q.error;
    }
    Ok(Centering { value, error, estimated: false })
}

/// Runs `replicas` independent evaluations of `f` in parallel. Replica `i`
/// receives the stream `substream(seed, family, i)`; results are returned in
/// replica order.
pub fn replicate<F>(seed: u64, family: u64, replicas: usize, f: F) -> Vec<f64>
where
    F: Fn(&mut Stream) -> f64 + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| f(&mut crate::rng::substream(seed, family, i as u64)))
        .collect()
}

/// Fallible variant of [`replicate`]; the first error in replica order is returned.
pub fn try_replicate<F>(seed: u64, family: u64, replicas: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Stream) -> Result<f64> + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| f(&mut crate::rng::substream(seed, family, i as u64)))
        .collect()
}

/// Independent steps from the uniform law on (0, 1) with a Pareto quantile
/// observable of exact tail `c^± λ^{-α}` for `λ^α ≥ c⁺ + c⁻`.
#[derive(Debug, Clone, Copy)]
pub struct IidPareto {
    tail: TailSpec,
    split: f64,
}

impl IidPareto {
    pub fn new(tail: TailSpec) -> Self {
        Self { tail, split: tail.c_plus / (tail.c_plus + tail.c_minus) }
    }

    /// `c⁺ = c⁻ = 1` when `symmetric`, otherwise `c⁺ = 1, c⁻ = 0`.
    pub fn standard(alpha: f64, symmetric: bool) -> Result<Self> {
        Ok(Self::new(TailSpec::new(alpha, 1.0, if symmetric { 1.0 } else { 0.0 })?))
    }

    fn value(&self, u: f64) -> f64 {
        let TailSpec { alpha, c_plus, c_minus } = self.tail;
        if u < self.split {
            (c_plus / u).powf(1.0 / alpha)
        } else {
            -(c_minus / (1.0 - u)).powf(1.0 / alpha)
        }
    }

    /// `E Ψ` for `α > 1`.
    pub fn mean(&self) -> Option<f64> {
        let TailSpec { alpha, c_plus, c_minus } = self.tail;
        if alpha <= 1.0 {
            return None;
        }
        let e = 1.0 - 1.0 / alpha;
        let p = self.split;
        Some((c_plus.powf(1.0 / alpha) * p.powf(e) - c_minus.powf(1.0 / alpha) * (1.0 - p).powf(e)) / e)
    }
}

impl ChainModel for IidPareto {
    type State = f64;
    fn stationary_draw(&self, rng: &mut Stream) -> f64 {
        open01(rng)
    }
    fn step(&self, _x: &f64, rng: &mut Stream) -> f64 {
        open01(rng)
    }
    fn psi(&self, x: &f64) -> f64 {
        self.value(*x)
    }
    fn tail(&self) -> TailSpec {
        self.tail
    }
    fn pi_density(&self) -> Option<&dyn StationaryDensity> {
        Some(self)
    }
}

impl StationaryDensity for IidPareto {
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn pdf(&self, _x: f64) -> f64 {
        1.0
    }
    fn observable(&self, x: f64) -> f64 {
        self.value(x)
    }
    fn singular_points(&self) -> Vec<f64> {
        if self.split < 1.0 {
            vec![self.split]
        } else {
            Vec::new()
        }
    }
}

/// Independent uniform steps with `Ψ(x) = 1/x`: on (−1, 1) when symmetric
/// (`c^± = 1/2`), on (0, 1) otherwise (`c⁺ = 1`).
#[derive(Debug, Clone, Copy)]
pub struct Reciprocal {
    pub symmetric: bool,
}

impl Reciprocal {
    fn draw(&self, rng: &mut Stream) -> f64 {
        let u = open01(rng);
        if self.symmetric {
            2.0 * u - 1.0
        } else {
            u
        }
    }
}

impl ChainModel for Reciprocal {
    type State = f64;
    fn stationary_draw(&self, rng: &mut Stream) -> f64 {
        self.draw(rng)
    }
    fn step(&self, _x: &f64, rng: &mut Stream) -> f64 {
        self.draw(rng)
    }
    fn psi(&self, x: &f64) -> f64 {
        1.0 / x
    }
    fn tail(&self) -> TailSpec {
        if self.symmetric {
            TailSpec { alpha: 1.0, c_plus: 0.5, c_minus: 0.5 }
        } else {
            TailSpec { alpha: 1.0, c_plus: 1.0, c_minus: 0.0 }
        }
    }
    fn pi_density(&self) -> Option<&dyn StationaryDensity> {
        Some(self)
    }
}

impl StationaryDensity for Reciprocal {
    fn support(&self) -> (f64, f64) {
        if self.symmetric {
            (-1.0, 1.0)
        } else {
            (0.0, 1.0)
        }
    }
    fn pdf(&self, _x: f64) -> f64 {
        if self.symmetric {
            0.5
        } else {
            1.0
        }
    }
    fn observable(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn singular_points(&self) -> Vec<f64> {
        if self.symmetric {
            vec![0.0]
        } else {
            Vec::new()
        }
    }
}

/// Trivial chain with constant observable and constant waiting scale. The
/// state carries no information; `tail` is nominal and only sets the scaling
/// exponent.
#[derive(Debug, Clone, Copy)]
pub struct ConstantObservable {
    pub value: f64,
    pub waiting: f64,
    pub alpha: f64,
}

impl ChainModel for ConstantObservable {
    type State = ();
    fn stationary_draw(&self, _rng: &mut Stream) {}
    fn step(&self, _x: &(), _rng: &mut Stream) {}
    fn psi(&self, _x: &()) -> f64 {
        self.value
    }
    fn tail(&self) -> TailSpec {
        TailSpec { alpha: self.alpha, c_plus: 0.0, c_minus: 0.0 }
    }
    fn waiting_scale(&self, _x: &()) -> f64 {
        self.waiting
    }
    fn min_waiting_scale(&self) -> f64 {
        self.waiting
    }
    fn mean_waiting(&self) -> f64 {
        self.waiting
    }
}

pub type Sampler = Arc<dyn Fn(&mut Stream) -> f64 + Send + Sync>;
pub type Kernel = Arc<dyn Fn(f64, &mut Stream) -> f64 + Send + Sync>;

/// Mixture kernel `P(x, ·) = θ₀ q + (1 − θ₀) Q₁(x, ·)` on the real line.
#[derive(Clone)]
pub struct DoeblinMixture {
    pub theta0: f64,
    pub q: Sampler,
    pub q1: Kernel,
    pub observable: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub tail: TailSpec,
    /// Steps from a `q` draw used to produce an (approximately) stationary start.
    pub burn_in: usize,
}

impl DoeblinMixture {
    pub const DEFAULT_BURN_IN: usize = 1000;

    pub fn new(theta0: f64, q: Sampler, q1: Kernel, observable: Arc<dyn Fn(f64) -> f64 + Send + Sync>, tail: TailSpec) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 <= 1.0) {
            return Err(Error::InvalidSpec(format!("mixture weight θ₀ = {theta0} outside (0, 1]")));
        }
        Ok(Self { theta0, q, q1, observable, tail, burn_in: Self::DEFAULT_BURN_IN })
    }
}

impl ChainModel for DoeblinMixture {
    type State = f64;
    fn stationary_draw(&self, rng: &mut Stream) -> f64 {
        let mut x = (self.q)(rng);
        for _ in 0..self.burn_in {
            x = self.step(&x, rng);
        }
        x
    }
    fn step(&self, x: &f64, rng: &mut Stream) -> f64 {
        if open01(rng) < self.theta0 {
            (self.q)(rng)
        } else {
            (self.q1)(*x, rng)
        }
    }
    fn psi(&self, x: &f64) -> f64 {
        (self.observable)(*x)
    }
    fn tail(&self) -> TailSpec {
        self.tail
    }
}
