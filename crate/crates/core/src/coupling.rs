//! Basic coupling and regeneration.
//!
//! A kernel of the form `P(x, dy) = θ(x) q(dy) + (1 − θ(x)) Q₁(x, dy)` is run
//! jointly with flags `δ_n`: `δ_n = 0` when the `q` component produced `X_n`.
//! Regeneration times `κ_i` are the successive `n ≥ 1` with `δ_n = 0`; the sums
//! of Ψ between them are i.i.d. from the second block on.

use crate::boltzmann::{theta, Boltzmann};
use crate::chain::{ChainModel, DoeblinMixture, IidPareto};
use crate::error::{Error, Result};
use crate::rng::{open01, substream, Stream};
use crate::stable::TailSpec;
use crate::stats::CompensatedSum;
use rayon::prelude::*;
use serde::Serialize;

pub trait DoeblinSpec: ChainModel {
    fn theta(&self, x: &Self::State) -> f64;
    fn q_draw(&self, rng: &mut Stream) -> Self::State;
    fn q1_step(&self, x: &Self::State, rng: &mut Stream) -> Self::State;
    /// Tails of Ψ under `q`.
    fn q_tail(&self) -> TailSpec;
}

/// One transition of the coupled chain.
#[inline]
pub fn coupled_step<M: DoeblinSpec>(model: &M, x: &M::State, rng: &mut Stream) -> (M::State, u8) {
    if open01(rng) < model.theta(x) {
        (model.q_draw(rng), 0)
    } else {
        (model.q1_step(x, rng), 1)
    }
}

/// `(X_n, δ_n)` for `n = 0..=N`; `δ_0` is reported as 0.
#[derive(Debug, Clone)]
pub struct CoupledPath<S> {
    pub states: Vec<S>,
    pub flags: Vec<u8>,
    pub psis: Vec<f64>,
}

pub fn coupled_trajectory<M: DoeblinSpec>(model: &M, n: usize, rng: &mut Stream) -> CoupledPath<M::State> {
    let x0 = model.stationary_draw(rng);
    coupled_trajectory_from(model, x0, n, rng)
}

pub fn coupled_trajectory_from<M: DoeblinSpec>(model: &M, x0: M::State, n: usize, rng: &mut Stream) -> CoupledPath<M::State> {
    let mut states = Vec::with_capacity(n + 1);
    let mut flags = Vec::with_capacity(n + 1);
    let mut psis = Vec::with_capacity(n + 1);
    psis.push(model.psi(&x0));
    states.push(x0);
    flags.push(0);
    for j in 0..n {
        let (x, d) = coupled_step(model, &states[j], rng);
        psis.push(model.psi(&x));
        states.push(x);
        flags.push(d);
    }
    CoupledPath { states, flags, psis }
}

/// `S_N = Σ_{i<M} φ_i + R_N` with `κ_0 = 0` and `κ_M ≤ N < κ_{M+1}`.
///
/// `φ_0` sums `Ψ(X_j)` for `1 ≤ j < κ_1` (the sum `S_N` starts at `j = 1`),
/// `φ_i = Σ_{κ_i ≤ j < κ_{i+1}} Ψ(X_j)` for `i ≥ 1`, and `R_N` collects
/// `max(κ_M, 1) ≤ j ≤ N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenerationDecomposition {
    pub kappas: Vec<usize>,
    pub blocks: Vec<f64>,
    pub remainder: f64,
    pub m_of_n: usize,
}

impl RegenerationDecomposition {
    /// Blocks `φ_i, i ≥ 1`, which are i.i.d.
    pub fn complete_blocks(&self) -> &[f64] {
        if self.blocks.is_empty() {
            &[]
        } else {
            &self.blocks[1..]
        }
    }

    pub fn total(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for &b in &self.blocks {
            s.add(b);
        }
        s.add(self.remainder);
        s.value()
    }
}

/// Splits `S_N` along the regeneration times of a coupled path with `Ψ(X_n)`
/// in `psis[n]` and flags in `flags[n]`, `n = 0..=N`.
pub fn decompose(psis: &[f64], flags: &[u8]) -> Result<RegenerationDecomposition> {
    if psis.len() != flags.len() || psis.is_empty() {
        return Err(Error::InvalidSpec(format!("{} observables for {} flags", psis.len(), flags.len())));
    }
    let n = psis.len() - 1;
    let mut kappas = vec![0usize];
    kappas.extend((1..=n).filter(|&j| flags[j] == 0));
    let m = kappas.len() - 1;
    let sum = |a: usize, b: usize| {
        let mut s = CompensatedSum::new();
        for &v in &psis[a..b] {
            s.add(v);
        }
        s.value()
    };
    let blocks = (0..m).map(|i| sum(kappas[i].max(1), kappas[i + 1])).collect();
    let remainder = sum(kappas[m].max(1), n + 1);
    Ok(RegenerationDecomposition { kappas, blocks, remainder, m_of_n: m })
}

/// A complete regeneration block.
#[derive(Debug, Clone)]
pub struct Block<S> {
    pub sum: f64,
    pub len: usize,
    /// `X_{κ_i}`, a draw from `q`.
    pub start: S,
}

/// Runs one chain from `X_0 ~ π` and returns its first `count` complete blocks
/// (the initial block is discarded).
pub fn stream_blocks<M: DoeblinSpec>(model: &M, count: usize, rng: &mut Stream, mut visit: impl FnMut(Block<&M::State>)) {
    let mut x = model.stationary_draw(rng);
    // skip to the first regeneration
    loop {
        let (y, d) = coupled_step(model, &x, rng);
        x = y;
        if d == 0 {
            break;
        }
    }
    let mut done = 0;
    while done < count {
        let start = x.clone();
        let mut sum = model.psi(&x);
        let mut len = 1;
        loop {
            let (y, d) = coupled_step(model, &x, rng);
            x = y;
            if d == 0 {
                break;
            }
            sum += model.psi(&x);
            len += 1;
        }
        visit(Block { sum, len, start: &start });
        done += 1;
    }
}

const BLOCK_FAMILY: u64 = 0xB10C;
const BLOCK_CHUNKS: usize = 64;

fn chunk_sizes(total: usize) -> Vec<usize> {
    let chunks = BLOCK_CHUNKS.min(total.max(1));
    (0..chunks).map(|c| total / chunks + usize::from(c < total % chunks)).collect()
}

/// `count` complete blocks, generated in parallel from independent chains
/// and returned in a worker-independent order.
pub fn sample_blocks<M: DoeblinSpec>(model: &M, count: usize, seed: u64) -> Vec<Block<M::State>> {
    chunk_sizes(count)
        .into_par_iter()
        .enumerate()
        .map(|(c, size)| {
            let mut rng = substream(seed, BLOCK_FAMILY, c as u64);
            let mut out = Vec::with_capacity(size);
            stream_blocks(model, size, &mut rng, |b| out.push(Block { sum: b.sum, len: b.len, start: b.start.clone() }));
            out
        })
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockTailRow {
    pub lambda: f64,
    pub alpha_lambda_pos: f64,
    pub alpha_lambda_neg: f64,
    pub n_exceed_pos: u64,
    pub n_exceed_neg: u64,
    /// Fewer than [`EXCEEDANCE_FLOOR`] exceedances on either side.
    pub low_confidence: bool,
}

pub const EXCEEDANCE_FLOOR: u64 = 100;

/// Default threshold grid `λ = 2^j`, `j = 0..=j_max`.
pub fn dyadic_grid(j_max: u32) -> Vec<f64> {
    (0..=j_max).map(|j| 2f64.powi(j as i32)).collect()
}

/// Empirical `λ^α P̂(φ > λ)` and `λ^α P̂(φ < −λ)` over `m_blocks` complete blocks.
pub fn block_tail_report<M: DoeblinSpec>(model: &M, m_blocks: usize, lambdas: &[f64], seed: u64) -> Result<Vec<BlockTailRow>> {
    if m_blocks == 0 {
        return Err(Error::InsufficientData("no blocks requested".into()));
    }
    let alpha = model.tail().alpha;
    let counts = chunk_sizes(m_blocks)
        .into_par_iter()
        .enumerate()
        .map(|(c, size)| {
            let mut rng = substream(seed, BLOCK_FAMILY, c as u64);
            let mut pos = vec![0u64; lambdas.len()];
            let mut neg = vec![0u64; lambdas.len()];
            stream_blocks(model, size, &mut rng, |b| {
                for (i, &l) in lambdas.iter().enumerate() {
                    if b.sum > l {
                        pos[i] += 1;
                    } else if b.sum < -l {
                        neg[i] += 1;
                    }
                }
            });
            (pos, neg)
        })
        .reduce(|| (vec![0; lambdas.len()], vec![0; lambdas.len()]), |mut a, b| {
            for i in 0..a.0.len() {
                a.0[i] += b.0[i];
                a.1[i] += b.1[i];
            }
            a
        });
    let m = m_blocks as f64;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let (p, n) = (counts.0[i], counts.1[i]);
            BlockTailRow {
                lambda: l,
                alpha_lambda_pos: l.powf(alpha) * p as f64 / m,
                alpha_lambda_neg: l.powf(alpha) * n as f64 / m,
                n_exceed_pos: p,
                n_exceed_neg: n,
                low_confidence: p < EXCEEDANCE_FLOOR || n < EXCEEDANCE_FLOOR,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenReport {
    /// `Σ_{n ≤ n_max} n^{1+α} max_x P̂(κ₁ ≥ n | X_0 = x)`; a lower bound on the
    /// supremum over all starting points.
    pub total: f64,
    /// Summands for `n = 1..=n_max`.
    pub summands: Vec<f64>,
    /// Number of paths with `κ₁ ≥ n` at the maximising probe.
    pub hits: Vec<u64>,
    pub paths_per_probe: usize,
    pub is_lower_bound: bool,
}

impl RegenReport {
    /// Largest ratio `summand[n+1]/summand[n]` over `n ≥ from` where both have
    /// at least `min_hits` supporting paths.
    pub fn max_ratio_beyond(&self, from: usize, min_hits: u64) -> Option<f64> {
        (from..self.summands.len())
            .filter(|&n| n >= 1 && self.hits[n] >= min_hits && self.hits[n - 1] >= min_hits)
            .map(|n| self.summands[n] / self.summands[n - 1])
            .reduce(f64::max)
    }
}

const REGEN_FAMILY: u64 = 0x4E6E;

/// Estimates `P(κ₁ ≥ n | X_0 = x)` at each probe from `paths` simulations.
pub fn regen_condition_report<M: DoeblinSpec>(model: &M, n_max: usize, probes: &[M::State], paths: usize, seed: u64) -> Result<RegenReport>
where
    M::State: Sync,
{
    if probes.is_empty() || paths == 0 || n_max == 0 {
        return Err(Error::InsufficientData("need probes, paths and n_max ≥ 1".into()));
    }
    let alpha = model.tail().alpha;
    let per_probe: Vec<Vec<u64>> = probes
        .par_iter()
        .enumerate()
        .map(|(p, x0)| {
            let mut rng = substream(seed, REGEN_FAMILY, p as u64);
            // at_least[n] = #paths with κ₁ ≥ n, n = 0..=n_max
            let mut hist = vec![0u64; n_max + 2];
            for _ in 0..paths {
                let mut x = x0.clone();
                let mut kappa = n_max + 1;
                for n in 1..=n_max {
                    let (y, d) = coupled_step(model, &x, &mut rng);
                    if d == 0 {
                        kappa = n;
                        break;
                    }
                    x = y;
                }
                hist[kappa] += 1;
            }
            let mut at_least = vec![0u64; n_max + 2];
            let mut acc = 0;
            for n in (0..=n_max + 1).rev() {
                acc += hist[n];
                at_least[n] = acc;
            }
            at_least
        })
        .collect();
    let mut summands = Vec::with_capacity(n_max);
    let mut hits = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let best = per_probe.iter().map(|a| a[n]).max().unwrap_or(0);
        hits.push(best);
        summands.push((n as f64).powf(1.0 + alpha) * best as f64 / paths as f64);
    }
    let mut total = CompensatedSum::new();
    summands.iter().for_each(|&s| total.add(s));
    Ok(RegenReport { total: total.value(), summands, hits, paths_per_probe: paths, is_lower_bound: true })
}

/// Estimate of `θ̄ = ∫ θ dπ` as the frequency of `δ = 0` along one path, with
/// a batch-means standard error.
pub fn theta_bar_estimate<M: DoeblinSpec>(model: &M, steps: usize, batches: usize, rng: &mut Stream) -> Result<(f64, f64)> {
    if batches < 2 || steps < batches {
        return Err(Error::InsufficientData("need at least two non-empty batches".into()));
    }
    let size = steps / batches;
    let mut x = model.stationary_draw(rng);
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut zeros = 0usize;
        for _ in 0..size {
            let (y, d) = coupled_step(model, &x, rng);
            x = y;
            zeros += usize::from(d == 0);
        }
        means.push(zeros as f64 / size as f64);
    }
    let m = crate::stats::mean(&means);
    let se = (crate::stats::variance(&means) / batches as f64).sqrt();
    Ok((m, se))
}

impl DoeblinSpec for Boltzmann {
    fn theta(&self, x: &f64) -> f64 {
        theta(*x)
    }
    fn q_draw(&self, rng: &mut Stream) -> f64 {
        self.sample_q0(rng)
    }
    fn q1_step(&self, _x: &f64, rng: &mut Stream) -> f64 {
        self.sample_q1(rng)
    }
    fn q_tail(&self) -> TailSpec {
        // the π-tail comes from q0 near k = 0 and q̂0 = 2 q0
        let t = self.tail();
        TailSpec { alpha: t.alpha, c_plus: 2.0 * t.c_plus, c_minus: 2.0 * t.c_minus }
    }
}

impl DoeblinSpec for IidPareto {
    fn theta(&self, _x: &f64) -> f64 {
        1.0
    }
    fn q_draw(&self, rng: &mut Stream) -> f64 {
        open01(rng)
    }
    fn q1_step(&self, _x: &f64, rng: &mut Stream) -> f64 {
        open01(rng)
    }
    fn q_tail(&self) -> TailSpec {
        self.tail()
    }
}

impl DoeblinSpec for DoeblinMixture {
    fn theta(&self, _x: &f64) -> f64 {
        self.theta0
    }
    fn q_draw(&self, rng: &mut Stream) -> f64 {
        (self.q)(rng)
    }
    fn q1_step(&self, x: &f64, rng: &mut Stream) -> f64 {
        (self.q1)(*x, rng)
    }
    fn q_tail(&self) -> TailSpec {
        self.tail
    }
}
