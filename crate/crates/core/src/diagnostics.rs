//! Ensembles of scaled sums and the statistics used to compare them with a
//! stable limit.

use crate::chain::{centering_c_n, run_functional, run_sum, run_weighted_sum, ChainModel, WeightSpec};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::stable::{CdfTable, LevyExponent, TailSpec};
use crate::stats::{ecf, hill_alpha, hill_drifts, hill_profile, ks_one_sample, ks_two_sample, quartile_skewness};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone)]
pub enum Mode {
    /// `Σ_{n=1}^N Ψ(X_n)`.
    DiscreteSum,
    /// `Σ_{n=0}^{⌊Nt⌋} Ψ(X_n) ρ_n`.
    WeightedSum(WeightSpec),
    /// `∫_0^{Nt} V(X(s)) ds` with exponential holding times.
    ContinuousFunctional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Centering {
    /// The observable is used as is: `α < 1`, or Ψ already has mean zero.
    None,
    /// Subtract `N E_π Ψ`.
    Mean(f64),
    /// Subtract `N c_N` with `c_N = ∫ Ψ 1{|Ψ| ≤ N} dπ` (α = 1 only).
    TruncatedCN,
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub mode: Mode,
    pub n_schedule: Vec<usize>,
    pub replicas: usize,
    pub centering: Centering,
    /// Set when Ψ is known to have π-mean zero.
    pub pre_centered: bool,
    /// Time at which weighted and continuous ensembles are read.
    pub t: f64,
    pub seed: u64,
    /// Upper bound on the total number of chain steps; replicas are cut when exceeded.
    pub step_budget: Option<u64>,
}

impl EnsembleSpec {
    pub fn discrete(n_schedule: Vec<usize>, replicas: usize, centering: Centering, seed: u64) -> Self {
        Self { mode: Mode::DiscreteSum, n_schedule, replicas, centering, pre_centered: false, t: 1.0, seed, step_budget: None }
    }

    pub fn validate(&self, tail: &TailSpec) -> Result<()> {
        if self.n_schedule.is_empty() || self.n_schedule.contains(&0) {
            return Err(Error::InvalidSpec("N schedule must be non-empty with positive entries".into()));
        }
        if self.replicas < 2 {
            return Err(Error::InvalidSpec("at least two replicas are needed".into()));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidSpec(format!("time {} must be positive", self.t)));
        }
        match self.centering {
            Centering::TruncatedCN if tail.alpha != 1.0 => {
                Err(Error::InvalidSpec(format!("truncated centering requires α = 1, got {}", tail.alpha)))
            }
            Centering::None if tail.alpha >= 1.0 && !self.pre_centered => {
                Err(Error::InvalidSpec(format!("α = {} needs centering unless Ψ is pre-centered", tail.alpha)))
            }
            Centering::Mean(_) | Centering::TruncatedCN if !matches!(self.mode, Mode::DiscreteSum) => {
                Err(Error::InvalidSpec("explicit centering is only defined for discrete sums".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Scaled samples for every `N` of the schedule.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub per_n: Vec<(usize, Vec<f64>)>,
    /// True when the step budget cut the number of replicas.
    pub partial: bool,
}

const ENSEMBLE_FAMILY: u64 = 0xE45E_0000;

fn one_sample<M: ChainModel>(model: &M, spec: &EnsembleSpec, n: usize, shift: f64, rng: &mut Stream) -> Result<f64> {
    let alpha = model.tail().alpha;
    let nf = n as f64;
    match &spec.mode {
        Mode::DiscreteSum => {
            let s = run_sum(model, n, rng)?;
            Ok(match spec.centering {
                Centering::TruncatedCN => s / nf - shift,
                Centering::Mean(m) => (s - nf * m) * nf.powf(-1.0 / alpha),
                Centering::None => s * nf.powf(-1.0 / alpha),
            })
        }
        Mode::WeightedSum(w) => Ok(run_weighted_sum(model, w, n, spec.t, rng)? * nf.powf(-1.0 / alpha)),
        Mode::ContinuousFunctional => run_functional(model, n, spec.t, rng),
    }
}

/// Replica `i` at schedule position `j` uses its own stream, so the table does
/// not depend on the number of worker threads.
pub fn generate_ensemble<M: ChainModel>(model: &M, spec: &EnsembleSpec) -> Result<Ensemble> {
    spec.validate(&model.tail())?;
    let total: u64 = spec.n_schedule.iter().map(|&n| n as u64).sum::<u64>();
    let mut replicas = spec.replicas;
    let mut partial = false;
    if let Some(budget) = spec.step_budget {
        let allowed = (budget / total.max(1)) as usize;
        if allowed < replicas {
            replicas = allowed.max(2);
            partial = true;
        }
    }
    let mut per_n = Vec::with_capacity(spec.n_schedule.len());
    for (j, &n) in spec.n_schedule.iter().enumerate() {
        let shift = match spec.centering {
            Centering::TruncatedCN => centering_c_n(model, n as f64, 1_000_000, &mut substream(spec.seed, ENSEMBLE_FAMILY - 1, j as u64))?.value,
            _ => 0.0,
        };
        let family = ENSEMBLE_FAMILY + j as u64;
        let samples = (0..replicas)
            .into_par_iter()
            .map(|i| one_sample(model, spec, n, shift, &mut substream(spec.seed, family, i as u64)))
            .collect::<Result<Vec<f64>>>()?;
        per_n.push((n, samples));
    }
    Ok(Ensemble { per_n, partial })
}

/// Limit exponent and time scale for an ensemble: the stable law of the scaled
/// samples has characteristic function `exp(t_scale ψ(ξ))`.
pub fn target_exponent<M: ChainModel>(model: &M, spec: &EnsembleSpec) -> Result<(LevyExponent, f64)> {
    let tail = model.tail();
    Ok(match &spec.mode {
        Mode::DiscreteSum => (LevyExponent::for_tail(tail), 1.0),
        Mode::WeightedSum(w) => (LevyExponent::for_tail(tail.scaled(w.alpha_moment)?), spec.t),
        Mode::ContinuousFunctional => {
            (LevyExponent::for_tail(tail.scaled(gamma(1.0 + tail.alpha))?), spec.t / model.mean_waiting())
        }
    })
}

/// The default grid: 33 points on [−4, 4].
pub fn default_xi_grid() -> Vec<f64> {
    (0..33).map(|i| -4.0 + 0.25 * i as f64).collect()
}

/// `max_ξ |φ̂(ξ) − exp(t ψ(ξ))|`.
pub fn cf_distance(samples: &[f64], le: &LevyExponent, t_scale: f64, xi_grid: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    Ok(xi_grid.iter().map(|&xi| (ecf(samples, xi) - le.cf(xi, t_scale)).norm()).fold(0.0, f64::max))
}

/// `cos ξX` and `sin ξX` for every sample and grid point, sample-major.
fn phase_table(samples: &[f64], xi_grid: &[f64]) -> Vec<(f64, f64)> {
    samples
        .par_iter()
        .flat_map_iter(|&x| xi_grid.iter().map(move |&xi| {
            let (s, c) = (xi * x).sin_cos();
            (c, s)
        }))
        .collect()
}

/// Bootstrap standard deviation of the CF distance.
pub fn cf_distance_bootstrap(samples: &[f64], le: &LevyExponent, t_scale: f64, xi_grid: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    let k = xi_grid.len();
    let n = samples.len();
    let phases = phase_table(samples, xi_grid);
    let target: Vec<Complex64> = xi_grid.iter().map(|&xi| le.cf(xi, t_scale)).collect();
    let dists: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, 0xB007, b as u64);
            let mut acc = vec![(0.0, 0.0); k];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                for (a, p) in acc.iter_mut().zip(&phases[i * k..(i + 1) * k]) {
                    a.0 += p.0;
                    a.1 += p.1;
                }
            }
            acc.iter().zip(&target).map(|(a, t)| (Complex64::new(a.0 / n as f64, a.1 / n as f64) - t).norm()).fold(0.0, f64::max)
        })
        .collect();
    let m = dists.iter().sum::<f64>() / resamples as f64;
    Ok((dists.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerN {
    #[serde(rename = "N")]
    pub n: usize,
    pub cf_distance: f64,
    pub ks_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StableReport {
    pub alpha_hat: f64,
    pub c_plus_hat: f64,
    pub c_minus_hat: f64,
    pub cf_distance: f64,
    pub n_effective: usize,
    #[serde(rename = "per_N")]
    pub per_n: Vec<PerN>,
}

/// A [`StableReport`] with the checks that decide whether it passed.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub report: StableReport,
    /// Bootstrap standard deviation of the CF distance at each `N`.
    pub cf_sigma: Vec<f64>,
    /// False when the CF distance grows by more than 3σ between successive `N`.
    pub monotone: bool,
    /// True when the Hill profile of the final ensemble has no plateau.
    pub hill_drift: bool,
    pub partial: bool,
}

impl ConvergenceReport {
    pub fn failed(&self) -> bool {
        !self.monotone
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Tail constants read off the top `k` order statistics of `|samples|`:
/// `ĉ^± = (k^±/n) λ_k^α̂`.
pub fn tail_constants(samples: &[f64], k: usize, alpha_hat: f64) -> Result<(f64, f64)> {
    let mut v: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() <= k || k == 0 {
        return Err(Error::InsufficientData(format!("{} samples for order {k}", v.len())));
    }
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let level = v[k].abs();
    let pos = v[..k].iter().filter(|x| **x > 0.0).count() as f64;
    let n = v.len() as f64;
    let scale = level.powf(alpha_hat) / n;
    Ok((pos * scale, (k as f64 - pos) * scale))
}

pub fn convergence_report<M: ChainModel>(model: &M, spec: &EnsembleSpec, target: &LevyExponent, t_scale: f64) -> Result<ConvergenceReport> {
    let ens = generate_ensemble(model, spec)?;
    report_from_ensemble(&ens, target, t_scale, spec.seed)
}

pub fn report_from_ensemble(ens: &Ensemble, target: &LevyExponent, t_scale: f64, seed: u64) -> Result<ConvergenceReport> {
    let grid = default_xi_grid();
    let table = CdfTable::new(&target.at_time(t_scale)?, 1001)?;
    let mut per_n = Vec::new();
    let mut sigma = Vec::new();
    for (j, (n, samples)) in ens.per_n.iter().enumerate() {
        let cf = cf_distance(samples, target, t_scale, &grid)?;
        let ks = ks_one_sample(samples, |x| table.cdf(x));
        sigma.push(cf_distance_bootstrap(samples, target, t_scale, &grid, BOOTSTRAP_RESAMPLES, seed ^ (j as u64).wrapping_mul(0x9E37_79B9))?);
        per_n.push(PerN { n: *n, cf_distance: cf, ks_distance: ks });
    }
    let monotone = per_n.windows(2).zip(sigma.windows(2)).all(|(p, s)| p[1].cf_distance <= p[0].cf_distance + 3.0 * s[0].hypot(s[1]));
    let last = &ens.per_n.last().ok_or_else(|| Error::InsufficientData("empty schedule".into()))?.1;
    let k = (last.len() / 100).max(1);
    let alpha_hat = hill_alpha(last, k)?;
    let (c_plus, c_minus) = tail_constants(last, k, alpha_hat)?;
    let orders: Vec<usize> = [k / 4, k / 2, k, 2 * k].into_iter().filter(|&o| o >= 10 && o < last.len()).collect();
    let hill_drift = orders.len() >= 2 && hill_drifts(&hill_profile(last, &orders)?, 0.15);
    let report = StableReport {
        alpha_hat,
        c_plus_hat: c_plus / t_scale,
        c_minus_hat: c_minus / t_scale,
        cf_distance: per_n.last().map(|p| p.cf_distance).unwrap_or(0.0),
        n_effective: last.len(),
        per_n,
    };
    Ok(ConvergenceReport { report, cf_sigma: sigma, monotone, hill_drift, partial: ens.partial })
}

/// Quartile skewness with its bootstrap standard deviation.
pub fn skewness_with_se(samples: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let b = quartile_skewness(samples);
    let n = samples.len();
    let vals: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, 0x5EE0, r as u64);
            let s: Vec<f64> = (0..n).map(|_| samples[rng.random_range(0..n)]).collect();
            quartile_skewness(&s)
        })
        .collect();
    let m = vals.iter().sum::<f64>() / resamples as f64;
    (b, (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt())
}

/// Two-sample KS statistic between ensembles at `N` and `2N` and the
/// threshold `3 × 1.628 √((n+m)/(nm))` (three times the 1% critical value).
pub fn scaling_consistency(at_n: &[f64], at_2n: &[f64]) -> (f64, f64) {
    let (d, _) = ks_two_sample(at_n, at_2n);
    let (n, m) = (at_n.len() as f64, at_2n.len() as f64);
    (d, 3.0 * 1.628 * ((n + m) / (n * m)).sqrt())
}

/// Weighted least-squares fit of `−log|φ̂(ξ)| = D |ξ|^α` over `points` values
/// of ξ in `[lo, hi]`. Returns `(D̂, standard error)`.
pub fn fit_cf_scale(samples: &[f64], alpha: f64, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)> {
    if samples.len() < 2 || points < 2 || !(lo > 0.0 && hi > lo) {
        return Err(Error::InsufficientData("CF fit needs samples and a positive ξ range".into()));
    }
    let n = samples.len() as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..points {
        let xi = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let phi = ecf(samples, xi).norm();
        let phi2 = ecf(samples, 2.0 * xi).re;
        if !(phi > 0.0) {
            return Err(Error::Numeric { what: format!("empirical CF vanishes at ξ = {xi}"), residual: phi });
        }
        let var = ((1.0 + phi2 - 2.0 * phi * phi) / (2.0 * n)).max(1.0 / (n * n)) / (phi * phi);
        let x = xi.abs().powf(alpha);
        let y = -phi.ln();
        sxy += x * y / var;
        sxx += x * x / var;
    }
    Ok((sxy / sxx, 1.0 / sxx.sqrt()))
}

/// Least-squares slope and intercept of `c_N` against `log N`.
pub fn fit_log_slope<M: ChainModel>(model: &M, schedule: &[f64]) -> Result<(f64, f64)> {
    if schedule.len() < 2 {
        return Err(Error::InsufficientData("at least two truncation levels are needed".into()));
    }
    let mut rng = substream(0, 0, 0);
    let pts = schedule
        .iter()
        .map(|&n| centering_c_n(model, n, 0, &mut rng).map(|c| (n.ln(), c.value)))
        .collect::<Result<Vec<_>>>()?;
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ConstantObservable, IidPareto, Reciprocal};
    use crate::rng::stream;
    use crate::stable::{sample_stable, LevyKind};

    #[test]
    fn zero_observable_gives_zero_samples() {
        let m = ConstantObservable { value: 0.0, waiting: 1.0, alpha: 1.5 };
        let mut spec = EnsembleSpec::discrete(vec![10, 100], 50, Centering::None, 1);
        spec.pre_centered = true;
        let e = generate_ensemble(&m, &spec).unwrap();
        assert!(e.per_n.iter().all(|(_, s)| s.iter().all(|&v| v == 0.0)));
        let (le, t) = (LevyExponent::for_tail(TailSpec::symmetric(1.5, 1.0).unwrap()), 1.0);
        let d = cf_distance(&e.per_n[0].1, &le, t, &default_xi_grid()).unwrap();
        let expect = default_xi_grid().iter().map(|&xi| (Complex64::new(1.0, 0.0) - le.cf(xi, t)).norm()).fold(0.0, f64::max);
        assert!(d > 0.0 && (d - expect).abs() < 1e-15);
        assert!(cf_distance(&[], &le, t, &[0.0]).is_err());
    }

    #[test]
    fn single_term_sum_is_an_observable_draw() {
        let m = IidPareto::standard(1.5, true).unwrap();
        let spec = EnsembleSpec::discrete(vec![1], 20, Centering::Mean(0.0), 5);
        let e = generate_ensemble(&m, &spec).unwrap();
        for (i, &v) in e.per_n[0].1.iter().enumerate() {
            let mut rng = substream(5, ENSEMBLE_FAMILY, i as u64);
            assert_eq!(v, run_sum(&m, 1, &mut rng).unwrap());
        }
    }

    #[test]
    fn ensembles_are_thread_count_independent() {
        let m = IidPareto::standard(1.5, true).unwrap();
        let spec = EnsembleSpec::discrete(vec![10, 50], 400, Centering::Mean(0.0), 9);
        let a = generate_ensemble(&m, &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| generate_ensemble(&m, &spec).unwrap());
        assert_eq!(a.per_n, b.per_n);
    }

    #[test]
    fn validation_rules() {
        let tail15 = TailSpec::symmetric(1.5, 1.0).unwrap();
        let tail1 = TailSpec::symmetric(1.0, 1.0).unwrap();
        let tail05 = TailSpec::new(0.5, 1.0, 0.0).unwrap();
        let s = |c| EnsembleSpec::discrete(vec![10], 10, c, 0);
        assert!(s(Centering::TruncatedCN).validate(&tail15).is_err());
        assert!(s(Centering::TruncatedCN).validate(&tail1).is_ok());
        assert!(s(Centering::None).validate(&tail15).is_err());
        assert!(s(Centering::None).validate(&tail05).is_ok());
        let mut cont = s(Centering::Mean(0.0));
        cont.mode = Mode::ContinuousFunctional;
        assert!(cont.validate(&tail15).is_err());
        assert!(EnsembleSpec::discrete(vec![], 10, Centering::None, 0).validate(&tail05).is_err());
    }

    #[test]
    fn budget_cuts_replicas() {
        let m = IidPareto::standard(0.5, false).unwrap();
        let mut spec = EnsembleSpec::discrete(vec![10], 1000, Centering::None, 0);
        spec.step_budget = Some(1000);
        let e = generate_ensemble(&m, &spec).unwrap();
        assert!(e.partial && e.per_n[0].1.len() == 100);
    }

    #[test]
    fn hill_on_exact_pareto() {
        let m = IidPareto::standard(1.5, false).unwrap();
        let mut rng = stream(2, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| m.psi(&m.stationary_draw(&mut rng))).collect();
        let a = hill_alpha(&xs, 1000).unwrap();
        assert!((1.40..=1.60).contains(&a), "{a}");
        assert!(hill_alpha(&vec![2.0; 100], 10).is_err());
        let exp: Vec<f64> = (0..100_000).map(|_| crate::rng::exp1(&mut rng)).collect();
        let prof = hill_profile(&exp, &[100, 1000, 10_000]).unwrap();
        assert!(hill_drifts(&prof, 0.15));
    }

    #[test]
    fn reference_sampler_matches_its_cf() {
        let le = LevyExponent::new(LevyKind::TypeII, TailSpec::new(1.5, 1.0, 0.4).unwrap()).unwrap();
        let mut rng = stream(3, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_stable(&le, &mut rng)).collect();
        let d = cf_distance(&xs, &le, 1.0, &default_xi_grid()).unwrap();
        assert!(d <= 0.02, "{d}");
        let flat = cf_distance(&xs, &le, 0.0, &default_xi_grid()).unwrap();
        let expect = default_xi_grid().iter().map(|&xi| (ecf(&xs, xi) - 1.0).norm()).fold(0.0, f64::max);
        assert!((flat - expect).abs() < 1e-15);
        let sigma = cf_distance_bootstrap(&xs[..5000], &le, 1.0, &default_xi_grid(), 50, 1).unwrap();
        assert!(sigma > 0.0 && sigma < 0.05);
    }

    #[test]
    fn tail_constants_of_a_pareto_sample() {
        let m = IidPareto::new(TailSpec::new(1.5, 1.0, 0.5).unwrap());
        let mut rng = stream(4, 0);
        let xs: Vec<f64> = (0..200_000).map(|_| m.psi(&m.stationary_draw(&mut rng))).collect();
        let (cp, cm) = tail_constants(&xs, 2000, 1.5).unwrap();
        assert!((cp - 1.0).abs() < 0.1 && (cm - 0.5).abs() < 0.06, "{cp} {cm}");
    }

    #[test]
    fn iid_symmetric_convergence() {
        let m = IidPareto::standard(1.5, true).unwrap();
        let spec = EnsembleSpec::discrete(vec![10, 100], 20_000, Centering::Mean(0.0), 11);
        let (le, t) = target_exponent(&m, &spec).unwrap();
        let r = convergence_report(&m, &spec, &le, t).unwrap();
        assert!(r.monotone && !r.failed());
        assert!(r.report.cf_distance < 0.04, "{:?}", r.report);
        assert!(r.report.per_n.iter().all(|p| p.ks_distance < 0.05));
        let json = serde_json::to_value(&r.report).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 6);
        assert!(json["per_N"][0].get("N").is_some());
    }

    #[test]
    fn truncated_centering_for_alpha_one() {
        let m = Reciprocal { symmetric: true };
        let spec = EnsembleSpec::discrete(vec![50, 500], 20_000, Centering::TruncatedCN, 12);
        let (le, t) = target_exponent(&m, &spec).unwrap();
        assert_eq!(le.kind, LevyKind::TypeIII);
        let r = convergence_report(&m, &spec, &le, t).unwrap();
        assert!(r.report.cf_distance < 0.05, "{:?}", r.report);
        let one = Reciprocal { symmetric: false };
        let (slope, icept) = fit_log_slope(&one, &[10.0, 100.0, 1000.0, 1e4]).unwrap();
        assert!((slope - 1.0).abs() < 1e-12 && icept.abs() < 1e-11, "{slope} {icept}");
    }

    #[test]
    fn scaling_consistency_for_stable_input() {
        let le = LevyExponent::for_tail(TailSpec::symmetric(1.5, 1.0).unwrap());
        let mut rng = stream(5, 0);
        let a: Vec<f64> = (0..20_000).map(|_| sample_stable(&le, &mut rng)).collect();
        let b: Vec<f64> = (0..20_000).map(|_| sample_stable(&le, &mut rng)).collect();
        let (d, thr) = scaling_consistency(&a, &b);
        assert!(d < thr);
        let doubled: Vec<f64> = b.iter().map(|x| 2.0 * x).collect();
        let (d2, _) = scaling_consistency(&a, &doubled);
        assert!(d2 > thr);
    }

    #[test]
    fn skewness_and_cf_fit_on_stable_samples() {
        let le = LevyExponent::for_tail(TailSpec::symmetric(1.5, 0.5).unwrap());
        let mut rng = stream(6, 0);
        let xs: Vec<f64> = (0..50_000).map(|_| sample_stable(&le, &mut rng)).collect();
        let (b, se) = skewness_with_se(&xs, 100, 3);
        assert!(b.abs() < 3.0 * se + 1e-12 && se > 0.0);
        let (d, dse) = fit_cf_scale(&xs, 1.5, 0.5, 2.0, 16).unwrap();
        let k = le.scale_coefficient();
        assert!((d - k).abs() < 4.0 * dse + 0.01 * k, "{d} ± {dse} vs {k}");
    }

    #[test]
    fn continuous_target_uses_time_change_and_moment() {
        let m = IidPareto::standard(1.5, true).unwrap();
        let mut spec = EnsembleSpec::discrete(vec![10], 10, Centering::None, 0);
        spec.mode = Mode::ContinuousFunctional;
        spec.pre_centered = true;
        spec.t = 2.0;
        let (le, t) = target_exponent(&m, &spec).unwrap();
        assert_eq!(t, 2.0);
        assert!((le.tail.c_plus - gamma(2.5)).abs() < 1e-12);
    }
}
