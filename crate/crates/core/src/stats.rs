//! Estimators and goodness-of-fit statistics shared by the diagnostics.

use crate::error::{Error, Result};
use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() as f64 - 1.0)
}

/// Empirical characteristic function `n^{-1} Σ exp(i ξ x_j)`.
pub fn ecf(samples: &[f64], xi: f64) -> Complex64 {
    let (mut re, mut im) = (CompensatedSum::new(), CompensatedSum::new());
    for &x in samples {
        let (s, c) = (xi * x).sin_cos();
        re.add(c);
        im.add(s);
    }
    let n = samples.len() as f64;
    Complex64::new(re.value() / n, im.value() / n)
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Bowley (quartile) skewness `(Q3 + Q1 - 2 Q2) / (Q3 - Q1)`; finite for any tail weight.
pub fn quartile_skewness(xs: &[f64]) -> f64 {
    let s = sorted(xs);
    let (q1, q2, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    (q3 + q1 - 2.0 * q2) / (q3 - q1)
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov distance between data and a CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Two-sample KS statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len(), sb.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < na && j < nb {
        let x = sa[i].min(sb[j]);
        while i < na && sa[i] <= x {
            i += 1;
        }
        while j < nb && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Pearson χ² statistic and upper-tail p-value; bins with zero expectation are skipped.
pub fn chi_square(observed: &[f64], expected: &[f64], constraints: usize) -> (f64, f64) {
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
            bins += 1;
        }
    }
    let dof = bins.saturating_sub(constraints).max(1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, p)
}

fn top_abs_desc(samples: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = samples.iter().map(|x| x.abs()).filter(|x| *x > 0.0 && x.is_finite()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Hill estimator of the tail index on the top `k` order statistics of `|samples|`.
pub fn hill_alpha(samples: &[f64], k: usize) -> Result<f64> {
    let v = top_abs_desc(samples);
    hill_from_desc(&v, k)
}

fn hill_from_desc(v: &[f64], k: usize) -> Result<f64> {
    if k == 0 || v.len() < k + 1 {
        return Err(Error::InsufficientData(format!(
            "Hill estimator needs {} positive samples, found {}",
            k + 1,
            v.len()
        )));
    }
    let threshold = v[k];
    let s: f64 = v[..k].iter().map(|x| (x / threshold).ln()).sum();
    if s <= 0.0 {
        return Err(Error::InsufficientData("tied order statistics above the Hill threshold".into()));
    }
    Ok(k as f64 / s)
}

/// Hill estimates over several orders `k`.
pub fn hill_profile(samples: &[f64], orders: &[usize]) -> Result<Vec<f64>> {
    let v = top_abs_desc(samples);
    orders.iter().map(|&k| hill_from_desc(&v, k)).collect()
}

/// True when a Hill profile has no plateau: the estimates drift by more than
/// `rel_tol` (relative to their median) across the orders supplied.
pub fn hill_drifts(profile: &[f64], rel_tol: f64) -> bool {
    let s = sorted(profile);
    let med = quantile_sorted(&s, 0.5);
    (s[s.len() - 1] - s[0]) / med > rel_tol
}
