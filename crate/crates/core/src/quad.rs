//! Adaptive Gauss–Kronrod quadrature and level-set localisation.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 quadrature of `f` over `[breaks[0], breaks[last]]`.
///
/// The integration range is first split at every breakpoint; the piece with the
/// largest error estimate is then bisected until the summed error falls under
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Quadrature> {
    if breaks.len() < 2 {
        return Err(Error::Domain("quadrature needs at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 4);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("non-finite integration limits [{a}, {b}]")));
        }
        if b == a {
            continue;
        }
        let (value, error) = kronrod15(&f, a, b);
        heap.push(Piece { a, b, value, error });
    }
    let mut settled: Vec<Piece> = Vec::new();
    let mut iteration = 0usize;
    let (mut value, mut error) = totals(&heap, &settled);
    loop {
        if iteration % 64 == 0 {
            (value, error) = totals(&heap, &settled);
        }
        iteration += 1;
        if !value.is_finite() {
            return Err(Error::Numeric { what: "integrand produced a non-finite value".into(), residual: error });
        }
        let intervals = heap.len() + settled.len();
        if error <= abs_tol.max(rel_tol * value.abs()) || heap.is_empty() {
            let (value, error) = totals(&heap, &settled);
            if error <= abs_tol.max(rel_tol * value.abs()) || heap.is_empty() {
                return Ok(Quadrature { value, error, intervals });
            }
        }
        if intervals >= max_intervals {
            let (_, error) = totals(&heap, &settled);
            return Err(Error::Numeric { what: format!("adaptive quadrature exhausted {max_intervals} intervals"), residual: error });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; keep its estimate as is
            settled.push(worst);
            continue;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
    }
}

fn totals(heap: &BinaryHeap<Piece>, settled: &[Piece]) -> (f64, f64) {
    heap.iter().chain(settled.iter()).fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// Evenly spaced breakpoints `a, a+h, ..., b`.
pub fn uniform_breaks(a: f64, b: f64, pieces: usize) -> Vec<f64> {
    let n = pieces.max(1);
    let mut v: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    v[n] = b;
    v
}

/// Scan points in `[a, b]`: a uniform grid plus geometric clusters that
/// approach `a`, `b` and each interior point in `focus` to relative distance 1e-15.
pub fn scan_grid(a: f64, b: f64, uniform: usize, focus: &[f64]) -> Vec<f64> {
    let mut pts = uniform_breaks(a, b, uniform);
    let width = b - a;
    let mut anchors = vec![a, b];
    anchors.extend(focus.iter().copied().filter(|&p| p > a && p < b));
    for &p in &anchors {
        for j in 1..=150 {
            let d = width * 10f64.powf(-(j as f64) / 10.0);
            for q in [p - d, p + d] {
                if q > a && q < b {
                    pts.push(q);
                }
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn bisect_crossing<F: Fn(f64) -> bool>(inside: &F, mut lo: f64, mut hi: f64) -> f64 {
    // invariant: inside(lo) != inside(hi)
    let lo_in = inside(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if inside(mid) == lo_in {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximal intervals of `[a, b]` on which `inside` holds, located on the scan
/// grid and refined by bisection to floating-point resolution.
pub fn level_intervals<F: Fn(f64) -> bool>(inside: F, grid: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if grid.is_empty() {
        return out;
    }
    let mut start: Option<f64> = if inside(grid[0]) { Some(grid[0]) } else { None };
    let mut prev = grid[0];
    let mut prev_in = start.is_some();
    for &x in &grid[1..] {
        let now = inside(x);
        if now != prev_in {
            let cross = bisect_crossing(&inside, prev, x);
            if now {
                start = Some(cross);
            } else if let Some(s) = start.take() {
                out.push((s, cross));
            }
        }
        prev = x;
        prev_in = now;
    }
    if let Some(s) = start {
        out.push((s, prev));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x, &[0.0, 2.0], 1e-14, 1e-14, 10).unwrap();
        assert!((q.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn handles_endpoint_singularity() {
        let q = integrate(|x: f64| x.powf(-0.5), &[0.0, 1.0], 1e-10, 1e-12, 2000).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn reciprocal_is_logarithm() {
        let q = integrate(|x| 1.0 / x, &[1e-4, 1.0], 0.0, 1e-14, 10_000).unwrap();
        assert!((q.value / 1e4f64.ln() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn reports_budget_exhaustion() {
        let r = integrate(|x: f64| (1.0 / x).sin(), &[1e-9, 1.0], 1e-14, 0.0, 8);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }

    #[test]
    fn level_intervals_find_roots() {
        let grid = scan_grid(0.0, 1.0, 64, &[]);
        let iv = level_intervals(|x| 1.0 / x > 1e6, &grid);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].0, 0.0);
        assert!((iv[0].1 - 1e-6).abs() < 1e-20);
        let iv = level_intervals(|x| (x - 0.3) * (x - 0.7) < 0.0, &grid);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 - 0.3).abs() < 1e-15 && (iv[0].1 - 0.7).abs() < 1e-15);
    }
}
