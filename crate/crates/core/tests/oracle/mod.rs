#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Double-exponential (tanh-sinh) rule on [lo, hi]; tolerates integrable
/// endpoint singularities.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut h = 0.5;
    let mut prev = f64::NAN;
    for _level in 0..12 {
        let mut sum = 0.0;
        let n = (6.5 / h) as i64;
        for i in -n..=n {
            let t = i as f64 * h;
            let s = pi2 * t.sinh();
            let w = pi2 * t.cosh() / s.cosh().powi(2);
            if w == 0.0 || !w.is_finite() {
                continue;
            }
            // distance to the nearer endpoint, 1 - tanh|s| without cancellation
            let gap = half * 2.0 / ((2.0 * s.abs()).exp() + 1.0);
            let x = if t >= 0.0 { hi - gap } else { lo + gap };
            if x <= lo || x >= hi {
                continue;
            }
            sum += w * f(x);
        }
        let est = sum * h * half;
        if (est - prev).abs() <= 1e-14 * est.abs() {
            return est;
        }
        prev = est;
        h *= 0.5;
    }
    prev
}

/// Composite 5-point Gauss–Legendre for smooth integrands.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.538_469_310_105_683_1, -0.906_179_845_938_664];
    const W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            total += w * f(c + 0.5 * h * x);
        }
    }
    total * 0.5 * h
}

/// Arrival times of a power-law process on (t1, t2], built from exponential
/// gaps of the unit-rate process and the inverse of `a·t^b`.
pub fn arrivals(rng: &mut ChaCha8Rng, a: f64, b: f64, t1: f64, t2: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut u = a * t1.powf(b);
    let end = a * t2.powf(b);
    loop {
        let e: f64 = -(1.0 - rng.random::<f64>()).ln();
        u += e;
        if u > end {
            return out;
        }
        out.push((u / a).powf(1.0 / b));
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-sample Kolmogorov–Smirnov distance of `xs` from `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Asymptotic p-value of a one-sample KS distance `d` with `n` points.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * (j as f64 * lam).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}
