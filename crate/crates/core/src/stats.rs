//! Descriptive statistics, correlation coefficients and the one-sided
//! Mann–Whitney U test.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

/// Largest smaller-sample size for which [`MannWhitneyMethod::Auto`] uses
/// the exact permutation distribution.
pub const EXACT_MAX_SMALLER: usize = 8;

pub fn mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::arg("mean of an empty sample"));
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

/// Sample standard deviation (`n − 1` denominator).
pub fn std_dev(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::arg("standard deviation needs at least two values"));
    }
    let m = mean(x)?;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (x.len() - 1) as f64).sqrt())
}

/// Standard error of the mean.
pub fn sem(x: &[f64]) -> Result<f64> {
    Ok(std_dev(x)? / (x.len() as f64).sqrt())
}

/// Moment skewness `m₃ / m₂^{3/2}`.
pub fn skewness(x: &[f64]) -> Result<f64> {
    let m = mean(x)?;
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(Error::arg("skewness of a constant sample"));
    }
    Ok(m3 / m2.powf(1.5))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("paired sample length", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::arg("correlation needs at least two pairs"));
    }
    let (mx, my) = (mean(x)?, mean(y)?);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::arg("correlation undefined for a zero-variance sample"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("paired sample length", x.len(), y.len()));
    }
    pearson(&midranks(x)?, &midranks(y)?)
}

/// 1-based ranks, tied values sharing the mean of their ranks.
pub fn midranks(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::arg("cannot rank NaN"));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    Ok(ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// `a` tends to exceed `b`.
    Greater,
    /// `a` tends to fall below `b`.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MannWhitneyMethod {
    /// Exact when the smaller sample has at most [`EXACT_MAX_SMALLER`] values.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// `U` of sample `a`: pairs with `a > b` plus half the tied pairs.
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

pub fn mann_whitney_one_sided(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MannWhitney> {
    mann_whitney_with(a, b, alternative, MannWhitneyMethod::Auto)
}

pub fn mann_whitney_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: MannWhitneyMethod,
) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("Mann-Whitney needs two nonempty samples"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled)?;
    let (n1, n2) = (a.len(), b.len());
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let exact = match method {
        MannWhitneyMethod::Auto => n1.min(n2) <= EXACT_MAX_SMALLER,
        MannWhitneyMethod::Exact => true,
        MannWhitneyMethod::Normal => false,
    };
    let p = if exact {
        exact_p(&ranks, n1, u, alternative)
    } else {
        normal_p(&ranks, n1, n2, u, alternative)
    };
    Ok(MannWhitney { u, p, exact })
}

/// Permutation distribution of `U` over all `C(N, n₁)` assignments of the
/// pooled midranks, tracked as doubled rank sums (midranks are multiples of ½).
fn exact_p(ranks: &[f64], n1: usize, u: f64, alternative: Alternative) -> f64 {
    let n = ranks.len();
    let n2 = n - n1;
    // Enumerate subsets of the smaller group; U of `a` follows by symmetry.
    let m = n1.min(n2);
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[j][s]: subsets of size j with doubled rank sum s.
    let mut ways = vec![vec![0.0f64; max_sum + 1]; m + 1];
    ways[0][0] = 1.0;
    for &d in &doubled {
        for j in (1..=m).rev() {
            let (lo, hi) = ways.split_at_mut(j);
            let (prev, cur) = (&lo[j - 1], &mut hi[0]);
            for s in (d..=max_sum).rev() {
                cur[s] += prev[s - d];
            }
        }
    }
    let total: f64 = ways[m].iter().sum();
    let offset = (m * (m + 1)) as i64; // doubled m(m+1)/2
    let prod2 = (2 * n1 * n2) as i64;
    let u_obs2 = (2.0 * u).round() as i64;
    let mut tail = 0.0;
    for (s, &w) in ways[m].iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let u_small2 = s as i64 - offset;
        let u_a2 = if m == n1 { u_small2 } else { prod2 - u_small2 };
        let hit = match alternative {
            Alternative::Greater => u_a2 >= u_obs2,
            Alternative::Less => u_a2 <= u_obs2,
        };
        if hit {
            tail += w;
        }
    }
    (tail / total).min(1.0)
}

fn normal_p(ranks: &[f64], n1: usize, n2: usize, u: f64, alternative: Alternative) -> f64 {
    let n = (n1 + n2) as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let n1n2 = (n1 * n2) as f64;
    let mu = n1n2 / 2.0;
    let var = n1n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let sigma = var.sqrt();
    match alternative {
        Alternative::Greater => normal_sf((u - mu - 0.5) / sigma),
        Alternative::Less => normal_sf(-(u - mu + 0.5) / sigma),
    }
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}
