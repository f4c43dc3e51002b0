//! Rank correlation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest sample size that gets an exact permutation p-value.
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFew(usize),
    #[error("an input is constant, correlation undefined")]
    ConstantInput,
    #[error("input contains NaN")]
    NotANumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    ExactPermutation,
    StudentT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

/// 1-based ranks; tied values receive the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman's ρ with a two-sided p-value: exact over all `n!` permutations
/// for `n ≤ 10`, Student-t approximation with `n − 2` degrees of freedom
/// above that.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew(n));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(StatsError::NotANumber);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry).ok_or(StatsError::ConstantInput)?;
    let (p_value, method) = if n <= EXACT_PERMUTATION_MAX_N {
        (permutation_p_value(&rx, &ry, rho), PValueMethod::ExactPermutation)
    } else {
        (t_approx_p_value(rho, n), PValueMethod::StudentT)
    };
    Ok(Correlation {
        rho,
        p_value,
        n,
        method,
    })
}

/// Fraction of permutations of `ry` whose correlation with `rx` is at least
/// as extreme as `rho`. Enumerates with Heap's algorithm.
pub fn permutation_p_value(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let n = ry.len();
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let dx: Vec<f64> = rx.iter().map(|v| v - mx).collect();
    let mut dy: Vec<f64> = ry.iter().map(|v| v - my).collect();
    let sxx: f64 = dx.iter().map(|v| v * v).sum();
    let syy: f64 = dy.iter().map(|v| v * v).sum();
    let norm = libm::sqrt(sxx * syy);
    let threshold = libm::fabs(rho) - 1e-12;

    let mut extreme: u64 = 0;
    let mut total: u64 = 0;
    let mut visit = |dy: &[f64]| {
        let s: f64 = dx.iter().zip(dy).map(|(a, b)| a * b).sum();
        total += 1;
        if libm::fabs(s / norm) >= threshold {
            extreme += 1;
        }
    };
    visit(&dy);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                dy.swap(0, i);
            } else {
                dy.swap(c[i], i);
            }
            visit(&dy);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Two-sided p-value of `t = ρ·sqrt((n−2)/(1−ρ²))` under Student-t(n−2).
/// Clamped to the smallest positive double when `|ρ| = 1`.
pub fn t_approx_p_value(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r2 = rho * rho;
    if r2 >= 1.0 {
        return f64::MIN_POSITIVE;
    }
    let t2 = rho * rho * df / (1.0 - r2);
    student_t_two_sided(t2, df).max(f64::MIN_POSITIVE)
}

/// `P(|T| ≥ sqrt(t2))` for `T ~ t(df)`, via the regularised incomplete beta
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided(t2: f64, df: f64) -> f64 {
    regularized_incomplete_beta(df / (df + t2), df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    h
}
