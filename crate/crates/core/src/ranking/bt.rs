use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BattleOutcomeSet, FitConfig, RankingError, Tally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Converged within the minorisation–maximisation phase.
    Mm,
    /// Needed the damped Newton phase.
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Zero-mean strengths, aligned with the outcome set's `model_index`.
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub solver: Solver,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    /// Number of tied outcomes, each credited as half a win to both sides.
    pub ties: usize,
    /// Log-likelihood after every iteration (only with `record_trace`).
    pub trace: Vec<f64>,
}

pub fn fit_bradley_terry(
    data: &BattleOutcomeSet,
    cfg: &FitConfig,
) -> Result<FitReport, RankingError> {
    if data.is_empty() {
        return Err(RankingError::NoData);
    }
    let tally = Tally::from_indexed(data.model_index.len(), &data.indexed());
    let mut report = fit_tally(&tally, cfg)?;
    report.ties = data.tie_count();
    Ok(report)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

/// Log-likelihood of `theta` under the half-tie credit tally.
pub fn log_likelihood(tally: &Tally, theta: &[f64]) -> f64 {
    let k = tally.k;
    let mut ll = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = tally.wins[i * k + j];
            if i != j && w > 0.0 {
                ll += w * log_sigmoid(theta[i] - theta[j]);
            }
        }
    }
    ll
}

fn gradient(tally: &Tally, theta: &[f64], out: &mut [f64]) -> f64 {
    let k = tally.k;
    let mut norm: f64 = 0.0;
    for i in 0..k {
        let mut g = 0.0;
        for j in 0..k {
            let n = tally.counts[i * k + j];
            if i != j && n > 0.0 {
                g += tally.wins[i * k + j] - n * sigmoid(theta[i] - theta[j]);
            }
        }
        out[i] = g;
        norm = norm.max(libm::fabs(g));
    }
    norm
}

fn center(theta: &mut [f64]) {
    let mean = theta.iter().sum::<f64>() / theta.len() as f64;
    for t in theta.iter_mut() {
        *t -= mean;
    }
}

/// Union-find component count of the comparison graph.
fn components(tally: &Tally) -> usize {
    let k = tally.k;
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if tally.counts[i * k + j] > 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..k).filter(|&i| find(&mut parent, i) == i).count()
}

/// The MLE is finite iff the "earned credit against" digraph is strongly
/// connected: every model reaches every other through positive credits.
fn strongly_connected(tally: &Tally) -> bool {
    let k = tally.k;
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let w = if forward {
                    tally.wins[i * k + j]
                } else {
                    tally.wins[j * k + i]
                };
                if !seen[j] && i != j && w > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Fits strengths to an aggregated tally.
///
/// Runs Hunter's MM update (`γi ← Wi / Σj nij/(γi+γj)`, carried out in log
/// space) and, if that has not reached the tolerance within
/// `cfg.mm_iterations`, finishes with damped Newton steps on the same
/// likelihood. Both phases are monotone in the log-likelihood.
pub fn fit_tally(tally: &Tally, cfg: &FitConfig) -> Result<FitReport, RankingError> {
    let k = tally.k;
    if k == 0 || tally.counts.iter().all(|&c| c == 0.0) {
        return Err(RankingError::NoData);
    }
    let comps = components(tally);
    if comps > 1 {
        return Err(RankingError::DisconnectedGraph { components: comps });
    }
    if !strongly_connected(tally) {
        return Err(RankingError::Unbounded);
    }

    let mut theta = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut trace = Vec::new();
    let mut norm = gradient(tally, &theta, &mut grad);
    let mut iterations = 0;
    let mut solver = Solver::Mm;
    let wins: Vec<f64> = (0..k).map(|i| tally.total_wins(i)).collect();
    let mm_budget = cfg.mm_iterations.min(cfg.max_iterations);

    while norm > cfg.tolerance && iterations < mm_budget {
        iterations += 1;
        let gamma: Vec<f64> = theta.iter().map(|&t| libm::exp(t)).collect();
        let mut next = vec![0.0; k];
        for i in 0..k {
            let mut denom = 0.0;
            for j in 0..k {
                let n = tally.counts[i * k + j];
                if i != j && n > 0.0 {
                    denom += n / (gamma[i] + gamma[j]);
                }
            }
            next[i] = libm::log(wins[i]) - libm::log(denom);
        }
        center(&mut next);
        theta = next;
        norm = gradient(tally, &theta, &mut grad);
        if cfg.record_trace {
            trace.push(log_likelihood(tally, &theta));
        }
    }

    if norm > cfg.tolerance {
        solver = Solver::Newton;
        let mut ll = log_likelihood(tally, &theta);
        while norm > cfg.tolerance && iterations < cfg.max_iterations {
            iterations += 1;
            let step = newton_direction(tally, &theta, &grad);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a + t * d).collect();
                let trial_ll = log_likelihood(tally, &trial);
                if trial_ll >= ll {
                    theta = trial;
                    ll = trial_ll;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            center(&mut theta);
            norm = gradient(tally, &theta, &mut grad);
            if cfg.record_trace {
                trace.push(ll);
            }
            if !accepted {
                // flat to machine precision
                break;
            }
        }
    }

    if norm > cfg.tolerance {
        return Err(RankingError::NotConverged {
            iterations,
            gradient: norm,
        });
    }
    center(&mut theta);
    Ok(FitReport {
        log_likelihood: log_likelihood(tally, &theta),
        theta,
        iterations,
        solver,
        gradient_norm: norm,
        ties: 0,
        trace,
    })
}

/// Solves `L δ = g` where `L` is the Fisher information (a weighted graph
/// Laplacian). `L + 11ᵀ/k` is non-singular on a connected graph and agrees
/// with `L` on the zero-sum subspace that contains `g`.
fn newton_direction(tally: &Tally, theta: &[f64], grad: &[f64]) -> Vec<f64> {
    let k = tally.k;
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let n = tally.counts[i * k + j];
            if i != j && n > 0.0 {
                let p = sigmoid(theta[i] - theta[j]);
                let w = n * p * (1.0 - p);
                m[i * k + j] -= w;
                m[i * k + i] += w;
            }
        }
    }
    let shift = 1.0 / k as f64;
    for v in m.iter_mut() {
        *v += shift;
    }
    solve(m, grad.to_vec(), k)
}

/// Gaussian elimination with partial pivoting on a dense `k×k` system.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, k: usize) -> Vec<f64> {
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| libm::fabs(a[x * k + col]).total_cmp(&libm::fabs(a[y * k + col])))
            .unwrap_or(col);
        if pivot != col {
            for c in 0..k {
                a.swap(col * k + c, pivot * k + c);
            }
            b.swap(col, pivot);
        }
        let d = a[col * k + col];
        if d == 0.0 {
            continue;
        }
        for r in (col + 1)..k {
            let f = a[r * k + col] / d;
            if f != 0.0 {
                for c in col..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let mut s = b[r];
        for c in (r + 1)..k {
            s -= a[r * k + c] * x[c];
        }
        let d = a[r * k + r];
        x[r] = if d == 0.0 { 0.0 } else { s / d };
    }
    x
}
