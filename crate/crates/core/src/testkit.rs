//! Test-support oracles, deliberately independent of the fitting path they
//! check: a Newton-on-the-score logistic solver, a nested-quadrature
//! marginal likelihood, and a generator for the mixed-model data process.
//!
//! Nothing here touches [`crate::optim`] or [`crate::fit::laplace`]
//! internals; keep it that way so oracle agreement stays meaningful.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::fit::FitInput;
use crate::util;

/// Plain logistic regression solved by iteratively reweighted least squares
/// (Newton-Raphson on the score). `xs` rows are covariate vectors without
/// the intercept, which is always included as the first coefficient.
///
/// Returns the coefficient vector `[intercept, slopes...]` or `None` if the
/// solve breaks down (e.g. separation).
pub fn irls_logistic(xs: &[Vec<f64>], ys: &[bool], max_iter: usize) -> Option<Vec<f64>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let p = xs[0].len() + 1;
    let row = |i: usize| -> Vec<f64> {
        let mut r = Vec::with_capacity(p);
        r.push(1.0);
        r.extend_from_slice(&xs[i]);
        r
    };
    let mut beta = vec![0.0; p];
    for _ in 0..max_iter {
        // Score and observed information.
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];
        for i in 0..n {
            let r = row(i);
            let eta: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = mu * (1.0 - mu);
            let resid = (ys[i] as i32 as f64) - mu;
            for a in 0..p {
                score[a] += r[a] * resid;
                for b in 0..p {
                    info[a * p + b] += r[a] * w * r[b];
                }
            }
        }
        let mut step = score.clone();
        if !solve_dense(&mut info, &mut step, p) {
            return None;
        }
        let mut max_step = 0.0f64;
        for a in 0..p {
            beta[a] += step[a];
            max_step = max_step.max(step[a].abs());
        }
        if max_step < 1e-12 {
            return Some(beta);
        }
        if !beta.iter().all(|b| b.is_finite()) || beta.iter().any(|b| b.abs() > 40.0) {
            return None; // separation
        }
    }
    Some(beta)
}

/// Private dense solver so the oracle does not share code with the library's
/// linear algebra.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for r in (col + 1)..n {
            let f = a[r * n + col] / a[col * n + col];
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        for k in (col + 1)..n {
            b[col] -= a[col * n + k] * b[k];
        }
        b[col] /= a[col * n + col];
        if !b[col].is_finite() {
            return false;
        }
    }
    true
}

/// Negative marginal log-likelihood of the nested-intercept logistic model,
/// computed by direct numerical integration (composite Simpson over +/- 10
/// standard deviations, with the inner order-level integrals nested inside
/// the outer scenario-level integral).
///
/// Exact up to quadrature error; use on small datasets only.
pub fn quadrature_neg_loglik(
    data: &[FitInput],
    include_position: bool,
    beta0: f64,
    beta1: f64,
    sigma_s: f64,
    sigma_so: f64,
    points: usize,
) -> f64 {
    use std::collections::BTreeMap;
    // Independent grouping pass.
    let mut scenarios: BTreeMap<&str, BTreeMap<&str, Vec<(f64, bool)>>> = BTreeMap::new();
    for t in data {
        let x = match (include_position, t.listed_first) {
            (true, Some(true)) => 0.5,
            (true, Some(false)) => -0.5,
            _ => 0.0,
        };
        scenarios
            .entry(&t.scenario_key)
            .or_default()
            .entry(&t.order_key)
            .or_default()
            .push((x, t.y));
    }

    let loglik_cell = |eta: f64, trials: &[(f64, bool)]| -> f64 {
        trials
            .iter()
            .map(|&(_, y)| {
                let p = 1.0 / (1.0 + (-eta).exp());
                if y {
                    p.max(1e-300).ln()
                } else {
                    (1.0 - p).max(1e-300).ln()
                }
            })
            .sum()
    };

    // Composite Simpson over a standard-normal-weighted integrand,
    // substituting t = z / sigma.
    let simpson = |f: &dyn Fn(f64) -> f64| -> f64 {
        let half_range = 10.0;
        let n = if points % 2 == 0 { points } else { points + 1 };
        let h = 2.0 * half_range / n as f64;
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = 0.0;
        for k in 0..=n {
            let z = -half_range + k as f64 * h;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * phi(z) * f(z);
        }
        acc * h / 3.0
    };

    let mut total = 0.0;
    for cells in scenarios.values() {
        let cell_list: Vec<(&str, &Vec<(f64, bool)>)> =
            cells.iter().map(|(k, v)| (*k, v)).collect();
        let marginal = if sigma_s > 0.0 {
            simpson(&|zu: f64| {
                let u = sigma_s * zu;
                let mut product = 1.0;
                for (_, trials) in &cell_list {
                    let x = trials[0].0;
                    let base = beta0 + beta1 * x + u;
                    let inner = if sigma_so > 0.0 {
                        simpson(&|zv: f64| loglik_cell(base + sigma_so * zv, trials).exp())
                    } else {
                        loglik_cell(base, trials).exp()
                    };
                    product *= inner;
                }
                product
            })
        } else {
            let mut product = 1.0;
            for (_, trials) in &cell_list {
                let x = trials[0].0;
                let base = beta0 + beta1 * x;
                let inner = if sigma_so > 0.0 {
                    simpson(&|zv: f64| loglik_cell(base + sigma_so * zv, trials).exp())
                } else {
                    loglik_cell(base, trials).exp()
                };
                product *= inner;
            }
            product
        };
        total += marginal.max(1e-300).ln();
    }
    -total
}

/// Ground-truth parameters for [`simulate_fit_inputs`].
#[derive(Debug, Clone, Copy)]
pub struct TrueProcess {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma_s: f64,
    pub sigma_so: f64,
}

/// Draw a dataset straight from the nested-intercept logistic process:
/// `n_scenarios` scenarios, both orders per scenario, `per_cell` trials per
/// order cell. Deterministic per seed; independent of the simulator backend.
pub fn simulate_fit_inputs(
    process: &TrueProcess,
    n_scenarios: usize,
    per_cell: usize,
    seed: u64,
) -> Vec<FitInput> {
    let mut data = Vec::with_capacity(n_scenarios * 2 * per_cell);
    for s in 0..n_scenarios {
        let scenario_key = format!("s{s:04}");
        let mut rng = util::derived_rng(seed, &["oracle-scenario", &scenario_key]);
        let u: f64 = {
            let z: f64 = rng.sample(StandardNormal);
            process.sigma_s * z
        };
        for (order, listed_first, x) in [("ab", true, 0.5), ("ba", false, -0.5)] {
            let v: f64 = {
                let z: f64 = rng.sample(StandardNormal);
                process.sigma_so * z
            };
            let eta = process.beta0 + process.beta1 * x + u + v;
            let p = 1.0 / (1.0 + (-eta).exp());
            for _ in 0..per_cell {
                let y = rng.random::<f64>() < p;
                data.push(FitInput {
                    y,
                    listed_first: Some(listed_first),
                    scenario_key: scenario_key.clone(),
                    order_key: format!("{scenario_key}|{order}"),
                });
            }
        }
    }
    data
}
