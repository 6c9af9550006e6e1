//! Laplace-approximated marginal likelihood for the two-level logistic
//! mixed model.
//!
//! The model places one random intercept per scenario and one per
//! scenario-order cell, so the joint likelihood factorizes into independent
//! scenario blocks of at most three random effects (u, v_ab, v_ba). Each
//! block's conditional mode is found by a penalized Newton loop (the inner
//! iteratively-reweighted least-squares step), and the block contributes
//!
//! `loglik(mode) - penalty(mode) - log det(I + S A S) / 2`
//!
//! where `A` is the Bernoulli curvature at the mode and `S` the diagonal of
//! random-effect standard deviations. The scaled determinant form stays
//! finite as the variances approach zero, where the objective reduces to the
//! plain logistic log-likelihood.

use crate::linalg;
use crate::num::Real;
use crate::stats::{log1p_exp, logistic};

use super::{FitError, FitInput};

/// Aggregated trials sharing one scenario-order cell. All trials in a cell
/// have the same linear predictor, so only counts are needed.
#[derive(Debug, Clone)]
pub struct OrderCell<F> {
    /// Centered position indicator: +1/2 when variant A is listed first,
    /// -1/2 otherwise, 0 when the covariate is absent.
    pub x: F,
    pub n: F,
    pub y_sum: F,
}

/// One scenario's cells (one or two, depending on counterbalancing).
#[derive(Debug, Clone)]
pub struct ScenarioBlock<F> {
    pub cells: Vec<OrderCell<F>>,
}

/// Prepared model data: retained trials grouped into scenario blocks.
#[derive(Debug, Clone)]
pub struct GlmmData<F> {
    blocks: Vec<ScenarioBlock<F>>,
    pub n_obs: usize,
    pub n_scenarios: usize,
    pub include_position: bool,
}

/// Fixed and variance parameters on the natural scale.
#[derive(Debug, Clone, Copy)]
pub struct GlmmParams<F> {
    pub beta0: F,
    pub beta1: Option<F>,
    pub sigma_s: F,
    pub sigma_so: F,
}

/// Inner-loop controls.
#[derive(Debug, Clone, Copy)]
pub struct InnerSettings<F> {
    pub tol: F,
    pub max_iter: usize,
}

impl<F: Real> Default for InnerSettings<F> {
    fn default() -> Self {
        Self {
            tol: F::of(1e-10),
            max_iter: 200,
        }
    }
}

/// Objective value plus inner-loop diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct EvalResult<F> {
    /// Negative approximate marginal log-likelihood.
    pub value: F,
    /// False when any block's Newton loop hit its iteration cap.
    pub inner_converged: bool,
}

impl<F: Real> GlmmData<F> {
    /// Group retained trials into scenario blocks. Grouping is by key order,
    /// so the result is independent of input ordering.
    pub fn from_inputs(data: &[FitInput], include_position: bool) -> Result<Self, FitError> {
        if data.is_empty() {
            return Err(FitError::EmptyData);
        }
        use std::collections::BTreeMap;
        let mut scenarios: BTreeMap<&str, BTreeMap<&str, (F, F, F)>> = BTreeMap::new();
        for trial in data {
            let x = match (include_position, trial.listed_first) {
                (false, _) => F::zero(),
                (true, Some(true)) => F::of(0.5),
                (true, Some(false)) => F::of(-0.5),
                (true, None) => {
                    return Err(FitError::MissingPositionIndicator {
                        scenario_key: trial.scenario_key.clone(),
                    })
                }
            };
            let cell = scenarios
                .entry(trial.scenario_key.as_str())
                .or_default()
                .entry(trial.order_key.as_str())
                .or_insert((x, F::zero(), F::zero()));
            cell.1 = cell.1 + F::one();
            if trial.y {
                cell.2 = cell.2 + F::one();
            }
        }
        let blocks: Vec<ScenarioBlock<F>> = scenarios
            .values()
            .map(|cells| ScenarioBlock {
                cells: cells
                    .values()
                    .map(|&(x, n, y_sum)| OrderCell { x, n, y_sum })
                    .collect(),
            })
            .collect();
        Ok(Self {
            n_scenarios: blocks.len(),
            n_obs: data.len(),
            include_position,
            blocks,
        })
    }

    pub fn blocks(&self) -> &[ScenarioBlock<F>] {
        &self.blocks
    }

    /// Total successes across retained trials.
    pub fn total_y(&self) -> F {
        self.blocks
            .iter()
            .flat_map(|b| &b.cells)
            .map(|c| c.y_sum)
            .sum()
    }

    /// True when the position covariate takes both signs somewhere.
    pub fn has_position_contrast(&self) -> bool {
        let mut pos = false;
        let mut neg = false;
        for cell in self.blocks.iter().flat_map(|b| &b.cells) {
            if cell.x > F::zero() {
                pos = true;
            }
            if cell.x < F::zero() {
                neg = true;
            }
        }
        pos && neg
    }

    /// Negative approximate marginal log-likelihood at the given parameters.
    pub fn neg_marginal_loglik(
        &self,
        params: &GlmmParams<F>,
        inner: &InnerSettings<F>,
    ) -> EvalResult<F> {
        let mut total = F::zero();
        let mut converged = true;
        for block in &self.blocks {
            let (contribution, ok) = block_contribution(block, params, inner);
            total = total + contribution;
            converged &= ok;
        }
        EvalResult {
            value: -total,
            inner_converged: converged,
        }
    }
}

/// Spec-level objective entry point: parameters are
/// `(beta0, beta1?, log sigma_s, log sigma_so)`. A block whose inner loop
/// fails to converge contributes a large penalty so the outer optimizer
/// retreats; callers needing the diagnostic use
/// [`GlmmData::neg_marginal_loglik`].
pub fn laplace_objective<F: Real>(
    beta0: F,
    beta1: Option<F>,
    log_sigma_s: F,
    log_sigma_so: F,
    data: &GlmmData<F>,
    inner: &InnerSettings<F>,
) -> F {
    let params = GlmmParams {
        beta0,
        beta1,
        sigma_s: log_sigma_s.exp(),
        sigma_so: log_sigma_so.exp(),
    };
    let result = data.neg_marginal_loglik(&params, inner);
    if result.inner_converged {
        result.value
    } else {
        result.value + F::of(1e10)
    }
}

/// Bernoulli log-likelihood of one cell at linear predictor `eta`.
#[inline]
fn cell_loglik<F: Real>(cell: &OrderCell<F>, eta: F) -> F {
    cell.y_sum * eta - cell.n * log1p_exp(eta)
}

fn fixed_part<F: Real>(cell: &OrderCell<F>, params: &GlmmParams<F>) -> F {
    match params.beta1 {
        Some(b1) => params.beta0 + b1 * cell.x,
        None => params.beta0,
    }
}

/// One scenario block's contribution to the marginal log-likelihood, plus
/// whether its Newton loop converged.
fn block_contribution<F: Real>(
    block: &ScenarioBlock<F>,
    params: &GlmmParams<F>,
    inner: &InnerSettings<F>,
) -> (F, bool) {
    let u_active = params.sigma_s > F::zero();
    let v_active = params.sigma_so > F::zero();
    let n_cells = block.cells.len();
    let dim = usize::from(u_active) + if v_active { n_cells } else { 0 };

    let offsets: Vec<F> = block.cells.iter().map(|c| fixed_part(c, params)).collect();

    if dim == 0 {
        let ll: F = block
            .cells
            .iter()
            .zip(&offsets)
            .map(|(c, &eta)| cell_loglik(c, eta))
            .sum();
        return (ll, true);
    }

    let inv_var_u = if u_active {
        F::one() / (params.sigma_s * params.sigma_s)
    } else {
        F::zero()
    };
    let inv_var_v = if v_active {
        F::one() / (params.sigma_so * params.sigma_so)
    } else {
        F::zero()
    };

    // b layout: [u]? then one v per cell.
    let v_base = usize::from(u_active);
    let eta_of = |b: &[F], cell_idx: usize| -> F {
        let mut eta = offsets[cell_idx];
        if u_active {
            eta = eta + b[0];
        }
        if v_active {
            eta = eta + b[v_base + cell_idx];
        }
        eta
    };
    let penalized_negloglik = |b: &[F]| -> F {
        let mut h = F::zero();
        for (idx, cell) in block.cells.iter().enumerate() {
            h = h - cell_loglik(cell, eta_of(b, idx));
        }
        if u_active {
            h = h + b[0] * b[0] * inv_var_u * F::of(0.5);
        }
        if v_active {
            for (idx, _) in block.cells.iter().enumerate() {
                let v = b[v_base + idx];
                h = h + v * v * inv_var_v * F::of(0.5);
            }
        }
        h
    };

    let mut b = vec![F::zero(); dim];
    let mut h_current = penalized_negloglik(&b);
    let mut converged = false;
    let block_n: F = block.cells.iter().map(|c| c.n).sum();
    // Tolerances on the Newton decrement g'H^{-1}g, which bounds the
    // remaining objective excess and stays meaningful across both the stiff
    // (sigma -> 0) and flat (sigma large) regimes.
    let decrement_tol = inner.tol * (F::one() + block_n);
    let plateau_decrement = F::of(1e-6) * (F::one() + h_current.abs());

    for _ in 0..inner.max_iter {
        // Gradient and Hessian of the penalized negative log-likelihood.
        let mut grad = vec![F::zero(); dim];
        let mut hess = vec![F::zero(); dim * dim];
        for (idx, cell) in block.cells.iter().enumerate() {
            let p = logistic(eta_of(&b, idx));
            let resid = cell.n * p - cell.y_sum;
            let w = cell.n * p * (F::one() - p);
            if u_active {
                grad[0] = grad[0] + resid;
                hess[0] = hess[0] + w;
            }
            if v_active {
                let vi = v_base + idx;
                grad[vi] = grad[vi] + resid;
                hess[vi * dim + vi] = hess[vi * dim + vi] + w;
                if u_active {
                    hess[vi] = hess[vi] + w;
                    hess[vi * dim] = hess[vi * dim] + w;
                }
            }
        }
        if u_active {
            grad[0] = grad[0] + b[0] * inv_var_u;
            hess[0] = hess[0] + inv_var_u;
        }
        if v_active {
            for idx in 0..n_cells {
                let vi = v_base + idx;
                grad[vi] = grad[vi] + b[vi] * inv_var_v;
                hess[vi * dim + vi] = hess[vi * dim + vi] + inv_var_v;
            }
        }

        let mut step = grad.iter().map(|&g| -g).collect::<Vec<F>>();
        let mut hess_copy = hess.clone();
        if !linalg::solve_in_place(&mut hess_copy, &mut step, dim) {
            break;
        }
        let decrement: F = grad
            .iter()
            .zip(&step)
            .map(|(&g, &s)| -(g * s))
            .sum::<F>()
            .max(F::zero());
        if decrement <= decrement_tol {
            converged = true;
            break;
        }

        // Step halving keeps the strictly convex objective decreasing.
        let mut scale = F::one();
        let mut accepted = false;
        let h_before = h_current;
        for _ in 0..40 {
            let trial: Vec<F> = b.iter().zip(&step).map(|(&bi, &si)| bi + si * scale).collect();
            let h_trial = penalized_negloglik(&trial);
            if h_trial <= h_current {
                b = trial;
                h_current = h_trial;
                accepted = true;
                break;
            }
            scale = scale * F::of(0.5);
        }
        let stalled = !accepted
            || h_before - h_current <= F::of(1e-13) * (F::one() + h_before.abs());
        if stalled {
            // Floating point cannot realize the predicted decrease; the
            // decrement bounds what is being left on the table.
            converged = decrement <= plateau_decrement;
            break;
        }
    }

    // Laplace correction with the scaled determinant
    // det(I + S A S), S = diag of active standard deviations.
    let mut loglik = F::zero();
    let mut penalty = F::zero();
    let mut curvature = vec![F::zero(); dim * dim];
    for (idx, cell) in block.cells.iter().enumerate() {
        let eta = eta_of(&b, idx);
        loglik = loglik + cell_loglik(cell, eta);
        let p = logistic(eta);
        let w = cell.n * p * (F::one() - p);
        if u_active {
            curvature[0] = curvature[0] + w;
        }
        if v_active {
            let vi = v_base + idx;
            curvature[vi * dim + vi] = curvature[vi * dim + vi] + w;
            if u_active {
                curvature[vi] = curvature[vi] + w;
                curvature[vi * dim] = curvature[vi * dim] + w;
            }
        }
    }
    if u_active {
        penalty = penalty + b[0] * b[0] * inv_var_u * F::of(0.5);
    }
    if v_active {
        for idx in 0..n_cells {
            let v = b[v_base + idx];
            penalty = penalty + v * v * inv_var_v * F::of(0.5);
        }
    }

    let mut scaled = vec![F::zero(); dim * dim];
    let sd_of = |d: usize| -> F {
        if u_active && d == 0 {
            params.sigma_s
        } else {
            params.sigma_so
        }
    };
    for r in 0..dim {
        for c in 0..dim {
            scaled[r * dim + c] = sd_of(r) * curvature[r * dim + c] * sd_of(c);
        }
        scaled[r * dim + r] = scaled[r * dim + r] + F::one();
    }
    let det = linalg::determinant(&scaled, dim);
    let log_det = if det > F::zero() {
        det.ln()
    } else {
        // Curvature should keep det >= 1; a non-positive value means the
        // mode search failed badly.
        return (loglik - penalty - F::of(1e10), false);
    };

    (loglik - penalty - log_det * F::of(0.5), converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn input(y: bool, listed_first: Option<bool>, scen: &str, order: &str) -> FitInput {
        FitInput {
            y,
            listed_first,
            scenario_key: scen.to_string(),
            order_key: format!("{scen}|{order}"),
        }
    }

    fn balanced_dataset() -> Vec<FitInput> {
        // 4 scenarios x 2 orders x 4 trials, half successes everywhere.
        let mut data = Vec::new();
        for s in 0..4 {
            for (order, listed) in [("ab", true), ("ba", false)] {
                for t in 0..4 {
                    data.push(input(t % 2 == 0, Some(listed), &format!("s{s}"), order));
                }
            }
        }
        data
    }

    #[test]
    fn zero_variance_reduces_to_plain_logistic_loglik() {
        let data = balanced_dataset();
        let glmm = GlmmData::<f64>::from_inputs(&data, true).unwrap();
        let params = GlmmParams {
            beta0: 0.3,
            beta1: Some(-0.2),
            sigma_s: 0.0,
            sigma_so: 0.0,
        };
        let result = glmm.neg_marginal_loglik(&params, &InnerSettings::default());
        // Direct Bernoulli computation.
        let mut expected = 0.0;
        for trial in &data {
            let x = if trial.listed_first == Some(true) { 0.5 } else { -0.5 };
            let eta: f64 = 0.3 + -0.2 * x;
            let p = logistic(eta);
            expected -= if trial.y { p.ln() } else { (1.0 - p).ln() };
        }
        assert!(result.inner_converged);
        assert_relative_eq!(result.value, expected, max_relative = 1e-12);
    }

    #[test]
    fn balanced_data_at_null_gives_n_ln2() {
        let data = balanced_dataset();
        let glmm = GlmmData::<f64>::from_inputs(&data, true).unwrap();
        let params = GlmmParams {
            beta0: 0.0,
            beta1: Some(0.0),
            sigma_s: 0.0,
            sigma_so: 0.0,
        };
        let result = glmm.neg_marginal_loglik(&params, &InnerSettings::default());
        assert_relative_eq!(
            result.value,
            data.len() as f64 * std::f64::consts::LN_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn evaluation_is_deterministic() {
        let data = balanced_dataset();
        let glmm = GlmmData::<f64>::from_inputs(&data, true).unwrap();
        let params = GlmmParams {
            beta0: 0.7,
            beta1: Some(0.1),
            sigma_s: 0.4,
            sigma_so: 0.2,
        };
        let a = glmm.neg_marginal_loglik(&params, &InnerSettings::default());
        let b = glmm.neg_marginal_loglik(&params, &InnerSettings::default());
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn grouping_is_input_order_insensitive() {
        let mut data = balanced_dataset();
        let glmm_a = GlmmData::<f64>::from_inputs(&data, true).unwrap();
        data.reverse();
        let glmm_b = GlmmData::<f64>::from_inputs(&data, true).unwrap();
        let params = GlmmParams {
            beta0: 0.7,
            beta1: Some(0.1),
            sigma_s: 0.4,
            sigma_so: 0.2,
        };
        assert_eq!(
            glmm_a
                .neg_marginal_loglik(&params, &InnerSettings::default())
                .value,
            glmm_b
                .neg_marginal_loglik(&params, &InnerSettings::default())
                .value
        );
    }

    #[test]
    fn vanishing_variance_approaches_plain_likelihood() {
        let data = balanced_dataset();
        let glmm = GlmmData::<f64>::from_inputs(&data, true).unwrap();
        let at = |sigma: f64| {
            glmm.neg_marginal_loglik(
                &GlmmParams {
                    beta0: 0.4,
                    beta1: Some(0.2),
                    sigma_s: sigma,
                    sigma_so: sigma,
                },
                &InnerSettings::default(),
            )
            .value
        };
        let exact = at(0.0);
        assert_relative_eq!(at(1e-6), exact, max_relative = 1e-8);
        assert!((at(1e-3) - exact).abs() < 1e-3);
    }

    #[test]
    fn missing_position_indicator_is_an_error() {
        let data = vec![input(true, None, "s1", "ab")];
        let err = GlmmData::<f64>::from_inputs(&data, true).unwrap_err();
        assert!(matches!(err, FitError::MissingPositionIndicator { .. }));
    }

    #[test]
    fn position_only_data_groups_without_covariate() {
        let mut data = Vec::new();
        for s in 0..3 {
            for t in 0..6 {
                data.push(input(t % 3 != 0, None, &format!("s{s}"), "ab"));
            }
        }
        let glmm = GlmmData::<f64>::from_inputs(&data, false).unwrap();
        assert_eq!(glmm.n_scenarios, 3);
        assert!(!glmm.has_position_contrast());
        let result = glmm.neg_marginal_loglik(
            &GlmmParams {
                beta0: 0.5,
                beta1: None,
                sigma_s: 0.3,
                sigma_so: 0.2,
            },
            &InnerSettings::default(),
        );
        assert!(result.inner_converged);
        assert!(result.value.is_finite());
    }
}
