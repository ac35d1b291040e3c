//! Congestion pricing for the large-network control problem with the
//! logarithmic utility
//!
//! ```text
//! U(λ) = Σ_j [λ_j > 0] (ω_j ln(1 + λ_j) − θ_j ln(1 + β_j(λ)))
//! ```
//!
//! Each class's congestion price is the marginal blocking disutility its
//! admitted traffic imposes on everyone,
//!
//! ```text
//! m_j(λ) = Σ_s θ_s/(1 + β_s) · ∂β_s/∂λ_j,     p_j = m_j / (1 − β_j)
//! ```
//!
//! and the reported welfare is utility net of what customers pay at those
//! prices, `W(λ) = U(λ) − Σ_j p_j λ_j (1 − β_j) = U(λ) − Σ_j λ_j m_j(λ)`.
//! [`Objective::Gross`] maximizes `U` alone instead.
//!
//! Everything is expressed in aggregate per-class rates; with `N` identical
//! customers each one's rate is `λ_j / N`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lolp::{lolp_sensitivity, LolpVector};
use crate::model::{check_len, CustomerClass, Scenario, TimeProfile};

/// Arrival-rate weights `ω` and blocking-disutility weights `θ`.
///
/// Zero weights are accepted; they switch the corresponding term off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    omega: Vec<f64>,
    theta: Vec<f64>,
}

impl UtilityWeights {
    pub fn new(omega: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        check_len("theta", omega.len(), theta.len())?;
        for (name, w) in [("omega", &omega), ("theta", &theta)] {
            if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "{name} weights must be nonnegative and finite, got {bad}"
                )));
            }
        }
        Ok(Self { omega, theta })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Utility minus congestion charges; the default.
    #[default]
    NetOfCharges,
    /// Utility alone.
    Gross,
}

/// Everything the solver needs at one rate vector.
#[derive(Debug, Clone)]
struct Evaluation {
    beta: LolpVector,
    /// `m_j`, the marginal congestion cost of class `j` traffic.
    marginal: Vec<f64>,
    gross: f64,
    net: f64,
    grad_gross: Vec<f64>,
    grad_net: Vec<f64>,
}

impl Evaluation {
    fn value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::NetOfCharges => self.net,
            Objective::Gross => self.gross,
        }
    }

    fn gradient(&self, objective: Objective) -> &[f64] {
        match objective {
            Objective::NetOfCharges => &self.grad_net,
            Objective::Gross => &self.grad_gross,
        }
    }
}

fn evaluate(scenario: &Scenario, weights: &UtilityWeights, lambdas: &[f64]) -> Result<Evaluation> {
    let n = scenario.num_classes();
    check_len("weights", n, weights.len())?;
    check_len("lambdas", n, lambdas.len())?;
    let at = scenario.with_lambdas(lambdas)?;
    let mu: Vec<f64> = at.classes().iter().map(|c| c.mu).collect();
    let sens = lolp_sensitivity(&at);
    let beta = &sens.beta.beta;
    let (omega, theta) = (weights.omega(), weights.theta());

    // A class with no traffic carries no utility and bears no blocking.
    let active: Vec<bool> = lambdas.iter().map(|&l| l > 0.0).collect();
    // ∂U/∂β_s for active s, as a positive weight
    let disutility: Vec<f64> = (0..n)
        .map(|s| {
            if active[s] {
                theta[s] / (1.0 + beta[s])
            } else {
                0.0
            }
        })
        .collect();
    let d1 = |s: usize, k: usize| sens.jacobian.get(s, k) / mu[k];
    let d2 = |s: usize, k: usize, j: usize| sens.hessian.get(s, k, j) / (mu[k] * mu[j]);

    let marginal: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|s| disutility[s] * d1(s, j)).sum())
        .collect();

    let gross: f64 = (0..n)
        .filter(|&j| active[j])
        .map(|j| omega[j] * lambdas[j].ln_1p() - theta[j] * beta[j].ln_1p())
        .sum();
    let charges: f64 = lambdas.iter().zip(&marginal).map(|(l, m)| l * m).sum();

    // Gradients use the right-hand limit at λ_j = 0, i.e. class j treated as
    // active, which is what the projected ascent needs at the boundary.
    let disutility_rhs: Vec<f64> = (0..n).map(|s| theta[s] / (1.0 + beta[s])).collect();
    let marginal_rhs: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|s| disutility_rhs[s] * d1(s, j)).sum())
        .collect();
    let grad_gross: Vec<f64> = (0..n)
        .map(|j| omega[j] / (1.0 + lambdas[j]) - marginal_rhs[j])
        .collect();
    let grad_net: Vec<f64> = (0..n)
        .map(|j| {
            // Σ_k λ_k ∂m_k/∂λ_j
            let curvature: f64 = (0..n)
                .filter(|&k| lambdas[k] > 0.0)
                .map(|k| {
                    let dm: f64 = (0..n)
                        .map(|s| {
                            disutility_rhs[s] * d2(s, k, j)
                                - theta[s] / (1.0 + beta[s]).powi(2) * d1(s, j) * d1(s, k)
                        })
                        .sum();
                    lambdas[k] * dm
                })
                .sum();
            grad_gross[j] - marginal_rhs[j] - curvature
        })
        .collect();

    Ok(Evaluation {
        beta: sens.beta,
        marginal,
        gross,
        net: gross - charges,
        grad_gross,
        grad_net,
    })
}

/// Utility `U(λ)` before congestion charges.
pub fn gross_utility(
    scenario: &Scenario,
    weights: &UtilityWeights,
    lambdas: &[f64],
) -> Result<f64> {
    Ok(evaluate(scenario, weights, lambdas)?.gross)
}

/// Welfare net of congestion charges, `U(λ) − Σ_j p_j(λ) λ_j (1 − β_j(λ))`.
///
/// LoLPs are recomputed at `lambdas`; the rates stored in `scenario` are ignored.
pub fn welfare(scenario: &Scenario, weights: &UtilityWeights, lambdas: &[f64]) -> Result<f64> {
    Ok(evaluate(scenario, weights, lambdas)?.net)
}

/// Gradient of [`welfare`] with respect to the arrival rates.
pub fn welfare_gradient(
    scenario: &Scenario,
    weights: &UtilityWeights,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    Ok(evaluate(scenario, weights, lambdas)?.grad_net)
}

/// Gradient of [`gross_utility`]: `ω_j/(1+λ_j) − Σ_s θ_s/(1+β_s) ∂β_s/∂λ_j`.
pub fn gross_gradient(
    scenario: &Scenario,
    weights: &UtilityWeights,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    Ok(evaluate(scenario, weights, lambdas)?.grad_gross)
}

/// Congestion prices `p_j = (1 − β_j)⁻¹ Σ_s θ_s/(1+β_s) · ∂β_s/∂λ_j`.
pub fn optimal_prices(
    scenario: &Scenario,
    weights: &UtilityWeights,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    let eval = evaluate(scenario, weights, lambdas)?;
    prices_from(&eval)
}

fn prices_from(eval: &Evaluation) -> Result<Vec<f64>> {
    eval.marginal
        .iter()
        .zip(&eval.beta.beta)
        .enumerate()
        .map(|(j, (m, b))| {
            if *b >= 1.0 {
                Err(Error::SaturatedClass { class: j + 1 })
            } else {
                Ok(m / (1.0 - b))
            }
        })
        .collect()
}

/// Rates a price-taking customer picks when it treats `beta` as fixed:
/// `ω_j/(1+λ_j) = p_j(1−β_j)`, i.e. `λ_j = ω_j / (p_j(1−β_j)) − 1`, floored at 0.
pub fn local_best_response(
    prices: &[f64],
    weights: &UtilityWeights,
    beta: &[f64],
) -> Result<Vec<f64>> {
    check_len("prices", weights.len(), prices.len())?;
    check_len("beta", weights.len(), beta.len())?;
    (0..prices.len())
        .map(|j| {
            let (p, b, w) = (prices[j], beta[j], weights.omega()[j]);
            if !(p >= 0.0) || !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!(
                    "class {}: need price ≥ 0 and LoLP in [0, 1), got p = {p}, β = {b}",
                    j + 1
                )));
            }
            if w == 0.0 {
                return Ok(0.0);
            }
            let effective = p * (1.0 - b);
            if effective == 0.0 {
                return Err(Error::UnboundedDemand { class: j + 1 });
            }
            Ok((w / effective - 1.0).max(0.0))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub objective: Objective,
    /// Stop when the projected-gradient step norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            objective: Objective::NetOfCharges,
            tolerance: 1e-6,
            max_iterations: 10_000,
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub capacity: u32,
    pub lambda_star: Vec<f64>,
    /// `+∞` for a class whose LoLP is 1 at `lambda_star`.
    pub prices: Vec<f64>,
    pub beta_star: LolpVector,
    /// Welfare net of congestion charges at `lambda_star`.
    pub welfare: f64,
    pub gross_utility: f64,
    pub objective: Objective,
    pub convergence: Convergence,
}

impl EquilibriumResult {
    pub fn converged(&self) -> bool {
        self.convergence.converged
    }

    /// Per-customer rates when `customers` identical customers share the load.
    pub fn per_customer(&self, customers: usize) -> Vec<f64> {
        self.lambda_star
            .iter()
            .map(|l| l / customers as f64)
            .collect()
    }
}

/// Deterministic starting points: near zero, the rates that make the mean
/// offered load equal the capacity (split evenly across classes), and that
/// point scaled by 10^-2, 10^-1 and 10^0.5.
pub fn default_starts(scenario: &Scenario) -> Vec<Vec<f64>> {
    let n = scenario.num_classes() as f64;
    let cap = f64::from(scenario.capacity.max(1));
    let matched: Vec<f64> = scenario
        .classes()
        .iter()
        .map(|c| cap / (n * f64::from(c.b)) * c.mu)
        .collect();
    let scaled = |f: f64| matched.iter().map(|x| x * f).collect::<Vec<_>>();
    vec![
        vec![1e-3; scenario.num_classes()],
        matched.clone(),
        scaled(1e-2),
        scaled(1e-1),
        scaled(10f64.sqrt()),
    ]
}

struct Ascent {
    lambdas: Vec<f64>,
    eval: Evaluation,
    convergence: Convergence,
}

fn project(x: &[f64], g: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(x, g)| (x + t * g).max(0.0)).collect()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn ascend(
    scenario: &Scenario,
    weights: &UtilityWeights,
    start: &[f64],
    opts: &SolverOptions,
) -> Result<Ascent> {
    let obj = opts.objective;
    let mut x: Vec<f64> = start.iter().map(|v| v.max(0.0)).collect();
    let mut eval = evaluate(scenario, weights, &x)?;
    let mut iterations = 0;
    loop {
        let g = eval.gradient(obj).to_vec();
        let step_norm = norm(project(&x, &g, 1.0).iter().zip(&x).map(|(a, b)| a - b));
        if step_norm < opts.tolerance || iterations >= opts.max_iterations {
            return Ok(Ascent {
                lambdas: x,
                convergence: Convergence {
                    converged: step_norm < opts.tolerance,
                    iterations,
                    gradient_norm: step_norm,
                },
                eval,
            });
        }
        iterations += 1;

        let f0 = eval.value(obj);
        let mut t = opts.initial_step;
        let mut accepted = None;
        while t > 1e-16 {
            let cand = project(&x, &g, t);
            let gain: f64 = g
                .iter()
                .zip(cand.iter().zip(&x))
                .map(|(g, (c, x))| g * (c - x))
                .sum();
            let ce = evaluate(scenario, weights, &cand)?;
            if ce.value(obj) >= f0 + opts.armijo * gain {
                accepted = Some((cand, ce));
                break;
            }
            t *= opts.backtrack;
        }
        match accepted {
            Some((cand, ce)) => {
                x = cand;
                eval = ce;
            }
            None => {
                // No ascent direction survives rounding; report where we are.
                return Ok(Ascent {
                    lambdas: x,
                    convergence: Convergence {
                        converged: false,
                        iterations,
                        gradient_norm: step_norm,
                    },
                    eval,
                });
            }
        }
    }
}

/// Maximizes welfare over the arrival rates by projected gradient ascent
/// from several starting points, keeping the best converged run.
pub fn solve_equilibrium(
    scenario: &Scenario,
    weights: &UtilityWeights,
    init: Option<&[f64]>,
) -> Result<EquilibriumResult> {
    solve_equilibrium_with(scenario, weights, init, &SolverOptions::default())
}

pub fn solve_equilibrium_with(
    scenario: &Scenario,
    weights: &UtilityWeights,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<EquilibriumResult> {
    check_len("weights", scenario.num_classes(), weights.len())?;
    let mut starts = Vec::new();
    if let Some(init) = init {
        check_len("initial lambdas", scenario.num_classes(), init.len())?;
        starts.push(init.to_vec());
    }
    starts.extend(default_starts(scenario));

    let runs = starts
        .iter()
        .map(|s| ascend(scenario, weights, s, opts))
        .collect::<Result<Vec<_>>>()?;
    let obj = opts.objective;
    let best = runs
        .into_iter()
        .max_by(|a, b| {
            (a.convergence.converged, a.eval.value(obj))
                .partial_cmp(&(b.convergence.converged, b.eval.value(obj)))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one start");

    // A class whose LoLP rounds to 1 is priced out entirely.
    let prices = best
        .eval
        .marginal
        .iter()
        .zip(&best.eval.beta.beta)
        .map(|(m, b)| {
            if *b >= 1.0 {
                f64::INFINITY
            } else {
                m / (1.0 - b)
            }
        })
        .collect();
    Ok(EquilibriumResult {
        capacity: scenario.capacity,
        prices,
        beta_star: best.eval.beta.clone(),
        welfare: best.eval.net,
        gross_utility: best.eval.gross,
        objective: obj,
        convergence: best.convergence,
        lambda_star: best.lambdas,
    })
}

/// One equilibrium per period of `profile`, solved in parallel.
pub fn solve_profile(
    classes: &[CustomerClass],
    weights: &UtilityWeights,
    profile: &TimeProfile,
    opts: &SolverOptions,
) -> Result<Vec<EquilibriumResult>> {
    profile
        .scenarios(classes)?
        .par_iter()
        .map(|s| solve_equilibrium_with(s, weights, None, opts))
        .collect()
}
