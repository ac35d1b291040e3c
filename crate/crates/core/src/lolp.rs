//! Loss-of-load probabilities for the complete-sharing multi-rate loss system.
//!
//! The occupancy distribution comes from the Kaufman-Roberts recursion
//!
//! ```text
//! g(0) = 1,  g(c) = 0 for c < 0
//! c · g(c) = Σ_j b_j q_j g(c − b_j)            c = 1..C
//! α(c) = g(c) / Σ_{c'≤C} g(c')
//! ```
//!
//! and class `j` is blocked when fewer than `b_j` units are free, so
//! `β_j = Σ_{i=C−b_j+1}^{C} α(i)`.
//!
//! `g(c)` equals `Σ_{b·Q=c} Π_j q_j^{Q_j}/Q_j!`, hence `∂g(c)/∂q_k = g(c − b_k)`.
//! Writing `T(c) = P{occupancy > c}` this gives closed forms for the first and
//! second derivatives of every `β_j` in terms of `T` alone:
//!
//! ```text
//! ∂β_j/∂q_k      = T(C−b_j−b_k) − β_j − β_k (1 − β_j)
//! ∂T(c)/∂q_l     = T(c−b_l) − T(c) − β_l (1 − T(c))
//! ∂²β_j/∂q_k∂q_l = ∂T(C−b_j−b_k)/∂q_l − (1−β_k) ∂β_j/∂q_l − (1−β_j) ∂β_k/∂q_l
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scenario;

/// Renormalization threshold for the unnormalized recursion.
const RESCALE_ABOVE: f64 = 1e250;

/// Largest state space [`lolp_exact`] will enumerate.
pub const ENUMERATION_BOUND: f64 = 1e7;

/// Unnormalized Kaufman-Roberts weights `g(0..=cmax)`, up to a common factor.
///
/// The weights do not depend on the capacity, so one pass serves every
/// `C ≤ cmax`. Whenever a value exceeds `1e250` the whole prefix is divided
/// by it; ratios are unaffected.
pub fn kaufman_roberts_weights(demands: &[u32], intensities: &[f64], cmax: usize) -> Vec<f64> {
    let terms: Vec<(usize, f64)> = demands
        .iter()
        .zip(intensities)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&b, &q)| (b as usize, f64::from(b) * q))
        .collect();
    let mut g = vec![0.0; cmax + 1];
    g[0] = 1.0;
    for c in 1..=cmax {
        let mut acc = 0.0;
        for &(b, bq) in &terms {
            if b <= c {
                acc += bq * g[c - b];
            }
        }
        let v = acc / c as f64;
        g[c] = v;
        if v > RESCALE_ABOVE {
            let inv = 1.0 / v;
            g[..=c].iter_mut().for_each(|x| *x *= inv);
        }
    }
    g
}

/// Stationary distribution of the number of busy power units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyDistribution {
    alpha: Vec<f64>,
    /// `tail[i] = Σ_{c ≥ i} α(c)`, length `C + 2`.
    #[serde(skip)]
    tail: Vec<f64>,
}

impl OccupancyDistribution {
    fn from_weights(g: &[f64]) -> Self {
        let total: f64 = g.iter().sum();
        let alpha: Vec<f64> = g.iter().map(|x| x / total).collect();
        let mut tail = vec![0.0; alpha.len() + 1];
        for i in (0..alpha.len()).rev() {
            tail[i] = tail[i + 1] + alpha[i];
        }
        Self { alpha, tail }
    }

    /// `α(c)` for `c = 0..=C`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn capacity(&self) -> usize {
        self.alpha.len() - 1
    }

    /// `P{occupancy > c}`; 1 for negative `c`, 0 for `c ≥ C`.
    pub fn tail_above(&self, c: i64) -> f64 {
        if c < 0 {
            1.0
        } else {
            let i = (c as usize + 1).min(self.tail.len() - 1);
            self.tail[i]
        }
    }

    /// Blocking seen by an arrival needing `b` units.
    pub fn blocking(&self, b: u32) -> f64 {
        self.tail_above(self.capacity() as i64 - i64::from(b))
    }

    pub fn mean(&self) -> f64 {
        self.alpha
            .iter()
            .enumerate()
            .map(|(c, a)| c as f64 * a)
            .sum()
    }
}

/// Occupancy distribution of `scenario` in `O(C·J)`.
pub fn occupancy(scenario: &Scenario) -> OccupancyDistribution {
    let g = kaufman_roberts_weights(
        &scenario.demands(),
        &scenario.intensities(),
        scenario.capacity as usize,
    );
    OccupancyDistribution::from_weights(&g)
}

/// Per-class loss-of-load probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LolpVector {
    pub beta: Vec<f64>,
}

impl LolpVector {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// True when every class meets its target.
    pub fn meets(&self, delta: &[f64]) -> bool {
        self.beta.iter().zip(delta).all(|(b, d)| b <= d)
    }
}

impl std::ops::Index<usize> for LolpVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.beta[j]
    }
}

pub fn lolp(scenario: &Scenario) -> LolpVector {
    lolp_from(&occupancy(scenario), scenario)
}

fn lolp_from(occ: &OccupancyDistribution, scenario: &Scenario) -> LolpVector {
    LolpVector {
        beta: scenario
            .classes()
            .iter()
            .map(|c| occ.blocking(c.b))
            .collect(),
    }
}

/// Number of states with `Σ b_j Q_j ≤ C` is at most `Π (⌊C/b_j⌋ + 1)`.
pub fn state_space_bound(scenario: &Scenario) -> f64 {
    scenario
        .classes()
        .iter()
        .map(|c| f64::from(scenario.capacity / c.b) + 1.0)
        .product()
}

/// LoLP by enumerating every admissible state of the product-form solution.
///
/// `β_j` is the probability mass of the blocking states
/// `{Q : C − b_j < b·Q ≤ C}`. Weights are accumulated in the log domain so
/// large loads cannot overflow. Refuses state spaces above
/// [`ENUMERATION_BOUND`].
pub fn lolp_exact(scenario: &Scenario) -> Result<LolpVector> {
    let bound = state_space_bound(scenario);
    if bound > ENUMERATION_BOUND {
        return Err(Error::StateSpaceTooLarge {
            states: bound,
            bound: ENUMERATION_BOUND,
        });
    }
    let cap = u64::from(scenario.capacity);
    let demands: Vec<u64> = scenario.classes().iter().map(|c| u64::from(c.b)).collect();
    let log_q: Vec<f64> = scenario.intensities().iter().map(|q| q.ln()).collect();
    let j = demands.len();

    let mut state = vec![0u64; j];
    let mut used = 0u64;
    // Streaming log-sum-exp: sums are stored relative to exp(shift).
    let mut shift = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut blocked = vec![0.0; j];
    let mut log_fact = vec![0.0f64];

    loop {
        let mut lw = 0.0;
        let mut possible = true;
        for (k, &n) in state.iter().enumerate() {
            if n > 0 {
                if log_q[k] == f64::NEG_INFINITY {
                    possible = false;
                    break;
                }
                while log_fact.len() <= n as usize {
                    let m = log_fact.len();
                    log_fact.push(log_fact[m - 1] + (m as f64).ln());
                }
                lw += n as f64 * log_q[k] - log_fact[n as usize];
            }
        }
        if possible {
            if lw > shift {
                let r = (shift - lw).exp();
                total *= r;
                blocked.iter_mut().for_each(|x| *x *= r);
                shift = lw;
            }
            let w = (lw - shift).exp();
            total += w;
            for k in 0..j {
                if used + demands[k] > cap {
                    blocked[k] += w;
                }
            }
        }

        // odometer over admissible states
        let mut k = 0;
        loop {
            if k == j {
                return Ok(LolpVector {
                    beta: blocked.iter().map(|x| x / total).collect(),
                });
            }
            if used + demands[k] <= cap {
                state[k] += 1;
                used += demands[k];
                break;
            }
            used -= demands[k] * state[k];
            state[k] = 0;
            k += 1;
        }
    }
}

/// `∂β_j/∂q_k` for every pair of classes, row `j`, column `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LolpJacobian {
    n: usize,
    d_beta_d_q: Vec<f64>,
}

impl LolpJacobian {
    pub fn num_classes(&self) -> usize {
        self.n
    }

    /// `∂β_j / ∂q_k`.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.d_beta_d_q[j * self.n + k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.d_beta_d_q
            .chunks(self.n)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Largest `|J − Jᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for k in 0..self.n {
                worst = worst.max((self.get(j, k) - self.get(k, j)).abs());
            }
        }
        worst
    }

    /// `∂β_j / ∂λ_k = (1/μ_k) ∂β_j / ∂q_k`.
    pub fn wrt_lambda(&self, scenario: &Scenario) -> Vec<Vec<f64>> {
        let mu: Vec<f64> = scenario.classes().iter().map(|c| c.mu).collect();
        (0..self.n)
            .map(|j| (0..self.n).map(|k| self.get(j, k) / mu[k]).collect())
            .collect()
    }
}

/// Tail-probability view used by the derivative formulas.
struct Tails<'a> {
    occ: &'a OccupancyDistribution,
    cap: i64,
    b: Vec<i64>,
    beta: Vec<f64>,
}

impl<'a> Tails<'a> {
    fn new(occ: &'a OccupancyDistribution, scenario: &Scenario) -> Self {
        let b: Vec<i64> = scenario.classes().iter().map(|c| i64::from(c.b)).collect();
        let beta = lolp_from(occ, scenario).beta;
        Self {
            occ,
            cap: scenario.capacity as i64,
            b,
            beta,
        }
    }

    fn t(&self, c: i64) -> f64 {
        self.occ.tail_above(c)
    }

    fn first(&self, j: usize, k: usize) -> f64 {
        let (bj, bk) = (self.beta[j], self.beta[k]);
        self.t(self.cap - self.b[j] - self.b[k]) - bj - bk * (1.0 - bj)
    }

    /// `∂T(c)/∂q_l` for `c ≤ C`.
    fn tail_slope(&self, c: i64, l: usize) -> f64 {
        let tc = self.t(c);
        self.t(c - self.b[l]) - tc - self.beta[l] * (1.0 - tc)
    }
}

pub fn lolp_derivatives(scenario: &Scenario) -> LolpJacobian {
    let occ = occupancy(scenario);
    jacobian_from(&Tails::new(&occ, scenario))
}

fn jacobian_from(t: &Tails<'_>) -> LolpJacobian {
    let n = t.b.len();
    let mut d = vec![0.0; n * n];
    for j in 0..n {
        for k in j..n {
            let v = t.first(j, k);
            d[j * n + k] = v;
            d[k * n + j] = v;
        }
    }
    LolpJacobian { n, d_beta_d_q: d }
}

/// Second derivatives `∂²β_j/∂q_k∂q_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LolpHessian {
    n: usize,
    values: Vec<f64>,
}

impl LolpHessian {
    pub fn get(&self, j: usize, k: usize, l: usize) -> f64 {
        self.values[(j * self.n + k) * self.n + l]
    }
}

/// LoLP, its Jacobian and its Hessian from one Kaufman-Roberts pass.
#[derive(Debug, Clone)]
pub struct LolpSensitivity {
    pub beta: LolpVector,
    pub jacobian: LolpJacobian,
    pub hessian: LolpHessian,
}

pub fn lolp_sensitivity(scenario: &Scenario) -> LolpSensitivity {
    let occ = occupancy(scenario);
    let t = Tails::new(&occ, scenario);
    let jacobian = jacobian_from(&t);
    let n = t.b.len();
    let mut values = vec![0.0; n * n * n];
    for j in 0..n {
        for k in 0..n {
            let c = t.cap - t.b[j] - t.b[k];
            for l in 0..n {
                values[(j * n + k) * n + l] = t.tail_slope(c, l)
                    - (1.0 - t.beta[k]) * jacobian.get(j, l)
                    - (1.0 - t.beta[j]) * jacobian.get(k, l);
            }
        }
    }
    LolpSensitivity {
        beta: LolpVector {
            beta: t.beta.clone(),
        },
        jacobian,
        hessian: LolpHessian { n, values },
    }
}
