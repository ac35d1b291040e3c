//! Minimum capacity meeting per-class LoLP targets.
//!
//! The square-root rule `C ≈ E[S] + x·sqrt(var[S])` with
//! `x = ψ(min_j (δ_j/b_j)·sqrt(var[S]))` gives a closed-form estimate;
//! [`capacity_exact`] then finds the smallest integer capacity that
//! actually meets every target.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lolp::{kaufman_roberts_weights, lolp, LolpVector};
use crate::model::{check_len, offered_load_stats, CustomerClass, QosTargets, Scenario};

/// Hard ceiling for the exact capacity search.
pub const CAPACITY_CEILING: u64 = 100_000_000;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the hazard switches to the continued fraction.
const TAIL_SWITCH: f64 = -5.0;

/// `ln(φ(y)/Φ(y))` for any finite `y`.
pub fn log_hazard(y: f64) -> f64 {
    if y < TAIL_SWITCH {
        // φ(y)/Φ(y) = 1/R(−y) with the Mills ratio
        // R(t) = 1/(t + 1/(t + 2/(t + 3/(t + …))))
        let t = -y;
        let mut d = t;
        for k in (1..=200).rev() {
            d = t + f64::from(k) / d;
        }
        d.ln()
    } else {
        let log_pdf = -0.5 * y * y - LN_SQRT_2PI;
        let cdf = 0.5 * erfc(-y / std::f64::consts::SQRT_2);
        log_pdf - cdf.ln()
    }
}

/// Standard normal hazard ratio `φ(y)/Φ(y)` (inverse Mills ratio of `−y`).
pub fn hazard(y: f64) -> f64 {
    log_hazard(y).exp()
}

/// Inverse of [`hazard`]: the `y` with `φ(y)/Φ(y) = x`.
///
/// Bisection in the log domain on a bracket that starts at `[-40, 40]` and
/// widens until it contains the root, run to machine precision.
pub fn psi(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "psi is defined for positive finite x, got {x}"
        )));
    }
    let target = x.ln();
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    while log_hazard(lo) < target {
        lo *= 2.0;
        if lo < -1e300 {
            return Err(Error::InvalidArgument(format!("psi({x}) out of range")));
        }
    }
    while log_hazard(hi) > target {
        hi *= 2.0;
        if hi > 1e150 {
            return Err(Error::InvalidArgument(format!("psi({x}) out of range")));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // hazard is strictly decreasing
        if log_hazard(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rl, rh) = ((hazard(lo) - x).abs(), (hazard(hi) - x).abs());
    Ok(if rl <= rh { lo } else { hi })
}

/// Closed-form square-root provisioning estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCapacity {
    pub capacity: f64,
    /// Safety coefficient `x = ψ(min_j (δ_j/b_j)·sqrt(var[S]))`.
    pub x_star: f64,
    /// Zero-based index of the class minimizing `δ_j/b_j`.
    pub dominant: usize,
}

/// Index of the class with the smallest `δ_j / b_j`; first one on ties.
pub fn dominant_class(classes: &[CustomerClass], targets: &QosTargets) -> usize {
    let mut best = 0;
    let mut best_ratio = f64::INFINITY;
    for (j, (c, d)) in classes.iter().zip(targets.delta()).enumerate() {
        let r = d / f64::from(c.b);
        if r < best_ratio {
            best_ratio = r;
            best = j;
        }
    }
    best
}

pub fn capacity_asymptotic(
    classes: &[CustomerClass],
    targets: &QosTargets,
) -> Result<AsymptoticCapacity> {
    check_len("targets", classes.len(), targets.len())?;
    let (mean, var) = offered_load_stats(classes);
    if !(var > 0.0) {
        return Err(Error::InvalidArgument(
            "square-root provisioning needs at least one class with positive load".into(),
        ));
    }
    let dominant = dominant_class(classes, targets);
    let sd = var.sqrt();
    let ratio = targets.delta()[dominant] / f64::from(classes[dominant].b);
    let x_star = psi(ratio * sd)?;
    Ok(AsymptoticCapacity {
        capacity: mean + x_star * sd,
        x_star,
        dominant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisioningResult {
    pub capacity_asymptotic: f64,
    pub capacity_exact: u32,
    pub dominant_class: usize,
    pub x_star: f64,
    /// LoLP at `capacity_exact`.
    pub beta: LolpVector,
}

/// Smallest integer capacity at which every class meets its target.
///
/// LoLP is not monotone in capacity for multi-rate systems, so a bisection on
/// `C` may stop at a non-minimal feasible point. Instead the search doubles an
/// upper bound (seeded by the square-root rule) until it is feasible, runs
/// one Kaufman-Roberts pass up to it, and scans every smaller capacity.
pub fn capacity_exact(
    classes: &[CustomerClass],
    targets: &QosTargets,
) -> Result<ProvisioningResult> {
    let asym = capacity_asymptotic(classes, targets)?;
    let delta = targets.delta();
    let max_b = classes.iter().map(|c| c.b).max().unwrap_or(1);
    let base = Scenario::new(0, classes.to_vec())?;
    let feasible = |c: u64| lolp(&base.with_capacity(c as u32)).meets(delta);

    let mut upper = (asym.capacity.ceil().max(0.0) as u64).max(u64::from(max_b));
    while !feasible(upper) {
        upper = upper * 2 + 1;
        if upper > CAPACITY_CEILING {
            return Err(Error::TargetsUnreachable {
                ceiling: CAPACITY_CEILING,
            });
        }
    }

    let demands = base.demands();
    let g = kaufman_roberts_weights(&demands, &base.intensities(), upper as usize);
    let mut prefix = 0.0;
    let mut candidate = upper;
    for c in 0..=upper as usize {
        prefix += g[c];
        let ok = demands.iter().zip(delta).all(|(&b, &d)| {
            let lo = (c + 1).saturating_sub(b as usize);
            let blocked: f64 = g[lo..=c].iter().sum();
            blocked / prefix <= d
        });
        if ok {
            candidate = c as u64;
            break;
        }
    }
    // Confirm against an independent full pass at each probe.
    while !feasible(candidate) {
        candidate += 1;
    }
    while candidate > 0 && feasible(candidate - 1) {
        candidate -= 1;
    }

    let capacity_exact = candidate as u32;
    Ok(ProvisioningResult {
        capacity_asymptotic: asym.capacity,
        capacity_exact,
        dominant_class: asym.dominant,
        x_star: asym.x_star,
        beta: lolp(&base.with_capacity(capacity_exact)),
    })
}

/// Capacity saved, in percent, by provisioning for `targets` instead of
/// near-zero LoLP (`strict_delta` for every class).
pub fn savings_vs_strict(
    classes: &[CustomerClass],
    targets: &QosTargets,
    strict_delta: f64,
) -> Result<f64> {
    if !(strict_delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "strict target must be positive, got {strict_delta}"
        )));
    }
    let strict = QosTargets::uniform(strict_delta, classes.len())?;
    let loose = capacity_exact(classes, targets)?.capacity_exact;
    let tight = capacity_exact(classes, &strict)?.capacity_exact;
    Ok(100.0 * (1.0 - f64::from(loose) / f64::from(tight)))
}
