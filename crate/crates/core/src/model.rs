//! Domain types shared by every analysis: customer classes, scenarios,
//! QoS targets and time profiles.
//!
//! Power is discretized: demands `b` and capacity `C` are integer power units.
//! All types are plain values; once built they are never mutated in place.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One customer class: `b` units held for an exponential(`mu`) duration,
/// arriving as a Poisson stream of rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomerClass {
    pub b: u32,
    pub mu: f64,
    pub lambda: f64,
}

impl CustomerClass {
    pub fn new(b: u32, mu: f64, lambda: f64) -> Result<Self> {
        let class = Self { b, mu, lambda };
        class.check(0)?;
        Ok(class)
    }

    fn check(&self, index: usize) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidClass {
                class: index + 1,
                reason: reason.to_string(),
            })
        };
        if self.b == 0 {
            return fail("demand b must be at least 1 unit");
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return fail("service rate mu must be positive and finite");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail("arrival rate lambda must be nonnegative and finite");
        }
        Ok(())
    }

    /// Offered load in Erlangs, `lambda / mu`.
    pub fn traffic_intensity(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }
}

/// Free-function form of [`CustomerClass::traffic_intensity`].
pub fn traffic_intensity(class: &CustomerClass) -> f64 {
    class.traffic_intensity()
}

/// A capacity plus the classes sharing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub capacity: u32,
    classes: Vec<CustomerClass>,
}

impl Scenario {
    /// Builds a scenario, rejecting empty class lists and invalid classes.
    ///
    /// A capacity below some class's demand is allowed (that class simply
    /// always sees LoLP 1); [`validate_scenario`] reports it as a warning.
    pub fn new(capacity: u32, classes: Vec<CustomerClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::NoClasses);
        }
        for (i, class) in classes.iter().enumerate() {
            class.check(i)?;
        }
        Ok(Self { capacity, classes })
    }

    pub fn classes(&self) -> &[CustomerClass] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn demands(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.b).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.classes
            .iter()
            .map(CustomerClass::traffic_intensity)
            .collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.lambda).collect()
    }

    pub fn max_demand(&self) -> u32 {
        self.classes.iter().map(|c| c.b).max().unwrap_or(0)
    }

    pub fn with_capacity(&self, capacity: u32) -> Self {
        Self {
            capacity,
            classes: self.classes.clone(),
        }
    }

    /// Replaces every arrival rate. Rates must be nonnegative and finite.
    pub fn with_lambdas(&self, lambdas: &[f64]) -> Result<Self> {
        check_len("lambdas", self.classes.len(), lambdas.len())?;
        let classes = self
            .classes
            .iter()
            .zip(lambdas)
            .map(|(c, &l)| c.with_lambda(l))
            .collect();
        Self::new(self.capacity, classes)
    }

    /// Multiplies every arrival rate by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let lambdas: Vec<f64> = self.classes.iter().map(|c| c.lambda * factor).collect();
        self.with_lambdas(&lambdas)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Mean and variance of the offered load `S = Σ b_j Q_j` with independent
/// Poisson(`q_j`) occupancies, i.e. `(Σ b_j q_j, Σ b_j² q_j)`.
pub fn offered_load_stats(classes: &[CustomerClass]) -> (f64, f64) {
    classes.iter().fold((0.0, 0.0), |(mean, var), c| {
        let b = f64::from(c.b);
        let q = c.traffic_intensity();
        (mean + b * q, var + b * b * q)
    })
}

/// Per-class LoLP upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosTargets {
    delta: Vec<f64>,
}

impl QosTargets {
    pub fn new(delta: Vec<f64>) -> Result<Self> {
        if let Some((i, d)) = delta
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0 && **d < 1.0))
        {
            return Err(Error::InvalidArgument(format!(
                "target for class {} must lie in (0, 1), got {d}",
                i + 1
            )));
        }
        if delta.is_empty() {
            return Err(Error::NoClasses);
        }
        Ok(Self { delta })
    }

    pub fn uniform(delta: f64, classes: usize) -> Result<Self> {
        Self::new(vec![delta; classes])
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

/// One slot of a piecewise-stationary profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub capacity: u32,
    /// Per-class arrival rates for this slot; `None` keeps the base rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
}

/// Equal-length slots with their own capacity and, optionally, arrival rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    pub periods: Vec<Period>,
}

impl TimeProfile {
    pub fn new(periods: Vec<Period>) -> Self {
        Self { periods }
    }

    /// `C(k) = base + amplitude * sin(2πk / cycle)` for each `k` in `slots`,
    /// rounded to the nearest unit.
    pub fn sinusoidal_capacity(
        base: f64,
        amplitude: f64,
        cycle: f64,
        slots: impl IntoIterator<Item = u32>,
    ) -> Self {
        let periods = slots
            .into_iter()
            .map(|k| {
                let c = base + amplitude * (std::f64::consts::TAU * f64::from(k) / cycle).sin();
                Period {
                    capacity: c.round().max(0.0) as u32,
                    lambdas: None,
                }
            })
            .collect();
        Self { periods }
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Merges every period with `base`, yielding one scenario per slot.
    pub fn scenarios(&self, base: &[CustomerClass]) -> Result<Vec<Scenario>> {
        self.periods
            .iter()
            .map(|p| {
                let s = Scenario::new(p.capacity, base.to_vec())?;
                match &p.lambdas {
                    Some(l) => s.with_lambdas(l),
                    None => Ok(s),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Unvalidated class parameters as they arrive from a file or user input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawClass {
    pub b: f64,
    pub mu: f64,
    pub lambda: f64,
}

/// Reports every problem with raw scenario input. An empty list means
/// [`into_scenario`] will succeed and every class can be admitted.
pub fn validate_scenario(capacity: f64, classes: &[RawClass]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut error = |message: String| {
        out.push(Diagnostic {
            severity: Severity::Error,
            message,
        })
    };
    if !(capacity.is_finite() && capacity >= 0.0 && capacity.fract() == 0.0) {
        error(format!(
            "capacity must be a nonnegative integer, got {capacity}"
        ));
    } else if capacity > f64::from(u32::MAX) {
        error(format!("capacity {capacity} exceeds {}", u32::MAX));
    }
    if classes.is_empty() {
        error("no customer classes given".to_string());
    }
    for (i, c) in classes.iter().enumerate() {
        let n = i + 1;
        if !(c.b.is_finite() && c.b.fract() == 0.0) {
            error(format!(
                "class {n}: demand b must be an integer, got {}",
                c.b
            ));
        } else if c.b < 1.0 || c.b > f64::from(u32::MAX) {
            error(format!(
                "class {n}: demand b must be a positive integer, got {}",
                c.b
            ));
        }
        if !(c.mu.is_finite() && c.mu > 0.0) {
            error(format!(
                "class {n}: service rate mu must be positive, got {}",
                c.mu
            ));
        }
        if !(c.lambda.is_finite() && c.lambda >= 0.0) {
            error(format!(
                "class {n}: arrival rate lambda must be nonnegative, got {}",
                c.lambda
            ));
        }
    }
    for (i, c) in classes.iter().enumerate() {
        if c.b.is_finite() && capacity.is_finite() && c.b > capacity && c.b >= 1.0 {
            out.push(Diagnostic {
                severity: Severity::Warning,
                message: format!(
                    "class {} can never be served (b = {} exceeds capacity {capacity})",
                    i + 1,
                    c.b
                ),
            });
        }
    }
    out
}

/// Converts raw input into a [`Scenario`], failing on the first error-level
/// diagnostic. Warnings are not fatal.
pub fn into_scenario(capacity: f64, classes: &[RawClass]) -> Result<Scenario> {
    if let Some(d) = validate_scenario(capacity, classes)
        .into_iter()
        .find(|d| d.severity == Severity::Error)
    {
        return Err(Error::InvalidArgument(d.message));
    }
    let classes = classes
        .iter()
        .map(|c| CustomerClass::new(c.b as u32, c.mu, c.lambda))
        .collect::<Result<Vec<_>>>()?;
    Scenario::new(capacity as u32, classes)
}

impl From<CustomerClass> for RawClass {
    fn from(c: CustomerClass) -> Self {
        Self {
            b: f64::from(c.b),
            mu: c.mu,
            lambda: c.lambda,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_raw() -> Vec<RawClass> {
        vec![
            RawClass {
                b: 50.0,
                mu: 3.0,
                lambda: 14.0,
            },
            RawClass {
                b: 7.0,
                mu: 0.42,
                lambda: 14.0,
            },
            RawClass {
                b: 5.0,
                mu: 0.2,
                lambda: 14.0,
            },
        ]
    }

    #[test]
    fn intensity_examples() {
        let fast = CustomerClass::new(50, 3.0, 14.0).unwrap();
        assert!((fast.traffic_intensity() - 4.666_666_666_7).abs() < 1e-9);
        assert_eq!(
            CustomerClass::new(7, 0.42, 0.0)
                .unwrap()
                .traffic_intensity(),
            0.0
        );
        let slow = CustomerClass::new(5, 0.2, 14.0).unwrap();
        assert!((traffic_intensity(&slow) - 70.0).abs() < 1e-12);
    }

    #[test]
    fn offered_load_examples() {
        let s = into_scenario(1000.0, &toy_raw()).unwrap();
        let (mean, _) = offered_load_stats(s.classes());
        assert!((mean - 816.67).abs() < 0.01, "{mean}");

        let unit = [CustomerClass::new(1, 1.0, 10.0).unwrap()];
        assert_eq!(offered_load_stats(&unit), (10.0, 10.0));

        let two = [
            CustomerClass::new(2, 1.0, 1.0).unwrap(),
            CustomerClass::new(3, 2.0, 2.0).unwrap(),
        ];
        assert_eq!(offered_load_stats(&two), (5.0, 13.0));
    }

    #[test]
    fn validation_examples() {
        assert!(validate_scenario(1000.0, &toy_raw()).is_empty());

        let d = validate_scenario(
            10.0,
            &[RawClass {
                b: 50.0,
                mu: 1.0,
                lambda: 1.0,
            }],
        );
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("class 1 can never be served"));

        assert_eq!(validate_scenario(10.0, &[]).len(), 1);

        let d = validate_scenario(
            10.0,
            &[RawClass {
                b: 2.5,
                mu: 1.0,
                lambda: 1.0,
            }],
        );
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Error);
        assert!(d[0].message.contains("integer"));
    }

    #[test]
    fn construction_rejects_bad_classes() {
        assert!(CustomerClass::new(0, 1.0, 1.0).is_err());
        assert!(CustomerClass::new(1, 0.0, 1.0).is_err());
        assert!(CustomerClass::new(1, 1.0, -1.0).is_err());
        assert!(CustomerClass::new(1, 1.0, f64::NAN).is_err());
        assert_eq!(Scenario::new(5, vec![]), Err(Error::NoClasses));
        // capacity below demand is a warning, not an error
        assert!(Scenario::new(0, vec![CustomerClass::new(3, 1.0, 1.0).unwrap()]).is_ok());
        assert!(into_scenario(-1.0, &toy_raw()).is_err());
    }

    #[test]
    fn targets_must_be_open_unit_interval() {
        assert!(QosTargets::new(vec![0.04, 0.01]).is_ok());
        assert!(QosTargets::new(vec![0.0]).is_err());
        assert!(QosTargets::new(vec![1.0]).is_err());
        assert!(QosTargets::new(vec![]).is_err());
    }

    #[test]
    fn sinusoidal_profile() {
        let p = TimeProfile::sinusoidal_capacity(450.0, 50.0, 80.0, (0..=80).step_by(10));
        let caps: Vec<u32> = p.periods.iter().map(|p| p.capacity).collect();
        assert_eq!(caps, vec![450, 485, 500, 485, 450, 415, 400, 415, 450]);
    }

    #[test]
    fn profile_overrides_lambdas() {
        let base = vec![CustomerClass::new(1, 1.0, 3.0).unwrap()];
        let profile = TimeProfile::new(vec![
            Period {
                capacity: 4,
                lambdas: None,
            },
            Period {
                capacity: 6,
                lambdas: Some(vec![0.5]),
            },
        ]);
        let s = profile.scenarios(&base).unwrap();
        assert_eq!(s[0].lambdas(), vec![3.0]);
        assert_eq!(s[1].capacity, 6);
        assert_eq!(s[1].lambdas(), vec![0.5]);
        let bad = TimeProfile::new(vec![Period {
            capacity: 4,
            lambdas: Some(vec![1.0, 2.0]),
        }]);
        assert!(bad.scenarios(&base).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn intensity_is_homogeneous(mu in 0.01f64..100.0, lambda in 0.0f64..100.0, k in 0.01f64..100.0) {
                let a = CustomerClass::new(3, mu, lambda).unwrap().traffic_intensity();
                let b = CustomerClass::new(3, mu * k, lambda * k).unwrap().traffic_intensity();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }

            #[test]
            fn variance_dominates_mean(spec in prop::collection::vec((1u32..20, 0.1f64..5.0, 0.0f64..10.0), 1..5)) {
                let classes: Vec<_> = spec.iter().map(|&(b, mu, l)| CustomerClass::new(b, mu, l).unwrap()).collect();
                let (mean, var) = offered_load_stats(&classes);
                prop_assert!(var >= mean - 1e-9 * mean.max(1.0));
                if classes.iter().all(|c| c.b == 1) {
                    prop_assert!((var - mean).abs() <= 1e-9 * mean.max(1.0));
                } else if classes.iter().any(|c| c.b > 1 && c.lambda > 0.0) {
                    prop_assert!(var > mean);
                }
            }
        }
    }
}
