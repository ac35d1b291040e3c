//! Fixtures shared by the benchmarks.

use chargecap::{CustomerClass, QosTargets, Scenario, UtilityWeights};

/// Three classes at capacity 1000, all arriving at rate 14.
pub fn toy() -> Scenario {
    Scenario::new(
        1000,
        vec![
            CustomerClass::new(50, 3.0, 14.0).unwrap(),
            CustomerClass::new(7, 0.42, 14.0).unwrap(),
            CustomerClass::new(5, 0.2, 14.0).unwrap(),
        ],
    )
    .unwrap()
}

/// The toy classes scaled up so the station has `capacity` units at a
/// comparable load.
pub fn toy_at(capacity: u32) -> Scenario {
    let s = toy();
    s.with_capacity(capacity)
        .scaled(f64::from(capacity) / 1000.0)
        .unwrap()
}

/// A system small enough for exact enumeration.
pub fn small() -> Scenario {
    Scenario::new(
        60,
        vec![
            CustomerClass::new(5, 1.0, 3.0).unwrap(),
            CustomerClass::new(2, 0.5, 4.0).unwrap(),
            CustomerClass::new(1, 0.25, 5.0).unwrap(),
        ],
    )
    .unwrap()
}

pub fn peak_classes() -> Vec<CustomerClass> {
    vec![
        CustomerClass::new(50, 3.0, 12.0).unwrap(),
        CustomerClass::new(7, 0.42, 10.0).unwrap(),
    ]
}

pub fn peak_targets() -> QosTargets {
    QosTargets::new(vec![0.04, 0.01]).unwrap()
}

pub fn pricing() -> (Scenario, UtilityWeights) {
    let s = Scenario::new(
        500,
        vec![
            CustomerClass::new(50, 3.0, 0.0).unwrap(),
            CustomerClass::new(7, 0.42, 0.0).unwrap(),
        ],
    )
    .unwrap();
    let w = UtilityWeights::new(vec![20.0, 10.0], vec![60.0, 20.0]).unwrap();
    (s, w)
}
