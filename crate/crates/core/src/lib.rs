//! Analytics for multi-class EV charging stations modeled as a
//! complete-sharing multi-rate Erlang loss system.
//!
//! - [`lolp`]: occupancy distribution, per-class loss-of-load probabilities
//!   and their sensitivities, with an enumeration oracle for small systems.
//! - [`provision`]: minimum capacity meeting per-class LoLP targets.
//! - [`pricing`]: welfare-maximizing arrival rates and congestion prices.
//! - [`sim`]: discrete-event simulation of the station.

pub mod error;
pub mod lolp;
pub mod model;
pub mod pricing;
pub mod provision;
pub mod sim;

pub use error::{Error, Result};
pub use lolp::{
    lolp, lolp_derivatives, lolp_exact, lolp_sensitivity, occupancy, LolpJacobian, LolpVector,
    OccupancyDistribution,
};
pub use model::{
    offered_load_stats, traffic_intensity, validate_scenario, CustomerClass, Diagnostic, Period,
    QosTargets, RawClass, Scenario, Severity, TimeProfile,
};
pub use pricing::{
    gross_gradient, gross_utility, local_best_response, optimal_prices, solve_equilibrium,
    solve_equilibrium_with, solve_profile, welfare, welfare_gradient, EquilibriumResult, Objective,
    SolverOptions, UtilityWeights,
};
pub use provision::{
    capacity_asymptotic, capacity_exact, psi, savings_vs_strict, ProvisioningResult,
};
pub use sim::{simulate, simulate_profile, ClassCounts, ServiceDistribution, SimConfig, SimResult};
