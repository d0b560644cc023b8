//! Price competition among vendors with choice-share demand.
//!
//! Each vendor sets a price; buyers pay `(1+α)` times it out of pocket.
//! Best responses maximize profit directly and are certified by the
//! pricing condition `P (1 - 1/(η (1+α))) = c`.

mod demand;
mod equilibrium;
mod statics;

pub use demand::{check_prices, demand, elasticity, ConstantElasticityDemand, DemandModel, DemandSystem};
pub use equilibrium::{
    best_response, check_a5, check_a6, foc_residual, nash_audit, nash_solve, price_cap, profit, stability,
    A6Check, BestResponse, EquilibriumResult, FirmCost, NashAudit, StabilityReport, MAX_ITERATIONS, TOL_FOC,
    TOL_FP, TOL_NASH,
};
pub use statics::{alpha_sweep, reaction_curve_table, AlphaEntry, ComparativeStaticsReport, ReactionTable};
