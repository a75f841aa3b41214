//! PDE pricing engine for caplets and swaptions under the SABR-LIBOR market
//! model.
//!
//! The crate provides the market model coefficients ([`market`]), flat
//! indexing of tensor grids ([`grid`]), a matrix-free finite-difference
//! operator with directional tridiagonal solves ([`operator`]), the AMFR-W2
//! time integrator ([`integrator`]) with a θ-Gauss-Seidel baseline
//! ([`theta_gs`]), and the sparse-grid combination technique
//! ([`combination`]).

// Negated comparisons reject NaN on purpose. Index loops mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod combination;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod market;
pub mod operator;
pub mod theta_gs;

pub use combination::{
    combine, count_points, modified_plan, solve_component_grid, standard_plan, CombinationPlan, ComponentResult, LevelVector,
    PricingProblem, SparseResult, Technique,
};
pub use error::{PdeError, Result};
pub use grid::{Bijection, GridShape, NodeClass};
pub use integrator::{amfrw_stage, amfrw_step, integrate, AmfrW2, AmfrW2Config, IntegrationReport, THETA_ORDER3};
pub use market::{validate_domain, DomainSpec, DomainViolation, MarketData, ProductKind, ProductSpec, SabrLmmModel, BPS};
pub use operator::{interpolate, write_dump, PdeCoefficients, SpatialOperator, StateVector};
pub use theta_gs::{theta_gs_step, ThetaGs, ThetaGsConfig};
