//! Chart-level calculus: Hessian metrics from convex potentials, the induced
//! structure on `TY ×_Y TY`, and derivative-based checks of closedness,
//! parallelism and integrability.

mod calculus;
mod config;
mod fibre;
mod potential;
mod structure;

pub use calculus::{
    closedness, covariant_constancy, exterior_derivative, exterior_derivative_fd,
    fibre_volume_product, gradient_check, leaf_integrability_check, verify_weak_selfdual,
    Closedness, CovariantResiduals, IntegrabilityVerdict, WeakSelfDualReport, BRACKET_STEP,
    CLOSEDNESS_TOL, GRADIENT_STEP, INTEGRABILITY_TOL,
};
pub use config::{ChartConfig, Tolerances};
pub use fibre::{fibre_product, FibreProduct, FlatTorusFibration, BASE_METRIC_TOL};
pub use potential::{
    hessian_ad, hessian_fd, hessian_metric, monge_ampere_residual, Monomial, Potential,
    PotentialChart, DOMAIN_SLACK, FD_STEP, MIN_HESSIAN_EIGENVALUE,
};
pub use structure::{
    build_xy, Coefficients, ConstantStructure, FieldStructure, FormField, FormKind, StructureForm,
    XyStructure,
};
