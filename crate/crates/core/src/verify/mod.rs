//! Executable versions of the stability and regularity estimates, checked
//! against solver output, plus free-boundary extraction.

mod estimates;
mod interface;
mod report;

pub use estimates::{
    check_dual_estimates, check_energy_bound, check_eps_convergence, check_l1_contraction,
    check_linfty_bound, check_strict_decrease, check_time_translate, contraction_violation,
    dual_growth_constant, fit_exponent, gradient_norm, l1_contraction_profile, l1l1_distance,
    time_derivative_dual_norm, time_translate_integral, CONTRACTION_MESH_CONSTANT,
    CONTRACTION_RELATIVE_SLACK, DUAL_ENERGY_SLACK, DUAL_MAX_TOL, ENERGY_SWEEP_RATIO,
};
pub use interface::{
    check_stefan_condition, extract_interface, write_interface_csv, zero_level_set,
    InterfaceCurve, InterfaceSegment, STEFAN_CONDITION_TOL,
};
pub use report::{summary, write_reports_csv, EstimateReport};
