//! Time integration of the regularized enthalpy problem and the backward
//! dual problem used by the stability checks.

mod dual;
mod stefan;

pub use dual::{
    contrast_coefficient, mollify_coefficient, solve_dual_backward, space_time_l2_distance,
    DualEstimates, DualProblemSpec, DualSolution, MollifiedCoefficient,
};
pub use stefan::{
    inner_frozen_fixed_point, solve_stefan, step, weak_residual, InnerScheme, SolutionTrajectory,
    SolverOptions, StefanProblemSpec, StepDiagnostics, StepOutcome,
};
