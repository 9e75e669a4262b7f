//! Sparse P1 operators on one time slice and the linear solvers that use
//! them.

mod forms;
mod linsolve;
mod quadrature;
mod sparse;

pub use forms::{
    interpolated_dual_form, load_vector, lumped_mass, mass_matrix, stiffness_matrix,
    weighted_dual_form, SliceOperators,
};
pub use linsolve::{bicgstab, pcg, SolveOptions, SolveStats};
pub use quadrature::QuadratureRule;
pub use sparse::SparseOperator;
