//! Numeric kernels shared by the region engines.

pub mod concave;
pub mod ellipsoid;
pub mod lp;
pub mod master;

pub use concave::{concave_maximize, ConcaveProgramSpec, ConcaveResult};
pub use ellipsoid::{ellipsoid_minimize, EllipsoidOptions, EllipsoidResult, EllipsoidState};
pub use lp::{lp_solve, LinearProgram, LpSolution, LpStatus};
pub use master::{Column, ColumnMaster, MasterSolution, ResourceRow};
