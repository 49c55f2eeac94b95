//! Optimization engines shared by the online learners.

pub mod admm;
pub mod admm_wz;
pub mod niapg;
pub mod smooth;

pub use admm::{
    admm_code_solve, admm_quadratic_ball_solve, code_objective, dictionary_objective, AdmmConfig,
    AdmmReport, AdmmState, CodeSolveReport,
};
pub use admm_wz::{admm_wz_solve, consistency_residual, AdmmWzConfig, AdmmWzResult};
pub use niapg::{niapg_solve, NiApgConfig, NiApgResult};
pub use smooth::{SampleFit, SmoothPart};
