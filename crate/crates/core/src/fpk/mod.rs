//! Weak-form residuals, test-function batteries, stationary solvers and
//! Lyapunov checks.

mod battery;
mod lyapunov;
mod residual;
mod solve1d;
mod solve2d;
pub mod testfn;

pub use battery::default_battery;
pub use lyapunov::{
    lv_power, lyapunov_check, radial_grid, LyapunovProfile, LyapunovReport, PowerBound, Threshold,
};
pub use residual::{
    cutoff_telescoping, doubled_weak_residual, grid_pairing, weak_residual, CellIntegrator,
    ResidualEntry, ResidualReport, TelescopingEntry,
};
pub use solve1d::{solve_1d, Solve1dOutcome, DEGENERACY_THRESHOLD};
pub use solve2d::{
    assemble_generator, solve_2d, Generator2d, Solve2dOptions, Solve2dReport, STENCIL,
};
pub use testfn::{
    apply_generator, plateau_profile, ConstantFn, Coordinate, CoordinateProduct, Cutoff,
    CutoffMode, Embedded, GaussianBump, HalfSquaredDistance, LogTransform, PolyBump, Product,
    SmoothFunction, SquaredNorm, TestFunction,
};
