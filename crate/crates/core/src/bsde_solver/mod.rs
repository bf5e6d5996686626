//! Young BSDE solvers: the explicit linear representation with a Girsanov
//! weight, and localized least-squares Monte Carlo for nonlinear equations.

mod diagnostics;
mod linear;
mod localized;

pub use diagnostics::{decay_table_csv, exponential_moment_diagnostic, growth_bound_check, solution_csv, ExpMomentReport, GrowthCheck};
pub use linear::{
    girsanov_weight, process_from_fn, solve_linear_bsde, tower_rule_defect, GirsanovWeights, LinearBsdeSolution, LinearBsdeSpec,
    LinearEval, PathFn, TowerReport, LOG_WEIGHT_LIMIT,
};
pub use localized::{
    solve_bsde_with_localization, solve_localized_bsde, BsdeProblem, BsdeSolution, DecayRow, DriftFn, GrowthMeta, LocalizationRun,
    LocalizationSchedule, LsmcConfig, Terminal, YoungCoefFn,
};
