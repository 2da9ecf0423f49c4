//! Conditional scenario forecasting by descent over a trained generator's
//! latent space.

mod objective;
mod problem;
mod report;
mod search;

pub use objective::{init_objective, main_objective, Evaluation};
pub use problem::{
    interval_bounds, project_hist, project_pred, ForecastProblem, IntervalBounds, SearchConfig,
    FORECAST_FLOOR, MAX_RESTARTS,
};
pub use report::{feasibility_report, FeasibilityReport, ScenarioMargins};
pub use search::{
    find_initial_z, forecast_scenarios, scenario_rng, InitialPoint, Scenario, ScenarioSet, MAX_HALVINGS,
};
