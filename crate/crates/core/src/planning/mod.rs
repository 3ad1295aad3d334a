//! Global plan, rolling costmap and local planner.

pub mod costmap;
pub mod dwa;
pub mod plan;

pub use costmap::{CellState, Costmap, CostmapConfig, GridError, NavGrid};
pub use dwa::{plan_step, DwaConfig, DwaOutput};
pub use plan::{GlobalPlan, PlanError, Projection};
