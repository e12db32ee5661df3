//! Semi-cooperative multi-agent highway planning.
//!
//! Every vehicle runs a receding-horizon planner whose objective weighs its
//! own performance reward against its neighbours' through a social value
//! orientation angle. Plans are coordinated by iterative best response in
//! which early rounds jointly optimize a small neighbourhood of vehicles
//! ("imagined shared control") and only the planning vehicle keeps the result.
//!
//! The crate is `no_std` (with `alloc`). The `std` feature adds a wall-clock
//! solver budget; `serde` derives serialization for configuration and state types.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod ibr;
pub mod math;
pub mod metrics;
pub mod reward;
pub mod road;
pub mod safety;
pub mod solver;
pub mod trajectory;
pub mod world;

pub use dynamics::{rollout, step, ControlInput, ControlLimits, VehicleGeometry, VehicleState};
pub use error::{Error, Result};
pub use reward::{performance_reward, social_utility, speeding_slack, AgentProfile, CostWeights};
pub use road::RoadSpec;
pub use world::{run_simulation, SimConfig, WorldState, WorldTrace};
pub use safety::{aggregate_ttc_cost, collision_check, ellipse_separation, modified_ttc, raw_ttc, ttc_cost, TtcParams};
pub use ibr::{run_ibr, IbrConfig, PlanSet};
pub use metrics::{average_speed, compute_isi_psi, subgroup_report, PairedComparison, RunMetrics};
pub use solver::{Plan, SolverConfig};
pub use trajectory::{eval_desired, fit_lane_change_cubic, generate_bank, generate_warm_starts, DesiredTrajectory, WarmStart};

/// Index of a vehicle within a world.
pub type AgentId = usize;
