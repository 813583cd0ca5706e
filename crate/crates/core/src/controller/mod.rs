//! Closed-loop light relocation.

pub mod config;
pub mod multi;
pub mod plant;
pub mod session;
pub mod sweep;
pub mod trajectory;

pub use config::{ActuatorLimits, AlrConfig, InSituDoc, NoiseDoc, SourceDoc};
pub use multi::{run_multi_light, MultiLightOutcome};
pub use plant::{Actuation, Plant};
pub use session::{
    start_session, start_session_with_ambient, AlrReport, AlrSession, Controller, ManualOutcome, SessionSnapshot, SessionStatus,
};
pub use sweep::{simulate_pose_sweep, PoseSweepTrace};
pub use trajectory::{trajectory_from_csv, trajectory_to_csv, RowMetrics, TrajectoryRow, CSV_HEADER};
