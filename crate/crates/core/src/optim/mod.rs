//! Step rules (gradient, sign, momentum, coordinate-normalized, ℓ1-scaled
//! sign, clipped), learning-rate schedules, a trajectory runner, and the
//! one-epoch linear-head update lab.

mod epoch;
mod runner;
mod schedule;
mod steps;

pub use epoch::{
    linear_head_closed_forms, linear_head_epoch_updates, EpochMode, EpochUpdate,
};
pub use runner::{
    run_sequence, FinalPoint, RunOptions, StepLog, StepRule, StochasticOptions, TrajectoryRecord,
};
pub use schedule::{schedule_lr, ScheduleKind, ScheduleSpec};
pub use steps::{
    adam_step, clip_gradient, gd_step, momentum_update, rmsprop_step, sign_l1_scaled_step,
    sign_step, Hyperparams, MomentumForm, OptimizerState,
};
