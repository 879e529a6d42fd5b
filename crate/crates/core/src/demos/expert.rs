//! Scripted stand-in for a human demonstrator.

use crate::sim::arm::{IkError, Joints, Pose};
use crate::sim::motion::{interpolate, solve_path, tip, Speed};
use crate::sim::WorldState;

/// Demonstration lengths are padded or rejected to stay in this range.
pub const MIN_STEPS: usize = 40;
pub const MAX_STEPS: usize = 120;

const SPEED: Speed = Speed {
    linear: 0.01,
    angular: 0.08,
};
const SLOW: Speed = Speed {
    linear: 0.006,
    angular: 0.08,
};

/// Tip offsets relative to the bowl, in metres and radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertPlan {
    pub entry_offset: f64,
    pub entry_pitch: f64,
    pub approach_clearance: f64,
    pub dig_height: f64,
    pub sweep_end: f64,
    pub sweep_height: f64,
    pub lift_clearance: f64,
}

impl Default for ExpertPlan {
    fn default() -> Self {
        Self {
            entry_offset: 0.015,
            entry_pitch: 0.9,
            approach_clearance: 0.04,
            dig_height: 0.008,
            sweep_end: 0.025,
            sweep_height: 0.006,
            lift_clearance: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpertError {
    #[error("scene has no bowl")]
    NoBowl,
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error("plan needs {0} steps, more than the {MAX_STEPS} allowed")]
    TooLong(usize),
}

/// Joint commands for one demonstration, starting from the world's current
/// pose. The first `hold` commands keep the arm still so that a policy with
/// a `hold` step history sees a resting window before motion starts.
pub fn scripted_expert(world: &WorldState, plan: &ExpertPlan, hold: usize) -> Result<Vec<Joints>, ExpertError> {
    let bowl = world.bowl.as_ref().ok_or(ExpertError::NoBowl)?;
    let q0 = world.arm.joints;
    let (c, rim, floor) = (bowl.center_x, bowl.rim_y(), bowl.floor_y());

    let start = tip(&q0);
    let above = Pose::new(c - plan.entry_offset, rim + plan.approach_clearance, plan.entry_pitch);
    let dig = Pose::new(c - plan.entry_offset, floor + plan.dig_height, plan.entry_pitch);
    let sweep = Pose::new(c + plan.sweep_end, floor + plan.sweep_height, 0.0);
    let lift = Pose::new(c + plan.sweep_end, rim + plan.lift_clearance, 0.0);

    let mut poses = interpolate(start, above, SPEED);
    poses.extend(interpolate(above, dig, SPEED));
    poses.extend(interpolate(dig, sweep, SLOW));
    poses.extend(interpolate(sweep, lift, SPEED));

    let mut commands = vec![q0; hold];
    commands.extend(solve_path(&q0, &poses)?);
    let last = *commands.last().unwrap_or(&q0);
    while commands.len() < MIN_STEPS {
        commands.push(last);
    }
    if commands.len() > MAX_STEPS {
        return Err(ExpertError::TooLong(commands.len()));
    }
    Ok(commands)
}
