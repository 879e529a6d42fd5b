//! Hand-tuned scooping controller: fixed approach, fixed wrist rotation.

use crate::sim::arm::{IkError, Joints, Pose};
use crate::sim::motion::{interpolate, joint_ramp, solve_path, tip, Speed};
use crate::sim::WorldState;

/// Joint index of the wrist that performs the scooping rotation.
pub const WRIST_JOINT: usize = 4;
pub const WRIST_DELTA: f64 = -0.6;
/// Approach height above the inner bottom of the bowl.
pub const APPROACH_HEIGHT: f64 = 0.03;
pub const APPROACH_PITCH: f64 = 0.85;
const LIFT_CLEARANCE: f64 = 0.08;

const SPEED: Speed = Speed {
    linear: 0.01,
    angular: 0.08,
};

/// Open-loop command sequence in three phases. The bowl centre is read from
/// the simulator in place of a detector.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePlan {
    pub approach: Vec<Joints>,
    pub rotation: Vec<Joints>,
    pub lift: Vec<Joints>,
}

impl BaselinePlan {
    pub fn commands(&self) -> impl Iterator<Item = &Joints> {
        self.approach.iter().chain(&self.rotation).chain(&self.lift)
    }
}

pub fn baseline_plan(world: &WorldState) -> Result<BaselinePlan, IkError> {
    let Some(bowl) = world.bowl.as_ref() else {
        return Err(IkError::Unreachable { x: f64::NAN, y: f64::NAN });
    };
    let q0 = world.arm.joints;
    let start = tip(&q0);
    let (cx, _) = bowl.centroid();
    let tilted = Pose::new(start.x, start.y, APPROACH_PITCH);
    let target = Pose::new(cx, bowl.floor_y() + APPROACH_HEIGHT, APPROACH_PITCH);

    let mut poses = interpolate(start, tilted, SPEED);
    poses.extend(interpolate(tilted, target, SPEED));
    let approach = solve_path(&q0, &poses)?;

    let at_target = *approach.last().unwrap_or(&q0);
    let mut rotated = at_target;
    rotated[WRIST_JOINT] += WRIST_DELTA;
    let rotation = joint_ramp(&at_target, &rotated);

    let scooped = tip(&rotated);
    let top = Pose::new(scooped.x, bowl.rim_y() + LIFT_CLEARANCE, scooped.pitch);
    let lift = solve_path(&rotated, &interpolate(scooped, top, SPEED))?;
    Ok(BaselinePlan {
        approach,
        rotation,
        lift,
    })
}
