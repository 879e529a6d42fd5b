//! Task-space interpolation turned into joint paths that respect the speed cap.

use super::arm::{fk, ik, IkError, Joints, Pose, MAX_JOINT_SPEED, N_JOINTS};

/// Limits for straight-line tip motion per control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speed {
    pub linear: f64,
    pub angular: f64,
}

/// Poses strictly after `from` up to and including `to`.
pub fn interpolate(from: Pose, to: Pose, speed: Speed) -> Vec<Pose> {
    let dist = (to.x - from.x).hypot(to.y - from.y);
    let n = ((dist / speed.linear).max((to.pitch - from.pitch).abs() / speed.angular))
        .ceil()
        .max(1.0) as usize;
    (1..=n)
        .map(|i| {
            let f = i as f64 / n as f64;
            Pose::new(
                from.x + f * (to.x - from.x),
                from.y + f * (to.y - from.y),
                from.pitch + f * (to.pitch - from.pitch),
            )
        })
        .collect()
}

/// Solve each pose by warm-started ik and insert joint-space substeps
/// wherever a jump would exceed the per-step speed cap.
pub fn solve_path(q_start: &Joints, poses: &[Pose]) -> Result<Vec<Joints>, IkError> {
    let mut out = Vec::with_capacity(poses.len());
    let mut q = *q_start;
    for pose in poses {
        let next = ik(pose, &q)?.joints;
        out.extend(joint_ramp(&q, &next));
        q = next;
    }
    Ok(out)
}

/// Joint-space ramp from `from` to `to` in steps within the speed cap,
/// excluding `from` and ending exactly at `to`.
pub fn joint_ramp(from: &Joints, to: &Joints) -> Vec<Joints> {
    let largest = (0..N_JOINTS).map(|i| (to[i] - from[i]).abs()).fold(0.0, f64::max);
    let n = (largest / MAX_JOINT_SPEED).ceil().max(1.0) as usize;
    (1..=n)
        .map(|s| {
            if s == n {
                return *to;
            }
            let f = s as f64 / n as f64;
            let mut q = *from;
            for i in 0..N_JOINTS {
                q[i] += f * (to[i] - from[i]);
            }
            q
        })
        .collect()
}

pub fn tip(q: &Joints) -> Pose {
    fk(q).tip
}
