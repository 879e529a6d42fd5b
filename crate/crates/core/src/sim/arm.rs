//! Six-joint planar arm. Angles are measured clockwise from the +x axis, so a
//! positive spoon pitch tilts the tip downward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_JOINTS: usize = 6;
pub type Joints = [f64; N_JOINTS];

pub const BASE: (f64, f64) = (0.0, 0.2);
pub const LINK_LENGTHS: [f64; N_JOINTS] = [0.15, 0.12, 0.10, 0.08, 0.06, 0.10];
pub const SPOON_LENGTH: f64 = 0.10;

pub const JOINT_LIMITS: [(f64, f64); N_JOINTS] = [
    (-1.5, 1.5),
    (-2.4, 2.4),
    (-2.4, 2.4),
    (-2.4, 2.4),
    (-2.4, 2.4),
    (-2.4, 2.4),
];

/// Per-step joint speed cap in radians.
pub const MAX_JOINT_SPEED: f64 = 0.15;

pub const IK_DAMPING: f64 = 0.05;
pub const IK_MAX_ITERS: usize = 200;
pub const IK_POS_TOL: f64 = 1e-3;
pub const IK_PITCH_TOL: f64 = 1e-2;

/// Spoon tip position and pitch (radians, clockwise from +x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub pitch: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, pitch: f64) -> Self {
        Self { x, y, pitch }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub joints: Joints,
}

/// Unit vector along a link with cumulative angle `a`.
pub fn dir(a: f64) -> (f64, f64) {
    (a.cos(), -a.sin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    /// Base followed by the end of every link; the last point is the tip.
    pub points: [(f64, f64); N_JOINTS + 1],
    pub tip: Pose,
}

impl Kinematics {
    /// Joint that the spoon link hangs from.
    pub fn wrist(&self) -> (f64, f64) {
        self.points[N_JOINTS - 1]
    }
}

pub fn fk(q: &Joints) -> Kinematics {
    let mut points = [BASE; N_JOINTS + 1];
    let mut angle = 0.0;
    for i in 0..N_JOINTS {
        angle += q[i];
        let (dx, dy) = dir(angle);
        let (px, py) = points[i];
        points[i + 1] = (px + LINK_LENGTHS[i] * dx, py + LINK_LENGTHS[i] * dy);
    }
    let (x, y) = points[N_JOINTS];
    Kinematics {
        points,
        tip: Pose { x, y, pitch: angle },
    }
}

pub fn within_limits(q: &Joints) -> bool {
    q.iter().zip(JOINT_LIMITS).all(|(&v, (lo, hi))| v >= lo && v <= hi)
}

/// Clamp into the joint limits; the flag reports whether anything moved.
pub fn clamp_to_limits(q: &Joints) -> (Joints, bool) {
    let mut out = *q;
    let mut clamped = false;
    for (v, (lo, hi)) in out.iter_mut().zip(JOINT_LIMITS) {
        let c = v.clamp(lo, hi);
        if c != *v || v.is_nan() {
            clamped = true;
            *v = if v.is_nan() { 0.0f64.clamp(lo, hi) } else { c };
        }
    }
    (out, clamped)
}

/// Map joints to `[-1, 1]` by their limits.
pub fn normalize(q: &Joints) -> Joints {
    let mut out = [0.0; N_JOINTS];
    for i in 0..N_JOINTS {
        let (lo, hi) = JOINT_LIMITS[i];
        out[i] = 2.0 * (q[i] - lo) / (hi - lo) - 1.0;
    }
    out
}

pub fn denormalize(n: &Joints) -> Joints {
    let mut out = [0.0; N_JOINTS];
    for i in 0..N_JOINTS {
        let (lo, hi) = JOINT_LIMITS[i];
        out[i] = lo + (n[i] + 1.0) * 0.5 * (hi - lo);
    }
    out
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % std::f64::consts::TAU;
    if d > std::f64::consts::PI {
        d -= std::f64::consts::TAU;
    } else if d < -std::f64::consts::PI {
        d += std::f64::consts::TAU;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error("target ({x:.3}, {y:.3}) is outside the reachable annulus")]
    Unreachable { x: f64, y: f64 },
    #[error("ik did not converge: position error {pos_err:.2e} m, pitch error {pitch_err:.2e} rad")]
    NotConverged { pos_err: f64, pitch_err: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub joints: Joints,
    pub iterations: usize,
}

fn pose_error(q: &Joints, target: &Pose) -> [f64; 3] {
    let t = fk(q).tip;
    [target.x - t.x, target.y - t.y, angle_diff(target.pitch, t.pitch)]
}

fn converged(e: &[f64; 3]) -> bool {
    e[0].hypot(e[1]) < IK_POS_TOL && e[2].abs() < IK_PITCH_TOL
}

/// Damped least-squares inverse kinematics on (x, y, pitch).
pub fn ik(target: &Pose, q_init: &Joints) -> Result<IkSolution, IkError> {
    // The wrist must be reachable by the first five links.
    let (dx, dy) = dir(target.pitch);
    let wx = target.x - SPOON_LENGTH * dx - BASE.0;
    let wy = target.y - SPOON_LENGTH * dy - BASE.1;
    let reach: f64 = LINK_LENGTHS[..N_JOINTS - 1].iter().sum();
    if wx.hypot(wy) > reach || !target.x.is_finite() || !target.y.is_finite() || !target.pitch.is_finite() {
        return Err(IkError::Unreachable { x: target.x, y: target.y });
    }

    let first = dls(target, q_init);
    if first.is_ok() {
        return first;
    }
    // Fixed restarts for targets the warm start cannot reach from its basin.
    for seed in IK_RESTARTS {
        if let Ok(sol) = dls(target, &seed) {
            return Ok(sol);
        }
    }
    first
}

const IK_RESTARTS: [Joints; 6] = [
    [0.0; N_JOINTS],
    [-0.7, 1.2, 1.2, 0.4, -0.6, -0.6],
    [0.7, -1.2, -1.2, -0.4, 0.6, 0.6],
    [-1.2, 0.4, 1.6, 0.8, 0.4, -1.0],
    [1.2, -0.4, -1.6, -0.8, -0.4, 1.0],
    [0.3, 1.5, -1.5, 1.5, -1.5, 0.5],
];

fn dls(target: &Pose, q_init: &Joints) -> Result<IkSolution, IkError> {
    let (mut q, _) = clamp_to_limits(q_init);
    let mut e = pose_error(&q, target);
    let lambda2 = IK_DAMPING * IK_DAMPING;
    for it in 0..IK_MAX_ITERS {
        if converged(&e) {
            return Ok(IkSolution { joints: q, iterations: it });
        }
        let k = fk(&q);
        // Jacobian columns: rotating joint i moves every downstream point.
        let mut jac = [[0.0; N_JOINTS]; 3];
        for i in 0..N_JOINTS {
            let (px, py) = k.points[i];
            // Clockwise rotation by dθ maps (rx, ry) to (ry, -rx)·dθ.
            jac[0][i] = k.tip.y - py;
            jac[1][i] = -(k.tip.x - px);
            jac[2][i] = 1.0;
        }
        // (J Jᵀ + λ² I) y = e, then Δq = Jᵀ y.
        let mut a = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] = (0..N_JOINTS).map(|i| jac[r][i] * jac[c][i]).sum::<f64>();
            }
            a[r][r] += lambda2;
        }
        let y = solve3(a, e);
        let mut step = [0.0; N_JOINTS];
        for i in 0..N_JOINTS {
            step[i] = (0..3).map(|r| jac[r][i] * y[r]).sum();
        }
        let largest = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if largest > 0.3 { 0.3 / largest } else { 1.0 };
        for i in 0..N_JOINTS {
            q[i] += scale * step[i];
        }
        q = clamp_to_limits(&q).0;
        e = pose_error(&q, target);
    }
    if converged(&e) {
        return Ok(IkSolution {
            joints: q,
            iterations: IK_MAX_ITERS,
        });
    }
    Err(IkError::NotConverged {
        pos_err: e[0].hypot(e[1]),
        pitch_err: e[2].abs(),
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_chain() {
        let k = fk(&[0.0; 6]);
        let total: f64 = LINK_LENGTHS.iter().sum();
        assert!((k.tip.x - total).abs() < 1e-12);
        assert!((k.tip.y - BASE.1).abs() < 1e-12);
    }

    #[test]
    fn spoon_is_ten_centimetres() {
        for q in [[0.3, -0.2, 0.5, 1.0, -0.7, 0.4], [1.2, 0.0, -2.0, 0.1, 0.9, -1.1]] {
            let k = fk(&q);
            let (wx, wy) = k.wrist();
            assert!(((k.tip.x - wx).hypot(k.tip.y - wy) - 0.10).abs() < 1e-12);
        }
    }

    #[test]
    fn ik_fixed_point_needs_no_iterations() {
        let q0 = [0.4, 0.3, 0.2, 0.1, -0.2, 0.3];
        let sol = ik(&fk(&q0).tip, &q0).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.joints, q0);
    }

    #[test]
    fn unreachable_target_fails() {
        assert!(matches!(
            ik(&Pose::new(2.0, 0.0, 0.0), &[0.0; 6]),
            Err(IkError::Unreachable { .. })
        ));
    }

    #[test]
    fn normalization_round_trips() {
        let q = [0.3, -2.0, 1.0, 0.0, 2.4, -2.4];
        let back = denormalize(&normalize(&q));
        for i in 0..6 {
            assert!((back[i] - q[i]).abs() < 1e-12);
        }
        assert_eq!(normalize(&[-1.5, -2.4, -2.4, -2.4, -2.4, -2.4]), [-1.0; 6]);
    }
}
