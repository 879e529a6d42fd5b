//! Receding-horizon execution: predict a chunk, run its first element,
//! observe again.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::net::{policy_forward, ActionChunk, NetError, PolicyParams, StackedState};
use crate::sim::{render, score_trial, Camera, Image, Joints, TrialScore, WorldState};

use super::baseline::baseline_plan;

pub const DEFAULT_MAX_STEPS: usize = 200;

/// Anything that maps an observation window to an action chunk.
pub trait Policy {
    fn k(&self) -> usize;
    fn act(&mut self, frame: &Image, history: &[Joints]) -> Result<Prediction, NetError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub chunk: ActionChunk,
    pub centroid: Option<(f64, f64)>,
}

/// The trained network as a [`Policy`].
#[derive(Debug, Clone)]
pub struct NetPolicy {
    pub params: PolicyParams<f32>,
}

impl Policy for NetPolicy {
    fn k(&self) -> usize {
        self.params.config.k
    }

    fn act(&mut self, frame: &Image, history: &[Joints]) -> Result<Prediction, NetError> {
        let state = StackedState {
            image: frame.to_tensor(),
            joint_history: history.to_vec(),
        };
        let trace = policy_forward(&state, &self.params)?;
        Ok(Prediction {
            chunk: trace.action,
            centroid: Some(trace.attention.centroid),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LiftComplete,
    Collision,
    MaxSteps,
    /// An open-loop plan ran out of commands.
    PlanEnd,
    PolicyError(String),
    PlanFailed(String),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::LiftComplete => "lift_complete",
            Termination::Collision => "collision",
            Termination::MaxSteps => "max_steps",
            Termination::PlanEnd => "plan_end",
            Termination::PolicyError(_) => "policy_error",
            Termination::PlanFailed(_) => "plan_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Hash of the world the observation was taken from.
    pub state_hash: [u8; 32],
    pub frame_hash: [u8; 32],
    pub history: Vec<Joints>,
    pub centroid: Option<(f64, f64)>,
    pub chunk: ActionChunk,
    pub commanded: Joints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub steps: Vec<TraceStep>,
    pub score: TrialScore,
    pub step_count: usize,
    pub termination: Termination,
}

fn finished(world: &WorldState) -> Option<Termination> {
    if world.collision_flag {
        Some(Termination::Collision)
    } else if world.lift_complete() {
        Some(Termination::LiftComplete)
    } else {
        None
    }
}

fn sha(bytes: &[u8]) -> [u8; 32] {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).into()
}

/// Run `policy` on `world` until the lift completes, the spoon collides or
/// `max_steps` commands have been sent. The history window starts as k
/// copies of the initial joints.
pub fn mpc_execute(policy: &mut dyn Policy, world: &mut WorldState, cam: Camera, max_steps: usize) -> RolloutTrace {
    let k = policy.k().max(1);
    let mut window: VecDeque<Joints> = std::iter::repeat_n(world.arm.joints, k).collect();
    let mut steps = Vec::new();
    let mut termination = Termination::MaxSteps;
    for _ in 0..max_steps {
        let frame = render(world, cam);
        let history: Vec<Joints> = window.iter().copied().collect();
        let prediction = match policy.act(&frame, &history) {
            Ok(p) if !p.chunk.joints.is_empty() => p,
            Ok(_) => {
                termination = Termination::PolicyError("empty action chunk".into());
                break;
            }
            Err(e) => {
                termination = Termination::PolicyError(e.to_string());
                break;
            }
        };
        let commanded = prediction.chunk.joints[0];
        if !commanded.iter().all(|v| v.is_finite()) {
            termination = Termination::PolicyError("non-finite command".into());
            break;
        }
        steps.push(TraceStep {
            state_hash: world.state_hash(),
            frame_hash: sha(&frame.data),
            history,
            centroid: prediction.centroid,
            chunk: prediction.chunk,
            commanded,
        });
        world.step(&commanded);
        window.pop_front();
        window.push_back(world.arm.joints);
        if let Some(t) = finished(world) {
            termination = t;
            break;
        }
    }
    RolloutTrace {
        step_count: steps.len(),
        steps,
        score: score_trial(world),
        termination,
    }
}

/// Execute the open-loop baseline with the same stopping rules.
pub fn baseline_controller(world: &mut WorldState, max_steps: usize) -> RolloutTrace {
    let plan = match baseline_plan(world) {
        Ok(p) => p,
        Err(e) => {
            return RolloutTrace {
                steps: Vec::new(),
                score: crate::sim::score_counts(0, 0, false),
                step_count: 0,
                termination: Termination::PlanFailed(e.to_string()),
            }
        }
    };
    let mut steps = Vec::new();
    let mut termination = Termination::PlanEnd;
    for (i, &commanded) in plan.commands().enumerate() {
        if i == max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        steps.push(TraceStep {
            state_hash: world.state_hash(),
            frame_hash: [0; 32],
            history: vec![world.arm.joints],
            centroid: None,
            chunk: ActionChunk {
                joints: vec![commanded],
            },
            commanded,
        });
        world.step(&commanded);
        if let Some(t) = finished(world) {
            termination = t;
            break;
        }
    }
    RolloutTrace {
        step_count: steps.len(),
        steps,
        score: score_trial(world),
        termination,
    }
}
