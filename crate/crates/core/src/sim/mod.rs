//! Deterministic 2D side-view scooping world.

pub mod arm;
pub mod motion;
pub mod render;
pub mod scene;
pub mod score;
pub mod world;

use thiserror::Error;

pub use arm::{fk, ik, IkError, Joints, Pose, N_JOINTS};
pub use render::{bowl_mask, render, Camera, Image, Mask};
pub use scene::{BowlConfig, BowlKind, FoodKind, FoodModel, Position, SceneConfig};
pub use score::{score_counts, score_trial, TrialScore};
pub use world::{make_scene, ParticleStatus, StepOutcome, WorldState, HOME};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("image size {height}x{width} is below the 32 pixel minimum")]
    Resolution { height: usize, width: usize },
    #[error("world has no bowl")]
    NoBowl,
    #[error("malformed image file: {0}")]
    Format(String),
}
