use serde::{Deserialize, Serialize};

use super::world::{ParticleStatus, WorldState};

/// Minimum particles held above the rim for a scoop to count.
pub const S_MIN: usize = 3;

pub const SUCCESS: f64 = 1.0;
pub const PARTIAL: f64 = 0.7;
pub const FAILURE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub value: f64,
    pub scooped_count: usize,
    pub spilled_count: usize,
}

/// Score a trial ending. A collision fails the trial outright.
pub fn score_counts(scooped_count: usize, spilled_count: usize, collision: bool) -> TrialScore {
    let value = if collision || scooped_count < S_MIN {
        FAILURE
    } else if spilled_count == 0 {
        SUCCESS
    } else {
        PARTIAL
    };
    TrialScore {
        value,
        scooped_count,
        spilled_count,
    }
}

/// Score a finished world. Food counts as scooped only if it was on the
/// spoon when the tip first cleared the rim after entering the bowl.
pub fn score_trial(world: &WorldState) -> TrialScore {
    score_counts(
        world.scooped_at_lift.unwrap_or(0),
        world.count(ParticleStatus::Spilled),
        world.collision_flag,
    )
}
