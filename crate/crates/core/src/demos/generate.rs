use crate::sim::world::derive_seed;
use crate::sim::{make_scene, BowlKind, Camera, FoodKind, Position, SceneConfig};

use super::episode::{record_episode, Episode, EpisodeError};
use super::expert::{scripted_expert, ExpertPlan};

/// Demonstration corpus settings. Defaults mirror the training protocol:
/// glass bowl, granular food only.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub episodes: usize,
    pub seed: u64,
    pub bowl: BowlKind,
    pub food: FoodKind,
    pub height: usize,
    pub width: usize,
    /// Resting commands before motion; equal to the policy's k.
    pub hold: usize,
    /// Give every other episode the distractor set.
    pub distractors: bool,
    pub plan: ExpertPlan,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed: 0,
            bowl: BowlKind::TG,
            food: FoodKind::Granular,
            height: 64,
            width: 64,
            hold: 4,
            distractors: true,
            plan: ExpertPlan::default(),
        }
    }
}

pub fn episode_id(index: usize) -> String {
    format!("ep_{index:05}")
}

/// Scene for attempt `attempt`; positions cycle P1, P2, P3.
pub fn demo_scene(cfg: &DemoConfig, attempt: u64) -> SceneConfig {
    SceneConfig {
        bowl: cfg.bowl,
        food: cfg.food,
        position: Position::ALL[(attempt % 3) as usize],
        distractors: cfg.distractors && attempt % 2 == 1,
        seed: derive_seed(cfg.seed, &format!("demo/{attempt}")),
    }
}

/// Record successful expert episodes. Attempts whose plan fails or whose
/// score is below 1.0 are discarded, as a demonstrator would retake them.
pub fn generate_demos(cfg: &DemoConfig) -> Result<Vec<(String, Episode)>, EpisodeError> {
    let cam = Camera::new(cfg.height, cfg.width)?;
    let mut out = Vec::with_capacity(cfg.episodes);
    let max_attempts = 4 * cfg.episodes as u64 + 16;
    let mut attempt = 0;
    while out.len() < cfg.episodes {
        if attempt >= max_attempts {
            return Err(EpisodeError::Format(format!(
                "only {} of {} demonstrations succeeded in {attempt} attempts",
                out.len(),
                cfg.episodes
            )));
        }
        let scene = demo_scene(cfg, attempt);
        attempt += 1;
        let mut world = make_scene(&scene)?;
        let Ok(commands) = scripted_expert(&world, &cfg.plan, cfg.hold) else {
            continue;
        };
        let ep = record_episode(&mut world, &commands, cam)?;
        if ep.score().value == 1.0 {
            out.push((episode_id(out.len()), ep));
        }
    }
    Ok(out)
}
