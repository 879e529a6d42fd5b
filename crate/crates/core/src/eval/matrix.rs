//! The paired evaluation matrix and its marginal summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::net::PolicyParams;
use crate::sim::world::derive_seed;
use crate::sim::{make_scene, BowlKind, Camera, FoodKind, Position, SceneConfig};

use super::mpc::{baseline_controller, mpc_execute, NetPolicy, RolloutTrace, DEFAULT_MAX_STEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Avil,
    Baseline,
}

/// Scene 1 is the bare table, scene 2 adds the distractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scene {
    #[serde(rename = "scene1")]
    Plain,
    #[serde(rename = "scene2")]
    Distractors,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Avil, Method::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Method::Avil => "avil",
            Method::Baseline => "baseline",
        }
    }
}

impl Scene {
    pub const ALL: [Scene; 2] = [Scene::Plain, Scene::Distractors];

    pub fn name(self) -> &'static str {
        match self {
            Scene::Plain => "scene1",
            Scene::Distractors => "scene2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

impl FromStr for Scene {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scene::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown scene {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub trials: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub max_steps: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            seed: 0,
            height: 64,
            width: 64,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub bowl: BowlKind,
    pub food: FoodKind,
    pub position: Position,
    pub scene: Scene,
    pub trial: usize,
}

impl CellKey {
    pub fn all(trials: usize) -> Vec<CellKey> {
        let mut out = Vec::new();
        for bowl in BowlKind::ALL {
            for food in FoodKind::ALL {
                for position in Position::ALL {
                    for scene in Scene::ALL {
                        for trial in 0..trials {
                            out.push(CellKey {
                                bowl,
                                food,
                                position,
                                scene,
                                trial,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Scene seed shared by both methods and both scenes of a trial, so
    /// paired scenes differ only by the distractors.
    pub fn seed(&self, base: u64) -> u64 {
        derive_seed(
            base,
            &format!("cell/{}/{}/{}/{}", self.bowl, self.food, self.position, self.trial),
        )
    }

    pub fn scene_config(&self, base: u64) -> SceneConfig {
        SceneConfig {
            bowl: self.bowl,
            food: self.food,
            position: self.position,
            distractors: self.scene == Scene::Distractors,
            seed: self.seed(base),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: Method,
    pub bowl: BowlKind,
    pub food: FoodKind,
    pub position: Position,
    pub scene: Scene,
    pub trial: usize,
    pub seed: u64,
    pub score: f64,
    pub scooped: usize,
    pub spilled: usize,
    pub collision: bool,
    pub steps: usize,
    pub termination: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: MatrixConfig,
    pub cells: Vec<CellRecord>,
}

fn record(method: Method, key: &CellKey, seed: u64, trace: &RolloutTrace, collision: bool) -> CellRecord {
    CellRecord {
        method,
        bowl: key.bowl,
        food: key.food,
        position: key.position,
        scene: key.scene,
        trial: key.trial,
        seed,
        score: trace.score.value,
        scooped: trace.score.scooped_count,
        spilled: trace.score.spilled_count,
        collision,
        steps: trace.step_count,
        termination: trace.termination.label().to_string(),
    }
}

/// Run one cell. `policy` is required for [`Method::Avil`].
pub fn run_cell(method: Method, policy: Option<&mut NetPolicy>, key: &CellKey, cfg: &MatrixConfig) -> CellRecord {
    let scene = key.scene_config(cfg.seed);
    let failed = |reason: String| CellRecord {
        method,
        bowl: key.bowl,
        food: key.food,
        position: key.position,
        scene: key.scene,
        trial: key.trial,
        seed: scene.seed,
        score: 0.0,
        scooped: 0,
        spilled: 0,
        collision: false,
        steps: 0,
        termination: reason,
    };
    let mut world = match make_scene(&scene) {
        Ok(w) => w,
        Err(e) => return failed(format!("scene_error: {e}")),
    };
    let cam = match Camera::new(cfg.height, cfg.width) {
        Ok(c) => c,
        Err(e) => return failed(format!("camera_error: {e}")),
    };
    let trace = match (method, policy) {
        (Method::Avil, Some(p)) => mpc_execute(p, &mut world, cam, cfg.max_steps),
        (Method::Avil, None) => return failed("no_policy".into()),
        (Method::Baseline, _) => baseline_controller(&mut world, cfg.max_steps),
    };
    record(method, key, scene.seed, &trace, world.collision_flag)
}

/// Both methods over every cell, AVIL first, cells in key order.
pub fn run_matrix(
    params: &PolicyParams<f32>,
    cfg: &MatrixConfig,
    mut progress: impl FnMut(&CellRecord),
) -> ExperimentResult {
    let mut policy = NetPolicy { params: params.clone() };
    let keys = CellKey::all(cfg.trials);
    let mut cells = Vec::with_capacity(2 * keys.len());
    for method in Method::ALL {
        for key in &keys {
            let rec = run_cell(method, Some(&mut policy), key, cfg);
            progress(&rec);
            cells.push(rec);
        }
    }
    ExperimentResult {
        config: cfg.clone(),
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub key: String,
    pub avil: f64,
    pub baseline: f64,
    /// AVIL mean over baseline mean; absent when the baseline mean is 0.
    pub ratio: Option<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub food: FoodKind,
    pub scene1: f64,
    pub scene2: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells_per_method: usize,
    pub overall: MarginalRow,
    pub per_bowl: Vec<MarginalRow>,
    pub per_food: Vec<MarginalRow>,
    pub per_position: Vec<MarginalRow>,
    /// Distractor-scene marginals over the same grouping as `overall`.
    pub overall_distractors: MarginalRow,
    /// AVIL with the glass bowl at P1, bare vs cluttered table.
    pub scene_comparison: Vec<SceneRow>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn marginal(cells: &[CellRecord], key: String, keep: impl Fn(&CellRecord) -> bool) -> MarginalRow {
    let pick = |m: Method| -> Vec<f64> {
        cells.iter().filter(|c| c.method == m && keep(c)).map(|c| c.score).collect()
    };
    let (a, b) = (pick(Method::Avil), pick(Method::Baseline));
    let (avil, baseline) = (mean(&a), mean(&b));
    MarginalRow {
        key,
        avil,
        baseline,
        ratio: (baseline > 0.0).then(|| avil / baseline),
        trials: a.len().max(b.len()),
    }
}

/// Marginals over the bare-table cells, as pure functions of the raw cells.
pub fn summarize(cells: &[CellRecord]) -> Summary {
    let plain = |c: &CellRecord| c.scene == Scene::Plain;
    let per_bowl = BowlKind::ALL
        .iter()
        .map(|&b| marginal(cells, b.to_string(), |c| plain(c) && c.bowl == b))
        .collect();
    let per_food = FoodKind::ALL
        .iter()
        .map(|&f| marginal(cells, f.to_string(), |c| plain(c) && c.food == f))
        .collect();
    let per_position = Position::ALL
        .iter()
        .map(|&p| marginal(cells, p.to_string(), |c| plain(c) && c.position == p))
        .collect();
    let mut scene_comparison = Vec::new();
    for food in FoodKind::ALL {
        let mut by_scene = BTreeMap::new();
        for c in cells.iter().filter(|c| {
            c.method == Method::Avil && c.bowl == BowlKind::TG && c.position == Position::P1 && c.food == food
        }) {
            by_scene.entry(c.scene).or_insert_with(Vec::new).push(c.score);
        }
        let get = |s| by_scene.get(&s).map(|v: &Vec<f64>| mean(v)).unwrap_or(f64::NAN);
        scene_comparison.push(SceneRow {
            food,
            scene1: get(Scene::Plain),
            scene2: get(Scene::Distractors),
            trials: by_scene.get(&Scene::Plain).map_or(0, Vec::len),
        });
    }
    Summary {
        cells_per_method: cells.iter().filter(|c| c.method == Method::Avil).count(),
        overall: marginal(cells, "all".into(), plain),
        per_bowl,
        per_food,
        per_position,
        overall_distractors: marginal(cells, "all".into(), |c| c.scene == Scene::Distractors),
        scene_comparison,
    }
}
