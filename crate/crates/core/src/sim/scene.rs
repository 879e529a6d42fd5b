use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BowlKind {
    TG,
    PS,
    PM,
    PL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoodKind {
    Granular,
    SemiSolid,
    Liquid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    P1,
    P2,
    P3,
}

impl BowlKind {
    pub const ALL: [BowlKind; 4] = [BowlKind::TG, BowlKind::PS, BowlKind::PM, BowlKind::PL];

    pub fn name(self) -> &'static str {
        match self {
            BowlKind::TG => "TG",
            BowlKind::PS => "PS",
            BowlKind::PM => "PM",
            BowlKind::PL => "PL",
        }
    }
}

impl FoodKind {
    pub const ALL: [FoodKind; 3] = [FoodKind::Granular, FoodKind::SemiSolid, FoodKind::Liquid];

    pub fn name(self) -> &'static str {
        match self {
            FoodKind::Granular => "granular",
            FoodKind::SemiSolid => "semi_solid",
            FoodKind::Liquid => "liquid",
        }
    }
}

impl Position {
    pub const ALL: [Position; 3] = [Position::P1, Position::P2, Position::P3];

    pub fn name(self) -> &'static str {
        match self {
            Position::P1 => "P1",
            Position::P2 => "P2",
            Position::P3 => "P3",
        }
    }

    /// Nominal bowl centre x in metres.
    pub fn nominal_x(self) -> f64 {
        match self {
            Position::P1 => 0.34,
            Position::P2 => 0.22,
            Position::P3 => 0.46,
        }
    }
}

macro_rules! impl_name_parse {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = SimError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| SimError::InvalidScene(format!(concat!("unknown ", $what, " {:?}"), s)))
            }
        }
    };
}

impl_name_parse!(BowlKind, "bowl kind");
impl_name_parse!(FoodKind, "food kind");
impl_name_parse!(Position, "position");

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowlConfig {
    pub kind: BowlKind,
    pub center_x: f64,
    /// Outer half-width at the rim.
    pub rim_radius: f64,
    pub depth: f64,
    pub wall_thickness: f64,
    pub material_color: Rgb,
}

impl BowlConfig {
    pub fn new(kind: BowlKind, center_x: f64) -> Self {
        let (rim_radius, depth, wall_thickness, material_color) = match kind {
            BowlKind::TG => (0.06, 0.06, 0.006, [214, 236, 246]),
            BowlKind::PS => (0.05, 0.05, 0.005, [238, 196, 204]),
            BowlKind::PM => (0.065, 0.06, 0.005, [200, 232, 196]),
            BowlKind::PL => (0.08, 0.07, 0.006, [240, 226, 176]),
        };
        Self {
            kind,
            center_x,
            rim_radius,
            depth,
            wall_thickness,
            material_color,
        }
    }

    /// Glass is drawn as an outline; plastic bowls are opaque.
    pub fn is_transparent(&self) -> bool {
        self.kind == BowlKind::TG
    }

    pub fn rim_y(&self) -> f64 {
        self.depth
    }

    pub fn floor_y(&self) -> f64 {
        self.wall_thickness
    }

    pub fn inner_x(&self) -> (f64, f64) {
        let r = self.rim_radius - self.wall_thickness;
        (self.center_x - r, self.center_x + r)
    }

    pub fn outer_x(&self) -> (f64, f64) {
        (self.center_x - self.rim_radius, self.center_x + self.rim_radius)
    }

    /// Solid parts as axis-aligned rectangles `(x0, y0, x1, y1)`: two walls
    /// and the floor slab.
    pub fn solids(&self) -> [[f64; 4]; 3] {
        let (ox0, ox1) = self.outer_x();
        let (ix0, ix1) = self.inner_x();
        [
            [ox0, 0.0, ix0, self.depth],
            [ix1, 0.0, ox1, self.depth],
            [ix0, 0.0, ix1, self.wall_thickness],
        ]
    }

    /// Geometric centre of the bowl's side silhouette.
    pub fn centroid(&self) -> (f64, f64) {
        (self.center_x, self.depth / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohesion {
    None,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodModel {
    pub kind: FoodKind,
    /// Largest |spoon pitch| that holds food without spilling.
    pub retention_pitch: f64,
    /// Chance per step that held food slides off beyond the retention pitch.
    pub spill_rate: f64,
    pub cohesion: Cohesion,
    pub color: Rgb,
}

impl FoodModel {
    pub fn new(kind: FoodKind) -> Self {
        let (retention_pitch, cohesion, color) = match kind {
            FoodKind::Liquid => (0.15, Cohesion::None, [64, 120, 214]),
            FoodKind::Granular => (0.6, Cohesion::None, [196, 150, 80]),
            FoodKind::SemiSolid => (0.9, Cohesion::Cluster, [204, 40, 92]),
        };
        Self {
            kind,
            retention_pitch,
            spill_rate: 0.3,
            cohesion,
            color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorShape {
    Bottle,
    Apple,
    JellyJar,
    Knife,
}

impl DistractorShape {
    pub const ALL: [DistractorShape; 4] = [
        DistractorShape::Bottle,
        DistractorShape::Apple,
        DistractorShape::JellyJar,
        DistractorShape::Knife,
    ];

    /// Footprint width and height in metres.
    pub fn size(self) -> (f64, f64) {
        match self {
            DistractorShape::Bottle => (0.05, 0.15),
            DistractorShape::Apple => (0.06, 0.06),
            DistractorShape::JellyJar => (0.05, 0.07),
            DistractorShape::Knife => (0.14, 0.012),
        }
    }

    pub fn color(self) -> Rgb {
        match self {
            DistractorShape::Bottle => [36, 96, 118],
            DistractorShape::Apple => [176, 30, 34],
            DistractorShape::JellyJar => [112, 58, 136],
            DistractorShape::Knife => [92, 94, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub shape: DistractorShape,
    /// Centre of the footprint on the table.
    pub x: f64,
    pub color: Rgb,
}

impl Distractor {
    pub fn span(&self) -> (f64, f64) {
        let (w, _) = self.shape.size();
        (self.x - w / 2.0, self.x + w / 2.0)
    }
}

/// JSON scene description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneConfig {
    pub bowl: BowlKind,
    pub food: FoodKind,
    pub position: Position,
    #[serde(default)]
    pub distractors: bool,
    pub seed: u64,
}

pub const POSITION_JITTER: f64 = 0.02;
pub const PARTICLE_RADIUS: f64 = 0.005;
pub const TABLE_SPAN: (f64, f64) = (0.09, 0.71);
const DISTRACTOR_GAP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ParticleSeed {
    pub pos: (f64, f64),
    pub cluster: Option<u16>,
}

/// Initial food layout inside the bowl.
pub(crate) fn seed_particles<R: Rng>(bowl: &BowlConfig, food: FoodKind, rng: &mut R) -> Vec<ParticleSeed> {
    let r = PARTICLE_RADIUS;
    let floor = bowl.floor_y() + r;
    let c = bowl.center_x;
    let mut out = Vec::new();
    let jitter = |rng: &mut R| rng.gen_range(-0.001..=0.001);
    match food {
        FoodKind::Granular => {
            // four-row heap
            for (row, count) in [4usize, 3, 3, 2].into_iter().enumerate() {
                let y = floor + row as f64 * 0.0095;
                for i in 0..count {
                    let x = c + (i as f64 - (count as f64 - 1.0) / 2.0) * 0.011;
                    out.push(ParticleSeed {
                        pos: (x + jitter(rng), y),
                        cluster: None,
                    });
                }
            }
        }
        FoodKind::Liquid => {
            let (ix0, ix1) = bowl.inner_x();
            for (row, count) in [8usize, 7].into_iter().enumerate() {
                let y = floor + row as f64 * 0.0095;
                let span = ix1 - ix0 - 2.0 * r - 0.004;
                for i in 0..count {
                    let x = ix0 + r + 0.002 + span * (i as f64 + 0.5 * row as f64 + 0.25) / (count as f64 + 0.5);
                    out.push(ParticleSeed {
                        pos: (x + jitter(rng), y),
                        cluster: None,
                    });
                }
            }
        }
        FoodKind::SemiSolid => {
            let dx = jitter(rng);
            // a single block two wide and three tall
            for row in 0..3 {
                for i in 0..2 {
                    out.push(ParticleSeed {
                        pos: (c + dx + (i as f64 - 0.5) * 0.01, floor + row as f64 * 0.01),
                        cluster: Some(0),
                    });
                }
            }
        }
    }
    out
}

/// Place the four distractors on the table clear of the bowl footprint.
pub(crate) fn place_distractors<R: Rng>(bowl: &BowlConfig, rng: &mut R) -> Vec<Distractor> {
    let (bx0, bx1) = bowl.outer_x();
    let mut taken: Vec<(f64, f64)> = vec![(bx0 - DISTRACTOR_GAP, bx1 + DISTRACTOR_GAP)];
    let mut out = Vec::with_capacity(4);
    for shape in DistractorShape::ALL {
        let (w, _) = shape.size();
        let lo = TABLE_SPAN.0 + w / 2.0;
        let hi = TABLE_SPAN.1 - w / 2.0;
        let free = |x: f64, taken: &[(f64, f64)]| taken.iter().all(|&(a, b)| x + w / 2.0 <= a || x - w / 2.0 >= b);
        let mut chosen = None;
        for _ in 0..64 {
            let x = rng.gen_range(lo..=hi);
            if free(x, &taken) {
                chosen = Some(x);
                break;
            }
        }
        // Crowded table: scan for the first free slot, allowing overlap with
        // other distractors as a last resort.
        let x = chosen
            .or_else(|| {
                let steps = 200;
                (0..=steps)
                    .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
                    .find(|&x| free(x, &taken))
            })
            .unwrap_or_else(|| {
                let left = (bx0 - DISTRACTOR_GAP - w / 2.0).max(lo);
                if left + w / 2.0 <= bx0 - DISTRACTOR_GAP {
                    left
                } else {
                    (bx1 + DISTRACTOR_GAP + w / 2.0).min(hi)
                }
            });
        taken.push((x - w / 2.0 - DISTRACTOR_GAP, x + w / 2.0 + DISTRACTOR_GAP));
        out.push(Distractor {
            shape,
            x,
            color: shape.color(),
        });
    }
    out
}
