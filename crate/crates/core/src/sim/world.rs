use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arm::{self, dir, fk, ArmState, Joints, Kinematics, MAX_JOINT_SPEED, N_JOINTS};
use super::scene::{
    place_distractors, seed_particles, BowlConfig, Cohesion, Distractor, FoodModel, SceneConfig, PARTICLE_RADIUS,
    POSITION_JITTER,
};
use super::SimError;

/// Resting pose: spoon level, tip at about (0.45, 0.10).
pub const HOME: Joints = [-0.72, 0.72, 1.08, 0.22, -0.67, -0.63];

/// Length of the spoon head, the part that can strike the bowl or table.
pub const SPOON_HEAD: f64 = 0.03;
/// Radius of the scoop region above the spoon head.
pub const SCOOP_RADIUS: f64 = 0.025;
pub const SUBSTEPS: usize = 8;
/// Height above the rim that counts as a completed lift.
pub const LIFT_CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleStatus {
    InBowl,
    OnSpoon,
    Spilled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: (f64, f64),
    pub status: ParticleStatus,
    pub cluster: Option<u16>,
    /// Offset in the spoon frame (along the spoon, along its normal) while held.
    #[serde(skip)]
    local: (f64, f64),
}

impl Particle {
    pub fn new(position: (f64, f64), status: ParticleStatus) -> Self {
        Self {
            position,
            status,
            cluster: None,
            local: (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub scene: SceneConfig,
    pub arm: ArmState,
    pub bowl: Option<BowlConfig>,
    pub food: FoodModel,
    pub particles: Vec<Particle>,
    pub distractors: Vec<Distractor>,
    pub rng_seed: u64,
    pub step_count: u64,
    pub collision_flag: bool,
    /// Tip has been inside the bowl below the rim.
    pub entered: bool,
    /// Particles held when the tip first cleared rim + clearance after entering.
    pub scooped_at_lift: Option<usize>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepOutcome {
    /// The command was outside the joint limits and was clamped.
    pub clamped: bool,
    /// The spoon head struck the bowl or table during this step.
    pub collided: bool,
}

/// Sub-seed for an independent random stream of a scene.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn make_scene(cfg: &SceneConfig) -> Result<WorldState, SimError> {
    let mut layout = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "layout"));
    let jitter = layout.gen_range(-POSITION_JITTER..=POSITION_JITTER);
    let bowl = BowlConfig::new(cfg.bowl, cfg.position.nominal_x() + jitter);
    let particles = seed_particles(&bowl, cfg.food, &mut layout)
        .into_iter()
        .map(|s| Particle {
            position: s.pos,
            status: ParticleStatus::InBowl,
            cluster: s.cluster,
            local: (0.0, 0.0),
        })
        .collect();
    let distractors = if cfg.distractors {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "distractors"));
        place_distractors(&bowl, &mut rng)
    } else {
        Vec::new()
    };
    Ok(WorldState {
        scene: cfg.clone(),
        arm: ArmState { joints: HOME },
        bowl: Some(bowl),
        food: FoodModel::new(cfg.food),
        particles,
        distractors,
        rng_seed: cfg.seed,
        step_count: 0,
        collision_flag: false,
        entered: false,
        scooped_at_lift: None,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dynamics")),
    })
}

/// Frame of the spoon head: tip, unit direction along the spoon, and the
/// normal on the concave (upper) side.
#[derive(Debug, Clone, Copy)]
pub struct SpoonFrame {
    pub tip: (f64, f64),
    pub along: (f64, f64),
    pub normal: (f64, f64),
}

impl SpoonFrame {
    pub fn from_kinematics(k: &Kinematics) -> Self {
        let along = dir(k.tip.pitch);
        Self {
            tip: (k.tip.x, k.tip.y),
            along,
            normal: (-along.1, along.0),
        }
    }

    /// Centre of the scoop region: the middle of the spoon head.
    pub fn scoop_center(&self) -> (f64, f64) {
        (
            self.tip.0 - 0.5 * SPOON_HEAD * self.along.0,
            self.tip.1 - 0.5 * SPOON_HEAD * self.along.1,
        )
    }

    pub fn head(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.tip.0 - SPOON_HEAD * self.along.0, self.tip.1 - SPOON_HEAD * self.along.1),
            self.tip,
        )
    }

    fn to_local(&self, p: (f64, f64)) -> (f64, f64) {
        let c = self.scoop_center();
        let (dx, dy) = (p.0 - c.0, p.1 - c.1);
        (dx * self.along.0 + dy * self.along.1, dx * self.normal.0 + dy * self.normal.1)
    }

    fn to_world(&self, l: (f64, f64)) -> (f64, f64) {
        let c = self.scoop_center();
        (
            c.0 + l.0 * self.along.0 + l.1 * self.normal.0,
            c.1 + l.0 * self.along.1 + l.1 * self.normal.1,
        )
    }

    /// Whether a particle centred at `p` sits in the scoop region.
    pub fn captures(&self, p: (f64, f64)) -> bool {
        let (a, n) = self.to_local(p);
        a.hypot(n) <= SCOOP_RADIUS + PARTICLE_RADIUS && n >= -PARTICLE_RADIUS
    }
}

/// Liang-Barsky test of a segment against a closed rectangle.
pub fn segment_hits_rect(a: (f64, f64), b: (f64, f64), r: [f64; 4]) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-dx, a.0 - r[0]), (dx, r[2] - a.0), (-dy, a.1 - r[1]), (dy, r[3] - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

impl WorldState {
    /// A world holding only the arm at `joints`: no bowl, food or distractors.
    pub fn empty(joints: Joints, seed: u64) -> Self {
        let scene = SceneConfig {
            bowl: super::BowlKind::TG,
            food: super::FoodKind::Granular,
            position: super::Position::P1,
            distractors: false,
            seed,
        };
        Self {
            scene,
            arm: ArmState { joints },
            bowl: None,
            food: FoodModel::new(super::FoodKind::Granular),
            particles: Vec::new(),
            distractors: Vec::new(),
            rng_seed: seed,
            step_count: 0,
            collision_flag: false,
            entered: false,
            scooped_at_lift: None,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, "dynamics")),
        }
    }

    pub fn kinematics(&self) -> Kinematics {
        fk(&self.arm.joints)
    }

    pub fn spoon(&self) -> SpoonFrame {
        SpoonFrame::from_kinematics(&self.kinematics())
    }

    pub fn lift_complete(&self) -> bool {
        self.scooped_at_lift.is_some()
    }

    pub fn count(&self, status: ParticleStatus) -> usize {
        self.particles.iter().filter(|p| p.status == status).count()
    }

    /// Place a particle on the spoon at its current world position.
    pub fn attach_to_spoon(&mut self, index: usize) {
        let frame = self.spoon();
        let p = &mut self.particles[index];
        p.local = frame.to_local(p.position);
        p.status = ParticleStatus::OnSpoon;
    }

    fn head_collides(&self, frame: &SpoonFrame) -> bool {
        let (a, b) = frame.head();
        if a.1 < 0.0 || b.1 < 0.0 {
            return true;
        }
        self.bowl
            .as_ref()
            .is_some_and(|bowl| bowl.solids().into_iter().any(|r| segment_hits_rect(a, b, r)))
    }

    fn capture(&mut self, frame: &SpoonFrame) {
        let mut grabbed_clusters = Vec::new();
        for p in &mut self.particles {
            if p.status == ParticleStatus::InBowl && frame.captures(p.position) {
                p.status = ParticleStatus::OnSpoon;
                p.local = frame.to_local(p.position);
                if let Some(c) = p.cluster {
                    grabbed_clusters.push(c);
                }
            }
        }
        if grabbed_clusters.is_empty() {
            return;
        }
        for p in &mut self.particles {
            if p.status == ParticleStatus::InBowl && p.cluster.is_some_and(|c| grabbed_clusters.contains(&c)) {
                p.status = ParticleStatus::OnSpoon;
                p.local = frame.to_local(p.position);
            }
        }
    }

    fn carry(&mut self, frame: &SpoonFrame) {
        for p in &mut self.particles {
            if p.status == ParticleStatus::OnSpoon {
                p.position = frame.to_world(p.local);
            }
        }
    }

    fn spill(&mut self, frame: &SpoonFrame) {
        if self.kinematics().tip.pitch.abs() <= self.food.retention_pitch {
            return;
        }
        // Each loose particle, or each cluster as a whole, slides off
        // independently. Draws happen in particle order.
        let mut decided: Vec<(Option<u16>, bool)> = Vec::new();
        let mut falls = vec![false; self.particles.len()];
        for (i, p) in self.particles.iter().enumerate() {
            if p.status != ParticleStatus::OnSpoon {
                continue;
            }
            let fall = match (self.food.cohesion, p.cluster) {
                (Cohesion::Cluster, Some(c)) => match decided.iter().find(|(k, _)| *k == Some(c)) {
                    Some(&(_, f)) => f,
                    None => {
                        let f = self.rng.gen::<f64>() < self.food.spill_rate;
                        decided.push((Some(c), f));
                        f
                    }
                },
                _ => self.rng.gen::<f64>() < self.food.spill_rate,
            };
            falls[i] = fall;
        }
        let inner = self.bowl.as_ref().map(|b| (b.inner_x(), b.floor_y()));
        for (p, fall) in self.particles.iter_mut().zip(falls) {
            if !fall {
                continue;
            }
            let x = p.position.0;
            match inner {
                Some(((x0, x1), floor)) if x > x0 && x < x1 && frame.tip.0 > x0 && frame.tip.0 < x1 => {
                    p.status = ParticleStatus::InBowl;
                    p.position = (x.clamp(x0 + PARTICLE_RADIUS, x1 - PARTICLE_RADIUS), floor + PARTICLE_RADIUS);
                }
                _ => {
                    p.status = ParticleStatus::Spilled;
                    p.position = (x, PARTICLE_RADIUS);
                }
            }
        }
    }

    /// Advance one control step toward `command`.
    pub fn step(&mut self, command: &Joints) -> StepOutcome {
        let (target, clamped) = arm::clamp_to_limits(command);
        let mut outcome = StepOutcome {
            clamped,
            collided: false,
        };
        self.step_count += 1;
        if self.collision_flag {
            return outcome;
        }
        let start = self.arm.joints;
        let mut goal = start;
        for i in 0..N_JOINTS {
            goal[i] = start[i] + (target[i] - start[i]).clamp(-MAX_JOINT_SPEED, MAX_JOINT_SPEED);
        }
        for s in 1..=SUBSTEPS {
            let f = s as f64 / SUBSTEPS as f64;
            let mut q = start;
            for i in 0..N_JOINTS {
                q[i] = if s == SUBSTEPS { goal[i] } else { start[i] + f * (goal[i] - start[i]) };
            }
            let k = fk(&q);
            let frame = SpoonFrame::from_kinematics(&k);
            if self.head_collides(&frame) {
                self.collision_flag = true;
                outcome.collided = true;
                break;
            }
            self.arm.joints = q;
            self.carry(&frame);
            self.capture(&frame);
            if let Some(bowl) = &self.bowl {
                let (x0, x1) = bowl.inner_x();
                if frame.tip.0 > x0 && frame.tip.0 < x1 && frame.tip.1 < bowl.rim_y() {
                    self.entered = true;
                }
            }
        }
        let frame = self.spoon();
        self.spill(&frame);
        if let Some(bowl) = &self.bowl {
            if self.entered && self.scooped_at_lift.is_none() && frame.tip.1 >= bowl.rim_y() + LIFT_CLEARANCE {
                self.scooped_at_lift = Some(self.count(ParticleStatus::OnSpoon));
            }
        }
        outcome
    }

    /// Digest of every state field, including the random stream position.
    pub fn state_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let f = |h: &mut Sha256, v: f64| h.update(v.to_bits().to_le_bytes());
        h.update(serde_json::to_vec(&self.scene).expect("scene serializes"));
        for &q in &self.arm.joints {
            f(&mut h, q);
        }
        if let Some(b) = &self.bowl {
            h.update(b.kind.name().as_bytes());
            for v in [b.center_x, b.rim_radius, b.depth, b.wall_thickness] {
                f(&mut h, v);
            }
            h.update(b.material_color);
        }
        h.update(self.food.kind.name().as_bytes());
        for p in &self.particles {
            f(&mut h, p.position.0);
            f(&mut h, p.position.1);
            f(&mut h, p.local.0);
            f(&mut h, p.local.1);
            h.update([p.status as u8, p.cluster.is_some() as u8]);
            h.update(p.cluster.unwrap_or(0).to_le_bytes());
        }
        for d in &self.distractors {
            h.update([d.shape as u8]);
            f(&mut h, d.x);
            h.update(d.color);
        }
        h.update(self.rng_seed.to_le_bytes());
        h.update(self.step_count.to_le_bytes());
        h.update([self.collision_flag as u8, self.entered as u8]);
        h.update((self.scooped_at_lift.map_or(-1i64, |v| v as i64)).to_le_bytes());
        h.update(self.rng.get_word_pos().to_le_bytes());
        h.finalize().into()
    }
}
