//! Recorded demonstrations and their on-disk layout.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{bowl_mask, render, score_trial, Camera, Image, Joints, Mask, SceneConfig, SimError, TrialScore, WorldState};

pub const EPISODE_FORMAT: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const JOINTS_FILE: &str = "joints.jsonl";

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("empty trajectory")]
    Empty,
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EpisodeError + '_ {
    move |source| EpisodeError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub format_version: u32,
    pub scene: SceneConfig,
    pub seed: u64,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub score: TrialScore,
    /// Who produced the commands, e.g. "expert" or "teleop".
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub frames: Vec<Image>,
    pub joints: Vec<Joints>,
    pub masks: Vec<Mask>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn score(&self) -> TrialScore {
        self.meta.score
    }
}

/// Incremental recorder: capture the world after every step.
#[derive(Debug, Clone)]
pub struct Recorder {
    cam: Camera,
    frames: Vec<Image>,
    joints: Vec<Joints>,
    masks: Vec<Mask>,
}

impl Recorder {
    pub fn new(cam: Camera) -> Self {
        Self {
            cam,
            frames: Vec::new(),
            joints: Vec::new(),
            masks: Vec::new(),
        }
    }

    pub fn capture(&mut self, world: &WorldState) -> Result<(), SimError> {
        let mask = bowl_mask(world, self.cam)?;
        self.frames.push(render(world, self.cam));
        self.masks.push(mask);
        self.joints.push(world.arm.joints);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn finish(self, world: &WorldState, source: &str) -> Result<Episode, EpisodeError> {
        if self.joints.is_empty() {
            return Err(EpisodeError::Empty);
        }
        Ok(Episode {
            meta: EpisodeMeta {
                format_version: EPISODE_FORMAT,
                scene: world.scene.clone(),
                seed: world.rng_seed,
                steps: self.joints.len(),
                height: self.cam.height,
                width: self.cam.width,
                score: score_trial(world),
                source: source.to_string(),
            },
            frames: self.frames,
            joints: self.joints,
            masks: self.masks,
        })
    }
}

/// Step `world` through `trajectory`, capturing frame, joints and mask after
/// every command. The episode has exactly one entry per command.
pub fn record_episode(world: &mut WorldState, trajectory: &[Joints], cam: Camera) -> Result<Episode, EpisodeError> {
    let mut rec = Recorder::new(cam);
    for command in trajectory {
        world.step(command);
        rec.capture(world)?;
    }
    rec.finish(world, "expert")
}

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:05}.ppm")
}

pub fn mask_name(t: usize) -> String {
    format!("mask_{t:05}.pgm")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EpisodeError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_episode(ep: &Episode, dir: &Path) -> Result<(), EpisodeError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = serde_json::to_string_pretty(&ep.meta).map_err(|e| EpisodeError::Format(e.to_string()))?;
    write_file(&dir.join(META_FILE), meta.as_bytes())?;
    for (t, (frame, mask)) in ep.frames.iter().zip(&ep.masks).enumerate() {
        write_file(&dir.join(frame_name(t)), &frame.to_ppm())?;
        write_file(&dir.join(mask_name(t)), &mask.to_pgm())?;
    }
    let path = dir.join(JOINTS_FILE);
    let mut out = Vec::new();
    for q in &ep.joints {
        serde_json::to_writer(&mut out, q).map_err(|e| EpisodeError::Format(e.to_string()))?;
        out.write_all(b"\n").map_err(io_err(&path))?;
    }
    write_file(&path, &out)
}

pub fn read_meta(dir: &Path) -> Result<EpisodeMeta, EpisodeError> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| EpisodeError::Format(format!("{}: {e}", path.display())))
}

pub fn read_joints(dir: &Path) -> Result<Vec<Joints>, EpisodeError> {
    let path = dir.join(JOINTS_FILE);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        let q: Joints = serde_json::from_str(&line)
            .map_err(|e| EpisodeError::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(q);
    }
    Ok(out)
}

pub fn read_episode(dir: &Path) -> Result<Episode, EpisodeError> {
    let meta = read_meta(dir)?;
    let joints = read_joints(dir)?;
    if joints.len() != meta.steps {
        return Err(EpisodeError::Format(format!(
            "{}: {} joint records for T = {}",
            dir.display(),
            joints.len(),
            meta.steps
        )));
    }
    let mut frames = Vec::with_capacity(meta.steps);
    let mut masks = Vec::with_capacity(meta.steps);
    for t in 0..meta.steps {
        let path = dir.join(frame_name(t));
        frames.push(Image::from_ppm(&fs::read(&path).map_err(io_err(&path))?)?);
        let path = dir.join(mask_name(t));
        masks.push(Mask::from_pgm(&fs::read(&path).map_err(io_err(&path))?)?);
    }
    Ok(Episode {
        meta,
        frames,
        joints,
        masks,
    })
}
