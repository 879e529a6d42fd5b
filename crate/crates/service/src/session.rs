//! One simulator world per connection. Everything here is synchronous; the
//! server runs it on the blocking pool.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use avil_core::demos::{append_episode, Episode, Recorder};
use avil_core::sim::arm::{fk, ik};
use avil_core::sim::{make_scene, render, score_trial, Camera, Joints, Pose, SceneConfig, WorldState};
use base64::Engine;
use serde_json::Value;

use crate::protocol::{ArmReport, ClientMessage, ErrorCode, ServerMessage};

pub const EPISODE_SOURCE: &str = "teleop";

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct SessionError {
    pub code: ErrorCode,
    pub message: String,
}

impl SessionError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Demo directory shared by all sessions. Appends are serialised so that
/// concurrent saves cannot interleave manifest writes.
#[derive(Debug, Clone)]
pub struct EpisodeStore {
    root: PathBuf,
    lock: Arc<Mutex<()>>,
}

impl EpisodeStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            lock: Arc::new(Mutex::new(())),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Save under the first free `teleop_NNNNN` id.
    pub fn save(&self, ep: &Episode) -> Result<(String, PathBuf), SessionError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let id = (0..)
            .map(|n| format!("{EPISODE_SOURCE}_{n:05}"))
            .find(|id| !self.root.join(id).exists())
            .expect("unbounded id range");
        append_episode(&self.root, &id, ep).map_err(|e| SessionError::new(ErrorCode::SaveFailed, e.to_string()))?;
        Ok((id.clone(), self.root.join(id)))
    }
}

pub struct Session {
    world: WorldState,
    cam: Camera,
    recorder: Option<Recorder>,
    /// Resting steps recorded before the first teleop command.
    hold: usize,
    store: EpisodeStore,
}

fn arm_report(world: &WorldState) -> ArmReport {
    ArmReport {
        joints: world.arm.joints,
        pose: fk(&world.arm.joints).tip,
        step_count: world.step_count,
        collision: world.collision_flag,
        score: score_trial(world),
    }
}

fn scene_error(e: impl std::fmt::Display) -> SessionError {
    SessionError::new(ErrorCode::InvalidScene, e.to_string())
}

impl Session {
    pub fn new(scene: &SceneConfig, cam: Camera, hold: usize, store: EpisodeStore) -> Result<Self, SessionError> {
        Ok(Self {
            world: make_scene(scene).map_err(scene_error)?,
            cam,
            recorder: None,
            hold,
            store,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    /// Handle one request; errors become `error` replies with the same id.
    pub fn handle(&mut self, id: Option<Value>, message: ClientMessage) -> ServerMessage {
        match self.dispatch(id.clone(), message) {
            Ok(reply) => reply,
            Err(e) => ServerMessage::error(id, e.code, e.message),
        }
    }

    fn dispatch(&mut self, id: Option<Value>, message: ClientMessage) -> Result<ServerMessage, SessionError> {
        match message {
            ClientMessage::Reset { scene } => {
                self.world = make_scene(&scene).map_err(scene_error)?;
                // a recording never spans two scenes
                self.recorder = None;
                Ok(ServerMessage::Reset {
                    id,
                    scene,
                    arm: arm_report(&self.world),
                })
            }
            ClientMessage::Step { joints } => {
                let clamped = self.command(&joints)?;
                Ok(ServerMessage::Step {
                    id,
                    clamped,
                    arm: arm_report(&self.world),
                })
            }
            ClientMessage::Nudge { dx, dy, dpitch } => {
                if ![dx, dy, dpitch].iter().all(|v| v.is_finite()) {
                    return Err(SessionError::new(ErrorCode::BadRequest, "nudge deltas must be finite"));
                }
                let q = self.world.arm.joints;
                let tip = fk(&q).tip;
                let target = Pose::new(tip.x + dx, tip.y + dy, tip.pitch + dpitch);
                let sol = ik(&target, &q).map_err(|e| SessionError::new(ErrorCode::IkFailed, e.to_string()))?;
                let clamped = self.command(&sol.joints)?;
                Ok(ServerMessage::Nudge {
                    id,
                    clamped,
                    arm: arm_report(&self.world),
                })
            }
            ClientMessage::Observe => {
                let frame = render(&self.world, self.cam);
                Ok(ServerMessage::Observe {
                    id,
                    height: frame.height,
                    width: frame.width,
                    frame: base64::engine::general_purpose::STANDARD.encode(frame.to_ppm()),
                    recording: self.recorder.is_some(),
                    recorded_steps: self.recorder.as_ref().map_or(0, Recorder::len),
                    arm: arm_report(&self.world),
                })
            }
            ClientMessage::RecordStart => {
                if self.recorder.is_some() {
                    return Err(SessionError::new(ErrorCode::AlreadyRecording, "a recording is already running"));
                }
                // Recordings start from the scene's initial state so that the
                // stored seed replays them, then hold still like the expert.
                self.world = make_scene(&self.world.scene.clone()).map_err(scene_error)?;
                let mut rec = Recorder::new(self.cam);
                let rest = self.world.arm.joints;
                for _ in 0..self.hold {
                    self.world.step(&rest);
                    rec.capture(&self.world).map_err(scene_error)?;
                }
                self.recorder = Some(rec);
                Ok(ServerMessage::RecordStart {
                    id,
                    arm: arm_report(&self.world),
                })
            }
            ClientMessage::RecordStop { save } => {
                let rec = self
                    .recorder
                    .take()
                    .ok_or_else(|| SessionError::new(ErrorCode::NotRecording, "no recording in progress"))?;
                let steps = rec.len();
                let score = score_trial(&self.world);
                if !save {
                    return Ok(ServerMessage::RecordStop {
                        id,
                        saved: false,
                        steps,
                        episode_id: None,
                        path: None,
                        score,
                    });
                }
                let (episode_id, path) = self.save(rec)?;
                Ok(ServerMessage::RecordStop {
                    id,
                    saved: true,
                    steps,
                    episode_id: Some(episode_id),
                    path: Some(path.display().to_string()),
                    score,
                })
            }
        }
    }

    fn command(&mut self, joints: &Joints) -> Result<bool, SessionError> {
        if !joints.iter().all(|v| v.is_finite()) {
            return Err(SessionError::new(ErrorCode::InvalidJoints, "joint values must be finite"));
        }
        let outcome = self.world.step(joints);
        if let Some(rec) = &mut self.recorder {
            rec.capture(&self.world).map_err(scene_error)?;
        }
        Ok(outcome.clamped)
    }

    fn save(&self, rec: Recorder) -> Result<(String, PathBuf), SessionError> {
        if rec.len() <= self.hold {
            return Err(SessionError::new(ErrorCode::EmptyRecording, "nothing was recorded after record_start"));
        }
        let ep = rec
            .finish(&self.world, EPISODE_SOURCE)
            .map_err(|e| SessionError::new(ErrorCode::EmptyRecording, e.to_string()))?;
        self.store.save(&ep)
    }

    /// Save an in-progress recording, if it holds any teleop steps. Used on
    /// shutdown.
    pub fn flush(&mut self) -> Option<String> {
        let rec = self.recorder.take()?;
        match self.save(rec) {
            Ok((id, _)) => Some(id),
            Err(e) => {
                tracing::warn!("dropping recording on shutdown: {e}");
                None
            }
        }
    }
}
