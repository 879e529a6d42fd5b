//! The visuomotor policy: spatial attention, centroid, embeddings and the
//! control head.

pub mod attention;
pub mod checkpoint;
pub mod policy;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::{Param, Scalar, Tensor, TensorError};

pub use attention::{attention_forward, extract_centroid, iou, AttentionResult};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_VERSION};
pub use policy::{bc_objective, policy_forward, ActionChunk, ForwardTrace, StackedState};

pub const EMBED_DIM: usize = 64;
pub const HIDDEN: [usize; 3] = [128, 128, 64];

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Joint vectors in the proprioception window.
    pub k: usize,
    /// Predicted future steps per forward pass.
    pub m: usize,
    pub height: usize,
    pub width: usize,
    pub widths: [usize; 4],
    pub fusion_kernel: usize,
    /// Relative threshold for centroid extraction.
    pub tau: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            k: 4,
            m: 2,
            height: 64,
            width: 64,
            widths: [8, 16, 32, 32],
            fusion_kernel: 7,
            tau: 0.5,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.k == 0 || self.m == 0 {
            return Err(NetError::Input(format!("k={} and m={} must be positive", self.k, self.m)));
        }
        if self.height == 0 || self.width == 0 || self.widths.contains(&0) {
            return Err(NetError::Input("zero-sized image or channel width".into()));
        }
        if self.fusion_kernel.is_multiple_of(2) {
            return Err(NetError::Input(format!("fusion kernel {} must be odd", self.fusion_kernel)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(NetError::Input(format!("tau {} outside (0, 1]", self.tau)));
        }
        Ok(())
    }
}

/// Parameters grouped by module: attention, visual embedding,
/// proprioception embedding and control MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T: Scalar = f32> {
    pub config: NetConfig,
    pub theta1: Vec<Param<T>>,
    pub theta2: Vec<Param<T>>,
    pub theta3: Vec<Param<T>>,
    pub theta4: Vec<Param<T>>,
    pub frozen1: bool,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches element count")
}

fn layer<T: Scalar>(rng: &mut ChaCha8Rng, name: &str, weight_shape: &[usize], fan_in: usize) -> [Param<T>; 2] {
    [
        Param::new(format!("{name}.weight"), uniform(rng, weight_shape, fan_in)),
        Param::new(format!("{name}.bias"), uniform(rng, &weight_shape[..1], fan_in)),
    ]
}

impl<T: Scalar> PolicyParams<T> {
    /// Fan-in scaled uniform initialisation from a fixed seed.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta1 = Vec::new();
        let mut c_in = 3;
        for (i, &c_out) in config.widths.iter().enumerate() {
            theta1.extend(layer(&mut rng, &format!("attention.conv{i}"), &[c_out, c_in, 3, 3], c_in * 9));
            c_in = c_out;
        }
        let fk = config.fusion_kernel;
        theta1.extend(layer(&mut rng, "attention.fusion", &[1, 2, fk, fk], 2 * fk * fk));

        let theta2 = layer(&mut rng, "visual", &[EMBED_DIM, 2], 2).to_vec();
        let n_prop = config.k * crate::sim::N_JOINTS;
        let theta3 = layer(&mut rng, "proprio", &[EMBED_DIM, n_prop], n_prop).to_vec();
        let mut theta4 = Vec::new();
        let mut n_in = 2 * EMBED_DIM;
        for (i, &n_out) in HIDDEN.iter().enumerate() {
            theta4.extend(layer(&mut rng, &format!("control.fc{i}"), &[n_out, n_in], n_in));
            n_in = n_out;
        }
        let n_out = config.m * crate::sim::N_JOINTS;
        theta4.extend(layer(&mut rng, "control.head", &[n_out, n_in], n_in));
        Ok(Self {
            config,
            theta1,
            theta2,
            theta3,
            theta4,
            frozen1: false,
        })
    }

    pub fn groups(&self) -> [&[Param<T>]; 4] {
        [&self.theta1, &self.theta2, &self.theta3, &self.theta4]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<Param<T>>; 4] {
        [&mut self.theta1, &mut self.theta2, &mut self.theta3, &mut self.theta4]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.theta1.iter().chain(&self.theta2).chain(&self.theta3).chain(&self.theta4)
    }

    /// Mark the attention module frozen (or not); the optimizer skips frozen
    /// parameters.
    pub fn set_frozen1(&mut self, frozen: bool) {
        self.frozen1 = frozen;
        for p in &mut self.theta1 {
            p.frozen = frozen;
        }
    }

    pub fn attention_param_count(&self) -> usize {
        self.theta1.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|p| p.value.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> PolicyParams<U> {
        let conv = |g: &[Param<T>]| {
            g.iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    frozen: p.frozen,
                })
                .collect()
        };
        PolicyParams {
            config: self.config.clone(),
            theta1: conv(&self.theta1),
            theta2: conv(&self.theta2),
            theta3: conv(&self.theta3),
            theta4: conv(&self.theta4),
            frozen1: self.frozen1,
        }
    }
}

/// SHA-256 over names, shapes and the f64 bit patterns of a parameter group.
pub fn checksum<T: Scalar>(group: &[Param<T>]) -> String {
    let mut h = Sha256::new();
    for p in group {
        h.update(p.name.as_bytes());
        for &d in p.value.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            h.update(v.to_f64().to_bits().to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}
