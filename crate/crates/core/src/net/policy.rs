use crate::numerics::{ops, Param, Scalar, Tape, Tensor, Var};
use crate::sim::arm::{denormalize, normalize, within_limits, Joints, N_JOINTS};

use super::attention::{attend, AttentionResult};
use super::{NetConfig, NetError, PolicyParams};

/// Current frame plus the last k joint vectors, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState<T: Scalar = f32> {
    pub image: Tensor<T>,
    pub joint_history: Vec<Joints>,
}

/// Joint targets for steps t+1 ..= t+m.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub joints: Vec<Joints>,
}

impl ActionChunk {
    pub fn normalized(&self) -> Vec<f64> {
        self.joints.iter().flat_map(normalize).collect()
    }

    pub fn from_normalized(values: &[f64]) -> Self {
        let joints = values
            .chunks_exact(N_JOINTS)
            .map(|c| denormalize(&c.try_into().expect("chunk of six")))
            .collect();
        Self { joints }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T: Scalar = f32> {
    pub attention: AttentionResult<T>,
    pub v: Tensor<T>,
    pub u: Tensor<T>,
    pub action: ActionChunk,
}

/// Flattened, limit-normalised joint window.
pub fn history_features<T: Scalar>(history: &[Joints], k: usize) -> Result<Tensor<T>, NetError> {
    if history.len() != k {
        return Err(NetError::Input(format!("joint history has {} entries, expected {k}", history.len())));
    }
    if let Some(q) = history.iter().find(|q| !within_limits(q)) {
        return Err(NetError::Input(format!("joint vector {q:?} outside limits")));
    }
    Ok(Tensor::from_vec(
        history.iter().flat_map(normalize).map(T::from_f64).collect(),
    ))
}

/// Handles for theta2..theta4 on a tape.
pub struct HeadVars {
    pub theta2: Vec<Var>,
    pub theta3: Vec<Var>,
    pub theta4: Vec<Var>,
}

impl HeadVars {
    /// Register the head parameters as trainable leaves.
    pub fn register<T: Scalar>(tape: &mut Tape<T>, params: &PolicyParams<T>) -> Self {
        let mut reg = |g: &[Param<T>]| g.iter().map(|p| tape.leaf(p.value.clone(), !p.frozen)).collect();
        Self {
            theta2: reg(&params.theta2),
            theta3: reg(&params.theta3),
            theta4: reg(&params.theta4),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = Var> + '_ {
        self.theta2.iter().chain(&self.theta3).chain(&self.theta4).copied()
    }
}

pub struct HeadOutput {
    pub v: Var,
    pub u: Var,
    /// Normalised chunk, m·6 values.
    pub action: Var,
}

/// Embeddings and control MLP on a tape. `centroid` is a 2-vector and
/// `history` the normalised k·6 window.
pub fn head_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &HeadVars,
    centroid: Var,
    history: Var,
) -> Result<HeadOutput, NetError> {
    let v = tape.linear(centroid, vars.theta2[0], vars.theta2[1])?;
    let u = tape.linear(history, vars.theta3[0], vars.theta3[1])?;
    let mut x = tape.concat(&[v, u], 0)?;
    let layers: Vec<_> = vars.theta4.chunks_exact(2).collect();
    for (i, l) in layers.iter().enumerate() {
        x = tape.linear(x, l[0], l[1])?;
        if i + 1 < layers.len() {
            x = tape.relu(x)?;
        }
    }
    Ok(HeadOutput { v, u, action: x })
}

/// Untaped head: returns (v, u, normalised action).
pub fn head_forward<T: Scalar>(
    params: &PolicyParams<T>,
    centroid: (f64, f64),
    history: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NetError> {
    let h = Tensor::from_vec(vec![T::from_f64(centroid.0), T::from_f64(centroid.1)]);
    let v = ops::linear(&h, &params.theta2[0].value, &params.theta2[1].value)?;
    let u = ops::linear(history, &params.theta3[0].value, &params.theta3[1].value)?;
    let mut x = ops::concat(&[&v, &u], 0)?;
    let n = params.theta4.len() / 2;
    for (i, l) in params.theta4.chunks_exact(2).enumerate() {
        x = ops::linear(&x, &l[0].value, &l[1].value)?;
        if i + 1 < n {
            x = ops::activation(&x, ops::Activation::Relu)?;
        }
    }
    Ok((v, u, x))
}

pub fn policy_forward<T: Scalar>(state: &StackedState<T>, params: &PolicyParams<T>) -> Result<ForwardTrace<T>, NetError> {
    let cfg: &NetConfig = &params.config;
    let history = history_features(&state.joint_history, cfg.k)?;
    let attention = attend(&state.image, &params.theta1, cfg)?;
    let (v, u, out) = head_forward(params, attention.centroid, &history)?;
    let values: Vec<f64> = out.data().iter().map(|v| v.to_f64()).collect();
    Ok(ForwardTrace {
        attention,
        v,
        u,
        action: ActionChunk::from_normalized(&values),
    })
}

/// Mean squared error between two chunks in normalised joint space.
pub fn bc_objective(pred: &ActionChunk, expert: &ActionChunk) -> Result<f64, NetError> {
    if pred.joints.len() != expert.joints.len() || pred.joints.is_empty() {
        return Err(NetError::Input(format!(
            "chunk lengths {} and {} differ",
            pred.joints.len(),
            expert.joints.len()
        )));
    }
    let (a, b) = (pred.normalized(), expert.normalized());
    Ok(ops::mse_loss(&Tensor::from_vec(a), &Tensor::from_vec(b))?)
}
