use crate::numerics::ops::{self, Activation, PoolMode};
use crate::numerics::{Param, Scalar, Tape, Tensor, Var};

use super::{NetConfig, NetError};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult<T: Scalar = f32> {
    pub map: Tensor<T>,
    /// Normalised (x, y) in [0, 1]², x along columns.
    pub centroid: (f64, f64),
}

fn check_image<T: Scalar>(image: &Tensor<T>, cfg: &NetConfig) -> Result<(), NetError> {
    if image.shape() != [3, cfg.height, cfg.width] {
        return Err(NetError::Input(format!(
            "image shape {:?}, expected [3, {}, {}]",
            image.shape(),
            cfg.height,
            cfg.width
        )));
    }
    if image.data().iter().any(|&v| !(v >= T::ZERO && v <= T::ONE)) {
        return Err(NetError::Input("image values must lie in [0, 1]".into()));
    }
    Ok(())
}

fn check_theta1<T: Scalar>(theta1: &[Param<T>]) -> Result<(), NetError> {
    if theta1.len() != 10 {
        return Err(NetError::Input(format!("attention expects 10 tensors, got {}", theta1.len())));
    }
    Ok(())
}

/// One-channel attention map in (0, 1) with the image's spatial size.
pub fn attention_forward<T: Scalar>(image: &Tensor<T>, theta1: &[Param<T>], cfg: &NetConfig) -> Result<Tensor<T>, NetError> {
    check_image(image, cfg)?;
    check_theta1(theta1)?;
    let mut x = image.clone();
    for layer in theta1[..8].chunks_exact(2) {
        x = ops::conv2d(&x, &layer[0].value, &layer[1].value, 1, 1)?;
        x = ops::activation(&x, Activation::Relu)?;
    }
    let pooled = ops::concat(
        &[&ops::channel_pool(&x, PoolMode::Max)?, &ops::channel_pool(&x, PoolMode::Avg)?],
        0,
    )?;
    let fused = ops::conv2d(&pooled, &theta1[8].value, &theta1[9].value, 1, cfg.fusion_kernel / 2)?;
    Ok(ops::activation(&fused, Activation::Sigmoid)?)
}

/// Recorded variant of [`attention_forward`]; `theta1` are tape handles in
/// parameter order.
pub fn attention_on_tape<T: Scalar>(tape: &mut Tape<T>, image: Var, theta1: &[Var], cfg: &NetConfig) -> Result<Var, NetError> {
    if theta1.len() != 10 {
        return Err(NetError::Input(format!("attention expects 10 tensors, got {}", theta1.len())));
    }
    let mut x = image;
    for layer in theta1[..8].chunks_exact(2) {
        x = tape.conv2d(x, layer[0], layer[1], 1, 1)?;
        x = tape.relu(x)?;
    }
    let max = tape.channel_pool(x, PoolMode::Max)?;
    let avg = tape.channel_pool(x, PoolMode::Avg)?;
    let pooled = tape.concat(&[max, avg], 0)?;
    let fused = tape.conv2d(pooled, theta1[8], theta1[9], 1, cfg.fusion_kernel / 2)?;
    Ok(tape.sigmoid(fused)?)
}

/// Mean pixel centre of `{v >= tau * max}`, normalised by the image size.
/// The argmax pixel always qualifies, so the set is never empty.
pub fn extract_centroid<T: Scalar>(map: &Tensor<T>, tau: f64) -> Result<(f64, f64), NetError> {
    let &[1, h, w] = map.shape() else {
        return Err(NetError::Input(format!("attention map shape {:?}, expected 1×H×W", map.shape())));
    };
    if map.is_empty() {
        return Err(NetError::Input("empty attention map".into()));
    }
    let max = map.data().iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
    let cut = tau * max;
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (idx, v) in map.data().iter().enumerate() {
        if v.to_f64() >= cut {
            sx += (idx % w) as f64 + 0.5;
            sy += (idx / w) as f64 + 0.5;
            n += 1;
        }
    }
    if n == 0 {
        // only reachable with NaN entries
        return Err(NetError::Input("attention map has no finite maximum".into()));
    }
    Ok((sx / n as f64 / w as f64, sy / n as f64 / h as f64))
}

pub fn attend<T: Scalar>(image: &Tensor<T>, theta1: &[Param<T>], cfg: &NetConfig) -> Result<AttentionResult<T>, NetError> {
    let map = attention_forward(image, theta1, cfg)?;
    let centroid = extract_centroid(&map, cfg.tau)?;
    Ok(AttentionResult { map, centroid })
}

/// Intersection over union of `map >= threshold` against a binary mask.
/// Two empty sets count as a perfect match.
pub fn iou<T: Scalar>(map: &Tensor<T>, mask: &Tensor<T>, threshold: f64) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, m) in map.data().iter().zip(mask.data()) {
        let a = p.to_f64() >= threshold;
        let b = m.to_f64() >= 0.5;
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
