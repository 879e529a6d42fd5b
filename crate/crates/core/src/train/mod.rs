//! Two-phase training: attention against bowl masks, then behaviour cloning
//! with the attention module frozen.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::demos::{Dataset, SampleIndex};
use crate::net::attention::{attention_forward, attention_on_tape, extract_centroid, iou};
use crate::net::policy::{head_forward, head_on_tape, history_features, HeadVars};
use crate::net::{checksum, NetError, PolicyParams};
use crate::numerics::{adam_step, cosine_lr, AdamState, LrSchedule, Param, Tape, Tensor, TensorError};
use crate::sim::world::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Frames per episode used for attention training, evenly spaced;
    /// `None` uses every frame.
    pub mask_frames: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-4,
            batch_size: 8,
            seed: 0,
            holdout_fraction: 0.1,
            mask_frames: Some(4),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 0.5) {
            return Err(TrainError::Config(format!("holdout fraction {} outside (0, 0.5)", self.holdout_fraction)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.lr)));
        }
        if self.mask_frames == Some(0) {
            return Err(TrainError::Config("mask_frames must be at least 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(self.lr, self.epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub phase: String,
    pub epochs: Vec<EpochRecord>,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub holdout_episodes: Vec<String>,
    /// Attention IoU for phase 1, chunk MSE for phase 2.
    pub final_metric: f64,
    pub final_metric_name: String,
    pub wall_time_s: f64,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain record") + "\n")
            .collect()
    }

    /// Everything except wall time, which is the only nondeterministic field.
    pub fn same_run(&self, other: &TrainLog) -> bool {
        TrainLog {
            wall_time_s: 0.0,
            ..self.clone()
        } == TrainLog {
            wall_time_s: 0.0,
            ..other.clone()
        }
    }
}

/// Episodes held out for evaluation: the `ceil(fraction * n)` ids with the
/// smallest `sha256(seed || id)`, never all of them.
pub fn holdout_split(ids: &[String], seed: u64, fraction: f64) -> Vec<bool> {
    let n = ids.len();
    let want = ((fraction * n as f64).ceil() as usize).min(n.saturating_sub(1));
    let mut keyed: Vec<([u8; 32], usize)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(id.as_bytes());
            (h.finalize().into(), i)
        })
        .collect();
    keyed.sort();
    let mut out = vec![false; n];
    for &(_, i) in keyed.iter().take(want) {
        out[i] = true;
    }
    out
}

fn split_samples(ds: &Dataset, cfg: &TrainConfig) -> (Vec<SampleIndex>, Vec<SampleIndex>, Vec<String>) {
    let held = holdout_split(&ds.ids, cfg.seed, cfg.holdout_fraction);
    let (mut train, mut hold) = (Vec::new(), Vec::new());
    for &s in &ds.samples {
        if held[s.episode] {
            hold.push(s);
        } else {
            train.push(s);
        }
    }
    let names = ds.ids.iter().zip(&held).filter(|(_, &h)| h).map(|(id, _)| id.clone()).collect();
    (train, hold, names)
}

/// Evenly spaced subset of each episode's frames, or every frame.
pub fn mask_subset(samples: &[SampleIndex], per_episode: Option<usize>) -> Vec<SampleIndex> {
    let Some(n) = per_episode else {
        return samples.to_vec();
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let ep = samples[start].episode;
        let end = start + samples[start..].iter().take_while(|s| s.episode == ep).count();
        let group = &samples[start..end];
        if n >= group.len() {
            out.extend_from_slice(group);
        } else if n == 1 {
            out.push(group[group.len() / 2]);
        } else {
            let mut last = None;
            for i in 0..n {
                let j = (i * (group.len() - 1) + (n - 1) / 2) / (n - 1);
                if last != Some(j) {
                    out.push(group[j]);
                    last = Some(j);
                }
            }
        }
        start = end;
    }
    out
}

fn shuffled(samples: &[SampleIndex], seed: u64, phase: &str, epoch: usize) -> Vec<SampleIndex> {
    let mut order = samples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{phase}/epoch/{epoch}")));
    order.shuffle(&mut rng);
    order
}

fn accumulate(acc: &mut [Option<Tensor<f32>>], grads: Vec<Option<Tensor<f32>>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => a.add_assign(&g),
            (None, Some(g)) => *a = Some(g),
            _ => {}
        }
    }
}

fn mean_grads(acc: Vec<Option<Tensor<f32>>>, n: usize) -> Vec<Option<Tensor<f32>>> {
    let inv = 1.0 / n as f32;
    acc.into_iter()
        .map(|g| {
            g.map(|mut g| {
                g.scale(inv);
                g
            })
        })
        .collect()
}

fn check_loss(loss: f64, epoch: usize, batch: usize) -> Result<(), TrainError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite { epoch, batch, loss })
    }
}

fn attention_loss(params: &[Param<f32>], ds: &Dataset, s: SampleIndex, cfg: &crate::net::NetConfig) -> Result<f64, TrainError> {
    let map = attention_forward(&ds.frame(s).to_tensor(), params, cfg)?;
    Ok(crate::numerics::ops::bce_loss(&map, &ds.mask(s).to_tensor())? as f64)
}

/// Mean IoU at threshold 0.5 over the given samples.
pub fn attention_iou(params: &PolicyParams<f32>, ds: &Dataset, samples: &[SampleIndex]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for &s in samples {
        let map = attention_forward(&ds.frame(s).to_tensor(), &params.theta1, &params.config)?;
        total += iou(&map, &ds.mask(s).to_tensor(), 0.5);
    }
    Ok(total / samples.len() as f64)
}

/// Phase 1 from freshly initialised parameters.
pub fn train_attention(
    ds: &Dataset,
    net: crate::net::NetConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(PolicyParams<f32>, TrainLog), TrainError> {
    let params = PolicyParams::init(net, derive_seed(cfg.seed, "init"))?;
    train_attention_from(params, ds, cfg, on_epoch)
}

/// Minimise mean BCE between attention maps and bowl masks.
pub fn train_attention_from(
    mut params: PolicyParams<f32>,
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(PolicyParams<f32>, TrainLog), TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let net = params.config.clone();
    let (train_all, hold_all, holdout_episodes) = split_samples(ds, cfg);
    let train = mask_subset(&train_all, cfg.mask_frames);
    let hold = mask_subset(&hold_all, cfg.mask_frames);
    if train.is_empty() {
        return Err(TrainError::Config("no training samples".into()));
    }
    params.set_frozen1(false);
    let mut state = AdamState::new(&params.theta1);
    let sched = cfg.schedule();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, &sched)?;
        let order = shuffled(&train, cfg.seed, "attention", epoch);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Option<Tensor<f32>>> = vec![None; params.theta1.len()];
            for &s in batch {
                let mut tape = Tape::new();
                let vars: Vec<_> = params.theta1.iter().map(|p| tape.param(p.value.clone())).collect();
                let image = tape.constant(ds.frame(s).to_tensor());
                let map = attention_on_tape(&mut tape, image, &vars, &net)?;
                let loss = tape.bce_loss(map, &ds.mask(s).to_tensor())?;
                let value = tape.value(loss).item() as f64;
                check_loss(value, epoch, b)?;
                total += value;
                let mut g = tape.backward(loss)?;
                accumulate(&mut acc, vars.iter().map(|&v| g.take(v)).collect());
            }
            adam_step(&mut params.theta1, &mean_grads(acc, batch.len()), &mut state, lr)?;
        }
        let mut hold_loss = 0.0;
        for &s in &hold {
            hold_loss += attention_loss(&params.theta1, ds, s, &net)?;
        }
        let rec = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            holdout_loss: if hold.is_empty() { f64::NAN } else { hold_loss / hold.len() as f64 },
            lr,
        };
        check_loss(rec.train_loss, epoch, 0)?;
        on_epoch(&rec);
        log.push(rec);
    }
    let final_metric = attention_iou(&params, ds, &hold_all)?;
    Ok((
        params,
        TrainLog {
            phase: "attention".into(),
            epochs: log,
            train_samples: train.len(),
            holdout_samples: hold.len(),
            holdout_episodes,
            final_metric,
            final_metric_name: "holdout_iou".into(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Precomputed head inputs for one sample: centroid, history, target.
struct HeadSample {
    centroid: Tensor<f32>,
    history: Tensor<f32>,
    target: Tensor<f32>,
}

fn head_samples(params: &PolicyParams<f32>, ds: &Dataset, samples: &[SampleIndex]) -> Result<Vec<HeadSample>, TrainError> {
    let cfg = &params.config;
    // theta1 is frozen, so each sample's centroid is computed once up front.
    samples
        .iter()
        .map(|&s| {
            let map = attention_forward(&ds.frame(s).to_tensor(), &params.theta1, cfg)?;
            let (x, y) = extract_centroid(&map, cfg.tau)?;
            let target: Vec<f32> = ds.target(s).normalized().into_iter().map(|v| v as f32).collect();
            Ok(HeadSample {
                centroid: Tensor::from_vec(vec![x as f32, y as f32]),
                history: history_features(ds.history(s), cfg.k)?,
                target: Tensor::from_vec(target),
            })
        })
        .collect()
}

fn head_params(params: &PolicyParams<f32>) -> Vec<Param<f32>> {
    params.theta2.iter().chain(&params.theta3).chain(&params.theta4).cloned().collect()
}

fn store_head(params: &mut PolicyParams<f32>, head: Vec<Param<f32>>) {
    let mut it = head.into_iter();
    for group in [&mut params.theta2, &mut params.theta3, &mut params.theta4] {
        for p in group.iter_mut() {
            *p = it.next().expect("same layout");
        }
    }
}

fn head_mse(params: &PolicyParams<f32>, samples: &[HeadSample]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for s in samples {
        let h = (s.centroid.data()[0] as f64, s.centroid.data()[1] as f64);
        let (_, _, out) = head_forward(params, h, &s.history)?;
        total += crate::numerics::ops::mse_loss(&out, &s.target)? as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Phase 2: freeze theta1 and fit theta2..theta4 by behaviour cloning.
/// The head starts from `derive_seed(cfg.seed, "init")`.
pub fn train_policy(
    attention: &PolicyParams<f32>,
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(PolicyParams<f32>, TrainLog), TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut net = attention.config.clone();
    if net.k != ds.k || net.m != ds.m {
        // The head shape follows the dataset; attention is shape-independent.
        net.k = ds.k;
        net.m = ds.m;
    }
    let mut params = PolicyParams::init(net, derive_seed(cfg.seed, "init"))?;
    params.theta1 = attention.theta1.clone();
    params.set_frozen1(true);
    let theta1_sum = checksum(&params.theta1);

    let (train_idx, hold_idx, holdout_episodes) = split_samples(ds, cfg);
    if train_idx.is_empty() {
        return Err(TrainError::Config("no training samples".into()));
    }
    let train = head_samples(&params, ds, &train_idx)?;
    let hold = head_samples(&params, ds, &hold_idx)?;

    let mut head = head_params(&params);
    let mut state = AdamState::new(&head);
    let sched = cfg.schedule();
    let mut log = Vec::with_capacity(cfg.epochs);
    let positions: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, &sched)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("policy/epoch/{epoch}")));
        let mut order = positions.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Option<Tensor<f32>>> = vec![None; head.len()];
            for &i in batch {
                let s = &train[i];
                let mut tape = Tape::new();
                let vars: Vec<_> = head.iter().map(|p| tape.param(p.value.clone())).collect();
                let hv = HeadVars {
                    theta2: vars[..2].to_vec(),
                    theta3: vars[2..4].to_vec(),
                    theta4: vars[4..].to_vec(),
                };
                let c = tape.constant(s.centroid.clone());
                let h = tape.constant(s.history.clone());
                let out = head_on_tape(&mut tape, &hv, c, h)?;
                let loss = tape.mse_loss(out.action, &s.target)?;
                let value = tape.value(loss).item() as f64;
                check_loss(value, epoch, b)?;
                total += value;
                let mut g = tape.backward(loss)?;
                accumulate(&mut acc, vars.iter().map(|&v| g.take(v)).collect());
            }
            adam_step(&mut head, &mean_grads(acc, batch.len()), &mut state, lr)?;
        }
        store_head(&mut params, head.clone());
        let rec = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            holdout_loss: head_mse(&params, &hold)?,
            lr,
        };
        check_loss(rec.train_loss, epoch, 0)?;
        on_epoch(&rec);
        log.push(rec);
    }
    debug_assert_eq!(theta1_sum, checksum(&params.theta1));
    let final_metric = log.last().map(|r| r.holdout_loss).unwrap_or(f64::NAN);
    Ok((
        params,
        TrainLog {
            phase: "policy".into(),
            epochs: log,
            train_samples: train.len(),
            holdout_samples: hold.len(),
            holdout_episodes,
            final_metric,
            final_metric_name: "holdout_chunk_mse".into(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}
