//! Gradient suites and brute-force oracles shared by the numerics tests and
//! the acceptance run.
#![allow(dead_code)]

use avil_core::net::policy::{head_on_tape, history_features, HeadVars};
use avil_core::net::{attention, NetConfig, NetError, PolicyParams};
use avil_core::numerics::ops::{self, Activation, PoolMode};
use avil_core::numerics::*;
use avil_core::sim::HOME;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DRAWS: usize = 100;
pub const GRAD_TOL: f64 = 1e-4;
pub const HEAD_TOL: f64 = 1e-3;
pub const ORACLE_SHAPES: usize = 50;
pub const ORACLE_TOL: f64 = 1e-5;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn weights_like(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    rand_tensor(rng, shape, -1.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub draws: usize,
    pub checked: usize,
    pub max_rel_error: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.draws >= DRAWS && self.checked > self.draws && self.max_rel_error < GRAD_TOL
    }
}

/// `DRAWS` gradient checks, each with fresh inputs and reduction weights.
pub fn suite<G, F>(name: &str, seed: u64, mut gen: G, f: F) -> SuiteResult
where
    G: FnMut(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Vec<usize>),
    F: Fn(&mut Tape<f64>, &[Var], &[usize]) -> Result<Var, TensorError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteResult {
        name: name.to_string(),
        draws: 0,
        checked: 0,
        max_rel_error: 0.0,
    };
    for _ in 0..DRAWS {
        let (inputs, meta) = gen(&mut rng);
        let r = grad_check(|t, v| f(t, v, &meta), &inputs).unwrap();
        out.draws += 1;
        out.checked += r.checked;
        out.max_rel_error = out.max_rel_error.max(r.max_rel_error);
    }
    out
}

pub fn reduce(t: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var, TensorError> {
    let shape = t.value(y).shape().to_vec();
    let w = weights_like(&mut ChaCha8Rng::seed_from_u64(seed), &shape);
    t.weighted_sum(y, &w)
}

pub fn conv2d_suite() -> SuiteResult {
    suite(
        "conv2d",
        1,
        |rng| {
            let c = rng.gen_range(1..4);
            let o = rng.gen_range(1..4);
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let h = rng.gen_range(k.max(2)..8);
            let w = rng.gen_range(k.max(2)..8);
            let stride = rng.gen_range(1..3);
            let pad = rng.gen_range(0..=k / 2);
            let x = rand_tensor(rng, &[c, h, w], -1.0, 1.0);
            let wt = weights_like(rng, &[o, c, k, k]);
            let b = weights_like(rng, &[o]);
            (vec![x, wt, b], vec![stride, pad, rng.gen()])
        },
        |t, v, m| {
            let y = t.conv2d(v[0], v[1], v[2], m[0], m[1])?;
            reduce(t, y, m[2] as u64)
        },
    )
}

pub fn channel_pool_suite(mode: PoolMode) -> SuiteResult {
    let (name, seed) = match mode {
        PoolMode::Max => ("channel_pool_max", 10),
        PoolMode::Avg => ("channel_pool_avg", 11),
    };
    suite(
        name,
        seed,
        |rng| {
            let shape = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6)];
            (vec![rand_tensor(rng, &shape, -1.0, 1.0)], vec![rng.gen()])
        },
        |t, v, m| {
            let y = t.channel_pool(v[0], mode)?;
            reduce(t, y, m[0] as u64)
        },
    )
}

pub fn linear_suite() -> SuiteResult {
    suite(
        "linear",
        2,
        |rng| {
            let n = rng.gen_range(1..10);
            let d = rng.gen_range(1..10);
            let x = if rng.gen() {
                weights_like(rng, &[n])
            } else {
                let b = rng.gen_range(1..4);
                weights_like(rng, &[b, n])
            };
            (vec![x, weights_like(rng, &[d, n]), weights_like(rng, &[d])], vec![rng.gen()])
        },
        |t, v, m| {
            let y = t.linear(v[0], v[1], v[2])?;
            reduce(t, y, m[0] as u64)
        },
    )
}

pub fn activation_suite(kind: Activation) -> SuiteResult {
    let (name, seed) = match kind {
        Activation::Relu => ("relu", 20),
        Activation::Sigmoid => ("sigmoid", 21),
    };
    suite(
        name,
        seed,
        |rng| {
            let n = rng.gen_range(1..20);
            (vec![rand_tensor(rng, &[n], -4.0, 4.0)], vec![rng.gen()])
        },
        |t, v, m| {
            let y = t.activation(v[0], kind)?;
            reduce(t, y, m[0] as u64)
        },
    )
}

pub fn concat_reshape_suite() -> SuiteResult {
    suite(
        "concat_reshape",
        3,
        |rng| {
            let rows = rng.gen_range(1..4);
            let (na, nb) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let a = weights_like(rng, &[rows, na]);
            let b = weights_like(rng, &[rows, nb]);
            (vec![a, b], vec![rng.gen()])
        },
        |t, v, m| {
            let y = t.concat(&[v[0], v[1]], 1)?;
            let n = t.value(y).len();
            let y = t.reshape(y, &[n])?;
            reduce(t, y, m[0] as u64)
        },
    )
}

pub fn bce_suite() -> SuiteResult {
    suite(
        "bce_loss",
        4,
        |rng| {
            let n = rng.gen_range(1..20);
            (vec![rand_tensor(rng, &[n], 0.05, 0.95)], vec![rng.gen()])
        },
        |t, v, m| {
            let n = t.value(v[0]).len();
            let mut rng = ChaCha8Rng::seed_from_u64(m[0] as u64);
            let target = Tensor::from_vec((0..n).map(|_| if rng.gen() { 1.0 } else { 0.0 }).collect());
            t.bce_loss(v[0], &target)
        },
    )
}

pub fn mse_suite() -> SuiteResult {
    suite(
        "mse_loss",
        5,
        |rng| {
            let n = rng.gen_range(1..20);
            (vec![weights_like(rng, &[n])], vec![rng.gen()])
        },
        |t, v, m| {
            let shape = t.value(v[0]).shape().to_vec();
            let target = weights_like(&mut ChaCha8Rng::seed_from_u64(m[0] as u64), &shape);
            t.mse_loss(v[0], &target)
        },
    )
}

/// conv -> relu -> both pools -> concat -> conv -> sigmoid -> bce
pub fn composed_suite() -> SuiteResult {
    suite(
        "composed_attention_graph",
        6,
        |rng| {
            let h = rng.gen_range(3..7);
            let w = rng.gen_range(3..7);
            let x = rand_tensor(rng, &[3, h, w], 0.0, 1.0);
            let w1 = weights_like(rng, &[4, 3, 3, 3]);
            let b1 = weights_like(rng, &[4]);
            let w2 = weights_like(rng, &[1, 2, 3, 3]);
            let b2 = weights_like(rng, &[1]);
            (vec![x, w1, b1, w2, b2], vec![h, w, rng.gen()])
        },
        |t, v, m| {
            let a = t.conv2d(v[0], v[1], v[2], 1, 1)?;
            let a = t.relu(a)?;
            let mx = t.channel_pool(a, PoolMode::Max)?;
            let av = t.channel_pool(a, PoolMode::Avg)?;
            let f = t.concat(&[mx, av], 0)?;
            let z = t.conv2d(f, v[3], v[4], 1, 1)?;
            let s = t.sigmoid(z)?;
            let mut rng = ChaCha8Rng::seed_from_u64(m[2] as u64);
            let target = Tensor::new([1, m[0], m[1]], (0..m[0] * m[1]).map(|_| rng.gen_range(0..2) as f64).collect())?;
            t.bce_loss(s, &target)
        },
    )
}

pub fn all_suites() -> Vec<SuiteResult> {
    vec![
        conv2d_suite(),
        channel_pool_suite(PoolMode::Max),
        channel_pool_suite(PoolMode::Avg),
        linear_suite(),
        activation_suite(Activation::Relu),
        activation_suite(Activation::Sigmoid),
        concat_reshape_suite(),
        bce_suite(),
        mse_suite(),
        composed_suite(),
    ]
}

/// BC loss gradient w.r.t. theta2..theta4 on a 16x16 instance.
pub fn head_gradient_report() -> GradCheckReport {
    let cfg = NetConfig {
        height: 16,
        width: 16,
        ..NetConfig::default()
    };
    let params = PolicyParams::<f64>::init(cfg.clone(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let image = Tensor::new([3, 16, 16], (0..3 * 256).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let centroid = attention::attend(&image, &params.theta1, &cfg).unwrap().centroid;
    let history = history_features::<f64>(&[HOME; 4], cfg.k).unwrap();
    let target = Tensor::from_vec((0..cfg.m * 6).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let inputs: Vec<Tensor<f64>> = params
        .theta2
        .iter()
        .chain(&params.theta3)
        .chain(&params.theta4)
        .map(|p| p.value.clone())
        .collect();
    grad_check(
        |tape, vars| {
            let head = HeadVars {
                theta2: vars[..2].to_vec(),
                theta3: vars[2..4].to_vec(),
                theta4: vars[4..].to_vec(),
            };
            let c = tape.constant(Tensor::from_vec(vec![centroid.0, centroid.1]));
            let h = tape.constant(history.clone());
            let out = head_on_tape(tape, &head, c, h).map_err(|e| match e {
                NetError::Tensor(t) => t,
                other => panic!("{other}"),
            })?;
            tape.mse_loss(out.action, &target)
        },
        &inputs,
    )
    .unwrap()
}

pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; o * ho * wo];
    for oc in 0..o {
        for i in 0..ho {
            for j in 0..wo {
                let mut s = b.data()[oc];
                for ic in 0..c {
                    for ki in 0..k {
                        for kj in 0..k {
                            let ii = (i * stride + ki) as isize - pad as isize;
                            let jj = (j * stride + kj) as isize - pad as isize;
                            if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < wd {
                                s += w.data()[((oc * c + ic) * k + ki) * k + kj]
                                    * x.data()[(ic * h + ii as usize) * wd + jj as usize];
                            }
                        }
                    }
                }
                out[(oc * ho + i) * wo + j] = s;
            }
        }
    }
    Tensor::new([o, ho, wo], out).unwrap()
}

pub fn naive_linear(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (d, n) = (w.shape()[0], w.shape()[1]);
    Tensor::from_vec(
        (0..d)
            .map(|r| b.data()[r] + (0..n).map(|i| w.data()[r * n + i] * x.data()[i]).sum::<f64>())
            .collect(),
    )
}

pub fn naive_pool(img: &Tensor<f64>, mode: PoolMode) -> Tensor<f64> {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    let hw = h * w;
    let column = |p: usize| (0..c).map(move |ch| img.data()[ch * hw + p]);
    let data = (0..hw)
        .map(|p| match mode {
            PoolMode::Max => column(p).fold(f64::MIN, f64::max),
            PoolMode::Avg => column(p).sum::<f64>() / c as f64,
        })
        .collect();
    Tensor::new([1, h, w], data).unwrap()
}

/// Largest elementwise gap between the f32 ops and the oracles, per op,
/// over `ORACLE_SHAPES` random shapes each.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleGaps {
    pub shapes: usize,
    pub conv2d: f64,
    pub pool_max: f64,
    pub pool_avg: f64,
    pub linear: f64,
}

impl OracleGaps {
    pub fn worst(&self) -> f64 {
        self.conv2d.max(self.pool_max).max(self.pool_avg).max(self.linear)
    }
}

pub fn oracle_gaps(seed: u64) -> OracleGaps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = OracleGaps::default();
    for _ in 0..ORACLE_SHAPES {
        let c = rng.gen_range(1..5);
        let o = rng.gen_range(1..5);
        let k = [1, 3, 5, 7][rng.gen_range(0..4)];
        let h = rng.gen_range(k..20);
        let w = rng.gen_range(k..20);
        let stride = rng.gen_range(1..3);
        let pad = rng.gen_range(0..=k / 2);
        let x = rand_tensor(&mut rng, &[c, h, w], 0.0, 1.0);
        let wt = weights_like(&mut rng, &[o, c, k, k]);
        let b = weights_like(&mut rng, &[o]);
        let expect = naive_conv(&x, &wt, &b, stride, pad);
        let got = ops::conv2d(&x.cast::<f32>(), &wt.cast::<f32>(), &b.cast::<f32>(), stride, pad).unwrap();
        assert_eq!(got.shape(), expect.shape());
        g.conv2d = g.conv2d.max(got.cast::<f64>().max_abs_diff(&expect));

        let n = rng.gen_range(1..40);
        let d = rng.gen_range(1..40);
        let x = weights_like(&mut rng, &[n]);
        let w = weights_like(&mut rng, &[d, n]);
        let b = weights_like(&mut rng, &[d]);
        let got = ops::linear(&x.cast::<f32>(), &w.cast::<f32>(), &b.cast::<f32>()).unwrap();
        g.linear = g.linear.max(got.cast::<f64>().max_abs_diff(&naive_linear(&x, &w, &b)));

        let shape = [rng.gen_range(1..9), rng.gen_range(1..9), rng.gen_range(1..9)];
        let img = rand_tensor(&mut rng, &shape, 0.0, 1.0);
        let got_max = ops::channel_pool(&img.cast::<f32>(), PoolMode::Max).unwrap();
        let got_avg = ops::channel_pool(&img.cast::<f32>(), PoolMode::Avg).unwrap();
        g.pool_max = g.pool_max.max(got_max.cast::<f64>().max_abs_diff(&naive_pool(&img, PoolMode::Max)));
        g.pool_avg = g.pool_avg.max(got_avg.cast::<f64>().max_abs_diff(&naive_pool(&img, PoolMode::Avg)));
        g.shapes += 1;
    }
    g
}
