//! Reverse-mode differentiation over a linear record of executed ops.

use super::ops::{self, Activation, ConvGeometry, PoolMode};
use super::tensor::{dim_err, Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geometry: ConvGeometry,
        cols: Vec<T>,
    },
    ChannelPool {
        input: Var,
        mode: PoolMode,
        argmax: Vec<u32>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reshape {
        input: Var,
    },
    Bce {
        pred: Var,
        target: Tensor<T>,
    },
    Mse {
        pred: Var,
        target: Tensor<T>,
    },
    WeightedSum {
        input: Var,
        weights: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Records operations in execution order and replays them backwards.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    visited: Vec<Var>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    /// Nodes whose backward rule ran, in the order they were visited.
    pub fn visit_order(&self) -> &[Var] {
        &self.visited
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Trainable parameter.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Input or frozen parameter; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var, TensorError> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let geometry = ConvGeometry::infer(x, w, b, stride, pad)?;
        let (out, cols) = ops::conv2d_forward(x, w, b, stride, pad)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            out,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
                cols,
            },
        ))
    }

    pub fn channel_pool(&mut self, input: Var, mode: PoolMode) -> Result<Var, TensorError> {
        let (out, argmax) = ops::channel_pool_forward(self.value(input), mode)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, rg, Op::ChannelPool { input, mode, argmax }))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let out = ops::linear(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(out, rg, Op::Linear { input, weight, bias }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var, TensorError> {
        let out = ops::activation(self.value(input), kind)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, rg, Op::Activation { input, kind }))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var, TensorError> {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var, TensorError> {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat(&values, axis)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(
            out,
            rg,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let out = self.value(input).clone().reshape(shape.to_vec())?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, rg, Op::Reshape { input }))
    }

    pub fn bce_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var, TensorError> {
        let loss = ops::bce_loss(self.value(pred), target)?;
        let rg = self.any_grad(&[pred]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::Bce {
                pred,
                target: target.clone(),
            },
        ))
    }

    pub fn mse_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var, TensorError> {
        let loss = ops::mse_loss(self.value(pred), target)?;
        let rg = self.any_grad(&[pred]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    /// `Σ input ⊙ weights` with constant weights, reducing to a scalar.
    pub fn weighted_sum(&mut self, input: Var, weights: &Tensor<T>) -> Result<Var, TensorError> {
        let x = self.value(input);
        if x.shape() != weights.shape() {
            return Err(dim_err("weighted_sum", format!("{:?} vs {:?}", x.shape(), weights.shape())));
        }
        let s = x.data().iter().zip(weights.data()).fold(T::ZERO, |a, (&x, &w)| a + x * w);
        let rg = self.any_grad(&[input]);
        Ok(self.push(
            Tensor::scalar(s),
            rg,
            Op::WeightedSum {
                input,
                weights: weights.clone(),
            },
        ))
    }

    /// Backpropagate from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if self.value(loss).len() != 1 {
            return Err(dim_err("backward", format!("loss must be scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut visited = Vec::new();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads, visited });
        }
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![T::ONE])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            visited.push(Var(idx));
            let acc = |grads: &mut Vec<Option<Tensor<T>>>, var: Var, delta: Tensor<T>| {
                if !self.nodes[var.0].requires_grad {
                    return;
                }
                match &mut grads[var.0] {
                    Some(existing) => existing.add_assign(&delta),
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geometry,
                    cols,
                } => {
                    let need_input = self.nodes[input.0].requires_grad;
                    let cg = ops::conv2d_backward(geometry, self.value(*weight), cols, &g, need_input)?;
                    if let Some(dx) = cg.input {
                        acc(&mut grads, *input, dx);
                    }
                    acc(&mut grads, *weight, cg.weight);
                    acc(&mut grads, *bias, cg.bias);
                }
                Op::ChannelPool { input, mode, argmax } => {
                    let dx = ops::channel_pool_backward(self.value(*input).shape(), *mode, argmax, &g)?;
                    acc(&mut grads, *input, dx);
                }
                Op::Linear { input, weight, bias } => {
                    let need_input = self.nodes[input.0].requires_grad;
                    let lg = ops::linear_backward(self.value(*input), self.value(*weight), &g, need_input)?;
                    if let Some(dx) = lg.input {
                        acc(&mut grads, *input, dx);
                    }
                    acc(&mut grads, *weight, lg.weight);
                    acc(&mut grads, *bias, lg.bias);
                }
                Op::Activation { input, kind } => {
                    let dx = ops::activation_backward(self.value(*input), &node.value, *kind, &g);
                    acc(&mut grads, *input, dx);
                }
                Op::Concat { inputs, axis } => {
                    let extents: Vec<usize> = inputs.iter().map(|v| self.value(*v).shape()[*axis]).collect();
                    for (var, part) in inputs.iter().zip(ops::split(&g, *axis, &extents)?) {
                        acc(&mut grads, *var, part);
                    }
                }
                Op::Reshape { input } => {
                    let dx = g.reshape(self.value(*input).shape().to_vec())?;
                    acc(&mut grads, *input, dx);
                }
                Op::Bce { pred, target } => {
                    let dx = ops::bce_loss_backward(self.value(*pred), target, g.item());
                    acc(&mut grads, *pred, dx);
                }
                Op::Mse { pred, target } => {
                    let dx = ops::mse_loss_backward(self.value(*pred), target, g.item());
                    acc(&mut grads, *pred, dx);
                }
                Op::WeightedSum { input, weights } => {
                    let scale = g.item();
                    acc(&mut grads, *input, weights.map(|w| w * scale));
                }
            }
        }
        Ok(Gradients { grads, visited })
    }
}
