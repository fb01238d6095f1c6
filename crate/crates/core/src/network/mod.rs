//! Residual convolutional policy/value network with hand-written backprop.
//!
//! Architecture: a 3x3 stem convolution (6 -> C) with rectifier, `B`
//! residual blocks (`relu(x + conv(relu(conv(x))))`), a 1x1 policy head
//! producing `4 * H * W` logits, and a 1x1 value head followed by an affine
//! layer over the flattened board and a sigmoid.
//!
//! All parameters live in one flat vector; [`NetShape::tensors`] documents the
//! layout, which is also the checkpoint payload order. The network is generic
//! over the float type so the same code can be checked in `f64` and run in
//! `f32`.

mod checkpoint;
mod layers;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::Range;

use num_traits::{Float, NumAssign};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{Level, PlaneStack, Push, State, NUM_PLANES};
use crate::evaluator::{Evaluation, Evaluator};
use layers::*;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta, CHECKPOINT_VERSION};
pub use train::{train_iteration, Sgd, TrainConfig, TrainReport, TrainingExample};

pub trait Real: Float + NumAssign + Sum + Send + Sync + Debug + Default + 'static {}
impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("shape mismatch: network is {net_h}x{net_w}, input is {in_h}x{in_w}")]
    ShapeMismatch {
        net_h: usize,
        net_w: usize,
        in_h: usize,
        in_w: usize,
    },
    #[error("parameter vector has {got} entries, shape needs {want}")]
    ParamCount { got: usize, want: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub blocks: usize,
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    stem_w: Range<usize>,
    stem_b: Range<usize>,
    blocks: Vec<[Range<usize>; 4]>,
    policy_w: Range<usize>,
    policy_b: Range<usize>,
    value_w: Range<usize>,
    value_b: Range<usize>,
    fc_w: Range<usize>,
    fc_b: Range<usize>,
    total: usize,
}

impl NetShape {
    pub fn new(height: usize, width: usize, channels: usize, blocks: usize) -> Self {
        NetShape {
            height,
            width,
            channels,
            blocks,
        }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn action_space(&self) -> usize {
        4 * self.cells()
    }

    /// Named tensors in payload order with their flat ranges and fan-in.
    pub fn tensors(&self) -> Vec<(String, Range<usize>, usize)> {
        let c = self.channels;
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize, fan_in: usize| {
            out.push((name, at..at + len, fan_in));
            at += len;
        };
        push("stem.weight".into(), c * NUM_PLANES * 9, NUM_PLANES * 9);
        push("stem.bias".into(), c, 0);
        for b in 0..self.blocks {
            push(format!("block{b}.conv1.weight"), c * c * 9, c * 9);
            push(format!("block{b}.conv1.bias"), c, 0);
            push(format!("block{b}.conv2.weight"), c * c * 9, c * 9);
            push(format!("block{b}.conv2.bias"), c, 0);
        }
        push("policy.weight".into(), 4 * c, c);
        push("policy.bias".into(), 4, 0);
        push("value.weight".into(), c, c);
        push("value.bias".into(), 1, 0);
        push("value_fc.weight".into(), self.cells(), self.cells());
        push("value_fc.bias".into(), 1, 0);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().last().map(|t| t.1.end).unwrap_or(0)
    }

    fn layout(&self) -> Layout {
        let t: Vec<Range<usize>> = self.tensors().into_iter().map(|t| t.1).collect();
        let nb = self.blocks;
        let tail = 2 + 4 * nb;
        Layout {
            stem_w: t[0].clone(),
            stem_b: t[1].clone(),
            blocks: (0..nb)
                .map(|b| {
                    let i = 2 + 4 * b;
                    [
                        t[i].clone(),
                        t[i + 1].clone(),
                        t[i + 2].clone(),
                        t[i + 3].clone(),
                    ]
                })
                .collect(),
            policy_w: t[tail].clone(),
            policy_b: t[tail + 1].clone(),
            value_w: t[tail + 2].clone(),
            value_b: t[tail + 3].clone(),
            fc_w: t[tail + 4].clone(),
            fc_b: t[tail + 5].clone(),
            total: t[tail + 5].end,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Real> {
    shape: NetShape,
    layout: Layout,
    params: Vec<T>,
}

/// Activations kept for the backward pass.
struct Trace<T> {
    input: Vec<T>,
    stem: Vec<T>,
    // per block: inner activation and block output
    blocks: Vec<(Vec<T>, Vec<T>)>,
    value_map: Vec<T>,
    logits: Vec<T>,
    value: T,
}

/// Network output for one position.
#[derive(Clone, Debug, PartialEq)]
pub struct Output<T> {
    /// Masked softmax over the flat action space; exactly zero off the mask.
    pub policy: Vec<T>,
    pub value: T,
}

impl<T: Real> Network<T> {
    /// He-style fan-in initialization; biases start at zero.
    pub fn new(shape: NetShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); shape.param_count()];
        for (_, range, fan_in) in shape.tensors() {
            if fan_in == 0 {
                continue;
            }
            let std = (2.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = T::from(z * std).unwrap();
            }
        }
        Network {
            layout: shape.layout(),
            shape,
            params,
        }
    }

    pub fn from_params(shape: NetShape, params: Vec<T>) -> Result<Self, NetworkError> {
        if params.len() != shape.param_count() {
            return Err(NetworkError::ParamCount {
                got: params.len(),
                want: shape.param_count(),
            });
        }
        Ok(Network {
            layout: shape.layout(),
            shape,
            params,
        })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Mutable view of one named tensor (see [`NetShape::tensors`]).
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.shape.tensors().into_iter().find(|t| t.0 == name)?.1;
        Some(&mut self.params[range])
    }

    /// Same weights in another float type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            shape: self.shape,
            layout: self.layout.clone(),
            params: self.params.iter().map(|&p| U::from(p).unwrap()).collect(),
        }
    }

    pub fn squared_norm(&self) -> T {
        self.params.iter().map(|&p| p * p).sum()
    }

    pub fn check_planes(&self, planes: &PlaneStack) -> Result<(), NetworkError> {
        if planes.height != self.shape.height || planes.width != self.shape.width {
            return Err(NetworkError::ShapeMismatch {
                net_h: self.shape.height,
                net_w: self.shape.width,
                in_h: planes.height,
                in_w: planes.width,
            });
        }
        Ok(())
    }

    fn trace(&self, planes: &PlaneStack) -> Trace<T> {
        let s = &self.shape;
        let (h, w, c, hw) = (s.height, s.width, s.channels, s.cells());
        let p = &self.params;
        let l = &self.layout;
        let input: Vec<T> = planes.data.iter().map(|&x| T::from(x).unwrap()).collect();

        let mut stem = vec![T::zero(); c * hw];
        conv3x3_forward(
            &input,
            NUM_PLANES,
            &p[l.stem_w.clone()],
            &p[l.stem_b.clone()],
            c,
            h,
            w,
            &mut stem,
        );
        relu_in_place(&mut stem);

        let mut blocks = Vec::with_capacity(s.blocks);
        for [w1, b1, w2, b2] in &l.blocks {
            let x = blocks
                .last()
                .map(|b: &(Vec<T>, Vec<T>)| &b.1)
                .unwrap_or(&stem);
            let mut inner = vec![T::zero(); c * hw];
            conv3x3_forward(x, c, &p[w1.clone()], &p[b1.clone()], c, h, w, &mut inner);
            relu_in_place(&mut inner);
            let mut out = vec![T::zero(); c * hw];
            conv3x3_forward(&inner, c, &p[w2.clone()], &p[b2.clone()], c, h, w, &mut out);
            for (o, &xi) in out.iter_mut().zip(x) {
                *o += xi;
            }
            relu_in_place(&mut out);
            blocks.push((inner, out));
        }
        let trunk = blocks.last().map(|b| &b.1).unwrap_or(&stem);

        let mut logits = vec![T::zero(); 4 * hw];
        conv1x1_forward(
            trunk,
            c,
            &p[l.policy_w.clone()],
            &p[l.policy_b.clone()],
            4,
            hw,
            &mut logits,
        );
        let mut value_map = vec![T::zero(); hw];
        conv1x1_forward(
            trunk,
            c,
            &p[l.value_w.clone()],
            &p[l.value_b.clone()],
            1,
            hw,
            &mut value_map,
        );
        let z = p[l.fc_b.start]
            + p[l.fc_w.clone()]
                .iter()
                .zip(&value_map)
                .map(|(&a, &b)| a * b)
                .sum::<T>();
        let value = sigmoid(z);
        Trace {
            input,
            stem,
            blocks,
            value_map,
            logits,
            value,
        }
    }

    /// Forward pass for one position with its legal-action mask.
    pub fn forward_one(
        &self,
        planes: &PlaneStack,
        legal: &[bool],
    ) -> Result<Output<T>, NetworkError> {
        self.check_planes(planes)?;
        let t = self.trace(planes);
        Ok(Output {
            policy: masked_softmax(&t.logits, legal),
            value: t.value,
        })
    }

    /// Batched forward pass.
    pub fn forward(
        &self,
        planes: &[PlaneStack],
        legal_masks: &[Vec<bool>],
    ) -> Result<Vec<Output<T>>, NetworkError> {
        planes
            .iter()
            .zip(legal_masks)
            .map(|(pl, m)| self.forward_one(pl, m))
            .collect()
    }

    /// Loss and gradient of a single example's data terms (no weight decay),
    /// scaled by `scale`, accumulated into `grad`.
    fn accumulate(&self, ex: &TrainingExample, scale: T, grad: &mut [T]) -> T {
        let s = &self.shape;
        let (h, w, c, hw) = (s.height, s.width, s.channels, s.cells());
        let p = &self.params;
        let l = &self.layout;
        let t = self.trace(&ex.planes);

        // value term
        let u = T::from(ex.u).unwrap();
        let v = t.value;
        let mut loss = (u - v) * (u - v);
        let dz = scale * (v - u) * T::from(2.0).unwrap() * v * (T::one() - v);

        // policy term: d/dlogit = p - pi on legal entries
        let policy = masked_softmax(&t.logits, &ex.legal_mask);
        let mut dlogits = vec![T::zero(); 4 * hw];
        if let Some(lse) = masked_logsumexp(&t.logits, &ex.legal_mask) {
            for a in 0..4 * hw {
                if !ex.legal_mask[a] {
                    continue;
                }
                let pi = T::from(ex.pi[a]).unwrap();
                if pi > T::zero() {
                    loss -= pi * (t.logits[a] - lse);
                }
                dlogits[a] = scale * (policy[a] - pi);
            }
        }

        // value head
        let d_fc_w = &mut grad[l.fc_w.clone()];
        for (g, &m) in d_fc_w.iter_mut().zip(&t.value_map) {
            *g += dz * m;
        }
        grad[l.fc_b.start] += dz;
        let d_value_map: Vec<T> = p[l.fc_w.clone()].iter().map(|&wv| wv * dz).collect();

        let trunk = t.blocks.last().map(|b| &b.1).unwrap_or(&t.stem);
        let mut d_trunk = vec![T::zero(); c * hw];
        {
            let (dw, db) = split_two(grad, &l.value_w, &l.value_b);
            conv1x1_backward(
                trunk,
                c,
                &p[l.value_w.clone()],
                &d_value_map,
                1,
                hw,
                dw,
                db,
                &mut d_trunk,
            );
        }
        {
            let (dw, db) = split_two(grad, &l.policy_w, &l.policy_b);
            conv1x1_backward(
                trunk,
                c,
                &p[l.policy_w.clone()],
                &dlogits,
                4,
                hw,
                dw,
                db,
                &mut d_trunk,
            );
        }

        // residual blocks, last to first; d_trunk holds d(block output)
        let mut d_out = d_trunk;
        for (bi, [w1, b1, w2, b2]) in l.blocks.iter().enumerate().rev() {
            let (inner, out) = &t.blocks[bi];
            let x = if bi == 0 {
                &t.stem
            } else {
                &t.blocks[bi - 1].1
            };
            relu_backward(out, &mut d_out);
            // skip connection passes the gradient straight through
            let mut d_x = d_out.clone();
            let mut d_inner = vec![T::zero(); c * hw];
            {
                let (dw, db) = split_two(grad, w2, b2);
                conv3x3_backward(
                    inner,
                    c,
                    &p[w2.clone()],
                    &d_out,
                    c,
                    h,
                    w,
                    dw,
                    db,
                    Some(&mut d_inner),
                );
            }
            relu_backward(inner, &mut d_inner);
            {
                let (dw, db) = split_two(grad, w1, b1);
                conv3x3_backward(
                    x,
                    c,
                    &p[w1.clone()],
                    &d_inner,
                    c,
                    h,
                    w,
                    dw,
                    db,
                    Some(&mut d_x),
                );
            }
            d_out = d_x;
        }

        relu_backward(&t.stem, &mut d_out);
        let (dw, db) = split_two(grad, &l.stem_w, &l.stem_b);
        conv3x3_backward(
            &t.input,
            NUM_PLANES,
            &p[l.stem_w.clone()],
            &d_out,
            c,
            h,
            w,
            dw,
            db,
            None,
        );
        loss
    }

    /// `mean_batch[(u - v)^2 - sum_a pi_a log p_a] + c * ||theta||^2`.
    pub fn loss(&self, batch: &[TrainingExample], weight_decay: T) -> T {
        assert!(!batch.is_empty(), "loss of an empty batch");
        let data: T = batch
            .iter()
            .map(|ex| {
                let t = self.trace(&ex.planes);
                let u = T::from(ex.u).unwrap();
                let ce: T = match masked_logsumexp(&t.logits, &ex.legal_mask) {
                    Some(lse) => ex
                        .pi
                        .iter()
                        .zip(&t.logits)
                        .zip(&ex.legal_mask)
                        .filter(|((&pi, _), &m)| m && pi > 0.0)
                        .map(|((&pi, &z), _)| T::from(pi).unwrap() * (z - lse))
                        .sum(),
                    None => T::zero(),
                };
                (u - t.value) * (u - t.value) - ce
            })
            .sum();
        data / T::from(batch.len()).unwrap() + weight_decay * self.squared_norm()
    }

    /// Exact gradient of [`Network::loss`] together with the loss value.
    ///
    /// Examples are processed in fixed-size chunks whose partial sums are
    /// combined in order, so the result does not depend on thread count.
    pub fn loss_and_gradient(&self, batch: &[TrainingExample], weight_decay: T) -> (T, Vec<T>) {
        assert!(!batch.is_empty(), "gradient of an empty batch");
        const CHUNK: usize = 8;
        let scale = T::one() / T::from(batch.len()).unwrap();
        let n = self.params.len();
        let partials: Vec<(T, Vec<T>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![T::zero(); n];
                let loss = chunk
                    .iter()
                    .map(|ex| self.accumulate(ex, scale, &mut g))
                    .sum::<T>();
                (loss, g)
            })
            .collect();
        let mut grad = vec![T::zero(); n];
        let mut loss = T::zero();
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let two_c = weight_decay + weight_decay;
        for (g, &p) in grad.iter_mut().zip(&self.params) {
            *g += two_c * p;
        }
        (loss * scale + weight_decay * self.squared_norm(), grad)
    }

    pub fn gradient(&self, batch: &[TrainingExample], weight_decay: T) -> Vec<T> {
        self.loss_and_gradient(batch, weight_decay).1
    }
}

fn split_two<'a, T>(
    grad: &'a mut [T],
    a: &Range<usize>,
    b: &Range<usize>,
) -> (&'a mut [T], &'a mut [T]) {
    // tensors are laid out weight then bias, adjacent
    debug_assert_eq!(a.end, b.start);
    let (left, right) = grad.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.len()])
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log sum exp` over the legal logits, `None` for an empty mask.
fn masked_logsumexp<T: Real>(logits: &[T], legal: &[bool]) -> Option<T> {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return None;
    }
    let total: T = logits
        .iter()
        .zip(legal)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| (x - max).exp())
        .sum();
    Some(max + total.ln())
}

/// Softmax restricted to `legal`; illegal entries are exactly zero. An empty
/// mask yields all zeros.
pub fn masked_softmax<T: Real>(logits: &[T], legal: &[bool]) -> Vec<T> {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(T::neg_infinity(), T::max);
    let mut out = vec![T::zero(); logits.len()];
    if max == T::neg_infinity() {
        return out;
    }
    let mut total = T::zero();
    for ((o, &x), &m) in out.iter_mut().zip(logits).zip(legal) {
        if m {
            *o = (x - max).exp();
            total += *o;
        }
    }
    for (o, &m) in out.iter_mut().zip(legal) {
        if m {
            *o /= total;
        }
    }
    out
}

impl<T: Real> Evaluator for Network<T> {
    fn evaluate(&self, level: &Level, state: &State, legal: &[Push]) -> Evaluation {
        let planes = level.encode_planes(state);
        let mask = level.legal_mask(legal);
        let out = self
            .forward_one(&planes, &mask)
            .expect("network shape matches level; checked by the caller");
        // renormalize in f64 so the legal mass is 1 to double precision
        let mut policy: Vec<f64> = out.policy.iter().map(|p| p.to_f64().unwrap()).collect();
        let total: f64 = policy.iter().sum();
        if total > 0.0 {
            policy.iter_mut().for_each(|p| *p /= total);
        }
        Evaluation {
            policy,
            value: out.value.to_f64().unwrap(),
        }
    }
}
