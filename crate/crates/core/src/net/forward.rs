//! Forward pass. Every intermediate the backward pass needs is captured
//! in a [`ForwardCache`], so one forward call supports loss evaluation,
//! parameter gradients, and input-saliency gradients alike.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor3;

use super::{mix_seed, ConvParams, DenseParams, NetError, NetworkArchitecture, ParameterSet};

/// Eval mode is deterministic and dropout-free. Train mode applies
/// inverted dropout with masks derived from `dropout_seed`, one stream per
/// dense stage, so a fixed seed reproduces the exact same masks (which is
/// what makes finite-difference checks possible in train mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
pub struct PoolTrace {
    pub out: Tensor3,
    /// Flat data index into the pooled stage's input, per output value.
    pub argmax: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct DenseTrace {
    /// Pre-activation values (W h + b).
    pub pre: Vec<f64>,
    /// Post-ReLU, post-dropout output fed to the next stage.
    pub out: Vec<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-rate)); None in eval mode
    /// or when the stage's rate is zero.
    pub mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor3,
    pub conv_pre: Vec<Tensor3>,
    pub conv_post: Vec<Tensor3>,
    pub pool: Vec<Option<PoolTrace>>,
    pub flat: Vec<f64>,
    pub dense: Vec<DenseTrace>,
    pub logit: f64,
    pub prob: f64,
}

impl ForwardCache {
    /// Input tensor seen by conv stage `idx`.
    pub(super) fn conv_stage_input(&self, idx: usize) -> &Tensor3 {
        if idx == 0 {
            &self.input
        } else {
            match &self.pool[idx - 1] {
                Some(p) => &p.out,
                None => &self.conv_post[idx - 1],
            }
        }
    }

    /// Input vector seen by dense stage `idx`.
    pub(super) fn dense_stage_input(&self, idx: usize) -> &[f64] {
        if idx == 0 {
            &self.flat
        } else {
            &self.dense[idx - 1].out
        }
    }

    /// Input vector seen by the sigmoid output unit.
    pub(super) fn output_input(&self) -> &[f64] {
        match self.dense.last() {
            Some(t) => &t.out,
            None => &self.flat,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Valid-padding stride-1 convolution, pre-activation.
pub(super) fn conv_pre(input: &Tensor3, p: &ConvParams) -> Result<Tensor3, NetError> {
    let (h, w, c) = input.shape();
    if c != p.in_channels {
        return Err(NetError::Shape(format!(
            "conv expects {} input channels, tensor has {c}",
            p.in_channels
        )));
    }
    if h < p.kernel || w < p.kernel {
        return Err(NetError::Shape(format!(
            "conv kernel {} exceeds input {h}x{w}",
            p.kernel
        )));
    }
    let (oh, ow) = (h - p.kernel + 1, w - p.kernel + 1);
    let mut out = Tensor3::zeros(oh, ow, p.filters);
    for i in 0..oh {
        for j in 0..ow {
            let cell = out.cell_mut(i, j);
            for (f, slot) in cell.iter_mut().enumerate() {
                let mut acc = p.bias[f];
                for r in 0..p.kernel {
                    acc += dot(input.row_segment(i + r, j, p.kernel), p.row_weights(f, r));
                }
                *slot = acc;
            }
        }
    }
    Ok(out)
}

/// Convolution followed by ReLU, as applied inside the network.
pub fn conv_forward(input: &Tensor3, p: &ConvParams) -> Result<Tensor3, NetError> {
    Ok(conv_pre(input, p)?.map(relu))
}

/// 2x2 max pool with stride 2 per channel; odd trailing rows/columns are
/// dropped. Also returns, for each output value, the flat data index of
/// the selected input value; ties go to the first cell in row-major scan
/// order, exactly like the backward routing.
pub fn max_pool_2x2(input: &Tensor3) -> Result<(Tensor3, Vec<u32>), NetError> {
    let (h, w, c) = input.shape();
    if h < 2 || w < 2 {
        return Err(NetError::Shape(format!("cannot 2x2-pool a {h}x{w} grid")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor3::zeros(oh, ow, c);
    let mut argmax = vec![0u32; oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for di in 0..2 {
                    for dj in 0..2 {
                        let idx = input.idx(2 * i + di, 2 * j + dj, ch);
                        let v = input.as_slice()[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                let o = out.idx(i, j, ch);
                out.as_mut_slice()[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
    Ok((out, argmax))
}

/// Affine part of a dense stage: `W h + b`. Activation and dropout are
/// applied by the network around this.
pub fn dense_forward(input: &[f64], p: &DenseParams) -> Result<Vec<f64>, NetError> {
    if input.len() != p.in_dim {
        return Err(NetError::Shape(format!(
            "dense expects {} inputs, got {}",
            p.in_dim,
            input.len()
        )));
    }
    let mut out = Vec::with_capacity(p.out_dim);
    for o in 0..p.out_dim {
        out.push(p.bias[o] + dot(p.unit_weights(o), input));
    }
    Ok(out)
}

pub(super) fn check_params(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
) -> Result<(), NetError> {
    let plan = arch.plan()?;
    if params.conv.len() != arch.conv.len() || params.dense.len() != arch.dense.len() {
        return Err(NetError::Shape(format!(
            "parameter stages ({} conv, {} dense) do not match architecture ({}, {})",
            params.conv.len(),
            params.dense.len(),
            arch.conv.len(),
            arch.dense.len()
        )));
    }
    for (i, ((spec, shape), p)) in arch
        .conv
        .iter()
        .zip(&plan.conv_stages)
        .zip(&params.conv)
        .enumerate()
    {
        if p.filters != spec.filters || p.kernel != spec.kernel || p.in_channels != shape.channels_in
        {
            return Err(NetError::Shape(format!("conv stage {i} parameter shape mismatch")));
        }
        if p.weights.len() != p.filters * p.kernel * p.kernel * p.in_channels
            || p.bias.len() != p.filters
        {
            return Err(NetError::Shape(format!("conv stage {i} parameter length mismatch")));
        }
    }
    for (i, (&(ind, outd), p)) in plan.dense_dims.iter().zip(&params.dense).enumerate() {
        if p.in_dim != ind || p.out_dim != outd || p.weights.len() != ind * outd
            || p.bias.len() != outd
        {
            return Err(NetError::Shape(format!("dense stage {i} parameter shape mismatch")));
        }
    }
    let o = &params.output;
    if o.in_dim != plan.output_in || o.out_dim != 1 || o.weights.len() != plan.output_in
        || o.bias.len() != 1
    {
        return Err(NetError::Shape("output unit parameter shape mismatch".into()));
    }
    Ok(())
}

/// Full forward pass: conv/ReLU/pool stack, flatten, dense/ReLU/dropout
/// stack, sigmoid output.
pub fn forward(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    input: &Tensor3,
    mode: Mode,
) -> Result<ForwardCache, NetError> {
    check_params(arch, params)?;
    let (h, w, c) = input.shape();
    if h != arch.input_side || w != arch.input_side || c != arch.input_channels {
        return Err(NetError::Shape(format!(
            "input tensor {h}x{w}x{c} does not match architecture {side}x{side}x{ch}",
            side = arch.input_side,
            ch = arch.input_channels
        )));
    }

    let mut conv_pre_t = Vec::with_capacity(arch.conv.len());
    let mut conv_post = Vec::with_capacity(arch.conv.len());
    let mut pool = Vec::with_capacity(arch.conv.len());
    {
        let mut x = input;
        for (spec, p) in arch.conv.iter().zip(&params.conv) {
            let pre = conv_pre(x, p)?;
            let post = pre.map(relu);
            conv_pre_t.push(pre);
            conv_post.push(post);
            if spec.pool_after {
                let (pooled, argmax) = max_pool_2x2(conv_post.last().unwrap())?;
                pool.push(Some(PoolTrace { out: pooled, argmax }));
            } else {
                pool.push(None);
            }
            x = match pool.last().unwrap() {
                Some(t) => &t.out,
                None => conv_post.last().unwrap(),
            };
        }
    }

    let flat: Vec<f64> = {
        let last = if arch.conv.is_empty() {
            input
        } else {
            match pool.last().unwrap() {
                Some(t) => &t.out,
                None => conv_post.last().unwrap(),
            }
        };
        last.as_slice().to_vec()
    };

    let mut dense = Vec::with_capacity(arch.dense.len());
    {
        let mut h = &flat;
        for (li, (spec, p)) in arch.dense.iter().zip(&params.dense).enumerate() {
            let pre = dense_forward(h, p)?;
            let mut out: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
            let mask = match mode {
                Mode::Train { dropout_seed } if spec.dropout > 0.0 => {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix_seed(&[dropout_seed, 0xD0, li as u64]));
                    let keep_scale = 1.0 / (1.0 - spec.dropout);
                    let mask: Vec<f64> = (0..out.len())
                        .map(|_| {
                            if rng.random::<f64>() < spec.dropout {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    for (v, &m) in out.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            dense.push(DenseTrace { pre, out, mask });
            h = &dense.last().unwrap().out;
        }
    }

    let out_in: &[f64] = match dense.last() {
        Some(t) => &t.out,
        None => &flat,
    };
    let logit = params.output.bias[0] + dot(&params.output.weights, out_in);
    if !logit.is_finite() {
        return Err(NetError::NonFinite("output logit".into()));
    }
    let prob = sigmoid(logit);

    Ok(ForwardCache {
        input: input.clone(),
        conv_pre: conv_pre_t,
        conv_post,
        pool,
        flat,
        dense,
        logit,
        prob,
    })
}
