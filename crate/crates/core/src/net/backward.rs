//! Reverse-mode differentiation through a recorded forward pass.
//!
//! The seed scalar is selectable: the training loss, the raw logit, or the
//! output probability. All three share the same propagation; only the
//! initial dL/dlogit differs (BCE+sigmoid collapse to `prob - label`, the
//! logit seeds with 1, and the probability seeds with `prob (1 - prob)`).

use crate::tensor::Tensor3;

use super::forward::{check_params, ForwardCache};
use super::{NetError, NetworkArchitecture, ParameterSet};

/// Which scalar the gradients are taken of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradTarget {
    /// Binary cross-entropy against `label`.
    Loss { label: f64 },
    /// The pre-sigmoid output.
    Logit,
    /// The sigmoid output.
    Probability,
}

#[derive(Debug, Clone)]
pub struct NetGradients {
    pub params: ParameterSet,
    pub input: Tensor3,
}

/// Gradients of `target` with respect to every parameter and the input
/// tensor. `cache` must come from a [`super::forward`] call with the same
/// architecture and parameters; dropout masks recorded there are reused,
/// so train-mode gradients are exact for the sampled network.
pub fn backward(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    cache: &ForwardCache,
    target: GradTarget,
) -> Result<NetGradients, NetError> {
    let (grads, input) = backward_impl(arch, params, cache, target, true)?;
    Ok(NetGradients { params: grads, input: input.expect("input gradient requested") })
}

/// Training fast path: parameter gradients only, skipping the propagation
/// into the input tensor at the first conv stage.
pub fn backward_params_only(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    cache: &ForwardCache,
    target: GradTarget,
) -> Result<ParameterSet, NetError> {
    let (grads, _) = backward_impl(arch, params, cache, target, false)?;
    Ok(grads)
}

fn backward_impl(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    cache: &ForwardCache,
    target: GradTarget,
    want_input: bool,
) -> Result<(ParameterSet, Option<Tensor3>), NetError> {
    check_params(arch, params)?;
    if cache.conv_pre.len() != arch.conv.len() || cache.dense.len() != arch.dense.len() {
        return Err(NetError::Shape(
            "forward cache does not match architecture".into(),
        ));
    }
    let mut grads = params.zeros_like();

    let dlogit = match target {
        GradTarget::Loss { label } => {
            if label != 0.0 && label != 1.0 {
                return Err(NetError::Config(format!("label {label} is not 0 or 1")));
            }
            cache.prob - label
        }
        GradTarget::Logit => 1.0,
        GradTarget::Probability => cache.prob * (1.0 - cache.prob),
    };

    // Output unit.
    let out_in = cache.output_input();
    grads.output.bias[0] = dlogit;
    for (g, &h) in grads.output.weights.iter_mut().zip(out_in) {
        *g = dlogit * h;
    }
    let mut dh: Vec<f64> = params.output.weights.iter().map(|&w| w * dlogit).collect();

    // Dense stages, last to first.
    for li in (0..arch.dense.len()).rev() {
        let trace = &cache.dense[li];
        let mut dpre = dh;
        if let Some(mask) = &trace.mask {
            for (d, &m) in dpre.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        for (d, &pre) in dpre.iter_mut().zip(&trace.pre) {
            if pre <= 0.0 {
                *d = 0.0;
            }
        }
        let stage_in = cache.dense_stage_input(li);
        let gp = &mut grads.dense[li];
        let mut dprev = vec![0.0; stage_in.len()];
        for (o, &d) in dpre.iter().enumerate() {
            gp.bias[o] = d;
            if d == 0.0 {
                continue;
            }
            for (g, &x) in gp.unit_weights_mut(o).iter_mut().zip(stage_in) {
                *g = d * x;
            }
            for (acc, &w) in dprev.iter_mut().zip(params.dense[li].unit_weights(o)) {
                *acc += d * w;
            }
        }
        dh = dprev;
    }

    // Unflatten into the shape that fed the flatten.
    let (fh, fw, fc) = if arch.conv.is_empty() {
        cache.input.shape()
    } else {
        match &cache.pool[arch.conv.len() - 1] {
            Some(p) => p.out.shape(),
            None => cache.conv_post[arch.conv.len() - 1].shape(),
        }
    };
    if dh.len() != fh * fw * fc {
        return Err(NetError::Shape("flatten gradient length mismatch".into()));
    }
    let mut dout = Tensor3::from_vec(fh, fw, fc, dh);

    // Conv stages, last to first.
    for si in (0..arch.conv.len()).rev() {
        let spec = &arch.conv[si];
        let pre = &cache.conv_pre[si];
        // Route pooled gradients back to their argmax source.
        let mut dpost = if spec.pool_after {
            let trace = cache.pool[si].as_ref().expect("pool trace for pooled stage");
            let mut d = Tensor3::zeros(pre.height(), pre.width(), pre.channels());
            let dd = d.as_mut_slice();
            for (&src, &g) in trace.argmax.iter().zip(dout.as_slice()) {
                dd[src as usize] += g;
            }
            d
        } else {
            dout
        };
        // ReLU gate: derivative is 0 at and below 0.
        {
            let dz = dpost.as_mut_slice();
            for (d, &p) in dz.iter_mut().zip(pre.as_slice()) {
                if p <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let dz = dpost;
        let x = cache.conv_stage_input(si);
        let p = &params.conv[si];
        let gp = &mut grads.conv[si];
        let want_dx = si > 0 || want_input;
        let mut dx = if want_dx {
            Some(Tensor3::zeros(x.height(), x.width(), x.channels()))
        } else {
            None
        };
        let (oh, ow, _) = dz.shape();
        for i in 0..oh {
            for j in 0..ow {
                let cell = dz.cell(i, j);
                for (f, &g) in cell.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gp.bias[f] += g;
                    for r in 0..p.kernel {
                        let xs = x.row_segment(i + r, j, p.kernel);
                        for (gw, &xv) in gp.row_weights_mut(f, r).iter_mut().zip(xs) {
                            *gw += g * xv;
                        }
                        if let Some(dx) = dx.as_mut() {
                            let seg = dx.row_segment_mut(i + r, j, p.kernel);
                            for (dv, &wv) in seg.iter_mut().zip(p.row_weights(f, r)) {
                                *dv += g * wv;
                            }
                        }
                    }
                }
            }
        }
        match dx {
            Some(d) => dout = d,
            None => return Ok((grads, None)),
        }
    }

    if arch.conv.is_empty() && !want_input {
        return Ok((grads, None));
    }
    Ok((grads, Some(dout)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{
        bce_loss, forward, he_normal_init, ConvLayerSpec, DenseLayerSpec, Mode,
    };

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
    }

    fn filled(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f64) -> Tensor3 {
        Tensor3::from_vec(h, w, c, (0..h * w * c).map(f).collect())
    }

    /// Central-difference check of every parameter and input gradient.
    fn fd_check(arch: &NetworkArchitecture, mode: Mode, label: f64, tol: f64) {
        let params = he_normal_init(arch, 42).unwrap();
        let input = filled(arch.input_side, arch.input_side, arch.input_channels, |i| {
            (((i * 53 + 17) % 41) as f64) * 0.05 - 1.0
        });
        let cache = forward(arch, &params, &input, mode).unwrap();
        let analytic = backward(arch, &params, &cache, GradTarget::Loss { label }).unwrap();

        let h = 1e-5;
        let flat = params.to_flat();
        let aflat = analytic.params.to_flat();
        let mut worst = 0.0f64;
        for k in 0..flat.len() {
            let mut plus = flat.clone();
            plus[k] += h;
            let mut minus = flat.clone();
            minus[k] -= h;
            let pp = ParameterSet::from_flat(&params, &plus).unwrap();
            let pm = ParameterSet::from_flat(&params, &minus).unwrap();
            let lp = bce_loss(forward(arch, &pp, &input, mode).unwrap().prob, label);
            let lm = bce_loss(forward(arch, &pm, &input, mode).unwrap().prob, label);
            let numeric = (lp - lm) / (2.0 * h);
            worst = worst.max(rel_err(aflat[k], numeric));
        }
        assert!(worst < tol, "worst parameter gradient error {worst}");

        let mut worst_in = 0.0f64;
        for k in 0..input.len() {
            let mut plus = input.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = input.clone();
            minus.as_mut_slice()[k] -= h;
            let lp = bce_loss(forward(arch, &params, &plus, mode).unwrap().prob, label);
            let lm = bce_loss(forward(arch, &params, &minus, mode).unwrap().prob, label);
            let numeric = (lp - lm) / (2.0 * h);
            worst_in = worst_in.max(rel_err(analytic.input.as_slice()[k], numeric));
        }
        assert!(worst_in < tol, "worst input gradient error {worst_in}");
    }

    #[test]
    fn finite_differences_confirm_conv_pool_dense_gradients() {
        let arch = NetworkArchitecture {
            input_side: 6,
            input_channels: 2,
            conv: vec![
                ConvLayerSpec { filters: 3, kernel: 3, pool_after: true },
                ConvLayerSpec { filters: 2, kernel: 2, pool_after: false },
            ],
            dense: vec![DenseLayerSpec { units: 4, dropout: 0.0 }],
        };
        fd_check(&arch, Mode::Eval, 1.0, 1e-4);
    }

    #[test]
    fn finite_differences_hold_under_a_fixed_dropout_mask() {
        let arch = NetworkArchitecture {
            input_side: 5,
            input_channels: 2,
            conv: vec![ConvLayerSpec { filters: 2, kernel: 2, pool_after: true }],
            dense: vec![DenseLayerSpec { units: 6, dropout: 0.5 }],
        };
        fd_check(&arch, Mode::Train { dropout_seed: 77 }, 0.0, 1e-4);
    }

    #[test]
    fn convless_network_gradients_check_out() {
        let arch = NetworkArchitecture {
            input_side: 3,
            input_channels: 2,
            conv: vec![],
            dense: vec![DenseLayerSpec { units: 3, dropout: 0.0 }],
        };
        fd_check(&arch, Mode::Eval, 1.0, 1e-4);
    }

    #[test]
    fn probability_gradient_is_sigmoid_scaled_logit_gradient() {
        let arch = NetworkArchitecture {
            input_side: 4,
            input_channels: 3,
            conv: vec![ConvLayerSpec { filters: 2, kernel: 2, pool_after: false }],
            dense: vec![DenseLayerSpec { units: 3, dropout: 0.0 }],
        };
        let params = he_normal_init(&arch, 5).unwrap();
        let input = filled(4, 4, 3, |i| ((i % 9) as f64) * 0.2 - 0.7);
        let cache = forward(&arch, &params, &input, Mode::Eval).unwrap();
        let gl = backward(&arch, &params, &cache, GradTarget::Logit).unwrap();
        let gp = backward(&arch, &params, &cache, GradTarget::Probability).unwrap();
        let s = cache.prob * (1.0 - cache.prob);
        for (a, b) in gp.input.as_slice().iter().zip(gl.input.as_slice()) {
            assert!((a - s * b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {}", s * b);
        }
    }

    #[test]
    fn loss_gradient_seeds_with_prob_minus_label() {
        let arch = NetworkArchitecture {
            input_side: 3,
            input_channels: 1,
            conv: vec![],
            dense: vec![],
        };
        let mut params = ParameterSet::zeros(&arch).unwrap();
        for (i, w) in params.output.weights.iter_mut().enumerate() {
            *w = (i as f64 - 4.0) * 0.1;
        }
        let input = filled(3, 3, 1, |i| i as f64 * 0.1);
        let cache = forward(&arch, &params, &input, Mode::Eval).unwrap();
        let g = backward(&arch, &params, &cache, GradTarget::Loss { label: 1.0 }).unwrap();
        assert!((g.params.output.bias[0] - (cache.prob - 1.0)).abs() < 1e-15);
        // For a linear model dL/dx_k = (p - y) w_k exactly.
        for (k, dx) in g.input.as_slice().iter().enumerate() {
            let expect = (cache.prob - 1.0) * params.output.weights[k];
            assert!((dx - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn pool_routes_gradient_only_to_the_argmax_cell() {
        let arch = NetworkArchitecture {
            input_side: 2,
            input_channels: 1,
            conv: vec![ConvLayerSpec { filters: 1, kernel: 1, pool_after: true }],
            dense: vec![],
        };
        let mut params = ParameterSet::zeros(&arch).unwrap();
        params.conv[0].weights[0] = 1.0;
        params.output.weights[0] = 2.0;
        // (1,0) holds the max; everything else must get zero gradient.
        let input = Tensor3::from_vec(2, 2, 1, vec![0.5, 1.5, 4.0, 2.0]);
        let cache = forward(&arch, &params, &input, Mode::Eval).unwrap();
        let g = backward(&arch, &params, &cache, GradTarget::Logit).unwrap();
        assert_eq!(g.input.as_slice(), &[0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn params_only_path_matches_the_full_backward() {
        let arch = NetworkArchitecture {
            input_side: 5,
            input_channels: 2,
            conv: vec![ConvLayerSpec { filters: 3, kernel: 2, pool_after: true }],
            dense: vec![DenseLayerSpec { units: 4, dropout: 0.0 }],
        };
        let params = he_normal_init(&arch, 3).unwrap();
        let input = filled(5, 5, 2, |i| ((i * 7 + 2) % 13) as f64 * 0.11 - 0.6);
        let cache = forward(&arch, &params, &input, Mode::Eval).unwrap();
        let full = backward(&arch, &params, &cache, GradTarget::Loss { label: 0.0 }).unwrap();
        let fast =
            backward_params_only(&arch, &params, &cache, GradTarget::Loss { label: 0.0 })
                .unwrap();
        assert_eq!(full.params, fast);
    }

    #[test]
    fn fractional_labels_are_rejected() {
        let arch = NetworkArchitecture {
            input_side: 2,
            input_channels: 1,
            conv: vec![],
            dense: vec![],
        };
        let params = ParameterSet::zeros(&arch).unwrap();
        let input = Tensor3::zeros(2, 2, 1);
        let cache = forward(&arch, &params, &input, Mode::Eval).unwrap();
        assert!(backward(&arch, &params, &cache, GradTarget::Loss { label: 0.5 }).is_err());
    }
}
