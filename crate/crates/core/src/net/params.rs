//! Parameter containers and the canonical flat ordering used by the
//! optimizer, gradient clipping, and the model file format.

use serde::{Deserialize, Serialize};

use super::{NetError, NetworkArchitecture};

/// Kernels and biases for one convolution stage. Weight layout is
/// `[filter][row][col][channel]`, so for a fixed filter and kernel row the
/// `kernel * in_channels` values form one contiguous slice that lines up
/// with a tensor row segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub filters: usize,
    pub kernel: usize,
    pub in_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(filters: usize, kernel: usize, in_channels: usize) -> Self {
        ConvParams {
            filters,
            kernel,
            in_channels,
            weights: vec![0.0; filters * kernel * kernel * in_channels],
            bias: vec![0.0; filters],
        }
    }

    /// Contiguous weights of `filter` for kernel row `row`: length
    /// `kernel * in_channels`, ordered col-major-in-channel like a tensor
    /// row segment.
    #[inline]
    pub fn row_weights(&self, filter: usize, row: usize) -> &[f64] {
        let span = self.kernel * self.in_channels;
        let start = (filter * self.kernel + row) * span;
        &self.weights[start..start + span]
    }

    #[inline]
    pub fn row_weights_mut(&mut self, filter: usize, row: usize) -> &mut [f64] {
        let span = self.kernel * self.in_channels;
        let start = (filter * self.kernel + row) * span;
        &mut self.weights[start..start + span]
    }
}

/// Weights and biases for one dense stage; weight layout `[out][in]` with
/// each output unit's incoming weights contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseParams {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn unit_weights(&self, out: usize) -> &[f64] {
        &self.weights[out * self.in_dim..(out + 1) * self.in_dim]
    }

    #[inline]
    pub fn unit_weights_mut(&mut self, out: usize) -> &mut [f64] {
        &mut self.weights[out * self.in_dim..(out + 1) * self.in_dim]
    }
}

/// Every learnable value in the network. The canonical flat order is:
/// each conv stage's weights then bias, in stage order; each dense stage's
/// weights then bias; the output unit's weights then its single bias.
/// Serialization, clipping, and optimizer state all use this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub conv: Vec<ConvParams>,
    pub dense: Vec<DenseParams>,
    pub output: DenseParams,
}

impl ParameterSet {
    /// All-zero parameters shaped for `arch`.
    pub fn zeros(arch: &NetworkArchitecture) -> Result<Self, NetError> {
        let plan = arch.plan()?;
        let conv = arch
            .conv
            .iter()
            .zip(&plan.conv_stages)
            .map(|(spec, shape)| ConvParams::zeros(spec.filters, spec.kernel, shape.channels_in))
            .collect();
        let dense = plan
            .dense_dims
            .iter()
            .map(|&(i, o)| DenseParams::zeros(i, o))
            .collect();
        Ok(ParameterSet {
            conv,
            dense,
            output: DenseParams::zeros(plan.output_in, 1),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            conv: self
                .conv
                .iter()
                .map(|c| ConvParams::zeros(c.filters, c.kernel, c.in_channels))
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|d| DenseParams::zeros(d.in_dim, d.out_dim))
                .collect(),
            output: DenseParams::zeros(self.output.in_dim, self.output.out_dim),
        }
    }

    pub fn flat_len(&self) -> usize {
        let conv: usize = self.conv.iter().map(|c| c.weights.len() + c.bias.len()).sum();
        let dense: usize = self.dense.iter().map(|d| d.weights.len() + d.bias.len()).sum();
        conv + dense + self.output.weights.len() + self.output.bias.len()
    }

    /// Visits every parameter in canonical flat order.
    pub fn visit_flat(&self, mut f: impl FnMut(usize, f64)) {
        let mut idx = 0;
        for seg in self.segments() {
            for &w in seg {
                f(idx, w);
                idx += 1;
            }
        }
    }

    /// Mutable visit in canonical flat order.
    pub fn visit_flat_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for seg in self.segments_mut() {
            for w in seg {
                f(idx, w);
                idx += 1;
            }
        }
    }

    fn segments(&self) -> Vec<&[f64]> {
        let mut segs: Vec<&[f64]> = Vec::with_capacity(2 * (self.conv.len() + self.dense.len() + 1));
        for c in &self.conv {
            segs.push(&c.weights);
            segs.push(&c.bias);
        }
        for d in &self.dense {
            segs.push(&d.weights);
            segs.push(&d.bias);
        }
        segs.push(&self.output.weights);
        segs.push(&self.output.bias);
        segs
    }

    fn segments_mut(&mut self) -> Vec<&mut [f64]> {
        let mut segs: Vec<&mut [f64]> =
            Vec::with_capacity(2 * (self.conv.len() + self.dense.len() + 1));
        for c in &mut self.conv {
            segs.push(&mut c.weights);
            segs.push(&mut c.bias);
        }
        for d in &mut self.dense {
            segs.push(&mut d.weights);
            segs.push(&mut d.bias);
        }
        segs.push(&mut self.output.weights);
        segs.push(&mut self.output.bias);
        segs
    }

    /// Copies all parameters into `out` in canonical flat order.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.flat_len());
        for seg in self.segments() {
            out.extend_from_slice(seg);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.write_flat(&mut v);
        v
    }

    /// Rebuilds a set shaped like `template` from a canonical flat slice.
    pub fn from_flat(template: &ParameterSet, flat: &[f64]) -> Result<Self, NetError> {
        if flat.len() != template.flat_len() {
            return Err(NetError::Shape(format!(
                "flat parameter count {} does not match expected {}",
                flat.len(),
                template.flat_len()
            )));
        }
        let mut out = template.zeros_like();
        let mut off = 0;
        for seg in out.segments_mut() {
            seg.copy_from_slice(&flat[off..off + seg.len()]);
            off += seg.len();
        }
        Ok(out)
    }

    /// Euclidean norm over every parameter.
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for seg in self.segments() {
            for &w in seg {
                acc += w * w;
            }
        }
        acc.sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for seg in self.segments_mut() {
            for w in seg {
                *w *= s;
            }
        }
    }

    /// `self += s * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &ParameterSet, s: f64) {
        let mut theirs = other.segments();
        for seg in self.segments_mut() {
            let o = theirs.remove(0);
            debug_assert_eq!(seg.len(), o.len());
            for (w, &g) in seg.iter_mut().zip(o) {
                *w += s * g;
            }
        }
    }

    pub fn iter_all_finite(&self) -> bool {
        self.segments().iter().all(|seg| seg.iter().all(|w| w.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ConvLayerSpec, DenseLayerSpec};

    fn tiny_arch() -> NetworkArchitecture {
        NetworkArchitecture {
            input_side: 5,
            input_channels: 3,
            conv: vec![ConvLayerSpec { filters: 2, kernel: 2, pool_after: true }],
            dense: vec![DenseLayerSpec { units: 4, dropout: 0.0 }],
        }
    }

    #[test]
    fn flat_round_trip_is_exact() {
        let zeros = ParameterSet::zeros(&tiny_arch()).unwrap();
        let mut p = zeros.clone();
        let mut k = 0.0;
        p.visit_flat_mut(|_, w| {
            *w = k;
            k += 0.25;
        });
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.flat_len());
        let back = ParameterSet::from_flat(&zeros, &flat).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn flat_order_is_conv_weights_bias_then_dense_then_output() {
        let mut p = ParameterSet::zeros(&tiny_arch()).unwrap();
        let conv_w = p.conv[0].weights.len();
        let conv_b = p.conv[0].bias.len();
        p.conv[0].weights[0] = 1.0;
        p.conv[0].bias[0] = 2.0;
        p.dense[0].weights[0] = 3.0;
        p.output.bias[0] = 4.0;
        let flat = p.to_flat();
        assert_eq!(flat[0], 1.0);
        assert_eq!(flat[conv_w], 2.0);
        assert_eq!(flat[conv_w + conv_b], 3.0);
        assert_eq!(flat[flat.len() - 1], 4.0);
    }

    #[test]
    fn global_norm_matches_manual_sum() {
        let mut p = ParameterSet::zeros(&tiny_arch()).unwrap();
        p.conv[0].weights[3] = 3.0;
        p.output.weights[1] = 4.0;
        assert_eq!(p.global_norm(), 5.0);
    }

    #[test]
    fn add_scaled_is_axpy() {
        let mut a = ParameterSet::zeros(&tiny_arch()).unwrap();
        let mut b = a.zeros_like();
        a.dense[0].bias[2] = 1.0;
        b.dense[0].bias[2] = 2.0;
        b.conv[0].weights[1] = -4.0;
        a.add_scaled(&b, 0.5);
        assert_eq!(a.dense[0].bias[2], 2.0);
        assert_eq!(a.conv[0].weights[1], -2.0);
    }
}
