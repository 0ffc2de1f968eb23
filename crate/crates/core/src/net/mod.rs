//! From-scratch convolutional classifier over window tensors.
//!
//! Architecture: a stack of valid-padding, stride-1 square convolutions
//! with ReLU (each optionally followed by a 2x2/stride-2 max pool), a
//! flatten, ReLU dense layers with inverted dropout, and a single sigmoid
//! output unit trained with binary cross-entropy. Forward passes record
//! everything reverse mode needs; [`backward`] produces exact gradients
//! with respect to every parameter and to the input tensor, the latter
//! feeding the influence-score extraction.
//!
//! All arithmetic is f64. Given a seed, initialization, dropout masks,
//! batch order, and therefore training itself are deterministic; batch
//! gradients are reduced in sample order regardless of thread count.

mod backward;
mod clip;
mod eval;
mod forward;
mod init;
mod loss;
mod model_io;
mod params;
mod train;

pub use backward::{backward, backward_params_only, GradTarget, NetGradients};
pub use clip::clip_gradients;
pub use eval::{evaluate, EvalMetrics};
pub use forward::{
    conv_forward, dense_forward, forward, max_pool_2x2, sigmoid, DenseTrace, ForwardCache, Mode,
    PoolTrace,
};
pub use init::he_normal_init;
pub use loss::{bce_loss, BCE_CLIP};
pub use model_io::{load_model, save_model, ModelHeader, StatsRef, MODEL_MAGIC, MODEL_VERSION};
pub use params::{ConvParams, DenseParams, ParameterSet};
pub use train::{train, EpochStats, Optimizer, TrainHistory, TrainOutcome, TrainingConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One convolution stage: `filters` square kernels of side `kernel`,
/// ReLU, then an optional 2x2 max pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub pool_after: bool,
}

/// One hidden dense stage: `units` ReLU outputs with inverted dropout at
/// rate `dropout` in training mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayerSpec {
    pub units: usize,
    pub dropout: f64,
}

/// Full network shape. The sigmoid output unit is implicit and always
/// present after the last dense stage (or directly after the flatten when
/// `dense` is empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    pub input_side: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvLayerSpec>,
    pub dense: Vec<DenseLayerSpec>,
}

/// Resolved per-stage dimensions; proof that an architecture is shape-valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapePlan {
    /// (side_in, channels_in, side_after_conv, side_after_stage) per stage.
    pub conv_stages: Vec<ConvStageShape>,
    pub flatten_len: usize,
    /// (in_dim, out_dim) per hidden dense stage.
    pub dense_dims: Vec<(usize, usize)>,
    /// Input width of the sigmoid output unit.
    pub output_in: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStageShape {
    pub side_in: usize,
    pub channels_in: usize,
    pub side_conv: usize,
    pub side_out: usize,
}

impl NetworkArchitecture {
    /// Validates the whole stack and resolves every intermediate shape.
    pub fn plan(&self) -> Result<ShapePlan, NetError> {
        if self.input_side < 2 {
            return Err(NetError::Shape(format!(
                "input side {} below minimum 2",
                self.input_side
            )));
        }
        if self.input_channels == 0 {
            return Err(NetError::Shape("input_channels must be positive".into()));
        }
        let mut side = self.input_side;
        let mut channels = self.input_channels;
        let mut conv_stages = Vec::with_capacity(self.conv.len());
        for (idx, layer) in self.conv.iter().enumerate() {
            if layer.filters == 0 || layer.kernel == 0 {
                return Err(NetError::Shape(format!(
                    "conv stage {idx}: filters and kernel must be positive"
                )));
            }
            if layer.kernel > side {
                return Err(NetError::Shape(format!(
                    "conv stage {idx}: kernel {} exceeds input side {side}",
                    layer.kernel
                )));
            }
            let side_conv = side - layer.kernel + 1;
            let side_out = if layer.pool_after {
                if side_conv < 2 {
                    return Err(NetError::Shape(format!(
                        "conv stage {idx}: cannot 2x2-pool a side of {side_conv}"
                    )));
                }
                side_conv / 2
            } else {
                side_conv
            };
            conv_stages.push(ConvStageShape {
                side_in: side,
                channels_in: channels,
                side_conv,
                side_out,
            });
            side = side_out;
            channels = layer.filters;
        }
        let flatten_len = side * side * channels;
        let mut dense_dims = Vec::with_capacity(self.dense.len());
        let mut width = flatten_len;
        for (idx, layer) in self.dense.iter().enumerate() {
            if layer.units == 0 {
                return Err(NetError::Shape(format!("dense stage {idx}: zero units")));
            }
            if !(0.0..1.0).contains(&layer.dropout) {
                return Err(NetError::Config(format!(
                    "dense stage {idx}: dropout {} outside [0, 1)",
                    layer.dropout
                )));
            }
            dense_dims.push((width, layer.units));
            width = layer.units;
        }
        Ok(ShapePlan {
            conv_stages,
            flatten_len,
            dense_dims,
            output_in: width,
        })
    }
}

/// The published study configuration: 17x17x35 input; conv stages 96/k4,
/// 70/k2, 35/k3 with pooling after the first two; dense 304, 224, 544 with
/// dropout 0.2729, 0.3348, 0.1340.
pub fn reference_architecture() -> NetworkArchitecture {
    NetworkArchitecture {
        input_side: 17,
        input_channels: crate::market::CHANNELS,
        conv: vec![
            ConvLayerSpec { filters: 96, kernel: 4, pool_after: true },
            ConvLayerSpec { filters: 70, kernel: 2, pool_after: true },
            ConvLayerSpec { filters: 35, kernel: 3, pool_after: false },
        ],
        dense: vec![
            DenseLayerSpec { units: 304, dropout: 0.2729 },
            DenseLayerSpec { units: 224, dropout: 0.3348 },
            DenseLayerSpec { units: 544, dropout: 0.1340 },
        ],
    }
}

/// Optimizer settings that pair with [`reference_architecture`]: Adam at
/// learning rate 0.0010427 with gradient clipping at 1.0306.
pub fn reference_training_config() -> TrainingConfig {
    TrainingConfig {
        learning_rate: 0.001_042_7,
        clip_norm: Some(1.0306),
        ..TrainingConfig::default()
    }
}

pub(crate) use crate::seed::mix as mix_seed;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_architecture_resolves_to_a_35_wide_flatten() {
        let plan = reference_architecture().plan().unwrap();
        let sides: Vec<(usize, usize)> = plan
            .conv_stages
            .iter()
            .map(|s| (s.side_conv, s.side_out))
            .collect();
        assert_eq!(sides, vec![(14, 7), (6, 3), (1, 1)]);
        assert_eq!(plan.flatten_len, 35);
        assert_eq!(plan.dense_dims, vec![(35, 304), (304, 224), (224, 544)]);
        assert_eq!(plan.output_in, 544);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let arch = NetworkArchitecture {
            input_side: 4,
            input_channels: 3,
            conv: vec![ConvLayerSpec { filters: 2, kernel: 5, pool_after: false }],
            dense: vec![],
        };
        assert!(arch.plan().is_err());
    }

    #[test]
    fn pooling_a_single_cell_is_rejected() {
        let arch = NetworkArchitecture {
            input_side: 4,
            input_channels: 1,
            conv: vec![ConvLayerSpec { filters: 2, kernel: 4, pool_after: true }],
            dense: vec![],
        };
        assert!(arch.plan().is_err());
    }

    #[test]
    fn convless_and_denseless_stacks_are_allowed() {
        let arch = NetworkArchitecture {
            input_side: 3,
            input_channels: 2,
            conv: vec![],
            dense: vec![],
        };
        let plan = arch.plan().unwrap();
        assert_eq!(plan.flatten_len, 18);
        assert_eq!(plan.output_in, 18);
    }
}
