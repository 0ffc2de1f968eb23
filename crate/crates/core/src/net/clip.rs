//! Global-norm gradient clipping.

use super::ParameterSet;

/// Rescales `grads` so their joint Euclidean norm is at most `max_norm`,
/// preserving direction. Returns the pre-clip norm. Gradients already
/// within the bound are left byte-identical.
pub fn clip_gradients(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
