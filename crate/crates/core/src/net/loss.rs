//! Binary cross-entropy with probability clipping.

/// Probabilities are clamped to [BCE_CLIP, 1 - BCE_CLIP] before taking
/// logs, so a saturated output yields a large finite loss instead of inf.
pub const BCE_CLIP: f64 = 1e-12;

/// `-(y ln p + (1 - y) ln(1 - p))` for a label in {0, 1}.
pub fn bce_loss(prob: f64, label: f64) -> f64 {
    let p = prob.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}
