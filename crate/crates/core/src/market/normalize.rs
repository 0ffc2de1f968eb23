//! Channel normalization fitted on training windows only.
//!
//! Each channel carries a transform tag: z-score, log1p-then-z-score, or
//! identity. Statistics are sample moments (n-1 denominator) over every
//! grid cell of every training window. A channel that is constant in
//! training keeps std = 1 so normalization only recenters it.

use serde::{Deserialize, Serialize};

use super::{channel_names, channel_transforms, LabeledWindow, MarketError, Transform, CHANNELS};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub name: String,
    pub transform: Transform,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: Vec<ChannelStats>,
}

impl NormalizationStats {
    /// True no-op stats for every channel; useful for synthetic tensors
    /// that are already scaled.
    pub fn identity() -> Self {
        NormalizationStats {
            channels: channel_names()
                .into_iter()
                .map(|name| ChannelStats {
                    name,
                    transform: Transform::Identity,
                    mean: 0.0,
                    std: 1.0,
                })
                .collect(),
        }
    }
}

fn pre_transform(transform: Transform, v: f64) -> f64 {
    match transform {
        Transform::Identity | Transform::ZScore => v,
        Transform::Log1pZScore => v.ln_1p(),
    }
}

/// Fits per-channel moments on the training split. Windows from other
/// splits must not be passed in; the caller owns that separation.
pub fn fit_normalization(train: &[LabeledWindow]) -> Result<NormalizationStats, MarketError> {
    if train.is_empty() {
        return Err(MarketError::Empty("no training windows to fit on".into()));
    }
    let transforms = channel_transforms();
    let names = channel_names();
    let cells: usize = train.iter().map(|w| w.side * w.side).sum();

    let mut sums = [0.0f64; CHANNELS];
    for w in train {
        for cell in 0..w.side * w.side {
            let vec = w.tensor.cell(cell / w.side, cell % w.side);
            for c in 0..CHANNELS {
                sums[c] += pre_transform(transforms[c], vec[c]);
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / cells as f64).collect();

    let mut sq = [0.0f64; CHANNELS];
    for w in train {
        for cell in 0..w.side * w.side {
            let vec = w.tensor.cell(cell / w.side, cell % w.side);
            for c in 0..CHANNELS {
                let d = pre_transform(transforms[c], vec[c]) - means[c];
                sq[c] += d * d;
            }
        }
    }

    let channels = (0..CHANNELS)
        .map(|c| {
            let (mean, std) = match transforms[c] {
                Transform::Identity => (0.0, 1.0),
                _ => {
                    let var = if cells > 1 { sq[c] / (cells - 1) as f64 } else { 0.0 };
                    let std = var.sqrt();
                    (means[c], if std > 0.0 { std } else { 1.0 })
                }
            };
            ChannelStats {
                name: names[c].clone(),
                transform: transforms[c],
                mean,
                std,
            }
        })
        .collect();
    Ok(NormalizationStats { channels })
}

fn check_stats(tensor: &Tensor3, stats: &NormalizationStats) -> Result<(), MarketError> {
    if stats.channels.len() != tensor.channels() {
        return Err(MarketError::Config(format!(
            "stats cover {} channels, tensor has {}",
            stats.channels.len(),
            tensor.channels()
        )));
    }
    Ok(())
}

/// Normalizes a raw window tensor in channel order.
pub fn apply_normalization(
    tensor: &Tensor3,
    stats: &NormalizationStats,
) -> Result<Tensor3, MarketError> {
    check_stats(tensor, stats)?;
    let (h, w, c) = tensor.shape();
    let mut out = tensor.clone();
    for i in 0..h {
        for j in 0..w {
            let cell = out.cell_mut(i, j);
            for (k, ch) in stats.channels.iter().enumerate().take(c) {
                cell[k] = (pre_transform(ch.transform, cell[k]) - ch.mean) / ch.std;
            }
        }
    }
    Ok(out)
}

/// Undoes [`apply_normalization`]; exact up to floating-point round-off.
pub fn invert_normalization(
    tensor: &Tensor3,
    stats: &NormalizationStats,
) -> Result<Tensor3, MarketError> {
    check_stats(tensor, stats)?;
    let (h, w, c) = tensor.shape();
    let mut out = tensor.clone();
    for i in 0..h {
        for j in 0..w {
            let cell = out.cell_mut(i, j);
            for (k, ch) in stats.channels.iter().enumerate().take(c) {
                let raw = cell[k] * ch.std + ch.mean;
                cell[k] = match ch.transform {
                    Transform::Identity | Transform::ZScore => raw,
                    Transform::Log1pZScore => raw.exp_m1(),
                };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{VENUE_CHANNEL_BASE, CHANNELS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window_from_tensor(tensor: Tensor3, id: u64) -> LabeledWindow {
        let side = tensor.height();
        LabeledWindow {
            window_id: id,
            side,
            tensor,
            label: 0,
            trade_ids: (0..(side * side) as u64).collect(),
        }
    }

    fn random_raw_windows(count: usize, side: usize, seed: u64) -> Vec<LabeledWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|id| {
                let mut t = Tensor3::zeros(side, side, CHANNELS);
                for i in 0..side {
                    for j in 0..side {
                        let cell = t.cell_mut(i, j);
                        cell[0] = rng.random_range(0.0..1.0);
                        for k in [1, 3, 6, 7, 9] {
                            cell[k] = rng.random_range(50.0..150.0);
                        }
                        for k in [2, 4, 5, 8, 10, 13] {
                            cell[k] = rng.random_range(0.0..10_000.0f64).floor();
                        }
                        cell[11] = 0.0;
                        cell[12] = 0.25;
                        let venue = rng.random_range(0..21usize);
                        cell[VENUE_CHANNEL_BASE + venue] = 1.0;
                    }
                }
                window_from_tensor(t, id as u64)
            })
            .collect()
    }

    #[test]
    fn zscored_channels_have_unit_sample_moments_after_normalization() {
        let train = random_raw_windows(6, 4, 11);
        let stats = fit_normalization(&train).unwrap();
        let normalized: Vec<Tensor3> = train
            .iter()
            .map(|w| apply_normalization(&w.tensor, &stats).unwrap())
            .collect();

        // Recompute sample moments of the trade_price channel (6, z-score).
        let n = (6 * 4 * 4) as f64;
        let mut sum = 0.0;
        for t in &normalized {
            for i in 0..4 {
                for j in 0..4 {
                    sum += t.get(i, j, 6);
                }
            }
        }
        let mean = sum / n;
        let mut sq = 0.0;
        for t in &normalized {
            for i in 0..4 {
                for j in 0..4 {
                    let d = t.get(i, j, 6) - mean;
                    sq += d * d;
                }
            }
        }
        let std = (sq / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-10, "std {std}");
    }

    #[test]
    fn constant_channel_is_recentred_with_unit_std() {
        let mut train = random_raw_windows(3, 3, 7);
        for w in &mut train {
            for i in 0..3 {
                for j in 0..3 {
                    w.tensor.set(i, j, 6, 42.0);
                }
            }
        }
        let stats = fit_normalization(&train).unwrap();
        assert_eq!(stats.channels[6].std, 1.0);
        assert_eq!(stats.channels[6].mean, 42.0);
        let out = apply_normalization(&train[0].tensor, &stats).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(out.get(i, j, 6), 0.0);
            }
        }
    }

    #[test]
    fn identity_channels_pass_through_unchanged() {
        let train = random_raw_windows(4, 3, 19);
        let stats = fit_normalization(&train).unwrap();
        let out = apply_normalization(&train[0].tensor, &stats).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(out.get(i, j, 11), train[0].tensor.get(i, j, 11));
                assert_eq!(out.get(i, j, 12), train[0].tensor.get(i, j, 12));
                for v in 0..21 {
                    let c = VENUE_CHANNEL_BASE + v;
                    assert_eq!(out.get(i, j, c), train[0].tensor.get(i, j, c));
                }
            }
        }
    }

    #[test]
    fn normalization_round_trips_within_relative_1e9() {
        let train = random_raw_windows(5, 4, 23);
        let stats = fit_normalization(&train).unwrap();
        for w in &train {
            let fwd = apply_normalization(&w.tensor, &stats).unwrap();
            let back = invert_normalization(&fwd, &stats).unwrap();
            for (a, b) in w.tensor.as_slice().iter().zip(back.as_slice()) {
                let scale = a.abs().max(1.0);
                assert!((a - b).abs() / scale < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn stats_ignore_windows_outside_the_training_split() {
        let corpus = random_raw_windows(8, 3, 31);
        let (train, _val) = corpus.split_at(5);
        let fitted_before = fit_normalization(train).unwrap();
        // Growing the corpus (new validation windows) must not move stats
        // refit on the same training slice.
        let mut grown = corpus.to_vec();
        grown.extend(random_raw_windows(4, 3, 99));
        let fitted_after = fit_normalization(&grown[..5]).unwrap();
        assert_eq!(fitted_before, fitted_after);
    }

    #[test]
    fn empty_training_split_is_an_error() {
        assert!(fit_normalization(&[]).is_err());
    }
}
