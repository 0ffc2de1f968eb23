//! He-normal initialization: weights drawn from N(0, 2 / fan_in), biases
//! zero. Draw order follows the canonical flat order so a seed pins every
//! starting parameter exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{NetError, NetworkArchitecture, ParameterSet};

pub fn he_normal_init(arch: &NetworkArchitecture, seed: u64) -> Result<ParameterSet, NetError> {
    let mut params = ParameterSet::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in &mut params.conv {
        let fan_in = (c.kernel * c.kernel * c.in_channels) as f64;
        fill_normal(&mut c.weights, fan_in, &mut rng)?;
    }
    for d in &mut params.dense {
        fill_normal(&mut d.weights, d.in_dim as f64, &mut rng)?;
    }
    let fan_in = params.output.in_dim as f64;
    fill_normal(&mut params.output.weights, fan_in, &mut rng)?;
    Ok(params)
}

fn fill_normal(weights: &mut [f64], fan_in: f64, rng: &mut ChaCha8Rng) -> Result<(), NetError> {
    let dist = Normal::new(0.0, (2.0 / fan_in).sqrt())
        .map_err(|e| NetError::Config(format!("init distribution: {e}")))?;
    for w in weights {
        *w = dist.sample(rng);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ConvLayerSpec, DenseLayerSpec};

    fn arch() -> NetworkArchitecture {
        NetworkArchitecture {
            input_side: 9,
            input_channels: 4,
            conv: vec![ConvLayerSpec { filters: 8, kernel: 3, pool_after: false }],
            dense: vec![DenseLayerSpec { units: 2000, dropout: 0.0 }],
        }
    }

    #[test]
    fn same_seed_same_weights_different_seed_different() {
        let a = he_normal_init(&arch(), 7).unwrap();
        let b = he_normal_init(&arch(), 7).unwrap();
        let c = he_normal_init(&arch(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = he_normal_init(&arch(), 3).unwrap();
        assert!(p.conv[0].bias.iter().all(|&b| b == 0.0));
        assert!(p.dense[0].bias.iter().all(|&b| b == 0.0));
        assert_eq!(p.output.bias[0], 0.0);
    }

    #[test]
    fn weight_variance_tracks_two_over_fan_in() {
        // dense stage: fan_in = 196 flatten cells (side 7, 4 channels)... the
        // arch above gives 7*7*8 = 392 inputs; 2000 units = 784k draws.
        let p = he_normal_init(&arch(), 11).unwrap();
        let d = &p.dense[0];
        let n = d.weights.len() as f64;
        let mean: f64 = d.weights.iter().sum::<f64>() / n;
        let var: f64 = d.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 2.0 / d.in_dim as f64;
        assert!(mean.abs() < 3.0 * (expected / n).sqrt(), "mean {mean} too far from 0");
        assert!(
            (var / expected - 1.0).abs() < 0.05,
            "variance {var} vs expected {expected}"
        );
    }
}
