//! One-dimensional density estimators behind the suggestion rule: a
//! truncated-Gaussian Parzen mixture with a uniform prior component for
//! continuous dimensions, and Laplace-smoothed counts for categorical
//! ones.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Linear-interpolation quantile (the common "type 7" definition):
/// `h = (n-1) q`, interpolating between the floor and ceiling order
/// statistics.
pub fn quantile_type7(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    let n = v.len();
    if n == 1 {
        return v[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

/// Mixture of truncated Gaussians centered at the observations plus one
/// uniform component over `[lo, hi]`. With zero observations this
/// degenerates to exactly the uniform prior.
#[derive(Debug, Clone)]
pub struct Parzen1D {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    widths: Vec<f64>,
    /// Mixture weights: one per Gaussian, then the uniform component's.
    /// Always sums to 1.
    weights: Vec<f64>,
}

impl Parzen1D {
    /// Equal-weight fit: every Gaussian and the uniform prior component
    /// carry weight 1/(k+1).
    pub fn fit(points: &[f64], lo: f64, hi: f64) -> Parzen1D {
        Parzen1D::fit_weighted(points, &vec![1.0; points.len()], lo, hi)
    }

    /// `points` live in fit space (already log-transformed for
    /// log-uniform dimensions). Each center's bandwidth is the larger
    /// distance to its neighboring centers, where the truncation bounds
    /// count as the flanking centers for the outermost points, clamped
    /// to [1%, 100%] of the range. Without the bound neighbors an
    /// outermost kernel facing unexplored territory would inherit the
    /// spacing of the explored side and never propose past its own
    /// frontier. `raw_weights` (positive, unnormalized, parallel to
    /// `points`) set the relative kernel masses; the uniform prior
    /// component always weighs as much as one average kernel, so equal
    /// raw weights give 1/(k+1) each.
    pub fn fit_weighted(points: &[f64], raw_weights: &[f64], lo: f64, hi: f64) -> Parzen1D {
        assert!(hi > lo, "degenerate range [{lo}, {hi}]");
        assert_eq!(points.len(), raw_weights.len(), "weight per point");
        let range = hi - lo;
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            points[a].partial_cmp(&points[b]).expect("non-finite observation")
        });
        let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();
        let kernel_raw: Vec<f64> = order.iter().map(|&i| raw_weights[i]).collect();
        assert!(kernel_raw.iter().all(|&w| w > 0.0 && w.is_finite()), "weights must be positive");
        let n = sorted.len();
        let widths: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { sorted[i] - sorted[i - 1] } else { sorted[i] - lo };
                let right = if i + 1 < n { sorted[i + 1] - sorted[i] } else { hi - sorted[i] };
                left.max(right).clamp(0.01 * range, range)
            })
            .collect();
        let prior_raw = if n == 0 {
            1.0
        } else {
            kernel_raw.iter().sum::<f64>() / n as f64
        };
        let total: f64 = kernel_raw.iter().sum::<f64>() + prior_raw;
        let mut weights: Vec<f64> = kernel_raw.iter().map(|w| w / total).collect();
        weights.push(prior_raw / total);
        Parzen1D { lo, hi, centers: sorted, widths, weights }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.pdf(x).ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let uniform = 1.0 / (self.hi - self.lo);
        let mut total = self.weights[self.centers.len()] * uniform;
        for ((&c, &w), &wt) in self.centers.iter().zip(&self.widths).zip(&self.weights) {
            let dist = Normal::new(c, w).expect("positive bandwidth");
            let mass = dist.cdf(self.hi) - dist.cdf(self.lo);
            if mass > 0.0 {
                total += wt * dist.pdf(x) / mass;
            }
        }
        total
    }

    /// Draws one value in `[lo, hi]`: pick a component by weight, then
    /// sample it (rejection against the bounds for the Gaussians).
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let k = self.centers.len();
        let u: f64 = rng.random();
        let mut comp = k;
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = i;
                break;
            }
        }
        if comp == k {
            return self.lo + rng.random::<f64>() * (self.hi - self.lo);
        }
        let (c, w) = (self.centers[comp], self.widths[comp]);
        for _ in 0..1000 {
            let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            let x = c + w * z;
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
        // Pathologically unlucky stream; fall back to the uniform component.
        self.lo + rng.random::<f64>() * (self.hi - self.lo)
    }

    #[cfg(test)]
    pub(crate) fn widths(&self) -> &[f64] {
        &self.widths
    }

    #[cfg(test)]
    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Laplace-smoothed categorical density: with `n` observations over `k`
/// choices, `p_i = (count_i + 1) / (n + k)`. Zero observations give the
/// uniform distribution.
#[derive(Debug, Clone)]
pub struct CatDensity {
    probs: Vec<f64>,
}

impl CatDensity {
    pub fn fit(observations: &[usize], k: usize) -> CatDensity {
        assert!(k > 0, "categorical dimension needs at least one choice");
        let mut counts = vec![0usize; k];
        for &o in observations {
            assert!(o < k, "observation {o} out of range for {k} choices");
            counts[o] += 1;
        }
        let denom = (observations.len() + k) as f64;
        CatDensity { probs: counts.iter().map(|&c| (c + 1) as f64 / denom).collect() }
    }

    pub fn log_pdf(&self, choice: usize) -> f64 {
        self.probs[choice].ln()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    #[cfg(test)]
    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn quantile_interpolates_like_the_reference_definition() {
        assert_eq!(quantile_type7(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_type7(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        assert_eq!(quantile_type7(&[4.0, 1.0, 3.0, 2.0], 0.25), 1.75);
        assert_eq!(quantile_type7(&[1.0, 1.0, 1.0, 2.0], 0.5), 1.0);
        assert_eq!(quantile_type7(&[7.0], 0.9), 7.0);
        assert_eq!(quantile_type7(&[1.0, 2.0], 0.0), 1.0);
        assert_eq!(quantile_type7(&[1.0, 2.0], 1.0), 2.0);
    }

    #[test]
    fn empty_parzen_is_exactly_the_uniform_prior() {
        let p = Parzen1D::fit(&[], 2.0, 6.0);
        for x in [2.0, 3.3, 5.9] {
            assert!((p.pdf(x) - 0.25).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = p.sample(&mut rng);
            assert!((2.0..=6.0).contains(&x));
        }
    }

    #[test]
    fn bandwidths_are_neighbor_distances_clamped_to_the_range() {
        let p = Parzen1D::fit(&[0.0, 0.1, 0.9], 0.0, 1.0);
        // Sorted points 0.0, 0.1, 0.9: neighbor distances max to 0.1, 0.8,
        // 0.8 respectively; all within [0.01, 1.0].
        let w = p.widths();
        assert!((w[0] - 0.1).abs() < 1e-15);
        assert!((w[1] - 0.8).abs() < 1e-15);
        assert!((w[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_clamps_bind_at_both_ends() {
        // Interior point with tight neighbors on both sides hits the 1%
        // floor; a point sitting on a bound spans the whole range.
        let tight = Parzen1D::fit(&[0.5, 0.5001, 0.5002], 0.0, 1.0);
        assert!((tight.widths()[1] - 0.01).abs() < 1e-15);
        let spanning = Parzen1D::fit(&[0.0, 1.0], 0.0, 1.0);
        assert_eq!(spanning.widths(), &[1.0, 1.0]);
    }

    #[test]
    fn outermost_bandwidths_reach_the_bounds() {
        // The bounds act as flanking centers for the first and last
        // points, so frontier kernels cover the unexplored side.
        let p = Parzen1D::fit(&[0.4, 0.5], 0.0, 1.0);
        assert!((p.widths()[0] - 0.4).abs() < 1e-15);
        assert!((p.widths()[1] - 0.5).abs() < 1e-15);
        let lone = Parzen1D::fit(&[0.3], 0.0, 1.0);
        assert_eq!(lone.widths(), &[0.7]);
    }

    #[test]
    fn mixture_weights_normalize_with_prior_as_one_average_kernel() {
        let equal = Parzen1D::fit(&[0.2, 0.4, 0.6], 0.0, 1.0);
        for &w in equal.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        // Raw kernel weights 2 and 6: prior takes their mean (4), so the
        // normalized mixture is [1/6, 1/2, 1/3] in sorted-center order.
        let skewed = Parzen1D::fit_weighted(&[0.7, 0.2], &[2.0, 6.0], 0.0, 1.0);
        assert!((skewed.weights()[0] - 0.5).abs() < 1e-15);
        assert!((skewed.weights()[1] - 2.0 / 12.0).abs() < 1e-15);
        assert!((skewed.weights()[2] - 4.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn parzen_density_integrates_to_one() {
        let p = Parzen1D::fit(&[0.2, 0.25, 0.8], 0.0, 1.0);
        // Simpson-rule integral over the support.
        let n = 4000;
        let h = 1.0 / n as f64;
        let mut integral = p.pdf(0.0) + p.pdf(1.0);
        for i in 1..n {
            let x = i as f64 * h;
            integral += p.pdf(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        integral *= h / 3.0;
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn parzen_mass_concentrates_near_observations() {
        // Equal weights: the outer kernels of the cluster reach toward
        // the bounds, so concentration is moderate but still well above
        // the 0.2 a uniform density would put within +/-0.1.
        let p = Parzen1D::fit(&[0.3, 0.31, 0.29], 0.0, 1.0);
        assert!(p.pdf(0.3) > 3.0 * p.pdf(0.9));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4000;
        let near = (0..n)
            .filter(|_| (p.sample(&mut rng) - 0.3).abs() < 0.1)
            .count() as f64
            / n as f64;
        assert!(near > 0.35, "only {near} of samples near the cluster");
        // A dominant weight on the interior point concentrates hard: its
        // bandwidth is the tight neighbor gap, not the bound distance.
        let w = Parzen1D::fit_weighted(&[0.3, 0.31, 0.29], &[1.0, 1.0 / 64.0, 1.0 / 64.0], 0.0, 1.0);
        let near_w = (0..n)
            .filter(|_| (w.sample(&mut rng) - 0.3).abs() < 0.1)
            .count() as f64
            / n as f64;
        assert!(near_w > 0.6, "only {near_w} of weighted samples near the cluster");
    }

    #[test]
    fn categorical_smoothing_matches_the_closed_form() {
        // Counts (3, 1) over two choices: (3+1)/(4+2) and (1+1)/(4+2).
        let d = CatDensity::fit(&[0, 0, 0, 1], 2);
        assert!((d.probs()[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((d.probs()[1] - 2.0 / 6.0).abs() < 1e-15);
        let empty = CatDensity::fit(&[], 3);
        assert!(empty.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn categorical_sampling_tracks_probabilities() {
        let d = CatDensity::fit(&[0, 0, 0, 0, 0, 0, 1, 1], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let zeros = (0..n).filter(|_| d.sample(&mut rng) == 0).count() as f64 / n as f64;
        assert!((zeros - 0.7).abs() < 0.02, "empirical {zeros} vs 0.7");
    }
}
