//! Streaming per-dimension observation scaling.

use serde::{Deserialize, Serialize};

pub const NORMALIZER_CLIP: f64 = 5.0;

/// Running mean and variance per feature dimension (Welford updates), with
/// clipped standardized outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub clip: f64,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Normalizer { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim], clip: NORMALIZER_CLIP }
    }

    pub fn update(&mut self, sample: &[f64]) {
        debug_assert_eq!(sample.len(), self.mean.len());
        self.count += 1.0;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(sample) {
            let delta = x - *mean;
            *mean += delta / self.count;
            *m2 += delta * (x - *mean);
        }
    }

    /// Population variance of dimension `i`.
    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 1.0 {
            0.0
        } else {
            (self.m2[i] / self.count).max(0.0)
        }
    }

    pub fn normalize(&self, sample: &[f64]) -> Vec<f64> {
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let centered = if self.count < 1.0 { x } else { x - self.mean[i] };
                let scaled = centered / (self.variance(i) + 1e-8).sqrt();
                scaled.clamp(-self.clip, self.clip)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn streaming_matches_two_pass() {
        let mut rng = StdRng::seed_from_u64(4);
        let dim = 5;
        let n = 4000;
        let samples: Vec<Vec<f64>> =
            (0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>() * 40.0 - 20.0).collect()).collect();
        let mut norm = Normalizer::new(dim);
        for s in &samples {
            norm.update(s);
        }
        for i in 0..dim {
            let mean: f64 = samples.iter().map(|s| s[i]).sum::<f64>() / n as f64;
            let var: f64 =
                samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((norm.mean[i] - mean).abs() < 1e-9, "mean[{i}]");
            assert!((norm.variance(i) - var).abs() < 1e-9, "var[{i}]");
        }
    }

    #[test]
    fn outputs_are_clipped() {
        let mut norm = Normalizer::new(1);
        for _ in 0..100 {
            norm.update(&[1.0]);
        }
        norm.update(&[1.0001]);
        let v = norm.normalize(&[1e9]);
        assert_eq!(v[0], NORMALIZER_CLIP);
        let v = norm.normalize(&[-1e9]);
        assert_eq!(v[0], -NORMALIZER_CLIP);
    }
}
