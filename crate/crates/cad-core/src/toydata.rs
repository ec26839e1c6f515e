//! Synthetic ring-of-Gaussians datasets with an analytic Bayes-optimal
//! classifier standing in for pretrained accuracy networks.

use crate::error::{CadError, Result};
use crate::rng::derive_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;

/// N equiprobable isotropic Gaussians on a ring of radius `radius`.
/// Class k is centered at angle 2πk/N.
#[derive(Clone, Copy, Debug)]
pub struct RingMixtureSpec {
    pub n_classes: usize,
    pub radius: f64,
    pub sigma: f64,
}

impl RingMixtureSpec {
    pub fn new(n_classes: usize, radius: f64, sigma: f64) -> Result<Self> {
        if n_classes < 2 {
            return Err(CadError::contract("ring mixture needs ≥ 2 classes"));
        }
        if radius <= 0.0 || sigma <= 0.0 {
            return Err(CadError::contract("radius and sigma must be positive"));
        }
        Ok(RingMixtureSpec {
            n_classes,
            radius,
            sigma,
        })
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let angle = TAU * k as f64 / self.n_classes as f64;
        [self.radius * angle.cos(), self.radius * angle.sin()]
    }
}

/// Data point with label, coherence score and optional loss weight.
#[derive(Clone, Copy, Debug)]
pub struct AnnotatedSample {
    pub x: [f64; 2],
    pub label: usize,
    pub coherence: f64,
    pub weight: Option<f64>,
}

/// Draw `n` clean samples (coherence 1). Deterministic under seed.
pub fn generate(spec: &RingMixtureSpec, n: usize, seed: u64) -> Vec<AnnotatedSample> {
    let mut rng = derive_rng(seed, "toydata.generate");
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..spec.n_classes);
            let c = spec.center(label);
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            AnnotatedSample {
                x: [c[0] + spec.sigma * dx, c[1] + spec.sigma * dy],
                label,
                coherence: 1.0,
                weight: None,
            }
        })
        .collect()
}

/// Bayes-optimal label and posterior under equal priors and shared
/// isotropic covariance: nearest center wins, ties to the smallest id.
pub fn bayes_classify(x: [f64; 2], spec: &RingMixtureSpec) -> (usize, Vec<f64>) {
    let sq_dists: Vec<f64> = (0..spec.n_classes)
        .map(|k| {
            let c = spec.center(k);
            let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
            dx * dx + dy * dy
        })
        .collect();
    let min_sq = sq_dists.iter().cloned().fold(f64::INFINITY, f64::min);
    // Subtract the min before exponentiating to avoid underflow to all-zeros.
    let mut posterior: Vec<f64> = sq_dists
        .iter()
        .map(|d| (-(d - min_sq) / (2.0 * spec.sigma * spec.sigma)).exp())
        .collect();
    let total: f64 = posterior.iter().sum();
    for p in posterior.iter_mut() {
        *p /= total;
    }
    let label = sq_dists
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    (label, posterior)
}

/// Affine standardization fitted on training data; stored so samples can be
/// mapped back to data space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Standardizer {
    pub fn fit(points: &[[f64; 2]]) -> Self {
        let n = points.len().max(1) as f64;
        let mut mean = [0.0; 2];
        for p in points {
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut var = [0.0; 2];
        for p in points {
            var[0] += (p[0] - mean[0]).powi(2);
            var[1] += (p[1] - mean[1]).powi(2);
        }
        let std = [(var[0] / n).sqrt().max(1e-12), (var[1] / n).sqrt().max(1e-12)];
        Standardizer { mean, std }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.mean[0]) / self.std[0],
            (p[1] - self.mean[1]) / self.std[1],
        ]
    }

    pub fn invert(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.std[0] + self.mean[0],
            p[1] * self.std[1] + self.mean[1],
        ]
    }
}
