//! Reverse sampling family: η = 0 is deterministic DDIM, η = 1 is
//! DDPM-ancestral. One step from time t to t_next:
//!
//!   x̂₀     = (x_t − √(1−γ_t)·ε̂)/√γ_t
//!   σ²     = η²·(1−γ_next)/(1−γ_t)·(1−γ_t/γ_next)
//!   x_next = √γ_next·x̂₀ + √(1−γ_next−σ²)·ε̂ + σ·z,  z ~ N(0,1)

use super::guidance::{guided_eps, GuidanceSpec};
use super::schedule::NoiseSchedule;
use crate::denoiser::Denoiser;
use crate::error::Result;
use crate::ndtensor::Tensor;
use crate::rng::derive_rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[allow(clippy::too_many_arguments)]
pub fn sampler_step(
    model: &Denoiser,
    x_t: &Tensor,
    t: f64,
    t_next: f64,
    labels: &[usize],
    coherence: f64,
    spec: &GuidanceSpec,
    eta: f64,
    schedule: NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    assert!(
        (0.0..=1.0).contains(&eta),
        "η must lie in [0,1], got {eta}"
    );
    assert!(
        0.0 <= t_next && t_next <= t && t <= 1.0,
        "need 0 ≤ t_next ≤ t ≤ 1, got t={t}, t_next={t_next}"
    );
    let g_t = schedule.gamma(t);
    let g_next = schedule.gamma(t_next);
    let eps_hat = guided_eps(model, x_t, t, labels, coherence, spec)?;

    let sigma_sq = eta * eta * (1.0 - g_next) / (1.0 - g_t) * (1.0 - g_t / g_next).max(0.0);
    let sigma = sigma_sq.sqrt();
    let coef_eps = (1.0 - g_next - sigma_sq).max(0.0).sqrt();
    let (sg_t, sn_t) = (g_t.sqrt(), (1.0 - g_t).sqrt());
    let sg_next = g_next.sqrt();

    let mut out = Vec::with_capacity(x_t.len());
    for (&xv, &ev) in x_t.data().iter().zip(eps_hat.data()) {
        let x0_hat = (xv - sn_t * ev) / sg_t;
        let mut next = sg_next * x0_hat + coef_eps * ev;
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            next += sigma * z;
        }
        out.push(next);
    }
    Ok(Tensor::new(x_t.shape().to_vec(), out))
}

/// Run the sampler over a uniform time grid from 1 to 0. Row i of the
/// result is conditioned on `labels[i]`. Identical seeds give bit-identical
/// outputs.
#[allow(clippy::too_many_arguments)]
pub fn sample(
    model: &Denoiser,
    steps: usize,
    labels: &[usize],
    coherence: f64,
    spec: &GuidanceSpec,
    eta: f64,
    schedule: NoiseSchedule,
    seed: u64,
) -> Result<Tensor> {
    assert!(steps >= 1, "need at least one sampler step");
    let n = labels.len();
    let dim = model.config.data_dim;
    if n == 0 {
        return Ok(Tensor::matrix(0, dim, vec![]));
    }
    let mut rng = derive_rng(seed, "sampler");
    let init: Vec<f64> = (0..n * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        })
        .collect();
    let mut x = Tensor::matrix(n, dim, init);
    for k in 0..steps {
        let t = 1.0 - k as f64 / steps as f64;
        let t_next = 1.0 - (k + 1) as f64 / steps as f64;
        // Guard the grid endpoints against rounding drift.
        let t_next = t_next.max(0.0);
        x = sampler_step(
            model, &x, t, t_next, labels, coherence, spec, eta, schedule, &mut rng,
        )?;
    }
    Ok(x)
}
