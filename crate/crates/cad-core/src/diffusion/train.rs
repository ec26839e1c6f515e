//! Deterministic training loop: LAMB/Adam with warmup+cosine schedule and
//! an EMA copy of the parameters.

use super::loss::{diffusion_loss, LossNorm};
use super::schedule::NoiseSchedule;
use crate::denoiser::Denoiser;
use crate::error::{CadError, Result};
use crate::ndtensor::{ema_update, LrSchedule, OptimizerHyper, OptimizerKind, OptimizerState, Params, Tape, Tensor};
use crate::noisesim::DatasetView;
use crate::rng::derive_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub schedule: NoiseSchedule,
    pub norm: LossNorm,
    pub ema_decay: f64,
    pub lr: LrSchedule,
    pub optimizer: OptimizerKind,
    pub hyper: OptimizerHyper,
    /// Probability of replacing the class label with the null id, for
    /// models meant to support plain CFG at sampling time. Zero disables.
    pub cfg_dropout: f64,
    pub log_every: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct HistoryRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub ema_loss: f64,
}

pub struct TrainResult {
    pub model: Denoiser,
    pub ema: Params,
    pub history: Vec<HistoryRow>,
}

/// Train `model` on `view`. Fully deterministic given `seed`.
pub fn train(
    mut model: Denoiser,
    view: &DatasetView,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainResult> {
    if view.strategy != model.regime {
        return Err(CadError::contract(format!(
            "dataset view is `{}` but model regime is `{}`",
            view.strategy.name(),
            model.regime.name()
        )));
    }
    if view.samples.is_empty() && config.steps > 0 {
        return Err(CadError::contract("cannot train on an empty dataset view"));
    }
    model.cfg_dropout = config.cfg_dropout;

    let mut rng = derive_rng(seed, "train");
    let mut state = OptimizerState::new(&model.params, config.optimizer, config.hyper);
    let mut ema = model.params.clone();
    let mut history = Vec::new();
    let mut ema_loss = f64::NAN;
    let dim = model.config.data_dim;

    for step in 1..=config.steps {
        let batch: Vec<_> = (0..config.batch)
            .map(|_| view.samples[rng.random_range(0..view.samples.len())])
            .collect();
        let ts: Vec<f64> = (0..config.batch).map(|_| rng.random()).collect();
        let gammas: Vec<f64> = ts.iter().map(|&t| config.schedule.gamma(t)).collect();
        let eps_data: Vec<f64> = (0..config.batch * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let eps = Tensor::matrix(config.batch, dim, eps_data);
        let null_mask: Vec<bool> = (0..config.batch)
            .map(|_| config.cfg_dropout > 0.0 && rng.random::<f64>() < config.cfg_dropout)
            .collect();

        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let loss_var = diffusion_loss(
            &model, &mut tape, &vars, &batch, &ts, &gammas, &eps, config.norm, &null_mask,
        )?;
        let loss = tape.value(loss_var).scalar_value();
        if !loss.is_finite() {
            return Err(CadError::Diverged { step, loss });
        }
        let grads_all = tape.backward(loss_var)?;
        let grads: Vec<Tensor> = (0..model.params.len())
            .map(|i| grads_all.wrt_or_zeros(vars[i], model.params.tensor(i)))
            .collect();

        let lr = config.lr.lr_at(step);
        state.step(&mut model.params, &grads, lr)?;
        ema_update(&mut ema, &model.params, config.ema_decay)?;

        ema_loss = if ema_loss.is_nan() {
            loss
        } else {
            0.99 * ema_loss + 0.01 * loss
        };
        if step % config.log_every.max(1) == 0 || step == config.steps {
            history.push(HistoryRow {
                step,
                lr,
                loss,
                ema_loss,
            });
        }
    }
    Ok(TrainResult {
        model,
        ema,
        history,
    })
}
