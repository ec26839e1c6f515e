//! Forward corruption and the training loss over a batch.

use crate::denoiser::Denoiser;
use crate::error::{CadError, Result};
use crate::ndtensor::{Tape, Tensor, Var};
use crate::noisesim::{Strategy, TrainSample};

/// X_t = √γ·X + √(1−γ)·ε, elementwise.
pub fn corrupt(x: &Tensor, gamma: f64, eps: &Tensor) -> Tensor {
    assert_eq!(x.shape(), eps.shape(), "corrupt shape mismatch");
    let sg = gamma.sqrt();
    let sn = (1.0 - gamma).sqrt();
    let data = x
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&xv, &ev)| sg * xv + sn * ev)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Norm applied to the per-sample residual ε − ε̂.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossNorm {
    /// Squared L2 (default).
    Squared,
    /// Plain L2.
    Unsquared,
}

impl LossNorm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "squared" => Some(LossNorm::Squared),
            "unsquared" => Some(LossNorm::Unsquared),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossNorm::Squared => "squared",
            LossNorm::Unsquared => "unsquared",
        }
    }
}

/// Batch loss on an existing tape. `gammas`, `eps` and the batch align by
/// index; conditioning per regime: CAD feeds the per-sample coherence,
/// weighted multiplies each residual term by its weight, baseline and
/// filtered run plain conditional terms.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_loss(
    model: &Denoiser,
    tape: &mut Tape,
    vars: &[Var],
    batch: &[TrainSample],
    ts: &[f64],
    gammas: &[f64],
    eps_draws: &Tensor,
    norm: LossNorm,
    cfg_null_mask: &[bool],
) -> Result<Var> {
    let b = batch.len();
    assert_eq!(ts.len(), b);
    assert_eq!(gammas.len(), b);
    assert_eq!(eps_draws.rows(), b);
    assert_eq!(cfg_null_mask.len(), b);

    let regime = model.regime;
    let dim = model.config.data_dim;
    let mut x_t = Vec::with_capacity(b * dim);
    let mut ys = Vec::with_capacity(b);
    let mut cs = Vec::with_capacity(b);
    let mut weights = Vec::with_capacity(b);
    for (i, s) in batch.iter().enumerate() {
        let sg = gammas[i].sqrt();
        let sn = (1.0 - gammas[i]).sqrt();
        for (d, &e) in eps_draws.row(i).iter().enumerate() {
            x_t.push(sg * s.x[d] + sn * e);
        }
        ys.push(if cfg_null_mask[i] {
            model.config.null_class()
        } else {
            s.label
        });
        let c = match (regime, s.cond_coherence) {
            (Strategy::Cad, Some(c)) => c,
            (Strategy::Cad, None) => {
                return Err(CadError::contract(
                    "cad regime requires a coherence score on every sample",
                ))
            }
            _ => 1.0, // sentinel applied inside the model anyway
        };
        cs.push(c);
        let w = match (regime, s.weight) {
            (Strategy::Weighted, Some(w)) => w,
            (Strategy::Weighted, None) => {
                return Err(CadError::contract(
                    "weighted regime requires a loss weight on every sample",
                ))
            }
            _ => 1.0,
        };
        weights.push(w);
    }

    let x_t = Tensor::matrix(b, dim, x_t);
    let pred = model.forward(tape, vars, &x_t, ts, &ys, &cs)?;
    let target = tape.leaf(eps_draws.clone());
    let residual = tape.sub(target, pred);
    let per_sample = match norm {
        LossNorm::Squared => tape.row_sum_sq(residual),
        LossNorm::Unsquared => tape.row_norm(residual),
    };
    let weighted = if regime == Strategy::Weighted {
        let w = tape.leaf(Tensor::matrix(b, 1, weights));
        tape.mul(per_sample, w)
    } else {
        per_sample
    };
    Ok(tape.mean(weighted))
}
