//! Classifier-free guidance and its coherence-aware variant.
//!
//! cfg:    ε̂ = ε(x,y) + ω·(ε(x,y) − ε(x,∅))
//! ca-cfg: ε̂ = ε(x,y,1) + ω·(ε(x,y,1) − ε(x,y,0))
//!
//! ca-cfg swaps the dropped-out null condition for the same condition at
//! coherence zero, so no conditioning dropout is needed in training.

use crate::denoiser::Denoiser;
use crate::error::{CadError, Result};
use crate::ndtensor::Tensor;
use crate::noisesim::Strategy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuidanceMode {
    None,
    Cfg,
    CaCfg,
}

impl GuidanceMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(GuidanceMode::None),
            "cfg" => Some(GuidanceMode::Cfg),
            "ca-cfg" => Some(GuidanceMode::CaCfg),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GuidanceMode::None => "none",
            GuidanceMode::Cfg => "cfg",
            GuidanceMode::CaCfg => "ca-cfg",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GuidanceSpec {
    pub mode: GuidanceMode,
    /// Guidance rate ω ≥ 0.
    pub omega: f64,
}

impl GuidanceSpec {
    pub fn none() -> Self {
        GuidanceSpec {
            mode: GuidanceMode::None,
            omega: 0.0,
        }
    }

    /// Check the spec against the model it will guide.
    pub fn validate(&self, model: &Denoiser) -> Result<()> {
        if self.omega < 0.0 {
            return Err(CadError::contract(format!(
                "guidance rate must be ≥ 0, got {}",
                self.omega
            )));
        }
        match self.mode {
            GuidanceMode::None => Ok(()),
            GuidanceMode::Cfg => {
                if model.cfg_dropout <= 0.0 {
                    Err(CadError::contract(
                        "cfg guidance needs a model trained with conditioning dropout",
                    ))
                } else {
                    Ok(())
                }
            }
            GuidanceMode::CaCfg => {
                if model.regime != Strategy::Cad {
                    Err(CadError::contract(
                        "ca-cfg guidance needs a coherence-conditioned (cad) model",
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Guided ε-prediction for a batch at shared time `t`. `coherence` is the
/// prompt used by mode `none` (and ignored by cfg/ca-cfg, which pin their
/// own coherence values).
pub fn guided_eps(
    model: &Denoiser,
    x_t: &Tensor,
    t: f64,
    labels: &[usize],
    coherence: f64,
    spec: &GuidanceSpec,
) -> Result<Tensor> {
    spec.validate(model)?;
    let b = x_t.rows();
    let ts = vec![t; b];
    match spec.mode {
        GuidanceMode::None => model.predict_eps(x_t, &ts, labels, &vec![coherence; b]),
        GuidanceMode::Cfg => {
            let cond = model.predict_eps(x_t, &ts, labels, &vec![1.0; b])?;
            if spec.omega == 0.0 {
                return Ok(cond);
            }
            let null_labels = vec![model.config.null_class(); b];
            let uncond = model.predict_eps(x_t, &ts, &null_labels, &vec![1.0; b])?;
            Ok(extrapolate(&cond, &uncond, spec.omega))
        }
        GuidanceMode::CaCfg => {
            let cond = model.predict_eps(x_t, &ts, labels, &vec![1.0; b])?;
            if spec.omega == 0.0 {
                return Ok(cond);
            }
            let uncond = model.predict_eps(x_t, &ts, labels, &vec![0.0; b])?;
            Ok(extrapolate(&cond, &uncond, spec.omega))
        }
    }
}

fn extrapolate(cond: &Tensor, uncond: &Tensor, omega: f64) -> Tensor {
    let data = cond
        .data()
        .iter()
        .zip(uncond.data())
        .map(|(&c, &u)| c + omega * (c - u))
        .collect();
    Tensor::new(cond.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;

    fn tiny(regime: Strategy, dropout: f64) -> Denoiser {
        let cfg = DenoiserConfig {
            n_classes: 4,
            data_dim: 2,
            embed_dim: 8,
            hidden: 16,
            depth: 2,
            coh_hidden: 8,
            merge_hidden: 8,
            merged: true,
        };
        Denoiser::init(cfg, regime, dropout, 11)
    }

    #[test]
    fn scalar_arithmetic_case() {
        // ω=2, cond 0.2, uncond 0.1 → 0.4
        let cond = Tensor::matrix(1, 1, vec![0.2]);
        let uncond = Tensor::matrix(1, 1, vec![0.1]);
        let out = extrapolate(&cond, &uncond, 2.0);
        assert!((out.data()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn omega_zero_is_bitwise_conditional() {
        let model = tiny(Strategy::Cad, 0.0);
        let x = Tensor::matrix(2, 2, vec![0.4, -0.1, 0.9, 0.2]);
        let labels = [1, 2];
        let spec = GuidanceSpec {
            mode: GuidanceMode::CaCfg,
            omega: 0.0,
        };
        let guided = guided_eps(&model, &x, 0.5, &labels, 0.3, &spec).unwrap();
        let cond = model
            .predict_eps(&x, &[0.5, 0.5], &labels, &[1.0, 1.0])
            .unwrap();
        for (a, b) in guided.data().iter().zip(cond.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn omega_one_cfg_is_two_cond_minus_uncond() {
        let model = tiny(Strategy::Baseline, 0.1);
        let x = Tensor::matrix(1, 2, vec![0.3, 0.3]);
        let spec = GuidanceSpec {
            mode: GuidanceMode::Cfg,
            omega: 1.0,
        };
        let guided = guided_eps(&model, &x, 0.4, &[2], 1.0, &spec).unwrap();
        let cond = model.predict_eps(&x, &[0.4], &[2], &[1.0]).unwrap();
        let uncond = model
            .predict_eps(&x, &[0.4], &[model.config.null_class()], &[1.0])
            .unwrap();
        for i in 0..2 {
            let expect = 2.0 * cond.data()[i] - uncond.data()[i];
            assert!((guided.data()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn guided_eps_is_affine_in_omega() {
        // Three-point collinearity at machine precision.
        let model = tiny(Strategy::Cad, 0.0);
        let x = Tensor::matrix(1, 2, vec![0.7, -0.4]);
        let eval = |omega: f64| {
            let spec = GuidanceSpec {
                mode: GuidanceMode::CaCfg,
                omega,
            };
            guided_eps(&model, &x, 0.6, &[3], 1.0, &spec).unwrap()
        };
        let (a, b, c) = (eval(0.5), eval(1.5), eval(2.5));
        for i in 0..2 {
            let lhs = b.data()[i] - a.data()[i];
            let rhs = c.data()[i] - b.data()[i];
            assert!((lhs - rhs).abs() < 1e-12, "not affine at {i}");
        }
    }

    #[test]
    fn mode_model_mismatches_rejected() {
        let baseline = tiny(Strategy::Baseline, 0.0);
        let x = Tensor::matrix(1, 2, vec![0.0, 0.0]);
        let ca = GuidanceSpec {
            mode: GuidanceMode::CaCfg,
            omega: 1.0,
        };
        assert!(guided_eps(&baseline, &x, 0.5, &[0], 1.0, &ca).is_err());
        let cfg = GuidanceSpec {
            mode: GuidanceMode::Cfg,
            omega: 1.0,
        };
        assert!(guided_eps(&baseline, &x, 0.5, &[0], 1.0, &cfg).is_err());
        let negative = GuidanceSpec {
            mode: GuidanceMode::None,
            omega: -1.0,
        };
        assert!(guided_eps(&baseline, &x, 0.5, &[0], 1.0, &negative).is_err());
    }
}
