use super::embed::{embed_coherence_features, embed_time};
use crate::error::{CadError, Result};
use crate::ndtensor::{Params, Tape, Tensor, Var};
use crate::noisesim::Strategy;
use crate::rng::derive_rng;
use rand_distr::{Distribution, StandardNormal};

/// Coherence fed to the embedding when the model was not trained with
/// coherence conditioning, so parameter counts match across regimes.
pub const SENTINEL_COHERENCE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub n_classes: usize,
    pub data_dim: usize,
    /// Shared dimension of time, class and coherence embeddings.
    pub embed_dim: usize,
    pub hidden: usize,
    /// Number of hidden trunk layers.
    pub depth: usize,
    pub coh_hidden: usize,
    pub merge_hidden: usize,
    /// Merged condition h(y,c) when true; separate class and coherence
    /// entries into the trunk when false.
    pub merged: bool,
}

impl DenoiserConfig {
    pub fn small(n_classes: usize) -> Self {
        DenoiserConfig {
            n_classes,
            data_dim: 2,
            embed_dim: 64,
            hidden: 256,
            depth: 4,
            coh_hidden: 128,
            merge_hidden: 128,
            merged: true,
        }
    }

    /// Trunk input width: x-projection + time embedding + condition part.
    fn trunk_in(&self) -> usize {
        if self.merged {
            3 * self.embed_dim
        } else {
            4 * self.embed_dim
        }
    }

    /// Reserved class id used as the CFG null condition.
    pub fn null_class(&self) -> usize {
        self.n_classes
    }
}

/// The conditional denoiser: configuration, learnable parameters and the
/// training regime it was built for.
#[derive(Clone, Debug)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub regime: Strategy,
    /// Conditioning-dropout probability used in training; CFG sampling
    /// requires it to have been positive.
    pub cfg_dropout: f64,
    pub params: Params,
}

fn init_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Tensor::matrix(rows, cols, data)
}

impl Denoiser {
    pub fn init(config: DenoiserConfig, regime: Strategy, cfg_dropout: f64, seed: u64) -> Self {
        let mut rng = derive_rng(seed, "denoiser.init");
        let d = config.embed_dim;
        let mut p = Params::new();
        // Null row included: N classes + 1.
        p.push(
            "class_table",
            init_matrix(&mut rng, config.n_classes + 1, d, 1.0),
        );
        p.push(
            "coh.w1",
            init_matrix(&mut rng, d, config.coh_hidden, 1.0 / (d as f64).sqrt()),
        );
        p.push("coh.b1", Tensor::matrix(1, config.coh_hidden, vec![0.0; config.coh_hidden]));
        p.push(
            "coh.w2",
            init_matrix(
                &mut rng,
                config.coh_hidden,
                d,
                1.0 / (config.coh_hidden as f64).sqrt(),
            ),
        );
        p.push("coh.b2", Tensor::matrix(1, d, vec![0.0; d]));
        if config.merged {
            p.push(
                "merge.w1",
                init_matrix(
                    &mut rng,
                    2 * d,
                    config.merge_hidden,
                    1.0 / (2.0 * d as f64).sqrt(),
                ),
            );
            p.push(
                "merge.b1",
                Tensor::matrix(1, config.merge_hidden, vec![0.0; config.merge_hidden]),
            );
            p.push(
                "merge.w2",
                init_matrix(
                    &mut rng,
                    config.merge_hidden,
                    d,
                    1.0 / (config.merge_hidden as f64).sqrt(),
                ),
            );
            p.push("merge.b2", Tensor::matrix(1, d, vec![0.0; d]));
        }
        p.push(
            "proj.w",
            init_matrix(&mut rng, config.data_dim, d, 1.0 / (config.data_dim as f64).sqrt()),
        );
        p.push("proj.b", Tensor::matrix(1, d, vec![0.0; d]));
        let mut in_dim = config.trunk_in();
        for layer in 0..config.depth {
            p.push(
                format!("trunk.w{layer}"),
                init_matrix(&mut rng, in_dim, config.hidden, 1.0 / (in_dim as f64).sqrt()),
            );
            p.push(
                format!("trunk.b{layer}"),
                Tensor::matrix(1, config.hidden, vec![0.0; config.hidden]),
            );
            in_dim = config.hidden;
        }
        p.push(
            "head.w",
            init_matrix(
                &mut rng,
                config.hidden,
                config.data_dim,
                1.0 / (config.hidden as f64).sqrt(),
            ),
        );
        p.push(
            "head.b",
            Tensor::matrix(1, config.data_dim, vec![0.0; config.data_dim]),
        );
        Denoiser {
            config,
            regime,
            cfg_dropout,
            params: p,
        }
    }

    /// Register every parameter as a tape leaf, in parameter order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.params.len())
            .map(|i| tape.leaf(self.params.tensor(i).clone()))
            .collect()
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        for i in 0..self.params.len() {
            if self.params.name(i) == name {
                return vars[i];
            }
        }
        panic!("unknown parameter `{name}`");
    }

    /// Coherence actually fed to the embedding: CAD models use the given
    /// value, everything else sees a fixed sentinel.
    pub fn effective_coherence(&self, c: f64) -> f64 {
        if self.regime == Strategy::Cad {
            if !(0.0..=1.0).contains(&c) {
                eprintln!("warning: coherence {c} outside [0,1], clamping");
                return c.clamp(0.0, 1.0);
            }
            c
        } else {
            SENTINEL_COHERENCE
        }
    }

    fn sinusoid_matrix(values: &[f64], d: usize) -> Tensor {
        let mut data = Vec::with_capacity(values.len() * d);
        for &v in values {
            data.extend(embed_time(v, d));
        }
        Tensor::matrix(values.len(), d, data)
    }

    fn coherence_feature_matrix(values: &[f64], d: usize) -> Tensor {
        let mut data = Vec::with_capacity(values.len() * d);
        for &v in values {
            data.extend(embed_coherence_features(v, d));
        }
        Tensor::matrix(values.len(), d, data)
    }

    /// Learned coherence embedding: sinusoidal features of c through a
    /// two-layer map. `cs` must already be effective (regime-resolved).
    fn coh_embed_on_tape(&self, tape: &mut Tape, vars: &[Var], cs: &[f64]) -> Var {
        let feats = tape.leaf(Self::coherence_feature_matrix(cs, self.config.embed_dim));
        let h1 = tape.matmul(feats, self.var(vars, "coh.w1"));
        let h1 = tape.add_row(h1, self.var(vars, "coh.b1"));
        let h1 = tape.silu(h1);
        let h2 = tape.matmul(h1, self.var(vars, "coh.w2"));
        tape.add_row(h2, self.var(vars, "coh.b2"))
    }

    /// Merged condition h(y,c) = merge(concat(class_table[y], coh_embed(c))).
    pub fn h_on_tape(&self, tape: &mut Tape, vars: &[Var], ys: &[usize], cs: &[f64]) -> Result<Var> {
        if !self.config.merged {
            return Err(CadError::contract(
                "merged condition h(y,c) is not available in two-entry mode",
            ));
        }
        self.check_labels(ys)?;
        let class = tape.gather_rows(self.var(vars, "class_table"), ys.to_vec());
        let coh = self.coh_embed_on_tape(tape, vars, cs);
        let joint = tape.concat_cols(class, coh);
        let m1 = tape.matmul(joint, self.var(vars, "merge.w1"));
        let m1 = tape.add_row(m1, self.var(vars, "merge.b1"));
        let m1 = tape.silu(m1);
        let m2 = tape.matmul(m1, self.var(vars, "merge.w2"));
        Ok(tape.add_row(m2, self.var(vars, "merge.b2")))
    }

    fn check_labels(&self, ys: &[usize]) -> Result<()> {
        for &y in ys {
            if y > self.config.null_class() {
                return Err(CadError::contract(format!(
                    "class id {y} out of range (null id is {})",
                    self.config.null_class()
                )));
            }
        }
        Ok(())
    }

    /// Trunk from an explicit condition block (merged h or concatenated
    /// class+coherence entries).
    fn trunk_on_tape(&self, tape: &mut Tape, vars: &[Var], x: Var, ts: &[f64], cond: Var) -> Var {
        let proj = tape.matmul(x, self.var(vars, "proj.w"));
        let proj = tape.add_row(proj, self.var(vars, "proj.b"));
        let time = tape.leaf(Self::sinusoid_matrix(ts, self.config.embed_dim));
        let a = tape.concat_cols(proj, time);
        let mut h = tape.concat_cols(a, cond);
        for layer in 0..self.config.depth {
            let w = self.var(vars, &format!("trunk.w{layer}"));
            let b = self.var(vars, &format!("trunk.b{layer}"));
            h = tape.matmul(h, w);
            h = tape.add_row(h, b);
            h = tape.silu(h);
        }
        let out = tape.matmul(h, self.var(vars, "head.w"));
        tape.add_row(out, self.var(vars, "head.b"))
    }

    /// ε-prediction on an existing tape. `cs` are raw requested coherence
    /// values; the regime sentinel is applied here.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: &Tensor,
        ts: &[f64],
        ys: &[usize],
        cs: &[f64],
    ) -> Result<Var> {
        assert_eq!(x.rows(), ts.len(), "batch size mismatch (t)");
        assert_eq!(x.rows(), ys.len(), "batch size mismatch (y)");
        assert_eq!(x.rows(), cs.len(), "batch size mismatch (c)");
        let eff: Vec<f64> = cs.iter().map(|&c| self.effective_coherence(c)).collect();
        let xv = tape.leaf(x.clone());
        let cond = if self.config.merged {
            self.h_on_tape(tape, vars, ys, &eff)?
        } else {
            self.check_labels(ys)?;
            let class = tape.gather_rows(self.var(vars, "class_table"), ys.to_vec());
            let coh = self.coh_embed_on_tape(tape, vars, &eff);
            tape.concat_cols(class, coh)
        };
        Ok(self.trunk_on_tape(tape, vars, xv, ts, cond))
    }

    /// Evaluation-only ε-prediction (tape built and dropped internally).
    pub fn predict_eps(&self, x: &Tensor, ts: &[f64], ys: &[usize], cs: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let out = self.forward(&mut tape, &vars, x, ts, ys, cs)?;
        Ok(tape.value(out).clone())
    }

    /// Condition embedding h(y,c) as a plain vector (merged mode only).
    pub fn cond_embedding(&self, y: usize, c: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let eff = self.effective_coherence(c);
        let h = self.h_on_tape(&mut tape, &vars, &[y], &[eff])?;
        Ok(tape.value(h).data().to_vec())
    }

    /// Trunk output for an explicit condition matrix, used by the
    /// Lipschitz probe.
    pub fn predict_eps_with_cond(
        &self,
        x: &Tensor,
        ts: &[f64],
        cond_rows: &Tensor,
    ) -> Result<Tensor> {
        let expected = self.config.trunk_in() - 2 * self.config.embed_dim;
        if cond_rows.cols() != expected {
            return Err(CadError::contract(format!(
                "condition block has {} columns, trunk expects {expected}",
                cond_rows.cols()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let xv = tape.leaf(x.clone());
        let cond = tape.leaf(cond_rows.clone());
        let out = self.trunk_on_tape(&mut tape, &vars, xv, ts, cond);
        Ok(tape.value(out).clone())
    }
}
