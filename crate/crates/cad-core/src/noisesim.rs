//! Annotation-noise simulation: uniform label flips with error probability
//! α, a normalized-entropy coherence measure, a piecewise-linear target
//! entropy CDF, coherence binning and the training-set strategies
//! (baseline / filtered / weighted / cad).

use crate::error::{CadError, Result};
use crate::rng::derive_rng;
use crate::toydata::AnnotatedSample;
use rand::Rng;

/// Maximum error probability for N classes: the flip distribution is
/// uniform at α = (N−1)/N.
pub fn alpha_max(n_classes: usize) -> f64 {
    (n_classes as f64 - 1.0) / n_classes as f64
}

#[derive(Clone, Copy, Debug)]
pub struct NoiseSimConfig {
    pub n_classes: usize,
    pub beta: f64,
    pub kappa: f64,
    pub seed: u64,
}

impl NoiseSimConfig {
    pub fn new(n_classes: usize, beta: f64, kappa: f64, seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(CadError::contract("noise model needs N ≥ 2 classes"));
        }
        if !(0.0 < beta && beta < 1.0) {
            return Err(CadError::contract(format!("β must lie in (0,1), got {beta}")));
        }
        if !(0.0 < kappa && kappa < 1.0) {
            return Err(CadError::contract(format!("κ must lie in (0,1), got {kappa}")));
        }
        Ok(NoiseSimConfig {
            n_classes,
            beta,
            kappa,
            seed,
        })
    }
}

/// Per-sample corruption outcome.
#[derive(Clone, Copy, Debug)]
pub struct CorruptionRecord {
    pub clean_label: usize,
    pub noisy_label: usize,
    /// Target entropy drawn for this sample.
    pub u: f64,
    /// Error probability with E(α) = u.
    pub alpha: f64,
    /// Coherence score, 1 − u.
    pub coherence: f64,
}

/// Categorical flip distribution: mass 1−α on the true label, α/(N−1)
/// uniformly elsewhere.
pub fn flip_distribution(y: usize, alpha: f64, n_classes: usize) -> Result<Vec<f64>> {
    if y >= n_classes {
        return Err(CadError::contract(format!(
            "label {y} out of range for {n_classes} classes"
        )));
    }
    if !(0.0..=alpha_max(n_classes)).contains(&alpha) {
        return Err(CadError::contract(format!(
            "α = {alpha} outside [0, (N−1)/N] for N = {n_classes}"
        )));
    }
    let off = alpha / (n_classes as f64 - 1.0);
    Ok((0..n_classes)
        .map(|k| if k == y { 1.0 - alpha } else { off })
        .collect())
}

/// Normalized entropy of the flip distribution,
/// E(α) = −(1/log N)·[(1−α)·log(1−α) + α·log(α/(N−1))].
/// Endpoints are pinned: E(0) = 0 (0·log 0 := 0) and E((N−1)/N) = 1.
pub fn entropy_of_alpha(alpha: f64, n_classes: usize) -> f64 {
    let amax = alpha_max(n_classes);
    assert!(
        (0.0..=amax).contains(&alpha),
        "α = {alpha} outside [0, {amax}]"
    );
    if alpha == 0.0 {
        return 0.0;
    }
    if alpha == amax {
        return 1.0;
    }
    let n = n_classes as f64;
    -((1.0 - alpha) * (1.0 - alpha).ln() + alpha * (alpha / (n - 1.0)).ln()) / n.ln()
}

/// Invert E by bisection on [0, (N−1)/N], where E is strictly increasing.
pub fn invert_entropy(u: f64, n_classes: usize, tol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(CadError::contract(format!("u = {u} outside [0,1]")));
    }
    assert!(tol > 0.0, "tolerance must be positive");
    if u == 0.0 {
        return Ok(0.0);
    }
    if u == 1.0 {
        return Ok(alpha_max(n_classes));
    }
    let mut lo = 0.0;
    let mut hi = alpha_max(n_classes);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = entropy_of_alpha(mid, n_classes);
        if (e - u).abs() <= tol {
            return Ok(mid);
        }
        if e < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(CadError::Msg(format!(
        "entropy inversion did not reach tol {tol} for u = {u} (N = {n_classes})"
    )))
}

/// Piecewise-linear target-entropy CDF: t·β/κ below the threshold κ,
/// 1 + (t−1)·(1−β)/(1−κ) above. Continuous at t = κ with value β.
pub fn target_entropy_cdf(t: f64, beta: f64, kappa: f64) -> f64 {
    assert!((0.0..=1.0).contains(&t), "t = {t} outside [0,1]");
    assert!(
        kappa > 0.0 && kappa < 1.0,
        "κ must lie strictly inside (0,1)"
    );
    if t < kappa {
        t * beta / kappa
    } else {
        1.0 + (t - 1.0) * (1.0 - beta) / (1.0 - kappa)
    }
}

/// Closed-form inverse of the target-entropy CDF (it is piecewise linear
/// and strictly increasing).
pub fn target_entropy_cdf_inv(u: f64, beta: f64, kappa: f64) -> f64 {
    assert!((0.0..=1.0).contains(&u), "u = {u} outside [0,1]");
    if u < beta {
        u * kappa / beta
    } else {
        1.0 + (u - 1.0) * (1.0 - kappa) / (1.0 - beta)
    }
}

pub const ENTROPY_INV_TOL: f64 = 1e-10;

/// Corrupt a labeled dataset: per sample draw t ~ U[0,1], set the target
/// entropy u = E_{β,κ}(t), solve α = E⁻¹(u), resample the label from the
/// flip distribution and record coherence 1 − u.
pub fn corrupt_dataset(labels: &[usize], config: &NoiseSimConfig) -> Result<Vec<CorruptionRecord>> {
    let mut rng = derive_rng(config.seed, "noisesim.corrupt");
    let n = config.n_classes;
    labels
        .iter()
        .map(|&y| {
            if y >= n {
                return Err(CadError::contract(format!(
                    "label {y} out of range for {n} classes"
                )));
            }
            let t: f64 = rng.random();
            let u = target_entropy_cdf(t, config.beta, config.kappa);
            let alpha = invert_entropy(u, n, ENTROPY_INV_TOL)?;
            let probs = flip_distribution(y, alpha, n)?;
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut noisy = n - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if draw < acc {
                    noisy = k;
                    break;
                }
            }
            Ok(CorruptionRecord {
                clean_label: y,
                noisy_label: noisy,
                u,
                alpha,
                coherence: 1.0 - u,
            })
        })
        .collect()
}

/// Result of equal-mass coherence binning.
#[derive(Clone, Debug)]
pub struct BinnedCoherence {
    /// Bin index per input score, in input order.
    pub bin: Vec<usize>,
    /// Normalized index bin/(n_bins−1) per input score.
    pub coherence: Vec<f64>,
    pub n_bins: usize,
    /// Set when every input score is identical; ranks then spread an
    /// arbitrary (but stable) order across bins.
    pub degenerate_ties: bool,
}

/// Equal-population quantile binning of raw scores. Ranks use stable
/// tie-breaking by original index; bin(i) = floor(rank·n_bins/count)
/// clamped to n_bins−1, coherence = bin/(n_bins−1).
pub fn bin_coherence(scores: &[f64], n_bins: usize) -> Result<BinnedCoherence> {
    if n_bins < 2 {
        return Err(CadError::contract("binning needs at least 2 bins"));
    }
    if scores.is_empty() {
        return Err(CadError::contract("binning needs a non-empty score list"));
    }
    let count = scores.len();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut bin = vec![0usize; count];
    for (rank, &idx) in order.iter().enumerate() {
        bin[idx] = (rank * n_bins / count).min(n_bins - 1);
    }
    let coherence = bin
        .iter()
        .map(|&b| b as f64 / (n_bins as f64 - 1.0))
        .collect();
    let degenerate_ties = scores.iter().all(|&s| s == scores[0]) && count > 1;
    Ok(BinnedCoherence {
        bin,
        coherence,
        n_bins,
        degenerate_ties,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Baseline,
    Filtered,
    Weighted,
    Cad,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "filtered" => Ok(Strategy::Filtered),
            "weighted" => Ok(Strategy::Weighted),
            "cad" => Ok(Strategy::Cad),
            other => Err(CadError::contract(format!("unknown strategy `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Filtered => "filtered",
            Strategy::Weighted => "weighted",
            Strategy::Cad => "cad",
        }
    }
}

/// One training example as seen by the loss: position, (noisy) label, the
/// coherence used as conditioning (CAD only) and an optional loss weight.
#[derive(Clone, Copy, Debug)]
pub struct TrainSample {
    pub x: [f64; 2],
    pub label: usize,
    pub cond_coherence: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DatasetView {
    pub strategy: Strategy,
    pub samples: Vec<TrainSample>,
}

/// Bins removed by the filtered strategy: ⌈3·n_bins/8⌉ lowest bins,
/// generalizing "3 of 8" proportionally.
pub fn filtered_bin_cutoff(n_bins: usize) -> usize {
    (3 * n_bins).div_ceil(8)
}

/// Build the training-set view for a strategy. The cad and weighted views
/// use each sample's own coherence score; `bins` (aligned by index) drive
/// only the filtered cutoff.
pub fn apply_strategy(
    samples: &[AnnotatedSample],
    bins: &BinnedCoherence,
    strategy: Strategy,
) -> Result<DatasetView> {
    assert_eq!(samples.len(), bins.bin.len(), "bin assignment mismatch");
    let out = match strategy {
        Strategy::Baseline => samples
            .iter()
            .map(|s| TrainSample {
                x: s.x,
                label: s.label,
                cond_coherence: None,
                weight: None,
            })
            .collect(),
        Strategy::Filtered => {
            let cutoff = filtered_bin_cutoff(bins.n_bins);
            samples
                .iter()
                .zip(&bins.bin)
                .filter(|(_, &b)| b >= cutoff)
                .map(|(s, _)| TrainSample {
                    x: s.x,
                    label: s.label,
                    cond_coherence: None,
                    weight: None,
                })
                .collect()
        }
        Strategy::Weighted => samples
            .iter()
            .map(|s| TrainSample {
                x: s.x,
                label: s.label,
                cond_coherence: None,
                weight: Some(s.coherence),
            })
            .collect(),
        Strategy::Cad => samples
            .iter()
            .map(|s| TrainSample {
                x: s.x,
                label: s.label,
                cond_coherence: Some(s.coherence),
                weight: None,
            })
            .collect(),
    };
    Ok(DatasetView {
        strategy,
        samples: out,
    })
}
