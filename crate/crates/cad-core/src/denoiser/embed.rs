/// Sinusoidal features: pairs (sin(v·f_k), cos(v·f_k)) with geometric
/// frequencies from 1 to `max_freq`.
pub fn embed_sinusoid(v: f64, d: usize, max_freq: f64) -> Vec<f64> {
    assert!(d >= 2 && d % 2 == 0, "embedding dim must be even and ≥ 2, got {d}");
    let half = d / 2;
    let mut out = Vec::with_capacity(d);
    for k in 0..half {
        let frac = if half == 1 {
            0.0
        } else {
            k as f64 / (half as f64 - 1.0)
        };
        let freq = max_freq.powf(frac);
        out.push((v * freq).sin());
        out.push((v * freq).cos());
    }
    out
}

/// Time features with frequencies from 1 to 10⁴. The minimum frequency
/// resolves [0,1].
pub fn embed_time(t: f64, d: usize) -> Vec<f64> {
    embed_sinusoid(t, d, 1e4)
}

/// Frequency cap for coherence features. Much lower than the time
/// embedding's: the denoiser must generalize smoothly across nearby
/// coherence scores so that sparse low-coherence data pools together.
pub const COHERENCE_MAX_FREQ: f64 = 1e2;

/// Coherence features ahead of the learned two-layer map.
pub fn embed_coherence_features(c: f64, d: usize) -> Vec<f64> {
    embed_sinusoid(c, d, COHERENCE_MAX_FREQ)
}
