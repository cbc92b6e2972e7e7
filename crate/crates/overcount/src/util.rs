//! Small numerical helpers shared across modules.

/// log(Σ exp(x_i)) computed stably. Returns −∞ for an empty slice or when
/// every entry is −∞.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Splits a master seed into an independent stream for a labelled job, so
/// that replicate/level/model cells get schedule-independent RNG streams.
/// SplitMix64 finalizer over the combined words.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut state = master;
    for &w in words {
        state = splitmix64(state ^ splitmix64(w));
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
