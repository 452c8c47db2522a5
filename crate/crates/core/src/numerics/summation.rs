//! Order-fixed reductions.
//!
//! Parallel code never reduces through the thread pool; it writes per-item
//! results into slots and reduces them here, which makes results independent
//! of the number of workers.

/// Pairwise sum with a fixed association order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `ln Σ exp(x_i)`; `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}
