//! The eight per-map summary statistics.

pub const STAT_NAMES: [&str; 8] = ["mean", "std", "q10", "q90", "q25", "q75", "min", "max"];

/// Quantile of sorted data, linear interpolation between order statistics
/// at position `q * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `(mean, std, q10, q90, q25, q75, min, max)`; std is the population value.
///
/// Panics on an empty map.
pub fn patch_statistics(values: &[f64]) -> [f64; 8] {
    assert!(!values.is_empty(), "statistics of an empty map");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [
        mean,
        var.sqrt(),
        quantile_sorted(&sorted, 0.10),
        quantile_sorted(&sorted, 0.90),
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.75),
        sorted[0],
        sorted[sorted.len() - 1],
    ]
}
