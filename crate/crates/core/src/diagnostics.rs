//! Trace summaries shared by the mixture sampler and the regression sampler.

/// Effective sample size via Geyer's initial monotone positive sequence.
///
/// Returns the trace length for a constant trace.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };

    // Sum of consecutive pairs rho(2m) + rho(2m+1), truncated at the first
    // non-positive pair and forced monotone non-increasing.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        lag += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10().max(1.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linearly interpolated quantile of already sorted values (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iid_trace_has_ess_near_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let ess = effective_sample_size(&trace);
        assert!((4000.0..6500.0).contains(&ess), "ess = {ess}");
    }

    #[test]
    fn ar1_trace_has_reduced_ess() {
        // AR(1) with rho = 0.9 has ESS ~ n (1 - rho) / (1 + rho).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let trace: Vec<f64> = (0..20000)
            .map(|_| {
                x = 0.9 * x + (rng.random::<f64>() - 0.5);
                x
            })
            .collect();
        let ess = effective_sample_size(&trace);
        let expected = 20000.0 * 0.1 / 1.9;
        assert!((ess - expected).abs() < 0.35 * expected, "ess = {ess}");
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.125), 1.5);
        assert_eq!(effective_sample_size(&[2.0; 10]), 10.0);
    }
}
