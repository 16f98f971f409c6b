//! Small statistics helpers: one-sample Kolmogorov-Smirnov against an
//! exponential fit, and simple linear regression.

/// One-sample KS test result against Exponential(1/mean(samples)).
#[derive(Debug, Clone, Copy)]
pub struct KsOutcome {
    pub n: usize,
    pub statistic: f64,
    /// 5% critical value 1.36 / sqrt(n).
    pub critical_5pct: f64,
    pub fitted_mean: f64,
    pub pass: bool,
}

pub fn ks_exponential(samples: &[f64]) -> Option<KsOutcome> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-x / mean).exp();
        let hi = (i + 1) as f64 / n as f64 - cdf;
        let lo = cdf - i as f64 / n as f64;
        d = d.max(hi).max(lo);
    }
    let critical = 1.36 / (n as f64).sqrt();
    Some(KsOutcome { n, statistic: d, critical_5pct: critical, fitted_mean: mean, pass: d < critical })
}

/// Least-squares fit y = a + b x; returns (intercept, slope, r_squared).
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = (sxy * sxy) / (sxx * syy);
    Some((intercept, slope, r2))
}
