use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov distribution tail `P(K > λ)`.
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// One-sample KS test against the standard normal (Stephens' finite-n
/// correction).
pub fn ks_normal(xs: &[f64]) -> KsResult {
    let normal = Normal::standard();
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_pvalue((sn + 0.12 + 0.11 / sn) * d) }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    KsResult { statistic: d, p_value: kolmogorov_pvalue((ne + 0.12 + 0.11 / ne) * d) }
}

/// Pearson chi-square goodness of fit; `expected` are probabilities.
pub fn chi_square_pvalue(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat)
}

pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    let m = xs.iter().sum::<f64>() / n as f64;
    let c0: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let c1: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    c1 / c0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares line, optionally weighted. With weights `1/se²` the slope
/// SE is the model-based one; unweighted it uses the residual variance.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> LinearFit {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], |w| w.to_vec());
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        sxx += w[i] * (x[i] - mx).powi(2);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        syy += w[i] * (y[i] - my).powi(2);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let slope_se = if weights.is_some() {
        (1.0 / sxx).sqrt()
    } else if n > 2 {
        (sse / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit { slope, intercept, slope_se, r_squared, points: n }
}

/// Weighted least squares through the origin; returns `(slope, se)` given
/// per-point standard errors of `y`.
pub fn fit_through_origin(x: &[f64], y: &[f64], se: &[f64]) -> (f64, f64) {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        let w = 1.0 / se[i].powi(2);
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// `(n, log P(K >= n))` for `n = 0, 1, ...` while at least `min_count`
/// observations satisfy `K >= n`.
pub fn log_survival(values: &[u32], min_count: usize) -> Vec<(f64, f64)> {
    let total = values.len() as f64;
    let max = values.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max as usize + 2];
    for &v in values {
        counts[v as usize] += 1;
    }
    let mut at_least = values.len();
    let mut out = Vec::new();
    for (n, c) in counts.iter().enumerate() {
        if at_least < min_count.max(1) {
            break;
        }
        out.push((n as f64, (at_least as f64 / total).ln()));
        at_least -= c;
    }
    out
}
