//! Large-deviation curves `t ↦ log P(|X_t - v t| >= ε t)` and analytic
//! references for a walk with state-independent rates, where `X_t` is a
//! difference of two Poisson variables.

use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use super::hypothesis::{linear_fit, LinearFit};
use crate::{Site, Time};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpPoint {
    pub t: Time,
    pub eps: f64,
    pub hits: u64,
    pub replicas: u64,
    /// `ln(hits / replicas)`; `-inf` when nothing was hit.
    pub log_p: f64,
    /// Delta-method SE of `log_p`.
    pub se: f64,
}

impl LdpPoint {
    pub fn is_zero_count(&self) -> bool {
        self.hits == 0
    }

    /// One-sided 95% upper bound on the probability for a zero count.
    pub fn upper_bound(&self) -> f64 {
        3.0 / self.replicas as f64
    }
}

/// Empirical tail frequencies. `positions[k]` holds `X_{ts[k]}` for every
/// replica.
pub fn ldp_curve(positions: &[Vec<Site>], ts: &[Time], v: f64, eps: f64) -> Vec<LdpPoint> {
    ts.iter()
        .zip(positions)
        .map(|(&t, xs)| {
            let hits = xs.iter().filter(|&&x| (x as f64 - v * t).abs() >= eps * t).count() as u64;
            let n = xs.len() as u64;
            let p = hits as f64 / n as f64;
            let se = if hits > 0 { ((1.0 - p) / (n as f64 * p)).sqrt() } else { f64::INFINITY };
            LdpPoint { t, eps, hits, replicas: n, log_p: p.ln(), se }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpSlope {
    pub eps: f64,
    pub fit: LinearFit,
    pub excluded: usize,
}

/// Weighted (1/se²) fit of `log_p` against `t`, excluding zero-count cells.
pub fn ldp_slope(points: &[LdpPoint]) -> Option<LdpSlope> {
    let used: Vec<&LdpPoint> = points.iter().filter(|p| !p.is_zero_count()).collect();
    if used.len() < 2 {
        return None;
    }
    let x: Vec<f64> = used.iter().map(|p| p.t).collect();
    let y: Vec<f64> = used.iter().map(|p| p.log_p).collect();
    let w: Vec<f64> = used.iter().map(|p| 1.0 / (p.se * p.se)).collect();
    Some(LdpSlope { eps: points[0].eps, fit: linear_fit(&x, &y, Some(&w)), excluded: points.len() - used.len() })
}

fn log_mgf(alpha: f64, beta: f64, theta: f64) -> f64 {
    alpha * (theta.exp() - 1.0) + beta * ((-theta).exp() - 1.0)
}

fn tilt(alpha: f64, beta: f64, x: f64) -> f64 {
    ((x + (x * x + 4.0 * alpha * beta).sqrt()) / (2.0 * alpha)).ln()
}

/// Cramér rate of a rate-`alpha` up / rate-`beta` down walk:
/// `I(x) = sup_θ θx - Λ(θ)`.
pub fn cramer_rate(alpha: f64, beta: f64, x: f64) -> f64 {
    let th = tilt(alpha, beta, x);
    th * x - log_mgf(alpha, beta, th)
}

/// Exact `P(|X_t - c t| >= ε t)` for `X_t = Poisson(αt) - Poisson(βt)`.
pub fn skellam_abs_tail(alpha: f64, beta: f64, t: Time, center: f64, eps: f64) -> f64 {
    let up = Poisson::new(alpha * t).expect("positive mean");
    let down = Poisson::new(beta * t).expect("positive mean");
    let hi = ((center + eps) * t).ceil() as i64;
    let lo = ((center - eps) * t).floor() as i64;
    let mmax = (beta * t + 40.0 * (beta * t).sqrt() + 40.0) as i64;
    let mut p = 0.0;
    for m in 0..=mmax {
        let pm = down.pmf(m as u64);
        // X >= hi  <=>  N+ >= hi + m
        let k = hi + m;
        p += pm * if k <= 0 { 1.0 } else { up.sf((k - 1) as u64) };
        // X <= lo  <=>  N+ <= lo + m
        let k = lo + m;
        if k >= 0 {
            p += pm * up.cdf(k as u64);
        }
    }
    p
}

/// Lattice Bahadur–Rao approximation of the same two-sided tail.
pub fn bahadur_rao_abs_tail(alpha: f64, beta: f64, t: Time, center: f64, eps: f64) -> f64 {
    let one_side = |k: f64| {
        let x = k / t;
        let th = tilt(alpha, beta, x);
        let var = alpha * th.exp() + beta * (-th).exp();
        (-t * cramer_rate(alpha, beta, x)).exp()
            / ((1.0 - (-th.abs()).exp()) * (2.0 * std::f64::consts::PI * t * var).sqrt())
    };
    one_side(((center + eps) * t).ceil()) + one_side(((center - eps) * t).floor())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_vanishes_at_the_mean() {
        assert!(cramer_rate(3.0, 0.5, 2.5).abs() < 1e-12);
        assert!(cramer_rate(3.0, 0.5, 2.75) > 0.0);
        // quadratic approximation near the mean
        let i = cramer_rate(3.0, 0.5, 2.5 + 0.01);
        assert!((i / (0.01f64.powi(2) / 7.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_tail_matches_normal_regime() {
        // at t = 1000 the 2-sigma two-sided tail is close to 0.0455
        let t: f64 = 1000.0;
        let eps = 2.0 * (3.5 / t).sqrt();
        let p = skellam_abs_tail(3.0, 0.5, t, 2.5, eps);
        assert!((p - 0.0455).abs() < 0.004, "{p}");
    }

    #[test]
    fn bahadur_rao_tracks_exact_tail() {
        // deep in the large-deviation regime; near the mean the prefactor
        // 1 / (1 - e^-θ) blows up
        for t in [50.0, 100.0, 200.0, 400.0] {
            let exact = skellam_abs_tail(3.0, 0.5, t, 2.5, 1.0);
            let br = bahadur_rao_abs_tail(3.0, 0.5, t, 2.5, 1.0);
            assert!((br / exact - 1.0).abs() < 0.1, "t={t} exact={exact} br={br}");
        }
    }

    #[test]
    fn curve_from_positions() {
        let xs = vec![vec![10, 12, 14, 20]];
        let pts = ldp_curve(&xs, &[4.0], 3.0, 0.5);
        // |x - 12| >= 2
        assert_eq!(pts[0].hits, 3);
    }
}
