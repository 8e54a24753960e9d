//! Renewal-reward estimators over regeneration blocks and per-replica
//! estimators over fixed horizons.

mod einstein;
mod hypothesis;
mod ldp;

pub use einstein::{einstein_fit, EinsteinFit, EinsteinPoint};
pub use hypothesis::{
    chi_square_pvalue, fit_through_origin, kolmogorov_pvalue, ks_normal, ks_two_sample, lag1_autocorrelation,
    linear_fit, log_survival, KsResult, LinearFit,
};
pub use ldp::{bahadur_rao_abs_tail, cramer_rate, ldp_curve, ldp_slope, skellam_abs_tail, LdpPoint, LdpSlope};

use std::fmt;

use thiserror::Error;

use crate::engine::ProbeTally;
use crate::model::ModelParams;
use crate::regeneration::RegenerationBlock;
use crate::{Site, Time};

/// Minimum number of blocks for any interval estimate.
pub const DEFAULT_BLOCK_FLOOR: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{have} blocks available, at least {need} required")]
    InsufficientBlocks { have: usize, need: usize },
    #[error("need at least {need} samples, got {have}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("einstein grid invalid: {0}")]
    GridInvalid(String),
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    /// `|value - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }

    /// Distance to `target` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.value - target) / self.se
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ± {:.6}", self.value, self.se)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample mean with its standard error.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    Estimate::new(mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Completed, non-delayed blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockSample {
    pub durations: Vec<f64>,
    pub displacements: Vec<f64>,
    pub attempts: Vec<u32>,
    pub replicas: usize,
}

impl BlockSample {
    /// Keeps blocks that are neither first nor censored, in the given order.
    pub fn from_blocks<'a>(blocks: impl IntoIterator<Item = &'a RegenerationBlock>, replicas: usize) -> Self {
        let mut s = Self { replicas, ..Self::default() };
        for b in blocks.into_iter().filter(|b| !b.is_first && !b.censored) {
            s.durations.push(b.duration);
            s.displacements.push(b.displacement as f64);
            s.attempts.push(b.attempts);
        }
        s
    }

    /// Keeps the non-first blocks that start before `cutoff`. Whether a block
    /// starts before a fixed time is decided by the blocks preceding it, so
    /// Wald's identity keeps the renewal-reward sums unbiased; selecting on
    /// completion by the horizon instead favours short blocks near the end.
    pub fn from_blocks_before<'a>(
        blocks: impl IntoIterator<Item = &'a RegenerationBlock>,
        replicas: usize,
        cutoff: Time,
    ) -> Self {
        Self::from_blocks(blocks.into_iter().filter(|b| b.start_time < cutoff), replicas)
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    fn require(&self, floor: usize) -> Result<(), StatsError> {
        if self.len() < floor.max(2) {
            return Err(StatsError::InsufficientBlocks { have: self.len(), need: floor.max(2) });
        }
        Ok(())
    }
}

/// `v = ΣΔX / ΣΔτ` with the delta-method standard error.
pub fn estimate_speed(s: &BlockSample, floor: usize) -> Result<Estimate, StatsError> {
    s.require(floor)?;
    let n = s.len() as f64;
    let v = s.displacements.iter().sum::<f64>() / s.total_time();
    let mt = s.total_time() / n;
    let ss: f64 = s.displacements.iter().zip(&s.durations).map(|(x, t)| (x - v * t).powi(2)).sum();
    Ok(Estimate::new(v, (ss / (n * (n - 1.0))).sqrt() / mt))
}

/// Mean of `X_T / T` over replicas.
pub fn estimate_speed_direct(finals: &[Site], horizon: Time) -> Result<Estimate, StatsError> {
    if finals.len() < 2 {
        return Err(StatsError::InsufficientSamples { have: finals.len(), need: 2 });
    }
    let v: Vec<f64> = finals.iter().map(|&x| x as f64 / horizon).collect();
    Ok(mean_estimate(&v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltVariance {
    /// `E[(ΔX - vΔτ)^2] / E[Δτ]`.
    pub centered: Estimate,
    /// `Var(ΔX) / E[Δτ]`.
    pub uncentered: f64,
}

pub fn estimate_clt_variance(s: &BlockSample, v: f64, floor: usize) -> Result<CltVariance, StatsError> {
    s.require(floor)?;
    let n = s.len() as f64;
    let d2: Vec<f64> = s.displacements.iter().zip(&s.durations).map(|(x, t)| (x - v * t).powi(2)).collect();
    let mt = s.total_time() / n;
    let sigma2 = mean(&d2) / mt;
    let resid: Vec<f64> = d2.iter().zip(&s.durations).map(|(d, t)| d - sigma2 * t).collect();
    let se = (resid.iter().map(|r| r * r).sum::<f64>() / (n * (n - 1.0))).sqrt() / mt;
    Ok(CltVariance { centered: Estimate::new(sigma2, se), uncentered: variance(&s.displacements) / mt })
}

/// Empirical `Var(X_T) / T` over replicas with its large-sample SE.
pub fn direct_variance(finals: &[Site], horizon: Time) -> Estimate {
    let xs: Vec<f64> = finals.iter().map(|&x| x as f64).collect();
    let n = xs.len() as f64;
    let m = mean(&xs);
    let var = variance(&xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var) / n).max(0.0).sqrt();
    Estimate::new(var / horizon, se / horizon)
}

/// Geometric fit of the attempt counts: `P(K >= n) = (1 - κ)^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricFit {
    /// MLE of the per-attempt success probability.
    pub kappa: f64,
    pub fit: LinearFit,
    pub total_attempts: u64,
}

/// Fits `log P(K >= n)` against `n` over the levels that keep at least
/// `min_count` observations.
pub fn geometric_attempts(attempts: &[u32], min_count: usize) -> Result<GeometricFit, StatsError> {
    if attempts.len() < 2 {
        return Err(StatsError::InsufficientSamples { have: attempts.len(), need: 2 });
    }
    let total: u64 = attempts.iter().map(|&k| k as u64 + 1).sum();
    let kappa = attempts.len() as f64 / total as f64;
    let pts = log_survival(attempts, min_count);
    if pts.len() < 3 {
        return Err(StatsError::InsufficientSamples { have: pts.len(), need: 3 });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(GeometricFit { kappa, fit: linear_fit(&x, &y, None), total_attempts: total })
}

/// Tail of the block durations: log-survival slopes over two upper quantile
/// bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub lower_band: LinearFit,
    pub upper_band: LinearFit,
}

impl TailFit {
    /// Relative difference between the two slopes.
    pub fn slope_drift(&self) -> f64 {
        (self.upper_band.slope - self.lower_band.slope).abs() / self.lower_band.slope.abs()
    }
}

/// Fits `log S(t)` over the order statistics in the quantile bands
/// `[0.8, 0.9)` and `[0.9, 1)`, dropping the last `tail_guard` points where
/// the empirical survival is too noisy.
pub fn duration_tail(durations: &[f64], tail_guard: usize) -> Result<TailFit, StatsError> {
    let n = durations.len();
    if n < 10 * (tail_guard + 10) {
        return Err(StatsError::InsufficientSamples { have: n, need: 10 * (tail_guard + 10) });
    }
    let mut d = durations.to_vec();
    d.sort_by(|a, b| a.total_cmp(b));
    let band = |lo: usize, hi: usize| {
        let (x, y): (Vec<f64>, Vec<f64>) = (lo..hi).map(|i| (d[i], ((n - i) as f64 / n as f64).ln())).unzip();
        linear_fit(&x, &y, None)
    };
    let q8 = n * 8 / 10;
    let q9 = n * 9 / 10;
    Ok(TailFit { lower_band: band(q8, q9), upper_band: band(q9, n - tail_guard) })
}

/// Pooled probe estimates over replicas of equal horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityEstimate {
    /// Observed density `ρ̂`.
    pub rho: Estimate,
    /// `L̂_T / T`, the fraction of time on agents the walker has observed.
    pub time_on_marked: Estimate,
}

pub fn estimate_density(tallies: &[ProbeTally], horizon: Time, probe_rate: f64) -> Result<DensityEstimate, StatsError> {
    if tallies.len() < 2 {
        return Err(StatsError::InsufficientSamples { have: tallies.len(), need: 2 });
    }
    let scale = probe_rate * horizon;
    let rho: Vec<f64> = tallies.iter().map(|t| t.ones as f64 / scale).collect();
    let marked: Vec<f64> = tallies.iter().map(|t| t.on_walker_marked as f64 / scale).collect();
    Ok(DensityEstimate { rho: mean_estimate(&rho), time_on_marked: mean_estimate(&marked) })
}

/// `X_T - ∫ drift(ξ_s(X_s)) ds`, the integral estimated from the probe.
pub fn martingale_residual(
    params: &ModelParams,
    finals: &[Site],
    tallies: &[ProbeTally],
    horizon: Time,
    probe_rate: f64,
) -> Result<Estimate, StatsError> {
    if finals.len() != tallies.len() || finals.len() < 2 {
        return Err(StatsError::InsufficientSamples { have: finals.len().min(tallies.len()), need: 2 });
    }
    let (d0, d1) = (params.drift(0), params.drift(1));
    let r: Vec<f64> = finals
        .iter()
        .zip(tallies)
        // ∫ drift = d0 T + (d1 - d0) ∫ ξ, and Σ ξ / μ over probe rings is
        // unbiased for ∫ ξ
        .map(|(&x, t)| x as f64 - d0 * horizon - (d1 - d0) * t.ones as f64 / probe_rate)
        .collect();
    Ok(mean_estimate(&r))
}

/// `v̂ - (drift(1) ρ̂ + drift(0) (1 - ρ̂))` with the combined SE of two
/// independent estimates.
pub fn speed_density_gap(params: &ModelParams, v: Estimate, rho: Estimate) -> Estimate {
    let slope = params.drift(1) - params.drift(0);
    let predicted = params.drift(0) + slope * rho.value;
    Estimate::new(v.value - predicted, (v.se.powi(2) + (slope * rho.se).powi(2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(duration: f64, displacement: i64, is_first: bool) -> RegenerationBlock {
        RegenerationBlock {
            index: 0,
            start_time: 0.0,
            duration,
            displacement,
            attempts: 0,
            event_count: 1,
            is_first,
            censored: false,
            confirmed_at: 0.0,
        }
    }

    #[test]
    fn ratio_estimator_excludes_first_block() {
        let blocks = vec![block(100.0, 1, true), block(1.0, 2, false), block(2.0, 5, false), block(1.0, 1, false)];
        let s = BlockSample::from_blocks(&blocks, 1);
        let v = estimate_speed(&s, 2).unwrap();
        assert_eq!(v.value, 2.0);
        assert!(v.se > 0.0);
    }

    #[test]
    fn floor_is_enforced() {
        let blocks = vec![block(1.0, 2, false); 10];
        let s = BlockSample::from_blocks(&blocks, 1);
        assert!(matches!(estimate_speed(&s, 30), Err(StatsError::InsufficientBlocks { have: 10, need: 30 })));
    }

    #[test]
    fn pearson_of_linear_data() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centered_variance_of_deterministic_blocks_is_zero() {
        let blocks = vec![block(1.0, 2, false); 40];
        let s = BlockSample::from_blocks(&blocks, 1);
        let c = estimate_clt_variance(&s, 2.0, 30).unwrap();
        assert_eq!(c.centered.value, 0.0);
        assert_eq!(c.uncentered, 0.0);
    }

    #[test]
    fn full_density_probe() {
        let t = [ProbeTally { observations: 10, ones: 10, on_walker_marked: 0 }; 3];
        let d = estimate_density(&t, 10.0, 1.0).unwrap();
        assert_eq!(d.rho.value, 1.0);
        assert_eq!(d.time_on_marked.value, 0.0);
    }

    #[test]
    fn speed_density_gap_combines_errors() {
        let p = ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.6).unwrap();
        let g = speed_density_gap(&p, Estimate::new(2.92, 0.03), Estimate::new(0.3, 0.01));
        assert!((g.value - (2.92 - (2.1 + 1.3 * 0.3))).abs() < 1e-12);
        assert!((g.se - (0.03f64.powi(2) + 0.013f64.powi(2)).sqrt()).abs() < 1e-12);
    }
}
