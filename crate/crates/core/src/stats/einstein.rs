use super::{Estimate, StatsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EinsteinPoint {
    pub lambda: f64,
    pub speed: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EinsteinFit {
    pub slope: Estimate,
    pub v0: Estimate,
}

/// Weighted least squares through the origin on `(λ, v(λ) - v(0))`. The SE
/// accounts for `v(0)` being shared by every difference.
pub fn einstein_fit(points: &[EinsteinPoint]) -> Result<EinsteinFit, StatsError> {
    let zero = points
        .iter()
        .find(|p| p.lambda == 0.0)
        .ok_or_else(|| StatsError::GridInvalid("grid must contain λ = 0".into()))?;
    let rest: Vec<&EinsteinPoint> = points.iter().filter(|p| p.lambda != 0.0).collect();
    if rest.is_empty() {
        return Err(StatsError::GridInvalid("grid needs a λ > 0".into()));
    }
    if let Some(p) = rest.iter().find(|p| p.lambda < 0.0) {
        return Err(StatsError::GridInvalid(format!("negative λ = {}", p.lambda)));
    }
    let v0 = zero.speed;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut swx = 0.0;
    let mut var_own = 0.0;
    for p in &rest {
        let w = 1.0 / p.speed.se.powi(2);
        sxx += w * p.lambda * p.lambda;
        sxy += w * p.lambda * (p.speed.value - v0.value);
        swx += w * p.lambda;
        var_own += (w * p.lambda * p.speed.se).powi(2);
    }
    let slope = sxy / sxx;
    let var = (var_own + (swx * v0.se).powi(2)) / (sxx * sxx);
    Ok(EinsteinFit { slope: Estimate::new(slope, var.sqrt()), v0 })
}
