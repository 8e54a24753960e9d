//! Model parameters, the standing drift assumptions, and the constants derived
//! from them.

use thiserror::Error;

/// Default residual failure probability accepted when confirming a regeneration.
pub const DEFAULT_EPS_CONFIRM: f64 = 1e-12;

/// Validation failures. Each variant names the violated condition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("violation of drift1: all jump rates must be strictly positive (got {name} = {value})")]
    Drift1 { name: &'static str, value: f64 },
    #[error("violation of drift2: min(alpha0, alpha1) - max(beta0, beta1) = {margin} must exceed 1")]
    Drift2 { margin: f64 },
    #[error("violation of densityRange: rho = {0} is outside [0, 1]")]
    DensityRange(f64),
    #[error("degenerate density rho = {0}: perturbed rates need 0 < rho < 1")]
    DegenerateDensity(f64),
    #[error("interaction constants must satisfy F0 + F1 = 1 (got {0})")]
    InteractionSum(f64),
    #[error("perturbation strength must be finite and >= 0 (got {0})")]
    NegativeLambda(f64),
    #[error("eps_confirm must lie in (0, 1) (got {0})")]
    EpsConfirm(f64),
}

/// Jump rates of the walker on vacant (`*0`) and occupied (`*1`) sites, and the
/// density of the Bernoulli product measure the exclusion process starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub rho: f64,
}

impl ModelParams {
    /// Builds and validates.
    pub fn new(alpha0: f64, alpha1: f64, beta0: f64, beta1: f64, rho: f64) -> Result<Self, ModelError> {
        let p = Self { alpha0, alpha1, beta0, beta1, rho };
        p.validate()?;
        Ok(p)
    }

    /// Homogeneous walk: the environment has no influence on the rates.
    pub fn homogeneous(alpha: f64, beta: f64, rho: f64) -> Result<Self, ModelError> {
        Self::new(alpha, alpha, beta, beta, rho)
    }

    /// Checks positivity of every rate, the strong drift condition and the
    /// density range, in that order.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in
            [("alpha0", self.alpha0), ("alpha1", self.alpha1), ("beta0", self.beta0), ("beta1", self.beta1)]
        {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::Drift1 { name, value });
            }
        }
        let margin = self.alpha_min() - self.beta_max();
        if !(margin > 1.0) {
            return Err(ModelError::Drift2 { margin });
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(ModelError::DensityRange(self.rho));
        }
        Ok(())
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha0.min(self.alpha1)
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha0.max(self.alpha1)
    }

    pub fn beta_min(&self) -> f64 {
        self.beta0.min(self.beta1)
    }

    pub fn beta_max(&self) -> f64 {
        self.beta0.max(self.beta1)
    }

    /// Right-jump rate on a site in state `j`.
    pub fn alpha(&self, j: u8) -> f64 {
        if j == 1 {
            self.alpha1
        } else {
            self.alpha0
        }
    }

    /// Left-jump rate on a site in state `j`.
    pub fn beta(&self, j: u8) -> f64 {
        if j == 1 {
            self.beta1
        } else {
            self.beta0
        }
    }

    /// Local drift `alpha_j - beta_j`.
    pub fn drift(&self, j: u8) -> f64 {
        self.alpha(j) - self.beta(j)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.alpha0 == self.alpha1 && self.beta0 == self.beta1
    }

    pub fn clock_rates(&self) -> ClockRates {
        derive_clock_rates(self)
    }
}

/// Validates `p`; see [`ModelParams::validate`].
pub fn validate_params(p: &ModelParams) -> Result<(), ModelError> {
    p.validate()
}

/// Rates of the four independent Poisson clocks that drive the walker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockRates {
    /// Unconditional right jumps.
    pub plus: f64,
    /// Unconditional left jumps.
    pub minus: f64,
    /// Right jumps that happen only on sites whose state has the larger alpha.
    pub hat_plus: f64,
    /// Left jumps that happen only on sites whose state has the larger beta.
    pub hat_minus: f64,
}

impl ClockRates {
    /// Total rate of attempted jumps.
    pub fn total(&self) -> f64 {
        self.plus + self.minus + self.hat_plus + self.hat_minus
    }

    /// Rate at which the walker observes the environment.
    pub fn observation(&self) -> f64 {
        self.hat_plus + self.hat_minus
    }
}

pub fn derive_clock_rates(p: &ModelParams) -> ClockRates {
    ClockRates {
        plus: p.alpha_min(),
        minus: p.beta_min(),
        hat_plus: p.alpha_max() - p.alpha_min(),
        hat_minus: p.beta_max() - p.beta_min(),
    }
}

/// Constants shared by the regeneration detector and the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// `min alpha - max beta`, a lower bound for the asymptotic speed.
    pub speed_lower_bound: f64,
    /// `(max beta + 1) / min alpha`: down/up ratio of the comparison walk
    /// that bounds the gap between the walker and a right-Poisson path.
    pub ruin_ratio: f64,
    pub eps_confirm: f64,
    /// Smallest integer `g` with `ruin_ratio^g <= eps_confirm`.
    pub confirmation_gap: u32,
}

impl DerivedConstants {
    pub fn new(p: &ModelParams, eps_confirm: f64) -> Result<Self, ModelError> {
        p.validate()?;
        if !(eps_confirm > 0.0 && eps_confirm < 1.0) {
            return Err(ModelError::EpsConfirm(eps_confirm));
        }
        let ruin_ratio = (p.beta_max() + 1.0) / p.alpha_min();
        Ok(Self {
            speed_lower_bound: p.alpha_min() - p.beta_max(),
            ruin_ratio,
            eps_confirm,
            confirmation_gap: confirmation_gap(ruin_ratio, eps_confirm),
        })
    }

    /// Time reserved at the end of a run for a block to close and its trial to
    /// be confirmed: a multiple of the mean time the gap bound needs to climb
    /// to `G` at its worst-case drift `speed_lower_bound - 1`.
    pub fn completion_margin(&self) -> f64 {
        COMPLETION_MARGIN_FACTOR * self.confirmation_gap as f64 / (self.speed_lower_bound - 1.0)
    }
}

/// See [`DerivedConstants::completion_margin`].
pub const COMPLETION_MARGIN_FACTOR: f64 = 2.5;

/// Smallest `g >= 1` with `r^g <= eps`, for `0 < r < 1`.
pub fn confirmation_gap(r: f64, eps: f64) -> u32 {
    debug_assert!(r > 0.0 && r < 1.0);
    let mut g = (eps.ln() / r.ln()).ceil().max(1.0) as u32;
    // ceil of a rounded quotient can land one off in either direction
    while g > 1 && r.powi(g as i32 - 1) <= eps {
        g -= 1;
    }
    while r.powi(g as i32) > eps {
        g += 1;
    }
    g
}

/// Base rates and interaction constants of the perturbed family whose speed
/// derivative at zero is the Einstein relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub f0: f64,
    pub f1: f64,
}

impl PerturbationParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::Drift1 { name, value });
            }
        }
        if !(self.alpha - self.beta > 1.0) {
            return Err(ModelError::Drift2 { margin: self.alpha - self.beta });
        }
        if ((self.f0 + self.f1) - 1.0).abs() > 1e-12 {
            return Err(ModelError::InteractionSum(self.f0 + self.f1));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::NegativeLambda(self.lambda));
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }
}

/// Rates of the perturbed walk at density `rho`, with the `o(lambda)`
/// corrections set to zero.
pub fn perturbed_rates(q: &PerturbationParams, rho: f64) -> Result<ModelParams, ModelError> {
    q.validate()?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(ModelError::DensityRange(rho));
    }
    if rho == 0.0 || rho == 1.0 {
        return Err(ModelError::DegenerateDensity(rho));
    }
    let vacant = q.f0 * q.lambda / (1.0 - rho);
    let occupied = q.f1 * q.lambda / rho;
    let p = ModelParams {
        alpha0: q.alpha * vacant.exp(),
        beta0: q.beta * (-vacant).exp(),
        alpha1: q.alpha * occupied.exp(),
        beta1: q.beta * (-occupied).exp(),
        rho,
    };
    p.validate()?;
    Ok(p)
}
