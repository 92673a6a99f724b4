//! Rates, funding accounts, asset dynamics and measure selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Constant funding and collateral rates, per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEnvironment<T> {
    pub r_l: T,
    pub r_b: T,
    pub r_c: T,
    /// Per-asset borrowing rates for partial netting.
    pub r_ib: Vec<T>,
    /// Per-asset auxiliary drifts for the beta-measure regime.
    pub beta: Vec<T>,
}

pub(crate) fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

impl<T: Scalar> RateEnvironment<T> {
    /// Single asset, lending/borrowing spread only; `r_ib` defaults to `r_b`.
    pub fn new(r_l: T, r_b: T, r_c: T) -> Self {
        RateEnvironment {
            r_l,
            r_b,
            r_c,
            r_ib: vec![r_b],
            beta: Vec::new(),
        }
    }

    /// All rates equal to `r`, with `beta = r`.
    pub fn flat(r: T) -> Self {
        RateEnvironment {
            r_l: r,
            r_b: r,
            r_c: r,
            r_ib: vec![r],
            beta: vec![r],
        }
    }

    pub fn with_r_ib(mut self, r_ib: Vec<T>) -> Self {
        self.r_ib = r_ib;
        self
    }

    pub fn with_beta(mut self, beta: Vec<T>) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_l, self.r_b, self.r_c]
            .iter()
            .chain(self.r_ib.iter())
            .chain(self.beta.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::RateConstraint("rates must be finite".into()));
        }
        if !(T::zero() <= self.r_l && self.r_l <= self.r_b) {
            return Err(Error::RateConstraint(format!(
                "0 ≤ r_l ≤ r_b (r_l={}, r_b={})",
                f(self.r_l),
                f(self.r_b)
            )));
        }
        if self.r_ib.is_empty() {
            return Err(Error::RateConstraint("r_ib must have one entry per asset".into()));
        }
        if let Some((i, r)) = self.r_ib.iter().enumerate().find(|(_, r)| **r < self.r_l) {
            return Err(Error::RateConstraint(format!(
                "r_l ≤ r_ib[i] (i={i}, r_ib={}, r_l={})",
                f(*r),
                f(self.r_l)
            )));
        }
        if !self.beta.is_empty() && self.beta.len() != self.r_ib.len() {
            return Err(Error::RateConstraint(
                "beta and r_ib must have the same length".into(),
            ));
        }
        Ok(())
    }

    /// Beta constraints for Bergman's model: `r_b ≤ beta[i]`.
    pub fn validate_beta_bergman(&self) -> Result<()> {
        self.validate()?;
        if self.beta.is_empty() {
            return Err(Error::MissingBeta);
        }
        for (i, b) in self.beta.iter().enumerate() {
            if *b < self.r_b {
                return Err(Error::RateConstraint(format!(
                    "r_b ≤ beta[i] (i={i}, beta={}, r_b={})",
                    f(*b),
                    f(self.r_b)
                )));
            }
        }
        Ok(())
    }

    /// Beta constraints for the partial-netting model: `r_b ≤ beta[i] ≤ r_ib[i]`.
    pub fn validate_beta_partial_netting(&self) -> Result<()> {
        self.validate_beta_bergman()?;
        for (i, (b, rib)) in self.beta.iter().zip(&self.r_ib).enumerate() {
            if *b > *rib {
                return Err(Error::RateConstraint(format!(
                    "r_b ≤ beta[i] ≤ r_ib[i] (i={i}, beta={}, r_ib={})",
                    f(*b),
                    f(*rib)
                )));
            }
        }
        Ok(())
    }

    pub fn assets(&self) -> usize {
        self.r_ib.len()
    }
}

/// Geometric Brownian motion with proportional dividend yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetDynamics<T> {
    pub s0: T,
    pub mu_bar: T,
    pub sigma_bar: T,
    pub kappa_bar: T,
}

impl<T: Scalar> AssetDynamics<T> {
    pub fn new(s0: T, mu_bar: T, sigma_bar: T, kappa_bar: T) -> Self {
        AssetDynamics {
            s0,
            mu_bar,
            sigma_bar,
            kappa_bar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > T::zero() && self.s0.is_finite()) {
            return Err(Error::AssetConstraint(format!("s0 > 0 (s0={})", f(self.s0))));
        }
        if !(self.sigma_bar > T::zero() && self.sigma_bar.is_finite()) {
            return Err(Error::AssetConstraint(format!(
                "sigma_bar > 0 (sigma_bar={})",
                f(self.sigma_bar)
            )));
        }
        if !(self.kappa_bar >= T::zero() && self.kappa_bar.is_finite()) {
            return Err(Error::AssetConstraint(format!(
                "kappa_bar ≥ 0 (kappa_bar={})",
                f(self.kappa_bar)
            )));
        }
        if !self.mu_bar.is_finite() {
            return Err(Error::AssetConstraint("mu_bar must be finite".into()));
        }
        Ok(())
    }

    /// Volatility coefficient σ(t, s) = σ̄ s.
    #[inline]
    pub fn sigma(&self, s: T) -> T {
        self.sigma_bar * s
    }
}

/// Martingale measure used to drive the asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    Lending,
    Beta,
}

/// Growth factor `exp(rate * t)` of a constant-rate account.
pub fn account_value<T: Scalar>(rate: T, t: T) -> Result<T> {
    if t < T::zero() {
        return Err(Error::NegativeTime(f(t)));
    }
    Ok((rate * t).exp())
}

fn beta0<T: Scalar>(rates: &RateEnvironment<T>) -> Result<T> {
    rates.beta.first().copied().ok_or(Error::MissingBeta)
}

/// Market price of risk of the measure change to `measure`.
pub fn market_price_of_risk<T: Scalar>(
    asset: &AssetDynamics<T>,
    rates: &RateEnvironment<T>,
    measure: Measure,
) -> Result<T> {
    if !(asset.sigma_bar > T::zero()) {
        return Err(Error::AssetConstraint(format!(
            "sigma_bar > 0 (sigma_bar={})",
            f(asset.sigma_bar)
        )));
    }
    let reference = match measure {
        Measure::Lending => rates.r_l,
        Measure::Beta => beta0(rates)?,
    };
    Ok((asset.mu_bar + asset.kappa_bar - reference) / asset.sigma_bar)
}

/// Proportional drift of the asset under `measure`.
pub fn driver_asset_drift<T: Scalar>(
    asset: &AssetDynamics<T>,
    rates: &RateEnvironment<T>,
    measure: Measure,
) -> Result<T> {
    let reference = match measure {
        Measure::Lending => rates.r_l,
        Measure::Beta => beta0(rates)?,
    };
    Ok(reference - asset.kappa_bar)
}
