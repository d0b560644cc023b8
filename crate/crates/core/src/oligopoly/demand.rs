use serde::{Deserialize, Serialize};

use crate::error::MarketError;

/// A demand system over `V` vendors. Buyers respond to the out-of-pocket
/// price `x = (1+α) P`.
///
/// Elasticities follow the convention under which the pricing condition
/// reads `P (1 - 1/(η (1+α))) = c`: `η = -(dN/dx) · P / N`, the response
/// to the out-of-pocket price scaled by the vendor's own price. The
/// ordinary own-price elasticity `-(∂N/∂P) P / N` equals `(1+α) η`.
pub trait DemandModel: Send + Sync {
    fn vendors(&self) -> usize;

    /// Quantities `N^i` at prices (unchecked).
    fn quantities(&self, prices: &[f64], alpha: f64) -> Vec<f64>;

    /// `∂N^i/∂P^i`; central difference unless overridden.
    fn own_slope(&self, prices: &[f64], alpha: f64, i: usize) -> f64 {
        let h = 1e-6 * prices[i].max(1e-12);
        let mut up = prices.to_vec();
        let mut down = prices.to_vec();
        up[i] += h;
        down[i] -= h;
        (self.quantities(&up, alpha)[i] - self.quantities(&down, alpha)[i]) / (2.0 * h)
    }

    /// `η^i`; derived from `own_slope` unless overridden.
    fn elasticity_unchecked(&self, prices: &[f64], alpha: f64, i: usize) -> f64 {
        let n = self.quantities(prices, alpha)[i];
        -self.own_slope(prices, alpha, i) * prices[i] / (n * (1.0 + alpha))
    }
}

/// Rejects empty, non-positive or non-finite price vectors of the wrong length.
pub fn check_prices(prices: &[f64], vendors: usize) -> Result<(), MarketError> {
    if prices.len() != vendors || prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(MarketError::BadPrices(prices.to_vec()));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), MarketError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(MarketError::Invalid {
            field: "alpha",
            rule: format!("must be finite and nonnegative, got {alpha}"),
        });
    }
    Ok(())
}

/// Quantities at validated prices.
pub fn demand(system: &dyn DemandModel, prices: &[f64], alpha: f64) -> Result<Vec<f64>, MarketError> {
    check_prices(prices, system.vendors())?;
    check_alpha(alpha)?;
    Ok(system.quantities(prices, alpha))
}

/// Elasticity `η^i` at validated prices.
pub fn elasticity(system: &dyn DemandModel, prices: &[f64], alpha: f64, i: usize) -> Result<f64, MarketError> {
    check_prices(prices, system.vendors())?;
    check_alpha(alpha)?;
    if i >= prices.len() {
        return Err(MarketError::Invalid {
            field: "vendor",
            rule: format!("index {i} out of range for {} vendors", prices.len()),
        });
    }
    Ok(system.elasticity_unchecked(prices, alpha, i))
}

/// Choice-share demand with an outside option:
/// `N^i = M e^{-β x_i} / (Σ_j e^{-β x_j} + e^{ω₀})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSystem {
    pub market_size: f64,
    pub beta: f64,
    pub outside_weight: f64,
    pub vendors: usize,
}

impl Default for DemandSystem {
    fn default() -> Self {
        DemandSystem {
            market_size: 100.0,
            beta: 1.0,
            outside_weight: 0.0,
            vendors: 2,
        }
    }
}

impl DemandSystem {
    pub fn new(market_size: f64, beta: f64, outside_weight: f64, vendors: usize) -> Result<Self, MarketError> {
        let bad = |field, rule: &str| {
            Err(MarketError::Invalid {
                field,
                rule: rule.to_string(),
            })
        };
        if !(market_size.is_finite() && market_size > 0.0) {
            return bad("market_size", "must be positive and finite");
        }
        if !(beta.is_finite() && beta > 0.0) {
            return bad("beta", "must be positive and finite");
        }
        if !outside_weight.is_finite() {
            return bad("outside_weight", "must be finite");
        }
        if vendors < 2 {
            return bad("vendors", "need at least two vendors");
        }
        Ok(DemandSystem {
            market_size,
            beta,
            outside_weight,
            vendors,
        })
    }

    /// Choice shares, computed with a shifted exponent for stability.
    pub fn shares(&self, prices: &[f64], alpha: f64) -> Vec<f64> {
        let expo: Vec<f64> = prices.iter().map(|p| -self.beta * (1.0 + alpha) * p).collect();
        let top = expo.iter().copied().fold(self.outside_weight, f64::max);
        let weights: Vec<f64> = expo.iter().map(|e| (e - top).exp()).collect();
        let total: f64 = weights.iter().sum::<f64>() + (self.outside_weight - top).exp();
        weights.iter().map(|w| w / total).collect()
    }
}

impl DemandModel for DemandSystem {
    fn vendors(&self) -> usize {
        self.vendors
    }

    fn quantities(&self, prices: &[f64], alpha: f64) -> Vec<f64> {
        self.shares(prices, alpha)
            .into_iter()
            .map(|s| self.market_size * s)
            .collect()
    }

    fn own_slope(&self, prices: &[f64], alpha: f64, i: usize) -> f64 {
        let s = self.shares(prices, alpha)[i];
        -self.beta * (1.0 + alpha) * self.market_size * s * (1.0 - s)
    }

    fn elasticity_unchecked(&self, prices: &[f64], alpha: f64, i: usize) -> f64 {
        let s = self.shares(prices, alpha)[i];
        self.beta * prices[i] * (1.0 - s)
    }
}

/// Independent demands with constant elasticity `η` in the convention above:
/// `N^i = (M/V) x_i^{-η(1+α)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantElasticityDemand {
    pub market_size: f64,
    pub eta: f64,
    pub vendors: usize,
}

impl DemandModel for ConstantElasticityDemand {
    fn vendors(&self) -> usize {
        self.vendors
    }

    fn quantities(&self, prices: &[f64], alpha: f64) -> Vec<f64> {
        let scale = self.market_size / self.vendors as f64;
        prices
            .iter()
            .map(|p| scale * ((1.0 + alpha) * p).powf(-self.eta * (1.0 + alpha)))
            .collect()
    }

    fn own_slope(&self, prices: &[f64], alpha: f64, i: usize) -> f64 {
        let n = self.quantities(prices, alpha)[i];
        -self.eta * (1.0 + alpha) * n / prices[i]
    }

    fn elasticity_unchecked(&self, _: &[f64], _: f64, _: usize) -> f64 {
        self.eta
    }
}
