//! Scenario configuration files and their translation into pricing requests.

use std::path::{Path, PathBuf};

use bilateral::contracts::{CashFlows, CollateralConvention, ContractSpec, DiscreteFlow, Leg, NegotiatedMap};
use bilateral::market::{AssetDynamics, RateEnvironment};
use bilateral::piecewise::PiecewiseLinear;
use bilateral::pricing::{select_regime, Model, PricingRequest, RegimePreference, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: Model,
    pub rates: RatesConfig,
    pub asset: AssetConfig,
    pub contract: ContractConfig,
    pub collateral: CollateralConfig,
    pub endowments: Endowments,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_mid: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<PropertyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub r_l: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub r_ib: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetConfig {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default)]
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endowments {
    pub x1: f64,
    pub x2: f64,
}

/// Piecewise-linear function of the asset price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Call { strike: f64 },
    Put { strike: f64 },
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
    Piecewise { points: Vec<(f64, f64)>, left_slope: f64, right_slope: f64 },
}

impl MapConfig {
    pub fn build(&self) -> Result<PiecewiseLinear<f64>, CliError> {
        Ok(match self {
            MapConfig::Call { strike } => PiecewiseLinear::call(*strike),
            MapConfig::Put { strike } => PiecewiseLinear::put(*strike),
            MapConfig::Constant { value } => PiecewiseLinear::constant(*value),
            MapConfig::Linear { intercept, slope } => PiecewiseLinear::linear(*intercept, *slope),
            MapConfig::Piecewise {
                points,
                left_slope,
                right_slope,
            } => PiecewiseLinear::new(points.clone(), *left_slope, *right_slope).map_err(CliError::config)?,
        })
    }

    fn finite(&self) -> bool {
        match self {
            MapConfig::Call { strike } | MapConfig::Put { strike } => strike.is_finite(),
            MapConfig::Constant { value } => value.is_finite(),
            MapConfig::Linear { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            MapConfig::Piecewise { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub t: f64,
    pub payoff: MapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "leg", rename_all = "snake_case", deny_unknown_fields)]
pub enum LegConfig {
    Flow { t: f64, payoff: MapConfig },
    Fee { start: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractConfig {
    Zero { maturity: f64 },
    European { maturity: f64, payoff: MapConfig },
    Fee { maturity: f64, rate: f64 },
    Discrete { maturity: f64, flows: Vec<FlowConfig> },
    Mixed { maturity: f64, legs: Vec<LegConfig> },
}

impl ContractConfig {
    pub fn build(&self) -> Result<ContractSpec<f64>, CliError> {
        let spec = match self {
            ContractConfig::Zero { maturity } => ContractSpec::zero(*maturity),
            ContractConfig::European { maturity, payoff } => {
                if !payoff.finite() {
                    return Err(CliError::Config("payoff parameters must be finite".into()));
                }
                ContractSpec::european(*maturity, payoff.build()?)
            }
            ContractConfig::Fee { maturity, rate } => ContractSpec::fee(*maturity, *rate),
            ContractConfig::Discrete { maturity, flows } => ContractSpec::discrete(
                *maturity,
                flows.iter().map(|fl| Ok((fl.t, fl.payoff.build()?))).collect::<Result<_, CliError>>()?,
            ),
            ContractConfig::Mixed { maturity, legs } => ContractSpec {
                maturity: *maturity,
                flows: CashFlows::Mixed {
                    legs: legs
                        .iter()
                        .map(|leg| {
                            Ok(match leg {
                                LegConfig::Flow { t, payoff } => Leg::Flow(DiscreteFlow {
                                    time: *t,
                                    payoff: payoff.build()?,
                                }),
                                LegConfig::Fee { start, rate } => Leg::Fee {
                                    start: *start,
                                    rate: *rate,
                                },
                            })
                        })
                        .collect::<Result<_, CliError>>()?,
                },
            },
        };
        spec.validate().map_err(CliError::config)?;
        Ok(spec)
    }

    pub fn maturity(&self) -> f64 {
        match self {
            ContractConfig::Zero { maturity }
            | ContractConfig::European { maturity, .. }
            | ContractConfig::Fee { maturity, .. }
            | ContractConfig::Discrete { maturity, .. }
            | ContractConfig::Mixed { maturity, .. } => *maturity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CollateralConfig {
    /// `q ≡ 0`.
    None,
    /// `q(y) = y`.
    Full,
    Haircut { a1: f64, a2: f64 },
    Q { map: MapConfig },
    Convex { alpha: f64 },
    Separable { hedger: MapConfig, counterparty: MapConfig },
    Exogenous { level: MapConfig },
}

impl CollateralConfig {
    pub fn build(&self) -> Result<CollateralConvention<f64>, CliError> {
        let conv = match self {
            CollateralConfig::None => CollateralConvention::none(),
            CollateralConfig::Full => CollateralConvention::full(),
            CollateralConfig::Haircut { a1, a2 } => CollateralConvention::haircut(*a1, *a2),
            CollateralConfig::Q { map } => CollateralConvention::HedgerQ { q: map.build()? },
            CollateralConfig::Convex { alpha } => CollateralConvention::convex(*alpha),
            CollateralConfig::Separable {
                hedger,
                counterparty,
            } => CollateralConvention::Negotiated {
                map: NegotiatedMap::Separable {
                    hedger: hedger.build()?,
                    counterparty: counterparty.build()?,
                },
            },
            CollateralConfig::Exogenous { level } => CollateralConvention::Exogenous { level: level.build()? },
        };
        conv.validate().map_err(CliError::config)?;
        Ok(conv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub n_steps: usize,
    #[serde(default)]
    pub richardson: bool,
    #[serde(default)]
    pub coupled_fixed_point: bool,
    #[serde(default)]
    pub regime: RegimePreference,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_steps: 200,
            richardson: false,
            coupled_fixed_point: false,
            regime: RegimePreference::Auto,
        }
    }
}

/// One requested property check; omitted parameters take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropertyConfig {
    /// Node-wise `P^c ≤ P^h + tol`; default `tol = 1e-8 (1 + max |P|)`.
    Ordering {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    /// Viability of the coupled driver; defaults 10⁴ samples, `M = 0`.
    Bsvp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<f64>,
    },
    /// Defaults `λ ∈ {0.5, 2, 10}`, `tol = 1e-8`.
    Homogeneity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambdas: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    /// Defaults `x1 ∈ {0, 1, 5}`, `tol = 1e-10`.
    EndowmentIndependence {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x1s: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    /// Default `tol = 1e-10`.
    MonotoneOrdering {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    /// Defaults `r_mid ∈ {r_l, (r_l + r_b)/2, r_b}`, `tol = 1e-6`.
    Sandwich {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_mids: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_times: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "forty_one")]
    pub points: usize,
    #[serde(default = "search_tol")]
    pub tol: f64,
}

fn one() -> f64 {
    1.0
}

fn forty_one() -> usize {
    41
}

fn search_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Format,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
    }

    /// SHA-256 of the canonical serialization, overrides included.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn request(&self) -> Result<PricingRequest<f64>, CliError> {
        let rates = RateEnvironment::new(self.rates.r_l, self.rates.r_b, self.rates.r_c)
            .with_r_ib(self.rates.r_ib.clone())
            .with_beta(self.rates.beta.clone());
        let a = &self.asset;
        let request = PricingRequest {
            model: self.model,
            rates,
            asset: AssetDynamics::new(a.s0, a.mu, a.sigma, a.kappa),
            contract: self.contract.build()?,
            collateral: self.collateral.build()?,
            x1: self.endowments.x1,
            x2: self.endowments.x2,
            r_mid: self.r_mid,
            n_steps: self.solver.n_steps,
            regime: self.solver.regime,
            options: SolverOptions {
                fixed_point: self.solver.coupled_fixed_point,
                ..SolverOptions::default()
            },
        };
        if !(self.endowments.x1.is_finite() && self.endowments.x2.is_finite()) {
            return Err(CliError::Config("endowments must be finite".into()));
        }
        request.validate().map_err(CliError::config)?;
        select_regime(&request).map_err(CliError::config)?;
        Ok(request)
    }
}
