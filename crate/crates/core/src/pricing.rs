//! Scenario façade: regime selection, solves and price reports.

use serde::{Deserialize, Serialize};

use crate::bsde::{
    richardson, solve_exogenous, solve_scalar, solve_sequential_pair, solve_simultaneous_pair,
    BsdeProblem, Coupling, FlowSign,
};
use crate::contracts::{
    cash_flow_increments, discounted_flows, CollateralConvention, ContractSpec, DiscountAccount,
    PayoffSampling,
};
use crate::error::{Error, Result};
use crate::generators::{GeneratorFamily, GeneratorSpec};
use crate::lattice::{Lattice, LatticeConfig};
use crate::market::{f, AssetDynamics, Measure, RateEnvironment};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    Bergman,
    PartialNetting,
    SingleRate,
}

/// Requested martingale measure; `Auto` picks by the sign of `x2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RegimePreference {
    #[default]
    Auto,
    Lending,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolverOptions {
    pub sampling: PayoffSampling,
    /// Fixed-point refinement of negotiated collateral within each step.
    pub fixed_point: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingRequest<T> {
    pub model: Model,
    pub rates: RateEnvironment<T>,
    pub asset: AssetDynamics<T>,
    pub contract: ContractSpec<T>,
    pub collateral: CollateralConvention<T>,
    pub x1: T,
    pub x2: T,
    pub r_mid: Option<T>,
    pub n_steps: usize,
    pub regime: RegimePreference,
    pub options: SolverOptions,
}

impl<T: Scalar> PricingRequest<T> {
    pub fn with_steps(&self, n_steps: usize) -> Self {
        PricingRequest {
            n_steps,
            ..self.clone()
        }
    }

    pub fn with_endowments(&self, x1: T, x2: T) -> Self {
        PricingRequest {
            x1,
            x2,
            ..self.clone()
        }
    }

    pub fn with_contract(&self, contract: ContractSpec<T>) -> Self {
        PricingRequest {
            contract,
            ..self.clone()
        }
    }

    pub fn with_collateral(&self, collateral: CollateralConvention<T>) -> Self {
        PricingRequest {
            collateral,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.asset.validate()?;
        self.contract.validate()?;
        self.collateral.validate()?;
        if self.n_steps == 0 {
            return Err(Error::InvalidLattice("n_steps ≥ 1".into()));
        }
        if !(self.x1.is_finite() && self.x2.is_finite()) {
            return Err(Error::Inadmissible("endowments must be finite".into()));
        }
        Ok(())
    }
}

/// How the prices of a request are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PricingPath {
    HedgerCollateral,
    Negotiated,
    Exogenous,
    SingleRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub measure: Measure,
    pub hedger: GeneratorFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterparty: Option<GeneratorFamily>,
    pub coupling: Coupling,
    pub path: PricingPath,
}

impl Serialize for Coupling {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            Coupling::Scalar => "Scalar",
            Coupling::SequentialPair => "SequentialPair",
            Coupling::SimultaneousPair => "SimultaneousPair",
        })
    }
}

impl<'de> Deserialize<'de> for Coupling {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "Scalar" => Ok(Coupling::Scalar),
            "SequentialPair" => Ok(Coupling::SequentialPair),
            "SimultaneousPair" => Ok(Coupling::SimultaneousPair),
            other => Err(serde::de::Error::custom(format!("unknown coupling {other}"))),
        }
    }
}

fn single_rate_family(model: Model) -> GeneratorFamily {
    match model {
        Model::PartialNetting => GeneratorFamily::SingleRatePn,
        _ => GeneratorFamily::SingleRate,
    }
}

fn check_r_mid<T: Scalar>(rates: &RateEnvironment<T>, r_mid: Option<T>) -> Result<T> {
    let r = r_mid.ok_or_else(|| Error::RateConstraint("r_l ≤ r_mid ≤ r_b (r_mid missing)".into()))?;
    if !(rates.r_l <= r && r <= rates.r_b) {
        return Err(Error::RateConstraint(format!("r_l ≤ r_mid ≤ r_b (r_mid={})", f(r))));
    }
    Ok(r)
}

pub fn select_regime<T: Scalar>(request: &PricingRequest<T>) -> Result<Regime> {
    use GeneratorFamily::*;
    request.validate()?;
    if request.model == Model::SingleRate {
        check_r_mid(&request.rates, request.r_mid)?;
        request.collateral.q()?;
        return Ok(Regime {
            measure: Measure::Lending,
            hedger: SingleRate,
            counterparty: None,
            coupling: Coupling::Scalar,
            path: PricingPath::SingleRate,
        });
    }
    let (x1, x2) = (request.x1, request.x2);
    if x1 < T::zero() {
        return Err(Error::Inadmissible(format!("x1 ≥ 0 (x1={})", f(x1))));
    }
    let measure = match request.regime {
        RegimePreference::Auto if x2 >= T::zero() => Measure::Lending,
        RegimePreference::Auto => Measure::Beta,
        RegimePreference::Lending if x2 >= T::zero() => Measure::Lending,
        RegimePreference::Lending => {
            return Err(Error::Inadmissible(format!(
                "lending measure needs x1 ≥ 0, x2 ≥ 0 (x2={})",
                f(x2)
            )))
        }
        RegimePreference::Beta if x2 <= T::zero() => Measure::Beta,
        RegimePreference::Beta => {
            return Err(Error::Inadmissible(format!(
                "beta measure needs x1 ≥ 0, x2 ≤ 0 (x2={})",
                f(x2)
            )))
        }
    };
    if measure == Measure::Beta {
        match request.model {
            Model::Bergman => request.rates.validate_beta_bergman()?,
            _ => request.rates.validate_beta_partial_netting()?,
        }
    }
    let pn = request.model == Model::PartialNetting;
    let lending = measure == Measure::Lending;
    let (hedger, counterparty, coupling, path) = match &request.collateral {
        CollateralConvention::HedgerQ { .. } => {
            let (h, c) = match (pn, lending) {
                (false, true) => (BergmanFl, BergmanGl),
                (false, false) => (BergmanFbar, BergmanGbar),
                (true, true) => (PnFl, PnGl),
                (true, false) => (PnFbar, PnGbar),
            };
            (h, Some(c), Coupling::SequentialPair, PricingPath::HedgerCollateral)
        }
        CollateralConvention::Negotiated { .. } => {
            let fam = match (pn, lending) {
                (false, true) => CoupledBergmanG,
                (false, false) => CoupledBergmanGhat,
                (true, true) => CoupledPnG,
                (true, false) => CoupledPnGhat,
            };
            (fam, None, Coupling::SimultaneousPair, PricingPath::Negotiated)
        }
        CollateralConvention::Exogenous { .. } => {
            let (h, c) = match (pn, lending) {
                (false, true) => (BergmanWealthL, BergmanWealthL),
                (false, false) => (BergmanWealthH, BergmanWealthC),
                (true, true) => (PnWealthL, PnWealthL),
                (true, false) => {
                    return Err(Error::Unsupported(
                        "exogenous collateral in the partial-netting beta regime".into(),
                    ))
                }
            };
            (h, Some(c), Coupling::Scalar, PricingPath::Exogenous)
        }
    };
    Ok(Regime {
        measure,
        hedger,
        counterparty,
        coupling,
        path,
    })
}

/// Per-node price and hedge-ratio grids of both parties.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport<T> {
    pub regime: Regime,
    pub x1: T,
    pub x2: T,
    pub n_steps: usize,
    pub dt: T,
    pub times: Vec<T>,
    pub asset: Vec<Vec<T>>,
    pub p_h: Vec<Vec<T>>,
    pub p_c: Vec<Vec<T>>,
    pub xi_h: Vec<Vec<T>>,
    pub xi_c: Vec<Vec<T>>,
}

impl<T: Scalar> PriceReport<T> {
    pub fn p_h0(&self) -> T {
        self.p_h[0][0]
    }

    pub fn p_c0(&self) -> T {
        self.p_c[0][0]
    }

    /// `1 + max |P|` over both grids.
    pub fn scale(&self) -> T {
        T::one()
            + self
                .p_h
                .iter()
                .chain(&self.p_c)
                .flatten()
                .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// A price process with its initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceProcess<T> {
    pub grid: Vec<Vec<T>>,
    pub t0: T,
}

pub fn build_lattice<T: Scalar>(request: &PricingRequest<T>, measure: Measure) -> Result<Lattice<T>> {
    Lattice::build(
        &request.asset,
        &request.rates,
        &LatticeConfig {
            n_steps: request.n_steps,
            horizon: request.contract.maturity,
            measure,
        },
    )
}

fn spec<T: Scalar>(request: &PricingRequest<T>, family: GeneratorFamily) -> Result<GeneratorSpec<T>> {
    GeneratorSpec::new(
        family,
        request.rates.clone(),
        request.x1,
        request.x2,
        request.collateral.clone(),
        request.r_mid,
    )
}

fn negate<T: Scalar>(grid: &[Vec<T>]) -> Vec<Vec<T>> {
    grid.iter().map(|r| r.iter().map(|v| -*v).collect()).collect()
}

pub fn price<T: Scalar>(request: &PricingRequest<T>) -> Result<PriceReport<T>> {
    let regime = select_regime(request)?;
    let lattice = build_lattice(request, regime.measure)?;
    let n = lattice.n_steps();
    let sampling = request.options.sampling;
    let (p_h, p_c, xi_h, xi_c) = match regime.path {
        PricingPath::SingleRate => {
            let flows = cash_flow_increments(&request.contract, &lattice, sampling)?;
            let s = spec(request, regime.hedger)?;
            let sol = solve_scalar(&BsdeProblem::scalar(&s, &flows), &lattice)?;
            (sol.y.clone(), sol.y, sol.xi.clone(), sol.xi)
        }
        PricingPath::HedgerCollateral => {
            let flows = cash_flow_increments(&request.contract, &lattice, sampling)?;
            let f_spec = spec(request, regime.hedger)?;
            let g_spec = f_spec.with_family(regime.counterparty.expect("pair regime"));
            let (h, c) = solve_sequential_pair(&BsdeProblem::sequential(&f_spec, &g_spec, &flows), &lattice)?;
            (h.y, c.y, h.xi, c.xi)
        }
        PricingPath::Negotiated => {
            let flows = cash_flow_increments(&request.contract, &lattice, sampling)?;
            let s = spec(request, regime.hedger)?;
            let (h, c) = solve_simultaneous_pair(
                &BsdeProblem::simultaneous(&s, &flows, request.options.fixed_point),
                &lattice,
            )?;
            (h.y, c.y, h.xi, c.xi)
        }
        PricingPath::Exogenous => {
            let h_spec = spec(request, regime.hedger)?;
            let c_spec = h_spec.with_family(regime.counterparty.expect("pair regime"));
            match regime.measure {
                Measure::Lending => {
                    let d = discounted_flows(
                        &request.contract,
                        &request.collateral,
                        &request.rates,
                        DiscountAccount::Lending,
                        &lattice,
                        sampling,
                    )?;
                    let rl = Some(request.rates.r_l);
                    let yh = solve_exogenous(&h_spec, &lattice, &d, FlowSign::Plus, request.x1, rl)?;
                    let yc = solve_exogenous(&c_spec, &lattice, &d, FlowSign::Minus, request.x2, rl)?;
                    let mut p_h = lattice.grid();
                    let mut p_c = lattice.grid();
                    for i in 0..=n {
                        let b = d.account[i];
                        for j in 0..=i {
                            let c = d.collateral[i][j];
                            p_h[i][j] = b * (yh.y[i][j] - request.x1) - c;
                            p_c[i][j] = -b * (yc.y[i][j] - request.x2) - c;
                        }
                    }
                    (p_h, p_c, yh.xi, negate(&yc.xi))
                }
                Measure::Beta => {
                    let d = discounted_flows(
                        &request.contract,
                        &request.collateral,
                        &request.rates,
                        DiscountAccount::Unit,
                        &lattice,
                        sampling,
                    )?;
                    let yh = solve_exogenous(&h_spec, &lattice, &d, FlowSign::Plus, T::zero(), None)?;
                    let yc = solve_exogenous(&c_spec, &lattice, &d, FlowSign::Plus, T::zero(), None)?;
                    let mut p_h = lattice.grid();
                    let mut p_c = lattice.grid();
                    for i in 0..=n {
                        for j in 0..=i {
                            let c = d.collateral[i][j];
                            p_h[i][j] = yh.y[i][j] - c;
                            p_c[i][j] = yc.y[i][j] - c;
                        }
                    }
                    (p_h, p_c, yh.xi, yc.xi)
                }
            }
        }
    };
    Ok(PriceReport {
        regime,
        x1: request.x1,
        x2: request.x2,
        n_steps: n,
        dt: lattice.dt(),
        times: (0..=n).map(|i| lattice.time(i)).collect(),
        asset: (0..=n).map(|i| lattice.nodes_at(i).to_vec()).collect(),
        p_h,
        p_c,
        xi_h,
        xi_c,
    })
}

pub fn price_hedger<T: Scalar>(request: &PricingRequest<T>) -> Result<PriceProcess<T>> {
    let report = price(request)?;
    Ok(PriceProcess {
        t0: report.p_h0(),
        grid: report.p_h,
    })
}

pub fn price_counterparty<T: Scalar>(request: &PricingRequest<T>) -> Result<PriceProcess<T>> {
    let report = price(request)?;
    Ok(PriceProcess {
        t0: report.p_c0(),
        grid: report.p_c,
    })
}

/// Price in the single money-market-rate benchmark with rate `r_mid`.
pub fn price_single_rate<T: Scalar>(request: &PricingRequest<T>, r_mid: T) -> Result<PriceProcess<T>> {
    request.validate()?;
    check_r_mid(&request.rates, Some(r_mid))?;
    let lattice = build_lattice(request, Measure::Lending)?;
    let flows = cash_flow_increments(&request.contract, &lattice, request.options.sampling)?;
    let s = GeneratorSpec::new(
        single_rate_family(request.model),
        request.rates.clone(),
        T::zero(),
        T::zero(),
        request.collateral.clone(),
        Some(r_mid),
    )?;
    let sol = solve_scalar(&BsdeProblem::scalar(&s, &flows), &lattice)?;
    Ok(PriceProcess {
        t0: sol.y0(),
        grid: sol.y,
    })
}

/// Fair bilateral price interval at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairRange<T> {
    pub step: usize,
    pub node: usize,
    pub t: T,
    pub lower: T,
    pub upper: T,
    pub empty: bool,
}

/// `[P^c, P^h]` at every node of the requested steps; empty when `P^c > P^h + tol`.
pub fn fair_range<T: Scalar>(report: &PriceReport<T>, steps: &[usize], tol: T) -> Result<Vec<FairRange<T>>> {
    let mut out = Vec::new();
    for &i in steps {
        if i > report.n_steps {
            return Err(Error::InvalidLattice(format!("step {i} is not on the grid")));
        }
        for j in 0..=i {
            let (lower, upper) = (report.p_c[i][j], report.p_h[i][j]);
            out.push(FairRange {
                step: i,
                node: j,
                t: report.times[i],
                lower,
                upper,
                empty: lower > upper + tol,
            });
        }
    }
    Ok(out)
}

/// Reporting tolerance `1e-8 (1 + max(|P^h|, |P^c|))`.
pub fn reporting_tolerance<T: Scalar>(p_h: T, p_c: T) -> T {
    T::lit(1e-8) * (T::one() + p_h.abs().max(p_c.abs()))
}

/// Richardson-extrapolated `(P^h_0, P^c_0)` from `n` and `2n` steps.
pub fn extrapolated_prices<T: Scalar>(request: &PricingRequest<T>) -> Result<(T, T)> {
    let coarse = price(request)?;
    let fine = price(&request.with_steps(2 * request.n_steps))?;
    Ok((
        richardson(coarse.p_h0(), fine.p_h0()),
        richardson(coarse.p_c0(), fine.p_c0()),
    ))
}
