//! Contract cash flows and collateral conventions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::market::{f, RateEnvironment};
use crate::piecewise::PiecewiseLinear;
use crate::scalar::Scalar;

/// A jump of size `payoff(S_t)` received by the hedger at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFlow<T> {
    pub time: T,
    pub payoff: PiecewiseLinear<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Leg<T> {
    Flow(DiscreteFlow<T>),
    /// Fee paid by the hedger at `rate` per year from `start` to maturity.
    Fee { start: T, rate: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CashFlows<T> {
    European { payoff: PiecewiseLinear<T> },
    Discrete { flows: Vec<DiscreteFlow<T>> },
    ContinuousFee { rate: T },
    Mixed { legs: Vec<Leg<T>> },
}

/// Cumulative cash flows of a contract, seen from the hedger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec<T> {
    pub maturity: T,
    pub flows: CashFlows<T>,
}

impl<T: Scalar> ContractSpec<T> {
    pub fn zero(maturity: T) -> Self {
        ContractSpec {
            maturity,
            flows: CashFlows::Discrete { flows: Vec::new() },
        }
    }

    pub fn european(maturity: T, payoff: PiecewiseLinear<T>) -> Self {
        ContractSpec {
            maturity,
            flows: CashFlows::European { payoff },
        }
    }

    pub fn fee(maturity: T, rate: T) -> Self {
        ContractSpec {
            maturity,
            flows: CashFlows::ContinuousFee { rate },
        }
    }

    pub fn discrete(maturity: T, flows: Vec<(T, PiecewiseLinear<T>)>) -> Self {
        ContractSpec {
            maturity,
            flows: CashFlows::Discrete {
                flows: flows
                    .into_iter()
                    .map(|(time, payoff)| DiscreteFlow { time, payoff })
                    .collect(),
            },
        }
    }

    /// Every flow expressed as a leg.
    pub fn legs(&self) -> Vec<Leg<T>> {
        match &self.flows {
            CashFlows::European { payoff } => vec![Leg::Flow(DiscreteFlow {
                time: self.maturity,
                payoff: payoff.clone(),
            })],
            CashFlows::Discrete { flows } => flows.iter().cloned().map(Leg::Flow).collect(),
            CashFlows::ContinuousFee { rate } => vec![Leg::Fee {
                start: T::zero(),
                rate: *rate,
            }],
            CashFlows::Mixed { legs } => legs.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > T::zero() && self.maturity.is_finite()) {
            return Err(Error::InvalidContract(format!(
                "maturity T > 0 (T={})",
                f(self.maturity)
            )));
        }
        if let CashFlows::Discrete { flows } = &self.flows {
            if flows.windows(2).any(|w| w[1].time < w[0].time) {
                return Err(Error::InvalidContract(
                    "flow times must be non-decreasing".into(),
                ));
            }
        }
        for leg in self.legs() {
            match leg {
                Leg::Flow(flow) => {
                    if !(flow.time > T::zero() && flow.time <= self.maturity) {
                        return Err(Error::FlowOutsideHorizon {
                            time: f(flow.time),
                            maturity: f(self.maturity),
                        });
                    }
                }
                Leg::Fee { start, rate } => {
                    if !(start >= T::zero() && start < self.maturity && rate.is_finite()) {
                        return Err(Error::InvalidContract(format!(
                            "fee leg needs 0 ≤ start < T and a finite rate (start={})",
                            f(start)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Contract with every cash flow multiplied by `lambda`.
    pub fn scaled(&self, lambda: T) -> Self {
        let scale_flow = |fl: &DiscreteFlow<T>| DiscreteFlow {
            time: fl.time,
            payoff: fl.payoff.scaled(lambda),
        };
        let flows = match &self.flows {
            CashFlows::European { payoff } => CashFlows::European {
                payoff: payoff.scaled(lambda),
            },
            CashFlows::Discrete { flows } => CashFlows::Discrete {
                flows: flows.iter().map(scale_flow).collect(),
            },
            CashFlows::ContinuousFee { rate } => CashFlows::ContinuousFee {
                rate: lambda * *rate,
            },
            CashFlows::Mixed { legs } => CashFlows::Mixed {
                legs: legs
                    .iter()
                    .map(|leg| match leg {
                        Leg::Flow(fl) => Leg::Flow(scale_flow(fl)),
                        Leg::Fee { start, rate } => Leg::Fee {
                            start: *start,
                            rate: lambda * *rate,
                        },
                    })
                    .collect(),
            },
        };
        ContractSpec {
            maturity: self.maturity,
            flows,
        }
    }

    /// Whether `A − A_0` is non-increasing on every path (positive asset prices).
    pub fn is_decreasing(&self) -> bool {
        self.legs().iter().all(|leg| match leg {
            Leg::Flow(fl) => fl.payoff.nonpositive_from(T::zero()),
            Leg::Fee { rate, .. } => *rate >= T::zero(),
        })
    }
}

/// Hedger map `q` or negotiated map `Ĉ`, or an exogenous collateral level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CollateralConvention<T> {
    /// `C_t = level(S_t)` before maturity and `C_T = 0`.
    Exogenous { level: PiecewiseLinear<T> },
    /// `C_t = q(−P^h_t)`.
    HedgerQ { q: PiecewiseLinear<T> },
    /// `C_t = Ĉ(−P^h_t, −P^c_t)`.
    Negotiated { map: NegotiatedMap<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NegotiatedMap<T> {
    /// `α y1 + (1 − α) y2`.
    Convex { alpha: T },
    /// `a(y1) + b(y2)` with piecewise-linear `a`, `b`.
    Separable {
        hedger: PiecewiseLinear<T>,
        counterparty: PiecewiseLinear<T>,
    },
}

impl<T: Scalar> NegotiatedMap<T> {
    #[inline]
    pub fn eval(&self, y1: T, y2: T) -> T {
        match self {
            NegotiatedMap::Convex { alpha } => *alpha * y1 + (T::one() - *alpha) * y2,
            NegotiatedMap::Separable {
                hedger,
                counterparty,
            } => hedger.eval(y1) + counterparty.eval(y2),
        }
    }

    /// Lipschitz constants in `y1` and `y2`.
    pub fn lipschitz(&self) -> (T, T) {
        match self {
            NegotiatedMap::Convex { alpha } => (alpha.abs(), (T::one() - *alpha).abs()),
            NegotiatedMap::Separable {
                hedger,
                counterparty,
            } => (hedger.lipschitz(), counterparty.lipschitz()),
        }
    }
}

/// Structural predicates of a hedger map `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QPredicates {
    /// `y + q(−y) ≥ 0` for all `y ≥ 0`.
    pub nonnegative_cash: bool,
    pub increasing: bool,
    pub positively_homogeneous: bool,
}

impl<T: Scalar> CollateralConvention<T> {
    pub fn none() -> Self {
        CollateralConvention::HedgerQ {
            q: PiecewiseLinear::zero(),
        }
    }

    pub fn full() -> Self {
        CollateralConvention::HedgerQ {
            q: PiecewiseLinear::identity(),
        }
    }

    pub fn haircut(a1: T, a2: T) -> Self {
        CollateralConvention::HedgerQ {
            q: PiecewiseLinear::haircut(a1, a2),
        }
    }

    pub fn convex(alpha: T) -> Self {
        CollateralConvention::Negotiated {
            map: NegotiatedMap::Convex { alpha },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CollateralConvention::Exogenous { .. } => "Exogenous",
            CollateralConvention::HedgerQ { .. } => "HedgerQ",
            CollateralConvention::Negotiated { .. } => "Negotiated",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CollateralConvention::Exogenous { .. } => Ok(()),
            CollateralConvention::HedgerQ { q } => {
                if q.eval(T::zero()) != T::zero() {
                    return Err(Error::InvalidMap("q(0) = 0".into()));
                }
                Ok(())
            }
            CollateralConvention::Negotiated { map } => {
                if map.eval(T::zero(), T::zero()) != T::zero() {
                    return Err(Error::InvalidMap("Ĉ(0,0) = 0".into()));
                }
                if let NegotiatedMap::Convex { alpha } = map {
                    if !(*alpha >= T::zero() && *alpha <= T::one()) {
                        return Err(Error::InvalidMap(format!(
                            "0 ≤ α ≤ 1 (α={})",
                            f(*alpha)
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn q(&self) -> Result<&PiecewiseLinear<T>> {
        match self {
            CollateralConvention::HedgerQ { q } => Ok(q),
            other => Err(Error::WrongConvention {
                expected: "HedgerQ",
                found: other.kind(),
            }),
        }
    }

    pub fn negotiated(&self) -> Result<&NegotiatedMap<T>> {
        match self {
            CollateralConvention::Negotiated { map } => Ok(map),
            other => Err(Error::WrongConvention {
                expected: "Negotiated",
                found: other.kind(),
            }),
        }
    }

    pub fn exogenous(&self) -> Result<&PiecewiseLinear<T>> {
        match self {
            CollateralConvention::Exogenous { level } => Ok(level),
            other => Err(Error::WrongConvention {
                expected: "Exogenous",
                found: other.kind(),
            }),
        }
    }

    /// Collateral convention with every amount multiplied by `lambda ≥ 0`.
    pub fn scaled(&self, lambda: T) -> Self {
        match self {
            CollateralConvention::Exogenous { level } => CollateralConvention::Exogenous {
                level: level.scaled(lambda),
            },
            other => other.clone(),
        }
    }
}

pub fn eval_q<T: Scalar>(conv: &CollateralConvention<T>, y: T) -> Result<T> {
    Ok(conv.q()?.eval(y))
}

pub fn eval_negotiated<T: Scalar>(conv: &CollateralConvention<T>, y1: T, y2: T) -> Result<T> {
    Ok(conv.negotiated()?.eval(y1, y2))
}

pub fn check_q_predicates<T: Scalar>(conv: &CollateralConvention<T>) -> Result<QPredicates> {
    let q = conv.q()?;
    let cash = PiecewiseLinear::identity().add(&q.reflected());
    Ok(QPredicates {
        nonnegative_cash: cash.nonnegative_from(T::zero()),
        increasing: q.is_increasing(),
        positively_homogeneous: q.is_positively_homogeneous(),
    })
}

/// How piecewise-linear flows are sampled at lattice nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PayoffSampling {
    /// `h(S_ij)`.
    Node,
    /// Mean of `h` over the node's log-price cell `[S e^{−σ̄√dt}, S e^{σ̄√dt}]`.
    #[default]
    CellAverage,
}

/// Step index of the grid time nearest from above to `t`.
pub fn grid_index<T: Scalar>(t: T, lattice: &Lattice<T>) -> usize {
    let x = t / lattice.dt();
    let r = x.round();
    let snapped = if (x - r).abs() <= T::lit(1e-9) * r.max(T::one()) {
        r
    } else {
        x.ceil()
    };
    snapped
        .to_usize()
        .unwrap_or(0)
        .clamp(1, lattice.n_steps())
}

/// Node-wise increments ΔA at each step; `values[i][j]` is the jump at node `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowIncrements<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> FlowIncrements<T> {
    pub fn zeros(lattice: &Lattice<T>) -> Self {
        FlowIncrements {
            values: lattice.grid(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i][j]
    }

    pub fn scaled(&self, lambda: T) -> Self {
        FlowIncrements {
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| lambda * *v).collect())
                .collect(),
        }
    }
}

pub fn cash_flow_increments<T: Scalar>(
    contract: &ContractSpec<T>,
    lattice: &Lattice<T>,
    sampling: PayoffSampling,
) -> Result<FlowIncrements<T>> {
    contract.validate()?;
    let horizon = lattice.horizon();
    if (horizon - contract.maturity).abs() > T::lit(1e-12) * horizon.max(T::one()) {
        return Err(Error::InvalidLattice(format!(
            "lattice horizon {} differs from maturity {}",
            f(horizon),
            f(contract.maturity)
        )));
    }
    let mut out = FlowIncrements::zeros(lattice);
    let half_width = lattice.cell_half_width();
    for leg in contract.legs() {
        match leg {
            Leg::Flow(flow) => {
                let i = grid_index(flow.time, lattice);
                for (j, s) in lattice.nodes_at(i).iter().enumerate() {
                    let v = match sampling {
                        PayoffSampling::Node => flow.payoff.eval(*s),
                        PayoffSampling::CellAverage => flow.payoff.log_cell_average(*s, half_width),
                    };
                    out.values[i][j] = out.values[i][j] + v;
                }
            }
            Leg::Fee { start, rate } => {
                for i in 1..=lattice.n_steps() {
                    let a = lattice.time(i - 1).max(start);
                    let b = lattice.time(i);
                    if b > a {
                        let inc = -rate * (b - a);
                        for v in out.values[i].iter_mut() {
                            *v = *v + inc;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Account used to discount the exogenous-collateral flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscountAccount {
    Lending,
    Borrowing,
    /// No discounting.
    Unit,
}

/// Flows `A^C = A + C + F^C` discounted by an account, on the lattice.
///
/// The increment over the branch `(i−1, p) → (i, c)` is
/// `node_part(i, c) − parent_part(i−1, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedFlows<T> {
    /// Discounted contract jumps `B_i^{-1} ΔA_i`.
    pub flows: Vec<Vec<T>>,
    /// Collateral level `C_i`, zero at maturity.
    pub collateral: Vec<Vec<T>>,
    /// Discounted collateral interest over the step starting at `i`:
    /// `−r_c C_i ∫ B_u^{-1} du`.
    pub interest: Vec<Vec<T>>,
    /// Account values `B_i`.
    pub account: Vec<T>,
}

impl<T: Scalar> DiscountedFlows<T> {
    #[inline]
    pub fn node_part(&self, i: usize, j: usize) -> T {
        self.flows[i][j] + self.collateral[i][j] / self.account[i]
    }

    #[inline]
    pub fn parent_part(&self, i: usize, j: usize) -> T {
        self.collateral[i][j] / self.account[i + 1] - self.interest[i][j]
    }

    #[inline]
    pub fn increment(&self, i: usize, parent: usize, child: usize) -> T {
        self.node_part(i, child) - self.parent_part(i - 1, parent)
    }
}

pub fn discounted_flows<T: Scalar>(
    contract: &ContractSpec<T>,
    collateral: &CollateralConvention<T>,
    rates: &RateEnvironment<T>,
    account: DiscountAccount,
    lattice: &Lattice<T>,
    sampling: PayoffSampling,
) -> Result<DiscountedFlows<T>> {
    let level = collateral.exogenous()?;
    let raw = cash_flow_increments(contract, lattice, sampling)?;
    let rate = match account {
        DiscountAccount::Lending => rates.r_l,
        DiscountAccount::Borrowing => rates.r_b,
        DiscountAccount::Unit => T::zero(),
    };
    let n = lattice.n_steps();
    let acc: Vec<T> = (0..=n).map(|i| (rate * lattice.time(i)).exp()).collect();
    let dt = lattice.dt();
    let flows = raw
        .values
        .iter()
        .zip(&acc)
        .map(|(row, b)| row.iter().map(|v| *v / *b).collect())
        .collect();
    let collateral: Vec<Vec<T>> = (0..=n)
        .map(|i| {
            lattice
                .nodes_at(i)
                .iter()
                .map(|s| if i == n { T::zero() } else { level.eval(*s) })
                .collect()
        })
        .collect();
    let interest = (0..=n)
        .map(|i| {
            let integral = if i == n {
                T::zero()
            } else if rate == T::zero() {
                dt
            } else {
                -(-rate * dt).exp_m1() / (rate * acc[i])
            };
            collateral[i]
                .iter()
                .map(|c| -rates.r_c * *c * integral)
                .collect()
        })
        .collect();
    Ok(DiscountedFlows {
        flows,
        collateral,
        interest,
        account: acc,
    })
}
