//! Backward induction for scalar and two-dimensional BSDEs on the lattice.
//!
//! Scheme per node: `(m, Z_W)` from the one-step expectation of the
//! pre-flow continuation, then `Y = m − g(t, S, m, z) dt`, with `z`
//! obtained from `Z_W` by the family's z-convention.

use crate::contracts::{DiscountedFlows, FlowIncrements};
use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, ZConvention};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Scalar,
    SequentialPair,
    SimultaneousPair,
}

/// A BSDE `dY = Z dS̃ + g dt + dA`, `Y_T = 0`, on the lattice.
#[derive(Debug, Clone, Copy)]
pub struct BsdeProblem<'a, T> {
    pub generator: &'a GeneratorSpec<T>,
    /// Counterparty driver for `SequentialPair`.
    pub counterparty: Option<&'a GeneratorSpec<T>>,
    pub flows: &'a FlowIncrements<T>,
    pub coupling: Coupling,
    /// Per-step fixed-point refinement of the negotiated collateral.
    pub fixed_point: bool,
}

impl<'a, T: Scalar> BsdeProblem<'a, T> {
    pub fn scalar(generator: &'a GeneratorSpec<T>, flows: &'a FlowIncrements<T>) -> Self {
        BsdeProblem {
            generator,
            counterparty: None,
            flows,
            coupling: Coupling::Scalar,
            fixed_point: false,
        }
    }

    pub fn sequential(
        hedger: &'a GeneratorSpec<T>,
        counterparty: &'a GeneratorSpec<T>,
        flows: &'a FlowIncrements<T>,
    ) -> Self {
        BsdeProblem {
            generator: hedger,
            counterparty: Some(counterparty),
            flows,
            coupling: Coupling::SequentialPair,
            fixed_point: false,
        }
    }

    pub fn simultaneous(
        generator: &'a GeneratorSpec<T>,
        flows: &'a FlowIncrements<T>,
        fixed_point: bool,
    ) -> Self {
        BsdeProblem {
            generator,
            counterparty: None,
            flows,
            coupling: Coupling::SimultaneousPair,
            fixed_point,
        }
    }
}

/// Per-node solution grids; row `i` holds the `i + 1` nodes of step `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution<T> {
    /// Ex-flow value at steps `i < n`; pre-jump terminal data at step `n`.
    pub y: Vec<Vec<T>>,
    /// Coefficient against the Brownian increment (zero on the last row).
    pub z_w: Vec<Vec<T>>,
    /// Hedge ratio `Z_W / σ(t, S)`.
    pub xi: Vec<Vec<T>>,
    /// Terminal data supplied to the solver.
    pub terminal: Vec<T>,
}

impl<T: Scalar> BsdeSolution<T> {
    pub fn y0(&self) -> T {
        self.y[0][0]
    }

    fn empty(lattice: &Lattice<T>) -> Self {
        BsdeSolution {
            y: lattice.grid(),
            z_w: lattice.grid(),
            xi: lattice.grid(),
            terminal: Vec::new(),
        }
    }

    fn set_terminal(&mut self, n: usize, terminal: Vec<T>) {
        self.y[n].copy_from_slice(&terminal);
        self.terminal = terminal;
    }
}

#[inline]
fn finite<T: Scalar>(v: T, what: &'static str, step: usize, node: usize) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what, step, node })
    }
}

/// Pre-flow continuation row `Y_{i+1} − ΔA_{i+1}` (terminal row is already pre-jump).
fn continuation<T: Scalar>(sol: &BsdeSolution<T>, flows: &FlowIncrements<T>, i1: usize, n: usize, out: &mut Vec<T>) {
    out.clear();
    if i1 == n {
        out.extend_from_slice(&sol.y[n]);
    } else {
        out.extend(sol.y[i1].iter().zip(&flows.values[i1]).map(|(y, a)| *y - *a));
    }
}

/// Factor turning `ξ` into the driver's `z` at time `t`.
#[inline]
fn z_factor<T: Scalar>(spec: &GeneratorSpec<T>, t: T) -> T {
    match spec.family.z_convention() {
        ZConvention::Discounted => (spec.rates.r_l * t).exp(),
        ZConvention::HedgeRatio => T::one(),
    }
}

fn check_flows<T: Scalar>(flows: &FlowIncrements<T>, lattice: &Lattice<T>) -> Result<()> {
    let n = lattice.n_steps();
    if flows.values.len() != n + 1 || flows.values.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
        return Err(Error::Shape("flow increments do not match the lattice".into()));
    }
    Ok(())
}

/// Scalar sweep with an optional per-node `y1` feed for the counterparty families.
fn sweep<T: Scalar>(
    spec: &GeneratorSpec<T>,
    flows: &FlowIncrements<T>,
    lattice: &Lattice<T>,
    feed: Option<&BsdeSolution<T>>,
) -> Result<BsdeSolution<T>> {
    check_flows(flows, lattice)?;
    let n = lattice.n_steps();
    let dt = lattice.dt();
    let sigma = lattice.sigma_bar();
    let mut sol = BsdeSolution::empty(lattice);
    sol.set_terminal(n, flows.values[n].iter().map(|a| -*a).collect());
    let mut w = Vec::with_capacity(n + 1);
    let mut w1 = Vec::with_capacity(n + 1);
    for i in (0..n).rev() {
        continuation(&sol, flows, i + 1, n, &mut w);
        if let Some(h) = feed {
            continuation(h, flows, i + 1, n, &mut w1);
        }
        let t = lattice.time(i);
        let zf = z_factor(spec, t);
        for j in 0..=i {
            let s = lattice.node(i, j);
            let (mean, zw) = lattice.step_expectation(&w, j);
            let y1 = match feed {
                Some(_) => lattice.step_expectation(&w1, j).0,
                None => T::zero(),
            };
            let xi = zw / (sigma * s);
            let g = spec.eval_scalar(t, std::slice::from_ref(&s), mean, &[zf * xi], y1);
            let g = finite(g, "driver value", i, j)?;
            sol.y[i][j] = mean - g * dt;
            sol.z_w[i][j] = zw;
            sol.xi[i][j] = xi;
        }
    }
    Ok(sol)
}

pub fn solve_scalar<T: Scalar>(problem: &BsdeProblem<T>, lattice: &Lattice<T>) -> Result<BsdeSolution<T>> {
    if problem.coupling != Coupling::Scalar || problem.generator.family.is_pair() {
        return Err(Error::Shape("scalar solve needs a scalar family in Scalar mode".into()));
    }
    if problem.generator.family.needs_y1() {
        return Err(Error::Shape(format!(
            "{:?} needs the hedger's solution; use the sequential solver",
            problem.generator.family
        )));
    }
    problem.generator.validate()?;
    sweep(problem.generator, problem.flows, lattice, None)
}

/// Hedger first, then the counterparty fed the hedger's continuation mean.
pub fn solve_sequential_pair<T: Scalar>(
    problem: &BsdeProblem<T>,
    lattice: &Lattice<T>,
) -> Result<(BsdeSolution<T>, BsdeSolution<T>)> {
    let g = problem
        .counterparty
        .ok_or_else(|| Error::Shape("sequential solve needs a counterparty driver".into()))?;
    if problem.coupling != Coupling::SequentialPair
        || problem.generator.family.is_pair()
        || problem.generator.family.needs_y1()
        || g.family.is_pair()
    {
        return Err(Error::Shape("sequential solve needs an (f, g) family pair".into()));
    }
    problem.generator.validate()?;
    g.validate()?;
    let hedger = sweep(problem.generator, problem.flows, lattice, None)?;
    let counterparty = sweep(g, problem.flows, lattice, Some(&hedger))?;
    Ok((hedger, counterparty))
}

/// One sweep for both components of a coupled driver.
pub fn solve_simultaneous_pair<T: Scalar>(
    problem: &BsdeProblem<T>,
    lattice: &Lattice<T>,
) -> Result<(BsdeSolution<T>, BsdeSolution<T>)> {
    let spec = problem.generator;
    if problem.coupling != Coupling::SimultaneousPair || !spec.family.is_pair() {
        return Err(Error::Shape("simultaneous solve needs a coupled family".into()));
    }
    spec.validate()?;
    let flows = problem.flows;
    check_flows(flows, lattice)?;
    let n = lattice.n_steps();
    let dt = lattice.dt();
    let sigma = lattice.sigma_bar();
    let mut a = BsdeSolution::empty(lattice);
    let mut b = BsdeSolution::empty(lattice);
    let terminal: Vec<T> = flows.values[n].iter().map(|v| -*v).collect();
    a.set_terminal(n, terminal.clone());
    b.set_terminal(n, terminal);
    let (mut wa, mut wb) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
    let tol = T::lit(1e-12);
    for i in (0..n).rev() {
        continuation(&a, flows, i + 1, n, &mut wa);
        continuation(&b, flows, i + 1, n, &mut wb);
        let t = lattice.time(i);
        let zf = z_factor(spec, t);
        for j in 0..=i {
            let s = lattice.node(i, j);
            let (m1, zw1) = lattice.step_expectation(&wa, j);
            let (m2, zw2) = lattice.step_expectation(&wb, j);
            let (xi1, xi2) = (zw1 / (sigma * s), zw2 / (sigma * s));
            let sl = std::slice::from_ref(&s);
            let (z1, z2) = ([zf * xi1], [zf * xi2]);
            let (g1, g2) = spec.eval_pair_at(t, sl, (m1, m2), (&z1, &z2), (m1, m2));
            let (mut y1, mut y2) = (m1 - g1 * dt, m2 - g2 * dt);
            if problem.fixed_point {
                for _ in 0..5 {
                    let (h1, h2) = spec.eval_pair_at(t, sl, (m1, m2), (&z1, &z2), (y1, y2));
                    let (n1, n2) = (m1 - h1 * dt, m2 - h2 * dt);
                    let change = (n1 - y1).abs().max((n2 - y2).abs());
                    y1 = n1;
                    y2 = n2;
                    if change <= tol * (T::one() + y1.abs().max(y2.abs())) {
                        break;
                    }
                }
            }
            a.y[i][j] = finite(y1, "driver value", i, j)?;
            b.y[i][j] = finite(y2, "driver value", i, j)?;
            a.z_w[i][j] = zw1;
            b.z_w[i][j] = zw2;
            a.xi[i][j] = xi1;
            b.xi[i][j] = xi2;
        }
    }
    Ok((a, b))
}

/// Which way the discounted collateralized flows enter the wealth-level BSDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSign {
    Plus,
    Minus,
}

/// Wealth-level BSDE `dY = Z dS̃ + G dt ± dA^C`, `Y_T = x`, for exogenous collateral.
///
/// With `roll = Some(r)` the continuation is rolled forward at the account
/// rate `r` before the driver is applied, and the driver is augmented by
/// `r (y − x)`; this keeps the scheme the exact image of the price-level
/// scheme under `P = ±B (Y − x) ∓ C`.
pub fn solve_exogenous<T: Scalar>(
    spec: &GeneratorSpec<T>,
    lattice: &Lattice<T>,
    flows: &DiscountedFlows<T>,
    sign: FlowSign,
    x: T,
    roll: Option<T>,
) -> Result<BsdeSolution<T>> {
    spec.validate()?;
    if spec.family.convention() != "Exogenous" {
        return Err(Error::WrongConvention {
            expected: "Exogenous",
            found: spec.collateral.kind(),
        });
    }
    let n = lattice.n_steps();
    if flows.flows.len() != n + 1 {
        return Err(Error::Shape("discounted flows do not match the lattice".into()));
    }
    let dt = lattice.dt();
    let sigma = lattice.sigma_bar();
    let sgn = match sign {
        FlowSign::Plus => T::one(),
        FlowSign::Minus => -T::one(),
    };
    let mut sol = BsdeSolution::empty(lattice);
    sol.set_terminal(
        n,
        (0..=n).map(|c| x - sgn * flows.node_part(n, c)).collect(),
    );
    let mut w = Vec::with_capacity(n + 1);
    for i in (0..n).rev() {
        w.clear();
        if i + 1 == n {
            w.extend_from_slice(&sol.y[n]);
        } else {
            w.extend((0..=i + 1).map(|c| sol.y[i + 1][c] - sgn * flows.node_part(i + 1, c)));
        }
        let t = lattice.time(i);
        let growth = match roll {
            Some(r) => (r * dt).exp(),
            None => T::one(),
        };
        let account = match roll {
            Some(r) => (r * t).exp(),
            None => T::one(),
        };
        for j in 0..=i {
            let s = lattice.node(i, j);
            let (mean, zw) = lattice.step_expectation(&w, j);
            let mean = mean + sgn * flows.parent_part(i, j);
            let (y_star, zw_star) = (x + growth * (mean - x), growth * zw);
            let xi = account * zw_star / (sigma * s);
            let g = spec.eval_scalar(t, std::slice::from_ref(&s), y_star, &[xi], T::zero());
            let carry = match roll {
                Some(r) => r * (y_star - x),
                None => T::zero(),
            };
            let g = finite(g + carry, "driver value", i, j)?;
            sol.y[i][j] = y_star - g * dt;
            sol.z_w[i][j] = zw_star;
            sol.xi[i][j] = xi;
        }
    }
    Ok(sol)
}

/// First-order Richardson extrapolation `2 p_{2n} − p_n`.
pub fn richardson<T: Scalar>(p_n: T, p_2n: T) -> T {
    T::two() * p_2n - p_n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{cash_flow_increments, CollateralConvention, ContractSpec, PayoffSampling};
    use crate::generators::GeneratorFamily;
    use crate::lattice::LatticeConfig;
    use crate::market::{AssetDynamics, Measure, RateEnvironment};
    use crate::piecewise::PiecewiseLinear;

    fn setup(n: usize, rates: &RateEnvironment<f64>) -> Lattice<f64> {
        let asset = AssetDynamics::new(100.0, 0.08, 0.2, 0.0);
        Lattice::build(&asset, rates, &LatticeConfig { n_steps: n, horizon: 1.0, measure: Measure::Lending }).unwrap()
    }

    fn call_flows(l: &Lattice<f64>) -> FlowIncrements<f64> {
        cash_flow_increments(&ContractSpec::european(1.0, PiecewiseLinear::call(100.0)), l, PayoffSampling::CellAverage).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02).with_r_ib(vec![0.06]);
        let l = setup(20, &rates);
        let flows = FlowIncrements::zeros(&l);
        for fam in [GeneratorFamily::BergmanFl, GeneratorFamily::PnFl] {
            let spec = GeneratorSpec::new(fam, rates.clone(), 1.5, 0.0, CollateralConvention::haircut(0.1, -0.05), None).unwrap();
            let sol = solve_scalar(&BsdeProblem::scalar(&spec, &flows), &l).unwrap();
            assert!(sol.y.iter().flatten().all(|v| *v == 0.0));
            assert!(sol.z_w.iter().flatten().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn terminal_data_and_hedge_ratio_identity() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(50, &rates);
        let flows = call_flows(&l);
        let spec = GeneratorSpec::new(GeneratorFamily::BergmanFl, rates, 0.0, 0.0, CollateralConvention::full(), None).unwrap();
        let sol = solve_scalar(&BsdeProblem::scalar(&spec, &flows), &l).unwrap();
        for j in 0..=50 {
            assert_eq!(sol.y[50][j], -flows.at(50, j));
        }
        for i in 0..50 {
            for j in 0..=i {
                let s = l.node(i, j);
                let zw = sol.z_w[i][j];
                assert!((sol.xi[i][j] * (0.2 * s) - zw).abs() <= 4.0 * f64::EPSILON * zw.abs());
            }
        }
    }

    #[test]
    fn differential_rates_price_between_single_rate_prices() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(200, &rates);
        let flows = call_flows(&l);
        let spec = GeneratorSpec::new(GeneratorFamily::BergmanFl, rates.clone(), 0.0, 0.0, CollateralConvention::full(), None).unwrap();
        let y0 = solve_scalar(&BsdeProblem::scalar(&spec, &flows), &l).unwrap().y0();
        let single = |r: f64| {
            let s = GeneratorSpec::new(GeneratorFamily::SingleRate, rates.clone(), 0.0, 0.0, CollateralConvention::full(), Some(r)).unwrap();
            solve_scalar(&BsdeProblem::scalar(&s, &flows), &l).unwrap().y0()
        };
        let (lo, hi) = (single(0.01).abs(), single(0.05).abs());
        assert!(y0.is_finite());
        assert!(lo.min(hi) <= y0.abs() && y0.abs() <= lo.max(hi), "{lo} {} {hi}", y0.abs());
    }

    #[test]
    fn sequential_counterparty_below_hedger() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(100, &rates);
        let flows = call_flows(&l);
        let f = GeneratorSpec::new(GeneratorFamily::BergmanFl, rates, 0.0, 0.0, CollateralConvention::full(), None).unwrap();
        let g = f.with_family(GeneratorFamily::BergmanGl);
        let (h, c) = solve_sequential_pair(&BsdeProblem::sequential(&f, &g, &flows), &l).unwrap();
        assert!(c.y0() <= h.y0());
        let alone = solve_scalar(&BsdeProblem::scalar(&f, &flows), &l).unwrap();
        assert_eq!(alone.y, h.y);
    }

    #[test]
    fn collapsed_rates_make_both_sides_equal() {
        let rates = RateEnvironment::flat(0.03);
        let l = setup(100, &rates);
        let flows = call_flows(&l);
        for (ff, gf) in [(GeneratorFamily::BergmanFl, GeneratorFamily::BergmanGl), (GeneratorFamily::PnFl, GeneratorFamily::PnGl)] {
            let f = GeneratorSpec::new(ff, rates.clone(), 1.0, 2.0, CollateralConvention::haircut(0.1, -0.05), None).unwrap();
            let g = f.with_family(gf);
            let (h, c) = solve_sequential_pair(&BsdeProblem::sequential(&f, &g, &flows), &l).unwrap();
            for (a, b) in h.y.iter().flatten().zip(c.y.iter().flatten()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn hedger_only_negotiation_matches_sequential_leg() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(100, &rates);
        let flows = call_flows(&l);
        let c = GeneratorSpec::new(GeneratorFamily::CoupledBergmanG, rates.clone(), 0.0, 0.0, CollateralConvention::convex(1.0), None).unwrap();
        let (a, b) = solve_simultaneous_pair(&BsdeProblem::simultaneous(&c, &flows, false), &l).unwrap();
        let f = GeneratorSpec::new(GeneratorFamily::BergmanFl, rates, 0.0, 0.0, CollateralConvention::full(), None).unwrap();
        let h = solve_scalar(&BsdeProblem::scalar(&f, &flows), &l).unwrap();
        for (x, y) in a.y.iter().flatten().zip(h.y.iter().flatten()) {
            assert!((x - y).abs() <= 1e-12);
        }
        for (x, y) in a.y.iter().flatten().zip(b.y.iter().flatten()) {
            assert!(*x >= *y - 1e-12);
        }
    }

    #[test]
    fn fixed_point_refinement_stays_close() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(100, &rates);
        let flows = call_flows(&l);
        let c = GeneratorSpec::new(GeneratorFamily::CoupledBergmanG, rates, 0.0, 0.0, CollateralConvention::convex(0.5), None).unwrap();
        let (a, _) = solve_simultaneous_pair(&BsdeProblem::simultaneous(&c, &flows, false), &l).unwrap();
        let (b, _) = solve_simultaneous_pair(&BsdeProblem::simultaneous(&c, &flows, true), &l).unwrap();
        assert!((a.y0() - b.y0()).abs() < 1e-3);
    }

    #[test]
    fn zero_pair_data() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(10, &rates);
        let flows = FlowIncrements::zeros(&l);
        let c = GeneratorSpec::new(GeneratorFamily::CoupledBergmanG, rates, 0.0, 0.0, CollateralConvention::convex(0.5), None).unwrap();
        let (a, b) = solve_simultaneous_pair(&BsdeProblem::simultaneous(&c, &flows, false), &l).unwrap();
        assert!(a.y.iter().chain(&b.y).flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn non_finite_driver_reported_with_node() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(5, &rates);
        let mut flows = FlowIncrements::zeros(&l);
        flows.values[5][2] = f64::NAN;
        let spec = GeneratorSpec::new(GeneratorFamily::BergmanFl, rates, 0.0, 0.0, CollateralConvention::full(), None).unwrap();
        let err = solve_scalar(&BsdeProblem::scalar(&spec, &flows), &l).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 4, .. }));
    }

    #[test]
    fn mode_mismatch_rejected() {
        let rates = RateEnvironment::new(0.01, 0.05, 0.02);
        let l = setup(5, &rates);
        let flows = FlowIncrements::zeros(&l);
        let g = GeneratorSpec::new(GeneratorFamily::BergmanGl, rates, 0.0, 0.0, CollateralConvention::full(), None).unwrap();
        assert!(solve_scalar(&BsdeProblem::scalar(&g, &flows), &l).is_err());
    }

    #[test]
    fn richardson_formula() {
        assert_eq!(richardson(3.0, 3.0), 3.0);
        assert!((richardson(1.0, 0.9) - 0.8f64).abs() < 1e-15);
    }
}
