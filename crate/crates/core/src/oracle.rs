//! Replication-recursion pricer.
//!
//! Prices are recovered from explicit one-step self-financing portfolio
//! accounting on the pricing lattice: the hedge ratio comes from the
//! two-state wealth spread, the cash position is split into lent and
//! borrowed parts (plus asset-specific funding for partial netting), and the
//! collateral is carried in cash and pays interest at `r_c`. No driver code
//! is used.
//!
//! Two accrual modes are available. `Independent` accrues exactly over each
//! step and solves the resulting piecewise-linear equation for the current
//! wealth, giving a discretization of its own. `Matched` applies the accrual
//! at the continuation wealth with the same first-order linearization as the
//! BSDE scheme.

use serde::{Deserialize, Serialize};

use crate::contracts::{cash_flow_increments, CollateralConvention, FlowIncrements, NegotiatedMap};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::market::Measure;
use crate::piecewise::PiecewiseLinear;
use crate::pricing::{build_lattice, select_regime, Model, PricingPath, PricingRequest};
use crate::scalar::{neg, pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Hedger,
    Counterparty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccrualMode {
    /// Accrual linearized at the continuation wealth, as in the BSDE scheme.
    Matched,
    /// Exact exponential accrual with an implicit wealth solve.
    Independent,
}

/// Portfolio held over one step from node `(step, node)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStep<T> {
    pub step: usize,
    pub node: usize,
    pub xi: T,
    pub lent: T,
    pub borrowed: T,
    /// Amount borrowed from the asset's funding account (partial netting).
    pub asset_borrowed: T,
    /// Collateral held in the cash account; negative when posted.
    pub collateral: T,
    pub wealth: T,
    /// Non-asset wealth change over the step.
    pub accrual: T,
    pub residual_up: T,
    pub residual_down: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication<T> {
    pub side: Side,
    pub mode: AccrualMode,
    pub endowment: T,
    /// Wealth per node; ex-flow for `i < n`, pre-flow at maturity.
    pub wealth: Vec<Vec<T>>,
    pub price: Vec<Vec<T>>,
    /// Largest self-financing residual over all nodes and both states.
    pub max_residual: T,
    /// Per-node records, filled only by the recording entry points.
    pub steps: Vec<ReplicationStep<T>>,
}

impl<T: Scalar> Replication<T> {
    pub fn price0(&self) -> T {
        self.price[0][0]
    }

    pub fn wealth0(&self) -> T {
        self.wealth[0][0]
    }
}

/// Accounting parameters of one party.
#[derive(Debug, Clone, Copy)]
struct Party<T> {
    /// `+1` receives `(A, C)`, `−1` receives `(−A, −C)`.
    sign: T,
    x: T,
    /// Rate of the account the endowment sits in.
    rx: T,
    lend: T,
    borrow: T,
    /// Asset funding rate, partial netting only.
    r_ib: Option<T>,
    rc: T,
}

impl<T: Scalar> Party<T> {
    fn account(&self, t: T) -> T {
        (self.rx * t).exp()
    }

    fn price(&self, v: T, t: T) -> T {
        self.sign * (v - self.x * self.account(t))
    }

    /// Constant part of the cash position: `c = V + K + k0`.
    fn cash_offset(&self, xs: T) -> T {
        match self.r_ib {
            None => -xs,
            Some(_) => neg(xs),
        }
    }
}

/// How a party's collateral is determined at a node.
#[derive(Clone, Copy)]
enum Holding<'a, T> {
    /// `K = q(−P)` on the party's own price.
    Own(&'a PiecewiseLinear<T>),
    /// `K = −q(−P^h)` from the supplied hedger grid.
    Mirror(&'a PiecewiseLinear<T>, &'a [Vec<T>]),
    /// `K = sign · C(S)`, with the interest credited over the step.
    Exogenous(&'a PiecewiseLinear<T>, T),
}

struct Setup<T> {
    lattice: Lattice<T>,
    flows: FlowIncrements<T>,
    mu: T,
    hedger: Party<T>,
    counterparty: Party<T>,
    path: PricingPath,
    fixed_point: bool,
}

fn setup<T: Scalar>(request: &PricingRequest<T>) -> Result<Setup<T>> {
    let regime = select_regime(request)?;
    let lattice = build_lattice(request, regime.measure)?;
    let flows = cash_flow_increments(&request.contract, &lattice, request.options.sampling)?;
    let rates = &request.rates;
    let pn = request.model == Model::PartialNetting;
    let r_ib = if pn { rates.r_ib.first().copied() } else { None };
    let mu = lattice.drift() + lattice.kappa_bar();
    let base = Party {
        sign: T::one(),
        x: request.x1,
        rx: rates.r_l,
        lend: rates.r_l,
        borrow: rates.r_b,
        r_ib,
        rc: rates.r_c,
    };
    let (hedger, counterparty) = if regime.path == PricingPath::SingleRate {
        let rm = request.r_mid.unwrap_or(rates.r_l);
        let p = Party {
            x: T::zero(),
            lend: rm,
            borrow: rm,
            r_ib: None,
            ..base
        };
        (p, Party { sign: -T::one(), ..p })
    } else {
        let rx2 = match regime.measure {
            Measure::Lending => rates.r_l,
            Measure::Beta => rates.r_b,
        };
        (
            base,
            Party {
                sign: -T::one(),
                x: request.x2,
                rx: rx2,
                ..base
            },
        )
    };
    Ok(Setup {
        lattice,
        flows,
        mu,
        hedger,
        counterparty,
        path: regime.path,
        fixed_point: request.options.fixed_point,
    })
}

/// Pre-flow continuation wealth at step `i1`.
fn continuation<T: Scalar>(wealth: &[Vec<T>], flows: &FlowIncrements<T>, p: &Party<T>, i1: usize, n: usize) -> Vec<T> {
    if i1 == n {
        wealth[n].clone()
    } else {
        wealth[i1]
            .iter()
            .zip(&flows.values[i1])
            .map(|(v, a)| *v - p.sign * *a)
            .collect()
    }
}

fn terminal<T: Scalar>(s: &Setup<T>, p: &Party<T>) -> Vec<T> {
    let n = s.lattice.n_steps();
    let bt = p.account(s.lattice.time(n));
    s.flows.values[n].iter().map(|a| p.x * bt - p.sign * *a).collect()
}

/// `(e^{r dt} − 1) / r`, or `dt` at `r = 0`.
fn growth_integral<T: Scalar>(r: T, dt: T) -> T {
    if r == T::zero() {
        dt
    } else {
        (r * dt).exp_m1() / r
    }
}

/// Root of an increasing piecewise-linear `phi` whose kinks are `kinks`.
fn pl_root<T: Scalar>(phi: &dyn Fn(T) -> T, mut kinks: Vec<T>) -> T {
    kinks.retain(|k| k.is_finite());
    kinks.sort_by(|a, b| a.partial_cmp(b).expect("finite kinks"));
    kinks.dedup();
    let line = |a: T, b: T| {
        let (fa, fb) = (phi(a), phi(b));
        a - fa * (b - a) / (fb - fa)
    };
    if kinks.is_empty() {
        return line(T::zero(), T::one());
    }
    let values: Vec<T> = kinks.iter().map(|k| phi(*k)).collect();
    match values.iter().position(|v| *v >= T::zero()) {
        Some(0) => {
            let b = kinks[0];
            line(b - (T::one() + b.abs()), b)
        }
        Some(k) => {
            let (a, b) = (kinks[k - 1], kinks[k]);
            let (fa, fb) = (values[k - 1], values[k]);
            if fb == fa {
                a
            } else {
                a - fa * (b - a) / (fb - fa)
            }
        }
        None => {
            let a = kinks[kinks.len() - 1];
            line(a, a + T::one() + a.abs())
        }
    }
}

/// Zero crossings of a piecewise-linear `c` with kinks `kinks`.
fn pl_zeros<T: Scalar>(c: &dyn Fn(T) -> T, kinks: &[T]) -> Vec<T> {
    let mut k: Vec<T> = kinks.iter().copied().filter(|v| v.is_finite()).collect();
    k.sort_by(|a, b| a.partial_cmp(b).expect("finite kinks"));
    let mut out = Vec::new();
    let mut push_line = |a: T, b: T, lo: Option<T>, hi: Option<T>| {
        let (ca, cb) = (c(a), c(b));
        if ca == cb {
            return;
        }
        let z = a - ca * (b - a) / (cb - ca);
        if lo.is_none_or(|l| z >= l) && hi.is_none_or(|h| z <= h) {
            out.push(z);
        }
    };
    if k.is_empty() {
        push_line(T::zero(), T::one(), None, None);
        return out;
    }
    let first = k[0];
    push_line(first - (T::one() + first.abs()), first, None, Some(first));
    for w in k.windows(2) {
        push_line(w[0], w[1], Some(w[0]), Some(w[1]));
    }
    let last = k[k.len() - 1];
    push_line(last, last + T::one() + last.abs(), Some(last), None);
    out
}

struct Rates<T> {
    lend: T,
    borrow: T,
    fund: T,
    coll: T,
}

/// Exact one-step growth factors minus one.
fn exact_rates<T: Scalar>(p: &Party<T>, dt: T) -> Rates<T> {
    Rates {
        lend: (p.lend * dt).exp_m1(),
        borrow: (p.borrow * dt).exp_m1(),
        fund: p.r_ib.map_or(T::zero(), |r| (r * dt).exp_m1()),
        coll: (p.rc * dt).exp_m1(),
    }
}

/// Non-asset wealth change over a step for cash `c`, asset position `xs`,
/// collateral `k`, with per-step rates `r`.
fn accrual<T: Scalar>(r: &Rates<T>, c: T, xs: T, k: T, credited: bool) -> T {
    let coll = if credited { T::zero() } else { r.coll * k };
    r.lend * pos(c) - r.borrow * neg(c) - r.fund * pos(xs) - coll
}

fn record<T: Scalar>(
    p: &Party<T>,
    i: usize,
    j: usize,
    xi: T,
    xs: T,
    k: T,
    v: T,
    c: T,
    acc: T,
    res: (T, T),
) -> ReplicationStep<T> {
    ReplicationStep {
        step: i,
        node: j,
        xi,
        lent: pos(c),
        borrowed: neg(c),
        asset_borrowed: if p.r_ib.is_some() { pos(xs) } else { T::zero() },
        collateral: k,
        wealth: v,
        accrual: acc,
        residual_up: res.0,
        residual_down: res.1,
    }
}

fn check_finite<T: Scalar>(v: T, i: usize, j: usize) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: "oracle wealth",
            step: i,
            node: j,
        })
    }
}

/// Two-state hedge ratio and the state gains per unit of asset.
struct Spread<T> {
    xi: T,
    gain_up: T,
    gain_down: T,
}

fn spread<T: Scalar>(s: &Setup<T>, mode: AccrualMode, i: usize, j: usize, vu: T, vd: T) -> Result<Spread<T>> {
    let lat = &s.lattice;
    let dt = lat.dt();
    let sv = lat.node(i, j);
    let (gu, gd) = match mode {
        AccrualMode::Matched => {
            let drift = s.mu * dt;
            let shock = lat.sigma_bar() * lat.sqrt_dt();
            (sv * (drift + shock), sv * (drift - shock))
        }
        AccrualMode::Independent => {
            let div = lat.kappa_bar() * sv * dt;
            (lat.node(i + 1, j + 1) - sv + div, lat.node(i + 1, j) - sv + div)
        }
    };
    let width = gu - gd;
    if !(width > T::zero() && width.is_finite()) {
        return Err(Error::DegenerateSpread { step: i, node: j });
    }
    let xi = match mode {
        AccrualMode::Matched => (vu - vd) / (T::two() * lat.sigma_bar() * sv * lat.sqrt_dt()),
        AccrualMode::Independent => (vu - vd) / width,
    };
    Ok(Spread {
        xi,
        gain_up: gu,
        gain_down: gd,
    })
}

/// Matched-mode wealth at a node given the continuation wealth `vbar` and collateral `k`.
fn matched_wealth<T: Scalar>(s: &Setup<T>, p: &Party<T>, i: usize, xs: T, vbar: T, k: T, credited: bool) -> (T, T) {
    let dt = s.lattice.dt();
    let t = s.lattice.time(i);
    let c = vbar + k + p.cash_offset(xs);
    let r = Rates {
        lend: p.lend,
        borrow: p.borrow,
        fund: p.r_ib.unwrap_or(T::zero()),
        coll: p.rc,
    };
    let bracket = s.mu * xs + accrual(&r, c, xs, k, credited) - p.x * p.rx * p.account(t);
    (vbar - bracket * dt, c)
}

/// Continuation wealth rolled back to `t_i`, with credited collateral interest.
fn matched_vbar<T: Scalar>(s: &Setup<T>, p: &Party<T>, i: usize, mean: T, k: T, credited: Option<T>) -> T {
    let (t0, t1) = (s.lattice.time(i), s.lattice.time(i + 1));
    let base = mean - p.x * (p.account(t1) - p.account(t0));
    match credited {
        Some(factor) => base + p.rc * k * factor,
        None => base,
    }
}

/// Independent-mode wealth solve `V + accrual(V) = d` with `K = k_of(V)`.
fn independent_wealth<T: Scalar>(
    p: &Party<T>,
    r: &Rates<T>,
    xs: T,
    d: T,
    k_of: &dyn Fn(T) -> T,
    k_kinks: &[T],
    credited: bool,
) -> (T, T, T) {
    let k0 = p.cash_offset(xs);
    let cash = |v: T| v + k_of(v) + k0;
    let phi = |v: T| {
        let k = k_of(v);
        v + accrual(r, v + k + k0, xs, k, credited) - d
    };
    let mut kinks = k_kinks.to_vec();
    kinks.extend(pl_zeros(&cash, k_kinks));
    let v = pl_root(&phi, kinks);
    let k = k_of(v);
    (v, k, v + k + k0)
}

struct Run<T> {
    wealth: Vec<Vec<T>>,
    price: Vec<Vec<T>>,
    max_residual: T,
    steps: Vec<ReplicationStep<T>>,
    /// Continuation price means `E[P']` per node, used by mirrored collateral.
    means: Vec<Vec<T>>,
}

fn price_grid<T: Scalar>(s: &Setup<T>, p: &Party<T>, wealth: &[Vec<T>]) -> Vec<Vec<T>> {
    wealth
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let t = s.lattice.time(i);
            row.iter().map(|v| p.price(*v, t)).collect()
        })
        .collect()
}

fn run_party<T: Scalar>(s: &Setup<T>, p: &Party<T>, holding: Holding<T>, mode: AccrualMode, keep: bool) -> Result<Run<T>> {
    let lat = &s.lattice;
    let n = lat.n_steps();
    let dt = lat.dt();
    let mut wealth = lat.grid();
    let mut means = lat.grid();
    wealth[n] = terminal(s, p);
    let exact = exact_rates(p, dt);
    let mut max_residual = T::zero();
    let mut steps = Vec::new();
    for i in (0..n).rev() {
        let next = continuation(&wealth, &s.flows, p, i + 1, n);
        let t = lat.time(i);
        let bx = p.account(t);
        for j in 0..=i {
            let (vu, vd) = (next[j + 1], next[j]);
            let sp = spread(s, mode, i, j, vu, vd)?;
            let sv = lat.node(i, j);
            let xs = sp.xi * sv;
            let mean = T::half() * (vu + vd);
            let (v, k, c, acc) = match mode {
                AccrualMode::Matched => {
                    let (k, credited) = match holding {
                        Holding::Own(q) => {
                            let vbar = matched_vbar(s, p, i, mean, T::zero(), None);
                            (q.eval(-p.price(vbar, t)), None)
                        }
                        Holding::Mirror(q, grid) => (-q.eval(-grid[i][j]), None),
                        Holding::Exogenous(level, factor) => (p.sign * level.eval(sv), Some(factor)),
                    };
                    let vbar = matched_vbar(s, p, i, mean, k, credited);
                    means[i][j] = p.price(vbar, t);
                    let (v, c) = matched_wealth(s, p, i, xs, vbar, k, credited.is_some());
                    (v, k, c, mean - v - sp.xi * s.mu * sv * dt)
                }
                AccrualMode::Independent => {
                    let d = mean - sp.xi * T::half() * (sp.gain_up + sp.gain_down);
                    let (v, k, c) = match holding {
                        Holding::Own(q) => {
                            let kinks: Vec<T> = q.points().iter().map(|(y, _)| p.x * bx - p.sign * *y).collect();
                            let k_of = |v: T| q.eval(-p.price(v, t));
                            independent_wealth(p, &exact, xs, d, &k_of, &kinks, false)
                        }
                        Holding::Mirror(q, grid) => {
                            let k = -q.eval(-grid[i][j]);
                            independent_wealth(p, &exact, xs, d, &|_| k, &[], false)
                        }
                        Holding::Exogenous(level, _) => {
                            let k = p.sign * level.eval(sv);
                            independent_wealth(p, &exact, xs, d, &|_| k, &[], false)
                        }
                    };
                    means[i][j] = p.price(v, t);
                    (v, k, c, accrual(&exact, c, xs, k, false))
                }
            };
            let v = check_finite(v, i, j)?;
            let res = (
                vu - (v + sp.xi * sp.gain_up + acc),
                vd - (v + sp.xi * sp.gain_down + acc),
            );
            max_residual = max_residual.max(res.0.abs()).max(res.1.abs());
            wealth[i][j] = v;
            if keep {
                steps.push(record(p, i, j, sp.xi, xs, k, v, c, acc, res));
            }
        }
    }
    let price = price_grid(s, p, &wealth);
    Ok(Run {
        wealth,
        price,
        max_residual,
        steps,
        means,
    })
}

/// Joint replication of both parties under negotiated collateral.
fn run_negotiated<T: Scalar>(s: &Setup<T>, map: &NegotiatedMap<T>, mode: AccrualMode, keep: bool) -> Result<(Run<T>, Run<T>)> {
    let lat = &s.lattice;
    let n = lat.n_steps();
    let dt = lat.dt();
    let (ph, pc) = (&s.hedger, &s.counterparty);
    let mut wh = lat.grid();
    let mut wc = lat.grid();
    wh[n] = terminal(s, ph);
    wc[n] = terminal(s, pc);
    let (eh, ec) = (exact_rates(ph, dt), exact_rates(pc, dt));
    let mut max_residual = T::zero();
    let (mut steps_h, mut steps_c) = (Vec::new(), Vec::new());
    let tol = T::lit(1e-12);
    for i in (0..n).rev() {
        let next_h = continuation(&wh, &s.flows, ph, i + 1, n);
        let next_c = continuation(&wc, &s.flows, pc, i + 1, n);
        let t = lat.time(i);
        for j in 0..=i {
            let sv = lat.node(i, j);
            let sh = spread(s, mode, i, j, next_h[j + 1], next_h[j])?;
            let sc = spread(s, mode, i, j, next_c[j + 1], next_c[j])?;
            let (xh, xc) = (sh.xi * sv, sc.xi * sv);
            let mh = T::half() * (next_h[j + 1] + next_h[j]);
            let mc = T::half() * (next_c[j + 1] + next_c[j]);
            let collateral = |vh: T, vc: T| map.eval(-ph.price(vh, t), -pc.price(vc, t));
            let (vh, vc, k, cash_h, cash_c, acc_h, acc_c) = match mode {
                AccrualMode::Matched => {
                    let bh = matched_vbar(s, ph, i, mh, T::zero(), None);
                    let bc = matched_vbar(s, pc, i, mc, T::zero(), None);
                    let mut k = collateral(bh, bc);
                    let (mut vh, mut ch) = matched_wealth(s, ph, i, xh, bh, k, false);
                    let (mut vc, mut cc) = matched_wealth(s, pc, i, xc, bc, -k, false);
                    if s.fixed_point {
                        for _ in 0..5 {
                            let (yh, yc) = (ph.price(vh, t), pc.price(vc, t));
                            k = collateral(vh, vc);
                            let (nh, nch) = matched_wealth(s, ph, i, xh, bh, k, false);
                            let (nc, ncc) = matched_wealth(s, pc, i, xc, bc, -k, false);
                            let (zh, zc) = (ph.price(nh, t), pc.price(nc, t));
                            let change = (zh - yh).abs().max((zc - yc).abs());
                            (vh, ch, vc, cc) = (nh, nch, nc, ncc);
                            if change <= tol * (T::one() + zh.abs().max(zc.abs())) {
                                break;
                            }
                        }
                    }
                    let ah = mh - vh - sh.xi * s.mu * sv * dt;
                    let ac = mc - vc - sc.xi * s.mu * sv * dt;
                    (vh, vc, k, ch, cc, ah, ac)
                }
                AccrualMode::Independent => {
                    let dh = mh - sh.xi * T::half() * (sh.gain_up + sh.gain_down);
                    let dc = mc - sc.xi * T::half() * (sc.gain_up + sc.gain_down);
                    let mut k = collateral(mh, mc);
                    let mut out = None;
                    for _ in 0..200 {
                        let (vh, _, ch) = independent_wealth(ph, &eh, xh, dh, &|_| k, &[], false);
                        let (vc, _, cc) = independent_wealth(pc, &ec, xc, dc, &|_| -k, &[], false);
                        let k_next = collateral(vh, vc);
                        let done = (k_next - k).abs() <= T::lit(1e-15) * (T::one() + k.abs());
                        out = Some((vh, vc, k, ch, cc));
                        if done {
                            break;
                        }
                        k = k_next;
                    }
                    let (vh, vc, k, ch, cc) = out.expect("at least one iteration");
                    (vh, vc, k, ch, cc, accrual(&eh, ch, xh, k, false), accrual(&ec, cc, xc, -k, false))
                }
            };
            let vh = check_finite(vh, i, j)?;
            let vc = check_finite(vc, i, j)?;
            let rh = (
                next_h[j + 1] - (vh + sh.xi * sh.gain_up + acc_h),
                next_h[j] - (vh + sh.xi * sh.gain_down + acc_h),
            );
            let rc = (
                next_c[j + 1] - (vc + sc.xi * sc.gain_up + acc_c),
                next_c[j] - (vc + sc.xi * sc.gain_down + acc_c),
            );
            max_residual = max_residual
                .max(rh.0.abs())
                .max(rh.1.abs())
                .max(rc.0.abs())
                .max(rc.1.abs());
            wh[i][j] = vh;
            wc[i][j] = vc;
            if keep {
                steps_h.push(record(ph, i, j, sh.xi, xh, k, vh, cash_h, acc_h, rh));
                steps_c.push(record(pc, i, j, sc.xi, xc, -k, vc, cash_c, acc_c, rc));
            }
        }
    }
    let (price_h, price_c) = (price_grid(s, ph, &wh), price_grid(s, pc, &wc));
    let mk = |wealth, price, steps| Run {
        wealth,
        price,
        max_residual,
        steps,
        means: Vec::new(),
    };
    Ok((mk(wh, price_h, steps_h), mk(wc, price_c, steps_c)))
}

fn pair<T: Scalar>(request: &PricingRequest<T>, mode: AccrualMode, keep: bool) -> Result<(Replication<T>, Replication<T>)> {
    let s = setup(request)?;
    let dt = s.lattice.dt();
    let (h, c) = match (&request.collateral, s.path) {
        (CollateralConvention::HedgerQ { q }, _) => {
            let h = run_party(&s, &s.hedger, Holding::Own(q), mode, keep)?;
            let c = run_party(&s, &s.counterparty, Holding::Mirror(q, &h.means), mode, keep)?;
            (h, c)
        }
        (CollateralConvention::Negotiated { map }, _) => run_negotiated(&s, map, mode, keep)?,
        (CollateralConvention::Exogenous { level }, _) => {
            let rho = match s.lattice.measure() {
                Measure::Lending => request.rates.r_l,
                Measure::Beta => T::zero(),
            };
            let factor = growth_integral(rho, dt);
            let h = run_party(&s, &s.hedger, Holding::Exogenous(level, factor), mode, keep)?;
            let c = run_party(&s, &s.counterparty, Holding::Exogenous(level, factor), mode, keep)?;
            (h, c)
        }
    };
    let wrap = |r: Run<T>, side, p: &Party<T>| Replication {
        side,
        mode,
        endowment: p.x,
        wealth: r.wealth,
        price: r.price,
        max_residual: r.max_residual,
        steps: r.steps,
    };
    Ok((wrap(h, Side::Hedger, &s.hedger), wrap(c, Side::Counterparty, &s.counterparty)))
}

/// Replication of both parties.
pub fn replicate_pair<T: Scalar>(request: &PricingRequest<T>, mode: AccrualMode) -> Result<(Replication<T>, Replication<T>)> {
    pair(request, mode, false)
}

/// Replication of both parties with per-node portfolio records.
pub fn replicate_pair_recorded<T: Scalar>(request: &PricingRequest<T>, mode: AccrualMode) -> Result<(Replication<T>, Replication<T>)> {
    pair(request, mode, true)
}

pub fn replicate<T: Scalar>(request: &PricingRequest<T>, side: Side, mode: AccrualMode) -> Result<Replication<T>> {
    let (h, c) = replicate_pair(request, mode)?;
    Ok(match side {
        Side::Hedger => h,
        Side::Counterparty => c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::ContractSpec;
    use crate::market::{AssetDynamics, RateEnvironment};
    use crate::pricing::{price, RegimePreference, SolverOptions};

    fn request(model: Model, collateral: CollateralConvention<f64>, x1: f64, x2: f64) -> PricingRequest<f64> {
        PricingRequest {
            model,
            rates: RateEnvironment::new(0.01, 0.05, 0.02).with_r_ib(vec![0.06]).with_beta(vec![0.055]),
            asset: AssetDynamics::new(100.0, 0.08, 0.2, 0.0),
            contract: ContractSpec::european(1.0, PiecewiseLinear::call(100.0)),
            collateral,
            x1,
            x2,
            r_mid: Some(0.03),
            n_steps: 60,
            regime: RegimePreference::Auto,
            options: SolverOptions::default(),
        }
    }

    #[test]
    fn piecewise_root() {
        let phi = |v: f64| if v < 1.0 { 2.0 * v - 2.0 } else { 0.5 * (v - 1.0) };
        assert_eq!(pl_root(&phi, vec![1.0]), 1.0);
        let shifted = |v: f64| phi(v) + 1.0;
        assert_eq!(pl_root(&shifted, vec![1.0]), 0.5);
        let shifted = |v: f64| phi(v) - 1.0;
        assert!((pl_root(&shifted, vec![1.0]) - 3.0).abs() < 1e-15);
        let c = |v: f64| if v < 0.0 { v + 1.0 } else { 1.0 - v };
        let mut z = pl_zeros(&c, &[0.0]);
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(z, vec![-1.0, 1.0]);
    }

    #[test]
    fn zero_contract_returns_endowment() {
        let req = request(Model::Bergman, CollateralConvention::full(), 2.0, 1.0).with_contract(ContractSpec::zero(1.0));
        for mode in [AccrualMode::Matched, AccrualMode::Independent] {
            let h = replicate(&req, Side::Hedger, mode).unwrap();
            assert!((h.wealth0() - 2.0).abs() < 1e-12, "{mode:?} {}", h.wealth0());
            assert!(h.price0().abs() < 1e-12);
        }
    }

    #[test]
    fn matched_mode_reproduces_solver() {
        let cases = [
            request(Model::Bergman, CollateralConvention::full(), 1.0, 0.0),
            request(Model::Bergman, CollateralConvention::haircut(0.1, -0.05), 0.0, 1.0),
            request(Model::PartialNetting, CollateralConvention::full(), 1.0, 1.0),
            request(Model::Bergman, CollateralConvention::full(), 1.0, -1.0),
            request(Model::PartialNetting, CollateralConvention::none(), 0.0, -1.0),
            request(Model::Bergman, CollateralConvention::convex(0.5), 1.0, 1.0),
            request(Model::PartialNetting, CollateralConvention::convex(0.3), 1.0, -1.0),
            request(Model::SingleRate, CollateralConvention::full(), 0.0, 0.0),
            request(Model::Bergman, CollateralConvention::Exogenous { level: PiecewiseLinear::constant(5.0) }, 1.0, 2.0),
            request(Model::Bergman, CollateralConvention::Exogenous { level: PiecewiseLinear::call(90.0) }, 1.0, -1.0),
            request(Model::PartialNetting, CollateralConvention::Exogenous { level: PiecewiseLinear::constant(-3.0) }, 0.5, 0.0),
        ];
        for req in cases {
            let rep = price(&req).unwrap();
            let (h, c) = replicate_pair_recorded(&req, AccrualMode::Matched).unwrap();
            let scale = rep.scale();
            for i in 0..=req.n_steps {
                for j in 0..=i {
                    assert!((h.price[i][j] - rep.p_h[i][j]).abs() <= 1e-10 * scale, "{req:?} h {i} {j}");
                    assert!((c.price[i][j] - rep.p_c[i][j]).abs() <= 1e-10 * scale, "{req:?} c {i} {j}");
                }
            }
            assert!(h.max_residual <= 1e-12 * scale && c.max_residual <= 1e-12 * scale);
            assert_eq!(h.steps.len(), req.n_steps * (req.n_steps + 1) / 2);
        }
    }

    #[test]
    fn independent_mode_is_close_and_self_financing() {
        let req = request(Model::PartialNetting, CollateralConvention::haircut(0.1, -0.05), 1.0, 1.0);
        let rep = price(&req).unwrap();
        let (h, c) = replicate_pair_recorded(&req, AccrualMode::Independent).unwrap();
        assert!((h.price0() - rep.p_h0()).abs() < 0.05);
        assert!((c.price0() - rep.p_c0()).abs() < 0.05);
        let scale = rep.scale();
        for st in h.steps.iter().chain(&c.steps) {
            assert!(st.residual_up.abs() <= 1e-12 * scale && st.residual_down.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_rates_modes_coincide_for_linear_funding() {
        let mut req = request(Model::Bergman, CollateralConvention::full(), 0.0, 0.0);
        req.rates = RateEnvironment::flat(0.0).with_beta(vec![0.0]);
        req.asset.mu_bar = 0.0;
        let m = replicate(&req, Side::Hedger, AccrualMode::Matched).unwrap();
        let i = replicate(&req, Side::Hedger, AccrualMode::Independent).unwrap();
        // Only the asset moves differ at zero rates: Euler versus log nodes.
        assert!((m.price0() - i.price0()).abs() < 0.05);
    }

    #[test]
    fn implicit_collateral_solve_across_kinks() {
        // A put-spread-like payoff makes the hedger's price change sign, so the
        // haircut kink at zero is crossed by the implicit solve.
        let payoff = PiecewiseLinear::new(vec![(90.0, -5.0), (110.0, 5.0)], 0.0, 0.0).unwrap();
        let req = request(Model::Bergman, CollateralConvention::haircut(0.3, -0.2), 1.0, 1.0)
            .with_contract(ContractSpec::european(1.0, payoff));
        let (h, _) = replicate_pair_recorded(&req, AccrualMode::Independent).unwrap();
        let mut crossed = (false, false);
        for st in &h.steps {
            let p = h.price[st.step][st.node];
            let expect = PiecewiseLinear::haircut(0.3, -0.2).eval(-p);
            assert!((st.collateral - expect).abs() <= 1e-12, "{st:?}");
            crossed = (crossed.0 || p > 0.0, crossed.1 || p < 0.0);
        }
        assert_eq!(crossed, (true, true));
        let rep = price(&req).unwrap();
        assert!((h.price0() - rep.p_h0()).abs() < 0.05);
    }

    #[test]
    fn cash_translation_invariance() {
        let base = request(Model::Bergman, CollateralConvention::none(), 0.0, 0.0);
        let p0 = replicate(&base, Side::Hedger, AccrualMode::Independent).unwrap().price0();
        for x1 in [1.0, 3.0, 10.0] {
            let p = replicate(&base.with_endowments(x1, 0.0), Side::Hedger, AccrualMode::Independent)
                .unwrap()
                .price0();
            assert!((p - p0).abs() <= 1e-10 * (1.0 + p0.abs()), "{x1}: {p} vs {p0}");
        }
    }
}
