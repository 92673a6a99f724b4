//! Executable verdicts for the pricing inequalities and structural properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contracts::{check_q_predicates, CollateralConvention, ContractSpec};
use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, ZConvention};
use crate::market::{f, Measure};
use crate::piecewise::PiecewiseLinear;
use crate::pricing::{price, price_single_rate, select_regime, Model, PriceReport, PricingRequest, RegimePreference};
use crate::scalar::{neg, pos, Scalar};

/// Where the worst violation of a verdict was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Node { step: usize, node: usize, t: f64, s: f64 },
    Sample { t: f64, s: f64, y1: f64, y2: f64, z1: f64, z2: f64 },
    Parameter { name: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub property: String,
    /// False when a precondition fails; no assertion is made then.
    pub applicable: bool,
    pub pass: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Smallest viability constant passing every sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub detail: String,
}

impl PropertyVerdict {
    fn decided(property: &str, worst: f64, tolerance: f64, witness: Option<Witness>) -> Self {
        let worst = worst.max(0.0);
        PropertyVerdict {
            property: property.into(),
            applicable: true,
            pass: worst <= tolerance,
            worst_violation: worst,
            tolerance,
            witness,
            m_hat: None,
            seed: None,
            detail: String::new(),
        }
    }

    pub fn not_applicable(property: &str, reason: impl Into<String>) -> Self {
        PropertyVerdict {
            property: property.into(),
            applicable: false,
            pass: true,
            worst_violation: 0.0,
            tolerance: 0.0,
            witness: None,
            m_hat: None,
            seed: None,
            detail: reason.into(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// `max (lower − upper)` over two grids with its location.
fn worst_excess<T: Scalar>(lower: &[Vec<T>], upper: &[Vec<T>]) -> (T, usize, usize) {
    let mut worst = (T::neg_infinity(), 0, 0);
    for (i, (lo, up)) in lower.iter().zip(upper).enumerate() {
        for (j, (a, b)) in lo.iter().zip(up).enumerate() {
            let d = *a - *b;
            if d > worst.0 || d.is_nan() {
                worst = (if d.is_nan() { T::infinity() } else { d }, i, j);
            }
        }
    }
    worst
}

fn node_witness<T: Scalar>(report: &PriceReport<T>, i: usize, j: usize) -> Witness {
    Witness::Node {
        step: i,
        node: j,
        t: f(report.times[i]),
        s: f(report.asset[i][j]),
    }
}

/// `P^c ≤ P^h + tol` at every node of the report.
pub fn check_ordering<T: Scalar>(report: &PriceReport<T>, tol: T) -> PropertyVerdict {
    let (worst, i, j) = worst_excess(&report.p_c, &report.p_h);
    PropertyVerdict::decided("ordering", f(worst), f(tol), Some(node_witness(report, i, j)))
}

/// Sampling box for the viability condition, in Brownian-coefficient units for `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsvpBox<T> {
    pub t: (T, T),
    pub s: (T, T),
    pub y: (T, T),
    pub z: (T, T),
    /// Volatility turning a Brownian coefficient into a hedge ratio.
    pub sigma_bar: T,
}

impl<T: Scalar> BsvpBox<T> {
    /// `t ∈ [0, T]`, `s ∈ [s0/4, 4 s0]`, `y, z ∈ [−3 scale, 3 scale]`.
    pub fn standard(maturity: T, s0: T, scale: T, sigma_bar: T) -> Self {
        let four = T::lit(4.0);
        let three = T::lit(3.0);
        BsvpBox {
            t: (T::zero(), maturity),
            s: (s0 / four, four * s0),
            y: (-three * scale, three * scale),
            z: (-three * scale, three * scale),
            sigma_bar,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.t, self.s, self.y, self.z]
            .iter()
            .all(|(a, b)| a.is_finite() && b.is_finite() && a <= b)
            && self.s.0 > T::zero()
            && self.sigma_bar > T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("sampling box bounds must be finite and ordered".into()))
        }
    }
}

/// One evaluated sample of the viability condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsvpSample<T> {
    pub t: T,
    pub s: T,
    pub y1: T,
    pub y2: T,
    pub z1: T,
    pub z2: T,
    pub lhs: T,
    pub rhs: T,
    /// Smallest `M` for which this sample passes.
    pub m_needed: T,
}

/// Projection onto `ℝ₊ × ℝ`.
pub fn project_half_space<T: Scalar>(y: (T, T)) -> (T, T) {
    (pos(y.0), y.1)
}

/// Distance to `ℝ₊ × ℝ`.
pub fn distance_half_space<T: Scalar>(y: (T, T)) -> T {
    neg(y.0)
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, (a, b): (T, T)) -> T {
    a + (b - a) * T::lit(rng.gen::<f64>())
}

/// Samples the viability condition for an arbitrary pair `h = (h¹, h²)` in
/// standard form `Y_t = η + ∫ h ds − ∫ Z dW`.
pub fn check_bsvp_with<T, H>(h: H, bx: &BsvpBox<T>, n_samples: usize, m: T, seed: u64) -> Result<(PropertyVerdict, Vec<BsvpSample<T>>)>
where
    T: Scalar,
    H: Fn(T, T, (T, T), (T, T)) -> (T, T) + Sync,
{
    bx.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<[T; 6]> = (0..n_samples)
        .map(|_| {
            [
                uniform(&mut rng, bx.t),
                uniform(&mut rng, bx.s),
                uniform(&mut rng, bx.y),
                uniform(&mut rng, bx.y),
                uniform(&mut rng, bx.z),
                uniform(&mut rng, bx.z),
            ]
        })
        .collect();
    let samples: Vec<BsvpSample<T>> = points
        .par_iter()
        .map(|&[t, s, y1, y2, z1, z2]| {
            let d = distance_half_space((y1, y2));
            let (p1, p2) = project_half_space((y1, y2));
            let (h1, h2) = h(t, s, (p1 + p2, p2), (z1 + z2, z2));
            let lhs = -T::lit(4.0) * d * (h1 - h2);
            let penalty = if y1 < T::zero() { T::two() * z1 * z1 } else { T::zero() };
            let rhs = m * d * d + penalty;
            let m_needed = if d > T::zero() {
                pos((lhs - penalty) / (d * d))
            } else {
                T::zero()
            };
            BsvpSample {
                t,
                s,
                y1,
                y2,
                z1,
                z2,
                lhs,
                rhs,
                m_needed,
            }
        })
        .collect();
    let mut worst: Option<(T, usize)> = None;
    let mut m_hat = T::zero();
    for (k, smp) in samples.iter().enumerate() {
        let slack = T::lit(1e-12) * (T::one() + smp.lhs.abs() + smp.rhs.abs());
        let excess = smp.lhs - smp.rhs - slack;
        if worst.is_none_or(|(w, _)| excess > w) {
            worst = Some((excess, k));
        }
        m_hat = m_hat.max(smp.m_needed);
    }
    let (excess, k) = worst.unwrap_or((T::zero(), 0));
    let witness = samples.get(k).map(|s| Witness::Sample {
        t: f(s.t),
        s: f(s.s),
        y1: f(s.y1),
        y2: f(s.y2),
        z1: f(s.z1),
        z2: f(s.z2),
    });
    let mut verdict = PropertyVerdict::decided("bsvp", f(excess), 0.0, witness)
        .with_detail(format!("{n_samples} samples, M = {}", f(m)));
    verdict.m_hat = Some(f(m_hat));
    verdict.seed = Some(seed);
    Ok((verdict, samples))
}

/// Viability check for a coupled driver, with `h = −g ∘ σ⁻¹`.
pub fn check_bsvp<T: Scalar>(spec: &GeneratorSpec<T>, bx: &BsvpBox<T>, n_samples: usize, m: T, seed: u64) -> Result<PropertyVerdict> {
    if !spec.family.is_pair() {
        return Err(Error::IncompatiblePair(format!("{:?} is not a coupled family", spec.family)));
    }
    spec.validate()?;
    let rl = spec.rates.r_l;
    let convention = spec.family.z_convention();
    let sigma = bx.sigma_bar;
    let h = |t: T, s: T, y: (T, T), z: (T, T)| {
        let factor = match convention {
            ZConvention::Discounted => (rl * t).exp(),
            ZConvention::HedgeRatio => T::one(),
        };
        let conv = |zw: T| factor * zw / (sigma * s);
        let (g1, g2) = spec.eval_pair(t, &[s], y, (&[conv(z.0)], &[conv(z.1)]));
        (-g1, -g2)
    };
    Ok(check_bsvp_with(h, bx, n_samples, m, seed)?.0)
}

/// `|P(λx, λA) − λ P(x, A)| ≤ tol λ scale` for both parties.
pub fn check_homogeneity<T: Scalar>(request: &PricingRequest<T>, lambdas: &[T], tol: T) -> Result<PropertyVerdict> {
    const ID: &str = "homogeneity";
    if let CollateralConvention::HedgerQ { q } = &request.collateral {
        if !q.is_positively_homogeneous() {
            return Ok(PropertyVerdict::not_applicable(ID, "q is not positively homogeneous"));
        }
    }
    if let CollateralConvention::Negotiated { .. } = &request.collateral {
        return Ok(PropertyVerdict::not_applicable(ID, "negotiated collateral"));
    }
    let base = price(request)?;
    let scale = f(base.scale());
    let mut worst = (0.0, None);
    for &lambda in lambdas {
        if lambda < T::zero() {
            return Err(Error::NegativeScale(f(lambda)));
        }
        let scaled = PricingRequest {
            x1: lambda * request.x1,
            x2: lambda * request.x2,
            contract: request.contract.scaled(lambda),
            collateral: request.collateral.scaled(lambda),
            regime: match select_regime(request)?.measure {
                Measure::Lending => RegimePreference::Lending,
                Measure::Beta => RegimePreference::Beta,
            },
            ..request.clone()
        };
        let rep = price(&scaled)?;
        let l = f(lambda);
        let err = (f(rep.p_h0()) - l * f(base.p_h0()))
            .abs()
            .max((f(rep.p_c0()) - l * f(base.p_c0())).abs());
        let bound = f(tol) * l.max(f64::MIN_POSITIVE) * scale;
        let ratio = if err == 0.0 { 0.0 } else { err / bound };
        if ratio >= worst.0 {
            worst = (ratio, Some(l));
        }
    }
    let witness = worst.1.map(|value| Witness::Parameter {
        name: "lambda".into(),
        value,
    });
    Ok(PropertyVerdict::decided(ID, worst.0, 1.0, witness).with_detail("violation in units of tol·λ·scale"))
}

fn pn_monotone_guard<T: Scalar>(request: &PricingRequest<T>) -> Option<String> {
    if request.model != Model::PartialNetting {
        return Some("only the partial-netting model is covered".into());
    }
    if !request.contract.is_decreasing() {
        return Some("A − A_0 is not decreasing".into());
    }
    match check_q_predicates(&request.collateral) {
        Ok(p) if p.nonnegative_cash => None,
        Ok(_) => Some("y + q(−y) ≥ 0 fails for some y ≥ 0".into()),
        Err(_) => Some("needs hedger collateral q".into()),
    }
}

/// Hedger price grids coincide across `x1` values to `tol`.
pub fn check_endowment_independence<T: Scalar>(request: &PricingRequest<T>, x1s: &[T], tol: T) -> Result<PropertyVerdict> {
    const ID: &str = "endowment_independence";
    if let Some(reason) = pn_monotone_guard(request) {
        return Ok(PropertyVerdict::not_applicable(ID, reason));
    }
    if x1s.iter().any(|x| *x < T::zero()) || request.x2 > T::zero() {
        return Ok(PropertyVerdict::not_applicable(ID, "needs x1 ≥ 0 and the beta regime (x2 ≤ 0)"));
    }
    let mut reports = Vec::new();
    for &x1 in x1s {
        let mut req = request.with_endowments(x1, request.x2);
        req.regime = RegimePreference::Beta;
        reports.push(price(&req)?);
    }
    let Some(first) = reports.first() else {
        return Ok(PropertyVerdict::not_applicable(ID, "no endowments given"));
    };
    let mut worst = (0.0, None);
    for (k, rep) in reports.iter().enumerate().skip(1) {
        for (i, (a, b)) in rep.p_h.iter().zip(&first.p_h).enumerate() {
            for (j, (u, v)) in a.iter().zip(b).enumerate() {
                let d = f(*u - *v).abs();
                if d > worst.0 || d.is_nan() {
                    worst = (if d.is_nan() { f64::INFINITY } else { d }, Some((k, i, j)));
                }
            }
        }
    }
    let witness = worst.1.map(|(k, _, _)| Witness::Parameter {
        name: "x1".into(),
        value: f(x1s[k]),
    });
    Ok(PropertyVerdict::decided(ID, worst.0, f(tol), witness))
}

/// `P^c ≤ P^h + tol` and `P^h ≥ −tol` for decreasing contracts under partial netting.
pub fn check_monotone_ordering<T: Scalar>(request: &PricingRequest<T>, tol: T) -> Result<PropertyVerdict> {
    const ID: &str = "monotone_ordering";
    if let Some(reason) = pn_monotone_guard(request) {
        return Ok(PropertyVerdict::not_applicable(ID, reason));
    }
    if request.x1 < T::zero() || request.x2 > T::zero() {
        return Ok(PropertyVerdict::not_applicable(ID, "needs x1 ≥ 0 ≥ x2"));
    }
    let mut req = request.clone();
    req.regime = RegimePreference::Beta;
    let rep = price(&req)?;
    let (gap, gi, gj) = worst_excess(&rep.p_c, &rep.p_h);
    let zeros: Vec<Vec<T>> = rep.p_h.iter().map(|r| vec![T::zero(); r.len()]).collect();
    let (negative, ni, nj) = worst_excess(&zeros, &rep.p_h);
    let (worst, i, j) = if f(gap) >= f(negative) { (gap, gi, gj) } else { (negative, ni, nj) };
    Ok(PropertyVerdict::decided(ID, f(worst), f(tol), Some(node_witness(&rep, i, j))))
}

/// Whether the lower sandwich bound is covered for this `q` and `r_mid`.
fn lower_bound_applies<T: Scalar>(q: &PiecewiseLinear<T>, r_mid: T, r_c: T) -> bool {
    let slopes = q.slopes();
    let constant = slopes.iter().all(|s| *s == T::zero());
    let decreasing = slopes.iter().all(|s| *s <= T::zero());
    constant || r_mid == r_c || (q.is_increasing() && r_mid <= r_c) || (decreasing && r_mid >= r_c)
}

/// `P^c(0) − tol ≤ P_r ≤ P^h(0) + tol` for each `r_mid`.
pub fn check_sandwich<T: Scalar>(request: &PricingRequest<T>, r_mids: &[T], tol: T) -> Result<PropertyVerdict> {
    const ID: &str = "sandwich";
    let Ok(q) = request.collateral.q() else {
        return Ok(PropertyVerdict::not_applicable(ID, "needs hedger collateral q"));
    };
    if request.x1 != T::zero() || request.x2 != T::zero() {
        return Ok(PropertyVerdict::not_applicable(ID, "needs x1 = x2 = 0"));
    }
    let rep = price(request)?;
    let (ph, pc) = (f(rep.p_h0()), f(rep.p_c0()));
    let mut worst = (f64::NEG_INFINITY, None);
    let mut skipped = Vec::new();
    for &rm in r_mids {
        let pr = f(price_single_rate(request, rm)?.t0);
        let upper = pr - ph;
        let lower = if lower_bound_applies(q, rm, request.rates.r_c) {
            pc - pr
        } else {
            skipped.push(f(rm));
            f64::NEG_INFINITY
        };
        let v = upper.max(lower);
        if v > worst.0 || v.is_nan() {
            worst = (if v.is_nan() { f64::INFINITY } else { v }, Some(f(rm)));
        }
    }
    let witness = worst.1.map(|value| Witness::Parameter {
        name: "r_mid".into(),
        value,
    });
    let detail = if skipped.is_empty() {
        String::new()
    } else {
        format!("lower bound not covered for r_mid in {skipped:?}")
    };
    Ok(PropertyVerdict::decided(ID, worst.0, f(tol), witness).with_detail(detail))
}

/// Grid of two-flow contracts searched for an empty fair range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid<T> {
    /// Times of the early flow, strictly before maturity.
    pub early_times: Vec<T>,
    /// Amounts are `scale · (−5 + 10 k / (points − 1))`.
    pub scale: T,
    pub points: usize,
    pub tol: T,
}

impl<T: Scalar> SearchGrid<T> {
    pub fn standard(maturity: T, scale: T) -> Self {
        SearchGrid {
            early_times: [0.25, 0.5, 0.75].iter().map(|u| T::lit(*u) * maturity).collect(),
            scale,
            points: 41,
            tol: T::lit(1e-4),
        }
    }

    fn amounts(&self) -> Vec<T> {
        let m = self.points.max(2) - 1;
        (0..=m)
            .map(|k| self.scale * (T::lit(-5.0) + T::lit(10.0 * k as f64 / m as f64)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome<T> {
    /// Contract with the largest `P^c₀ − P^h₀`.
    pub best: ContractSpec<T>,
    pub early_time: T,
    pub early_amount: T,
    pub final_amount: T,
    pub p_h0: T,
    pub p_c0: T,
    pub gap: T,
    /// Whether `gap > tol`, i.e. `best` witnesses an empty fair range.
    pub found: bool,
    pub evaluated: usize,
}

fn two_flow<T: Scalar>(maturity: T, early: T, a: T, b: T) -> ContractSpec<T> {
    ContractSpec::discrete(
        maturity,
        vec![(early, PiecewiseLinear::constant(a)), (maturity, PiecewiseLinear::constant(b))],
    )
}

/// Grid search over two-flow contracts maximizing `P^c₀ − P^h₀`.
pub fn search_range_violation<T: Scalar>(request: &PricingRequest<T>, grid: &SearchGrid<T>) -> Result<SearchOutcome<T>> {
    let q = request.collateral.q()?;
    if q.slopes().iter().any(|s| *s != T::zero()) || q.eval(T::zero()) != T::zero() {
        return Err(Error::Inadmissible("the violation search needs q ≡ 0".into()));
    }
    let maturity = request.contract.maturity;
    if grid.early_times.iter().any(|t| !(*t > T::zero() && *t < maturity)) {
        return Err(Error::FlowOutsideHorizon {
            time: grid.early_times.iter().map(|t| f(*t)).fold(f64::NAN, f64::max),
            maturity: f(maturity),
        });
    }
    let amounts = grid.amounts();
    let mut cases: Vec<(T, T, T)> = Vec::new();
    for &t in &grid.early_times {
        for &a in &amounts {
            for &b in &amounts {
                cases.push((t, a, b));
            }
        }
    }
    let results: Vec<Result<(T, T)>> = cases
        .par_iter()
        .map(|&(t, a, b)| {
            let rep = price(&request.with_contract(two_flow(maturity, t, a, b)))?;
            Ok((rep.p_h0(), rep.p_c0()))
        })
        .collect();
    let mut best: Option<(usize, T, T)> = None;
    for (k, r) in results.into_iter().enumerate() {
        let (ph, pc) = r?;
        let gap = pc - ph;
        if best.is_none_or(|(_, bh, bc)| gap > bc - bh) {
            best = Some((k, ph, pc));
        }
    }
    let (k, ph, pc) = best.ok_or_else(|| Error::Shape("empty search grid".into()))?;
    let (t, a, b) = cases[k];
    Ok(SearchOutcome {
        best: two_flow(maturity, t, a, b),
        early_time: t,
        early_amount: a,
        final_amount: b,
        p_h0: ph,
        p_c0: pc,
        gap: pc - ph,
        found: pc - ph > grid.tol,
        evaluated: cases.len(),
    })
}
