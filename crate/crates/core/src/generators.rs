//! BSDE drivers for Bergman's model and the partial-netting model.
//!
//! Every driver is a pure function of `(t, s, y, z)` plus the bound
//! parameters. `z` is the coefficient against the cum-dividend driver
//! process: discounted for the lending-measure families, undiscounted for
//! the beta-measure and exogenous-collateral families.

use serde::{Deserialize, Serialize};

use crate::contracts::{CollateralConvention, NegotiatedMap};
use crate::error::{Error, Result};
use crate::market::{f, Measure, RateEnvironment};
use crate::piecewise::PiecewiseLinear;
use crate::scalar::{neg, pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneratorFamily {
    /// Hedger, lending measure: `f_l`.
    BergmanFl,
    /// Counterparty, lending measure: `g_l`, fed the hedger's `Y¹`.
    BergmanGl,
    /// Hedger, beta measure: `f̄`.
    BergmanFbar,
    /// Counterparty, beta measure: `ḡ`, fed the hedger's `Ȳ¹`.
    BergmanGbar,
    /// Wealth-level driver `G_l` for exogenous collateral.
    BergmanWealthL,
    /// Wealth-level driver `G_b` for exogenous collateral.
    BergmanWealthB,
    /// Hedger, beta measure, exogenous collateral: `G^h`.
    BergmanWealthH,
    /// Counterparty, beta measure, exogenous collateral: `G^c`.
    BergmanWealthC,
    /// Single money-market rate `r_mid`, Bergman form.
    SingleRate,
    /// Single money-market rate `r_mid`, partial-netting form.
    SingleRatePn,
    PnFl,
    PnGl,
    PnFbar,
    PnGbar,
    PnWealthL,
    PnWealthB,
    /// Two-dimensional lending-measure driver `(g¹, g²)`.
    CoupledBergmanG,
    /// Two-dimensional beta-measure driver `(ĝ¹, ĝ²)`.
    CoupledBergmanGhat,
    CoupledPnG,
    CoupledPnGhat,
}

/// How a driver's `z` relates to the hedge ratio `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZConvention {
    /// `z = B^l ξ`: coefficient against the discounted cum-dividend price.
    Discounted,
    /// `z = ξ`.
    HedgeRatio,
}

impl GeneratorFamily {
    pub const ALL: [GeneratorFamily; 20] = [
        GeneratorFamily::BergmanFl,
        GeneratorFamily::BergmanGl,
        GeneratorFamily::BergmanFbar,
        GeneratorFamily::BergmanGbar,
        GeneratorFamily::BergmanWealthL,
        GeneratorFamily::BergmanWealthB,
        GeneratorFamily::BergmanWealthH,
        GeneratorFamily::BergmanWealthC,
        GeneratorFamily::SingleRate,
        GeneratorFamily::SingleRatePn,
        GeneratorFamily::PnFl,
        GeneratorFamily::PnGl,
        GeneratorFamily::PnFbar,
        GeneratorFamily::PnGbar,
        GeneratorFamily::PnWealthL,
        GeneratorFamily::PnWealthB,
        GeneratorFamily::CoupledBergmanG,
        GeneratorFamily::CoupledBergmanGhat,
        GeneratorFamily::CoupledPnG,
        GeneratorFamily::CoupledPnGhat,
    ];

    pub fn is_pair(self) -> bool {
        use GeneratorFamily::*;
        matches!(
            self,
            CoupledBergmanG | CoupledBergmanGhat | CoupledPnG | CoupledPnGhat
        )
    }

    pub fn needs_y1(self) -> bool {
        use GeneratorFamily::*;
        matches!(self, BergmanGl | BergmanGbar | PnGl | PnGbar)
    }

    pub fn convention(self) -> &'static str {
        use GeneratorFamily::*;
        match self {
            BergmanWealthL | BergmanWealthB | BergmanWealthH | BergmanWealthC | PnWealthL
            | PnWealthB => "Exogenous",
            CoupledBergmanG | CoupledBergmanGhat | CoupledPnG | CoupledPnGhat => "Negotiated",
            _ => "HedgerQ",
        }
    }

    pub fn z_convention(self) -> ZConvention {
        use GeneratorFamily::*;
        match self {
            BergmanFl | BergmanGl | SingleRate | SingleRatePn | PnFl | PnGl | CoupledBergmanG
            | CoupledPnG => ZConvention::Discounted,
            _ => ZConvention::HedgeRatio,
        }
    }

    pub fn measure(self) -> Measure {
        use GeneratorFamily::*;
        match self {
            BergmanFbar | BergmanGbar | BergmanWealthH | BergmanWealthC | PnFbar | PnGbar
            | CoupledBergmanGhat | CoupledPnGhat => Measure::Beta,
            _ => Measure::Lending,
        }
    }

    pub fn is_partial_netting(self) -> bool {
        use GeneratorFamily::*;
        matches!(
            self,
            SingleRatePn | PnFl | PnGl | PnFbar | PnGbar | PnWealthL | PnWealthB | CoupledPnG
                | CoupledPnGhat
        )
    }
}

/// A driver family with its bound parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec<T> {
    pub family: GeneratorFamily,
    pub rates: RateEnvironment<T>,
    pub x1: T,
    pub x2: T,
    pub collateral: CollateralConvention<T>,
    pub r_mid: Option<T>,
    pub d: usize,
}

/// Scalar or pair value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value<T> {
    Scalar(T),
    Pair(T, T),
}

/// Scalar-family `z` vector or coupled-family pair of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Slope<T> {
    Scalar(Vec<T>),
    Pair(Vec<T>, Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPoint<T> {
    pub t: T,
    pub s: Vec<T>,
    pub y: Value<T>,
    pub z: Slope<T>,
    pub y1_external: Option<T>,
}

impl<T: Scalar> DriverPoint<T> {
    pub fn scalar(t: T, s: T, y: T, z: T) -> Self {
        DriverPoint {
            t,
            s: vec![s],
            y: Value::Scalar(y),
            z: Slope::Scalar(vec![z]),
            y1_external: None,
        }
    }

    pub fn pair(t: T, s: T, y: (T, T), z: (T, T)) -> Self {
        DriverPoint {
            t,
            s: vec![s],
            y: Value::Pair(y.0, y.1),
            z: Slope::Pair(vec![z.0], vec![z.1]),
            y1_external: None,
        }
    }

    pub fn with_y1(mut self, y1: T) -> Self {
        self.y1_external = Some(y1);
        self
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

#[inline]
fn dot3<T: Scalar>(a: &[T], b: &[T], c: &[T]) -> T {
    a.iter()
        .zip(b)
        .zip(c)
        .fold(T::zero(), |acc, ((x, y), w)| acc + *x * *y * *w)
}

/// `Σ r_i (z_i s_i)⁺` and `Σ (z_i s_i)⁻`, optionally with the sign of `z` flipped.
#[inline]
fn netting_terms<T: Scalar>(r: &[T], z: &[T], s: &[T], flip: bool) -> (T, T) {
    let mut funding = T::zero();
    let mut shorts = T::zero();
    for ((ri, zi), si) in r.iter().zip(z).zip(s) {
        let v = if flip { -(*zi * *si) } else { *zi * *si };
        funding = funding + *ri * pos(v);
        shorts = shorts + neg(v);
    }
    (funding, shorts)
}

impl<T: Scalar> GeneratorSpec<T> {
    pub fn new(
        family: GeneratorFamily,
        rates: RateEnvironment<T>,
        x1: T,
        x2: T,
        collateral: CollateralConvention<T>,
        r_mid: Option<T>,
    ) -> Result<Self> {
        let spec = GeneratorSpec {
            family,
            d: rates.assets(),
            rates,
            x1,
            x2,
            collateral,
            r_mid,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.collateral.validate()?;
        if self.collateral.kind() != self.family.convention() {
            return Err(Error::WrongConvention {
                expected: self.family.convention(),
                found: self.collateral.kind(),
            });
        }
        if self.d != self.rates.assets() {
            return Err(Error::Shape("d must match the number of r_ib entries".into()));
        }
        if self.family.measure() == Measure::Beta && self.rates.beta.len() != self.d {
            return Err(Error::MissingBeta);
        }
        if matches!(
            self.family,
            GeneratorFamily::SingleRate | GeneratorFamily::SingleRatePn
        ) {
            let r = self.r_mid.ok_or_else(|| {
                Error::RateConstraint("r_l ≤ r_mid ≤ r_b (r_mid missing)".into())
            })?;
            if !(self.rates.r_l <= r && r <= self.rates.r_b) {
                return Err(Error::RateConstraint(format!(
                    "r_l ≤ r_mid ≤ r_b (r_mid={})",
                    f(r)
                )));
            }
        }
        Ok(())
    }

    /// Same spec with different endowments.
    pub fn with_endowments(&self, x1: T, x2: T) -> Self {
        GeneratorSpec {
            x1,
            x2,
            ..self.clone()
        }
    }

    pub fn with_family(&self, family: GeneratorFamily) -> Self {
        GeneratorSpec {
            family,
            ..self.clone()
        }
    }

    fn q(&self) -> &PiecewiseLinear<T> {
        match &self.collateral {
            CollateralConvention::HedgerQ { q } => q,
            _ => unreachable!("validated convention"),
        }
    }

    fn chat(&self) -> &NegotiatedMap<T> {
        match &self.collateral {
            CollateralConvention::Negotiated { map } => map,
            _ => unreachable!("validated convention"),
        }
    }

    /// Scalar driver at `(t, s, y, z)`; `y1` feeds the `q(−Y¹)` term of the
    /// counterparty families and is ignored otherwise.
    #[inline]
    pub fn eval_scalar(&self, t: T, s: &[T], y: T, z: &[T], y1: T) -> T {
        use GeneratorFamily::*;
        let r = &self.rates;
        let (rl, rb, rc) = (r.r_l, r.r_b, r.r_c);
        let bl = (rl * t).exp();
        let bb = (rb * t).exp();
        let zs = dot(z, s);
        match self.family {
            BergmanFl => {
                let qh = self.q().eval(-y);
                let zd = zs / bl;
                let u = y + qh + self.x1 * bl - zd;
                rl * zd - self.x1 * bl * rl - rc * qh + rl * pos(u) - rb * neg(u)
            }
            BergmanGl => {
                let qh = self.q().eval(-y1);
                let zd = zs / bl;
                let u = -y - qh + self.x2 * bl + zd;
                rl * zd + self.x2 * bl * rl - rc * qh - rl * pos(u) + rb * neg(u)
            }
            BergmanFbar => {
                let qh = self.q().eval(-y);
                let u = y + qh + self.x1 * bl - zs;
                dot3(z, &r.beta, s) - self.x1 * rl * bl - rc * qh + rl * pos(u) - rb * neg(u)
            }
            BergmanGbar => {
                let qh = self.q().eval(-y1);
                let u = -y - qh + self.x2 * bb + zs;
                dot3(z, &r.beta, s) + self.x2 * rb * bb - rc * qh - rl * pos(u) + rb * neg(u)
            }
            BergmanWealthL => {
                let u = y * bl - zs;
                rl * zs / bl + (rl * pos(u) - rb * neg(u)) / bl - rl * y
            }
            BergmanWealthB => {
                let u = y * bb - zs;
                rb * zs / bb + (rl * pos(u) - rb * neg(u)) / bb - rb * y
            }
            BergmanWealthH => {
                let u = y + self.x1 * bl - zs;
                dot3(z, &r.beta, s) - self.x1 * rl * bl + rl * pos(u) - rb * neg(u)
            }
            BergmanWealthC => {
                let u = -y + self.x2 * bb + zs;
                dot3(z, &r.beta, s) + self.x2 * rb * bb - rl * pos(u) + rb * neg(u)
            }
            SingleRate => {
                let rm = self.r_mid.unwrap_or(rl);
                let qh = self.q().eval(-y);
                (rl - rm) * zs / bl - rc * qh + rm * (y + qh)
            }
            SingleRatePn => {
                let rm = self.r_mid.unwrap_or(rl);
                let qh = self.q().eval(-y);
                let (funding, shorts) = netting_terms(&r.r_ib, z, s, false);
                rl * zs / bl - funding / bl + rm * shorts / bl - rc * qh + rm * (y + qh)
            }
            PnFl => {
                let qh = self.q().eval(-y);
                let (funding, shorts) = netting_terms(&r.r_ib, z, s, false);
                let u = y + qh + self.x1 * bl + shorts / bl;
                rl * zs / bl - funding / bl - self.x1 * bl * rl - rc * qh + rl * pos(u)
                    - rb * neg(u)
            }
            PnGl => {
                let qh = self.q().eval(-y1);
                let (funding, longs) = netting_terms(&r.r_ib, z, s, true);
                let u = -y - qh + self.x2 * bl + longs / bl;
                rl * zs / bl + funding / bl + self.x2 * bl * rl - rc * qh - rl * pos(u)
                    + rb * neg(u)
            }
            PnFbar => {
                let qh = self.q().eval(-y);
                let (funding, shorts) = netting_terms(&r.r_ib, z, s, false);
                let u = y + qh + self.x1 * bl + shorts;
                dot3(z, &r.beta, s) - funding - self.x1 * rl * bl - rc * qh + rl * pos(u)
                    - rb * neg(u)
            }
            PnGbar => {
                let qh = self.q().eval(-y1);
                let (funding, longs) = netting_terms(&r.r_ib, z, s, true);
                let u = -y - qh + self.x2 * bb + longs;
                dot3(z, &r.beta, s) + funding + self.x2 * rb * bb - rc * qh - rl * pos(u)
                    + rb * neg(u)
            }
            PnWealthL => {
                let (funding, shorts) = netting_terms(&r.r_ib, z, s, false);
                let u = y * bl + shorts;
                rl * zs / bl - funding / bl - rl * y + (rl * pos(u) - rb * neg(u)) / bl
            }
            PnWealthB => {
                let (funding, shorts) = netting_terms(&r.r_ib, z, s, false);
                let u = y * bb + shorts;
                rb * zs / bb - funding / bb - rb * y + (rl * pos(u) - rb * neg(u)) / bb
            }
            CoupledBergmanG | CoupledBergmanGhat | CoupledPnG | CoupledPnGhat => T::nan(),
        }
    }

    /// Coupled driver at `(t, s, (y1, y2), (z1, z2))` with the negotiated
    /// collateral evaluated at `(−c1, −c2)`.
    #[inline]
    pub fn eval_pair_at(
        &self,
        t: T,
        s: &[T],
        (y1, y2): (T, T),
        (z1, z2): (&[T], &[T]),
        (c1, c2): (T, T),
    ) -> (T, T) {
        use GeneratorFamily::*;
        let r = &self.rates;
        let (rl, rb, rc) = (r.r_l, r.r_b, r.r_c);
        let bl = (rl * t).exp();
        let bb = (rb * t).exp();
        let ch = self.chat().eval(-c1, -c2);
        let zs1 = dot(z1, s);
        let zs2 = dot(z2, s);
        match self.family {
            CoupledBergmanG => {
                let (zd1, zd2) = (zs1 / bl, zs2 / bl);
                let u1 = y1 + ch + self.x1 * bl - zd1;
                let u2 = -y2 - ch + self.x2 * bl + zd2;
                (
                    rl * zd1 - self.x1 * bl * rl - rc * ch + rl * pos(u1) - rb * neg(u1),
                    rl * zd2 + self.x2 * bl * rl - rc * ch - rl * pos(u2) + rb * neg(u2),
                )
            }
            CoupledBergmanGhat => {
                let u1 = y1 + ch + self.x1 * bl - zs1;
                let u2 = -y2 - ch + self.x2 * bb + zs2;
                (
                    dot3(z1, &r.beta, s) - self.x1 * rl * bl - rc * ch + rl * pos(u1)
                        - rb * neg(u1),
                    dot3(z2, &r.beta, s) + self.x2 * rb * bb - rc * ch - rl * pos(u2)
                        + rb * neg(u2),
                )
            }
            CoupledPnG => {
                let (f1, short1) = netting_terms(&r.r_ib, z1, s, false);
                let (f2, long2) = netting_terms(&r.r_ib, z2, s, true);
                let u1 = y1 + ch + self.x1 * bl + short1 / bl;
                let u2 = -y2 - ch + self.x2 * bl + long2 / bl;
                (
                    rl * zs1 / bl - f1 / bl - self.x1 * bl * rl - rc * ch + rl * pos(u1)
                        - rb * neg(u1),
                    rl * zs2 / bl + f2 / bl + self.x2 * bl * rl - rc * ch - rl * pos(u2)
                        + rb * neg(u2),
                )
            }
            CoupledPnGhat => {
                let (f1, short1) = netting_terms(&r.r_ib, z1, s, false);
                let (f2, long2) = netting_terms(&r.r_ib, z2, s, true);
                let u1 = y1 + ch + self.x1 * bl + short1;
                let u2 = -y2 - ch + self.x2 * bb + long2;
                (
                    dot3(z1, &r.beta, s) - f1 - self.x1 * rl * bl - rc * ch + rl * pos(u1)
                        - rb * neg(u1),
                    dot3(z2, &r.beta, s) + f2 + self.x2 * rb * bb - rc * ch - rl * pos(u2)
                        + rb * neg(u2),
                )
            }
            _ => (T::nan(), T::nan()),
        }
    }

    /// Coupled driver with the collateral evaluated at the current `y`.
    #[inline]
    pub fn eval_pair(&self, t: T, s: &[T], y: (T, T), z: (&[T], &[T])) -> (T, T) {
        self.eval_pair_at(t, s, y, z, y)
    }
}

fn check_point<T: Scalar>(spec: &GeneratorSpec<T>, p: &DriverPoint<T>) -> Result<()> {
    if p.s.len() != spec.d {
        return Err(Error::Shape(format!("s has length {}, expected {}", p.s.len(), spec.d)));
    }
    if p.s.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::Shape("asset prices must be positive".into()));
    }
    let ok = match (&p.y, &p.z, spec.family.is_pair()) {
        (Value::Scalar(_), Slope::Scalar(z), false) => z.len() == spec.d,
        (Value::Pair(..), Slope::Pair(z1, z2), true) => z1.len() == spec.d && z2.len() == spec.d,
        _ => false,
    };
    if !ok {
        return Err(Error::Shape(format!(
            "point does not match the arity of {:?}",
            spec.family
        )));
    }
    if spec.family.needs_y1() && p.y1_external.is_none() {
        return Err(Error::Shape(format!("{:?} needs y1_external", spec.family)));
    }
    Ok(())
}

/// Evaluates the driver of `spec` at `p`.
pub fn eval<T: Scalar>(spec: &GeneratorSpec<T>, p: &DriverPoint<T>) -> Result<Value<T>> {
    spec.validate()?;
    check_point(spec, p)?;
    Ok(match (&p.y, &p.z) {
        (Value::Scalar(y), Slope::Scalar(z)) => Value::Scalar(spec.eval_scalar(
            p.t,
            &p.s,
            *y,
            z,
            p.y1_external.unwrap_or(T::zero()),
        )),
        (Value::Pair(y1, y2), Slope::Pair(z1, z2)) => {
            let (a, b) = spec.eval_pair(p.t, &p.s, (*y1, *y2), (z1, z2));
            Value::Pair(a, b)
        }
        _ => unreachable!("checked shape"),
    })
}

fn scalar_value<T: Scalar>(v: Value<T>) -> T {
    match v {
        Value::Scalar(x) => x,
        Value::Pair(..) => T::nan(),
    }
}

/// Driver gap `δ = g − f` at the hedger's point and its analytic lower bound.
pub fn eval_gap<T: Scalar>(
    spec_a: &GeneratorSpec<T>,
    spec_b: &GeneratorSpec<T>,
    p: &DriverPoint<T>,
) -> Result<(T, T)> {
    use GeneratorFamily::*;
    let compatible = matches!(
        (spec_a.family, spec_b.family),
        (BergmanGl, BergmanFl) | (BergmanGbar, BergmanFbar) | (PnGl, PnFl) | (PnGbar, PnFbar)
    );
    if !compatible {
        return Err(Error::IncompatiblePair(format!(
            "{:?} against {:?}",
            spec_a.family, spec_b.family
        )));
    }
    let y = match p.y {
        Value::Scalar(y) => y,
        Value::Pair(..) => return Err(Error::Shape("gap needs a scalar point".into())),
    };
    let fed = p.clone().with_y1(y);
    let delta = scalar_value(eval(spec_a, &fed)?) - scalar_value(eval(spec_b, &fed)?);
    let r = &spec_a.rates;
    let (rl, rb) = (r.r_l, r.r_b);
    let bl = (rl * p.t).exp();
    let bb = (rb * p.t).exp();
    let z = match &p.z {
        Slope::Scalar(z) => z,
        Slope::Pair(..) => unreachable!("checked shape"),
    };
    let abs_zs = |extra: T| -> T {
        r.r_ib
            .iter()
            .zip(z)
            .zip(&p.s)
            .fold(T::zero(), |acc, ((rib, zi), si)| {
                acc + (*rib - extra) * (*zi * *si).abs()
            })
    };
    let (x1, x2) = (spec_b.x1, spec_a.x2);
    let bound = match spec_a.family {
        BergmanGl => T::zero(),
        PnGl => abs_zs(rl) / bl,
        BergmanGbar => (-(rb - rl) * x1 * bl).max((rb - rl) * x2 * bb),
        PnGbar => (-(rb - rl) * x1 * bl + abs_zs(rb)).max((rb - rl) * x2 * bb + abs_zs(rl)),
        _ => unreachable!("checked pair"),
    };
    Ok((delta, bound))
}

/// `λ·g(x, y/λ, z/λ) − g(λx, y, z)`; zero when `q` is positively homogeneous.
pub fn homogeneity_identity_check<T: Scalar>(
    spec: &GeneratorSpec<T>,
    p: &DriverPoint<T>,
    lambda: T,
) -> Result<T> {
    use GeneratorFamily::*;
    if lambda < T::zero() {
        return Err(Error::NegativeScale(f(lambda)));
    }
    if !matches!(spec.family, BergmanFbar | BergmanGbar | PnFbar | PnGbar) {
        return Err(Error::IncompatiblePair(format!(
            "homogeneity identity is stated for the beta-measure families, not {:?}",
            spec.family
        )));
    }
    let (y, z) = match (&p.y, &p.z) {
        (Value::Scalar(y), Slope::Scalar(z)) => (*y, z.clone()),
        _ => return Err(Error::Shape("homogeneity check needs a scalar point".into())),
    };
    let y1 = p.y1_external.unwrap_or(T::zero());
    let scaled_spec = spec.with_endowments(lambda * spec.x1, lambda * spec.x2);
    if lambda == T::zero() {
        let zero = DriverPoint {
            t: p.t,
            s: p.s.clone(),
            y: Value::Scalar(T::zero()),
            z: Slope::Scalar(vec![T::zero(); z.len()]),
            y1_external: Some(T::zero()),
        };
        return Ok(-scalar_value(eval(&scaled_spec, &zero)?));
    }
    let shrunk = DriverPoint {
        t: p.t,
        s: p.s.clone(),
        y: Value::Scalar(y / lambda),
        z: Slope::Scalar(z.iter().map(|v| *v / lambda).collect()),
        y1_external: Some(y1 / lambda),
    };
    let full = p.clone().with_y1(y1);
    Ok(lambda * scalar_value(eval(spec, &shrunk)?) - scalar_value(eval(&scaled_spec, &full)?))
}

/// Lipschitz constant in `(y, z)` valid for `s ≤ s_max` and `t ≥ 0`.
pub fn lipschitz_bound<T: Scalar>(spec: &GeneratorSpec<T>, s_max: T) -> T {
    let r = &spec.rates;
    let r_max = [r.r_l, r.r_b, r.r_c, spec.r_mid.unwrap_or(T::zero())]
        .into_iter()
        .chain(r.r_ib.iter().copied())
        .chain(r.beta.iter().copied())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    let lq = match &spec.collateral {
        CollateralConvention::HedgerQ { q } => q.lipschitz(),
        CollateralConvention::Negotiated { map } => {
            let (a, b) = map.lipschitz();
            a + b
        }
        CollateralConvention::Exogenous { .. } => T::zero(),
    };
    let d = T::from_usize(spec.d).unwrap_or(T::one());
    r_max * (T::lit(3.0) + T::lit(3.0) * lq) + T::lit(4.0) * r_max * s_max * d
}
