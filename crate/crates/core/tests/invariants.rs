use bilateral::contracts::{CollateralConvention, ContractSpec};
use bilateral::market::{AssetDynamics, RateEnvironment};
use bilateral::oracle::{replicate_pair, AccrualMode};
use bilateral::piecewise::PiecewiseLinear;
use bilateral::pricing::{price, Model, PricingRequest, RegimePreference, SolverOptions};
use bilateral::properties::{check_homogeneity, check_ordering};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = Model> {
    prop_oneof![Just(Model::Bergman), Just(Model::PartialNetting)]
}

fn collateral() -> impl Strategy<Value = CollateralConvention<f64>> {
    prop_oneof![
        Just(CollateralConvention::none()),
        Just(CollateralConvention::full()),
        (0.0..0.3, -0.3..0.0).prop_map(|(a, b)| CollateralConvention::haircut(a, b)),
        (0.0..=1.0).prop_map(CollateralConvention::convex),
    ]
}

fn contract() -> impl Strategy<Value = ContractSpec<f64>> {
    prop_oneof![
        (60.0..140.0).prop_map(|k| ContractSpec::european(1.0, PiecewiseLinear::call(k))),
        (60.0..140.0).prop_map(|k| ContractSpec::european(1.0, PiecewiseLinear::put(k))),
        (0.0..5.0).prop_map(|c| ContractSpec::fee(1.0, c)),
    ]
}

fn request(
    model: Model,
    rates: RateEnvironment<f64>,
    contract: ContractSpec<f64>,
    collateral: CollateralConvention<f64>,
    x1: f64,
    x2: f64,
) -> PricingRequest<f64> {
    PricingRequest {
        model,
        rates,
        asset: AssetDynamics::new(100.0, 0.07, 0.25, 0.0),
        contract,
        collateral,
        x1,
        x2,
        r_mid: None,
        n_steps: 24,
        regime: RegimePreference::Auto,
        options: SolverOptions::default(),
    }
}

fn spread_rates() -> impl Strategy<Value = RateEnvironment<f64>> {
    (0.0..0.04, 0.0..0.04, 0.0..0.06, 0.0..0.03).prop_map(|(rl, d, rc, e)| {
        let rb = rl + d;
        RateEnvironment::new(rl, rb, rc).with_r_ib(vec![rb + e])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nonnegative_endowments_give_ordered_prices(
        m in model(), rates in spread_rates(), c in contract(), q in collateral(),
        x1 in 0.0..3.0, x2 in 0.0..3.0,
    ) {
        let rep = price(&request(m, rates, c, q, x1, x2)).unwrap();
        let v = check_ordering(&rep, 1e-9 * rep.scale());
        prop_assert!(v.pass, "{:?}", v);
    }

    #[test]
    fn equal_rates_close_the_range(
        m in model(), r in 0.0..0.08, c in contract(), q in collateral(),
        x1 in 0.0..3.0, x2 in 0.0..3.0,
    ) {
        let rates = RateEnvironment::flat(r).with_r_ib(vec![r]);
        let rep = price(&request(m, rates, c, q, x1, x2)).unwrap();
        prop_assert!((rep.p_h0() - rep.p_c0()).abs() <= 1e-10 * rep.scale());
    }

    #[test]
    fn hedger_price_is_homogeneous(
        rates in spread_rates(), c in contract(), a1 in 0.0..0.3, a2 in -0.3..0.0, lambda in 0.0..20.0,
    ) {
        let beta = rates.r_b + 0.5 * (rates.r_ib[0] - rates.r_b);
        let mut req = request(
            Model::PartialNetting,
            rates.with_beta(vec![beta]),
            c,
            CollateralConvention::haircut(a1, a2),
            1.0,
            -1.0,
        );
        req.regime = RegimePreference::Beta;
        let v = check_homogeneity(&req, &[lambda], 1e-8).unwrap();
        prop_assert!(v.pass, "{:?}", v);
    }

    #[test]
    fn matched_oracle_reproduces_prices(
        m in model(), rates in spread_rates(), c in contract(), q in collateral(),
        x1 in 0.0..3.0, x2 in 0.0..3.0,
    ) {
        let req = request(m, rates, c, q, x1, x2);
        let rep = price(&req).unwrap();
        let (h, cp) = replicate_pair(&req, AccrualMode::Matched).unwrap();
        let tol = 1e-10 * rep.scale();
        prop_assert!((h.price0() - rep.p_h0()).abs() <= tol);
        prop_assert!((cp.price0() - rep.p_c0()).abs() <= tol);
        prop_assert!(h.max_residual <= 1e-9 * rep.scale());
    }

    #[test]
    fn reflection_is_an_involution(
        xs in prop::collection::btree_set(-50i32..50, 1..6), ys in prop::collection::vec(-10.0..10.0f64, 6),
        l in -2.0..2.0f64, r in -2.0..2.0f64, probe in -80.0..80.0f64,
    ) {
        let pts: Vec<(f64, f64)> = xs.iter().zip(&ys).map(|(x, y)| (*x as f64, *y)).collect();
        let f = PiecewiseLinear::new(pts, l, r).unwrap();
        prop_assert_eq!(f.reflected().reflected(), f.clone());
        prop_assert!((f.reflected().eval(probe) - f.eval(-probe)).abs() <= 1e-12 * (1.0 + f.eval(-probe).abs()));
    }
}
