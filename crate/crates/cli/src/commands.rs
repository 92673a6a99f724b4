//! Subcommand bodies; each returns the process exit code.

use bilateral::generators::GeneratorSpec;
use bilateral::pricing::{self as pricing, select_regime, extrapolated_prices, reporting_tolerance, PriceReport, PricingPath, PricingRequest, Regime};
use bilateral::properties::{
    check_bsvp, check_endowment_independence, check_homogeneity, check_monotone_ordering, check_ordering, check_sandwich,
    search_range_violation, BsvpBox, PropertyVerdict, SearchGrid,
};
use serde::Serialize;

use crate::config::{ContractConfig, FlowConfig, MapConfig, PropertyConfig};
use crate::output::{write_csv, write_json, Cell};
use crate::{CliError, Run};

#[derive(Serialize)]
struct Extrapolated {
    n_fine: usize,
    p_h0: f64,
    p_c0: f64,
}

#[derive(Serialize)]
struct Curve {
    t: f64,
    p_h_min: f64,
    p_h_max: f64,
    p_c_min: f64,
    p_c_max: f64,
    /// Nodes where `P^c > P^h + tol`.
    empty_range_nodes: usize,
}

#[derive(Serialize)]
struct PriceOutput {
    config_hash: String,
    regime: Regime,
    n_steps: usize,
    dt: f64,
    p_h0: f64,
    p_c0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    richardson: Option<Extrapolated>,
    curves: Vec<Curve>,
}

fn curves(rep: &PriceReport<f64>) -> Vec<Curve> {
    let fold = |row: &[f64]| row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    rep.times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (h, c) = (&rep.p_h[i], &rep.p_c[i]);
            let empty = h.iter().zip(c).filter(|(ph, pc)| **pc > **ph + reporting_tolerance(**ph, **pc)).count();
            let ((hl, hh), (cl, ch)) = (fold(h), fold(c));
            Curve {
                t,
                p_h_min: hl,
                p_h_max: hh,
                p_c_min: cl,
                p_c_max: ch,
                empty_range_nodes: empty,
            }
        })
        .collect()
}

pub fn price(run: &Run) -> Result<u8, CliError> {
    let req = run.config.request()?;
    let rep = pricing::price(&req).map_err(CliError::core)?;
    if run.format.json() {
        let richardson = if run.config.solver.richardson {
            let (p_h0, p_c0) = extrapolated_prices(&req).map_err(CliError::core)?;
            Some(Extrapolated {
                n_fine: 2 * req.n_steps,
                p_h0,
                p_c0,
            })
        } else {
            None
        };
        let out = PriceOutput {
            config_hash: run.hash.clone(),
            regime: rep.regime,
            n_steps: rep.n_steps,
            dt: rep.dt,
            p_h0: rep.p_h0(),
            p_c0: rep.p_c0(),
            richardson,
            curves: curves(&rep),
        };
        write_json(&run.out, "price_report.json", &out)?;
    }
    if run.format.csv() {
        let mut rows = Vec::new();
        for (i, &t) in rep.times.iter().enumerate() {
            for j in 0..rep.p_h[i].len() {
                let xi = |g: &Vec<Vec<f64>>| g.get(i).and_then(|r| r.get(j)).map_or(Cell::Empty, |v| Cell::Num(*v));
                rows.push(vec![
                    Cell::Num(t),
                    Cell::Int(j),
                    Cell::Num(rep.asset[i][j]),
                    Cell::Num(rep.p_h[i][j]),
                    Cell::Num(rep.p_c[i][j]),
                    xi(&rep.xi_h),
                    xi(&rep.xi_c),
                ]);
            }
        }
        write_csv(&run.out, "price_surface.csv", &["t", "node", "S", "P_h", "P_c", "xi_h", "xi_c"], &rows)?;
    }
    Ok(0)
}

fn default_properties() -> Vec<PropertyConfig> {
    vec![
        PropertyConfig::Ordering { tol: None },
        PropertyConfig::Bsvp { samples: None, m: None },
        PropertyConfig::Homogeneity { lambdas: None, tol: None },
        PropertyConfig::EndowmentIndependence { x1s: None, tol: None },
        PropertyConfig::MonotoneOrdering { tol: None },
        PropertyConfig::Sandwich { r_mids: None, tol: None },
    ]
}

fn bsvp(req: &PricingRequest<f64>, samples: usize, m: f64, seed: u64) -> Result<PropertyVerdict, CliError> {
    let regime = select_regime(req).map_err(CliError::config)?;
    if regime.path != PricingPath::Negotiated {
        return Ok(PropertyVerdict::not_applicable("bsvp", "needs negotiated collateral"));
    }
    let spec = GeneratorSpec::new(regime.hedger, req.rates.clone(), req.x1, req.x2, req.collateral.clone(), req.r_mid)
        .map_err(CliError::config)?;
    let scale = 1.0 + pricing::price(req).map_err(CliError::core)?.scale();
    let bx = BsvpBox::standard(req.contract.maturity, req.asset.s0, scale, req.asset.sigma_bar);
    check_bsvp(&spec, &bx, samples, m, seed).map_err(CliError::core)
}

fn evaluate(run: &Run, req: &PricingRequest<f64>, property: &PropertyConfig) -> Result<PropertyVerdict, CliError> {
    let core = CliError::core;
    Ok(match property {
        PropertyConfig::Ordering { tol } => {
            let rep = pricing::price(req).map_err(core)?;
            check_ordering(&rep, tol.unwrap_or(1e-8 * rep.scale()))
        }
        PropertyConfig::Bsvp { samples, m } => bsvp(req, samples.unwrap_or(10_000), m.unwrap_or(0.0), run.config.seed)?,
        PropertyConfig::Homogeneity { lambdas, tol } => {
            let lambdas = lambdas.clone().unwrap_or_else(|| vec![0.5, 2.0, 10.0]);
            check_homogeneity(req, &lambdas, tol.unwrap_or(1e-8)).map_err(core)?
        }
        PropertyConfig::EndowmentIndependence { x1s, tol } => {
            let x1s = x1s.clone().unwrap_or_else(|| vec![0.0, 1.0, 5.0]);
            check_endowment_independence(req, &x1s, tol.unwrap_or(1e-10)).map_err(core)?
        }
        PropertyConfig::MonotoneOrdering { tol } => check_monotone_ordering(req, tol.unwrap_or(1e-10)).map_err(core)?,
        PropertyConfig::Sandwich { r_mids, tol } => {
            let r = &req.rates;
            let r_mids = r_mids.clone().unwrap_or_else(|| vec![r.r_l, 0.5 * (r.r_l + r.r_b), r.r_b]);
            check_sandwich(req, &r_mids, tol.unwrap_or(1e-6)).map_err(core)?
        }
    })
}

#[derive(Serialize)]
struct VerdictsOutput {
    config_hash: String,
    seed: u64,
    all_pass: bool,
    verdicts: Vec<PropertyVerdict>,
}

pub fn properties(run: &Run) -> Result<u8, CliError> {
    let req = run.config.request()?;
    let requested = if run.config.properties.is_empty() {
        default_properties()
    } else {
        run.config.properties.clone()
    };
    let verdicts = requested
        .iter()
        .map(|p| evaluate(run, &req, p))
        .collect::<Result<Vec<_>, _>>()?;
    let all_pass = verdicts.iter().all(|v| !v.applicable || v.pass);
    write_json(
        &run.out,
        "verdicts.json",
        &VerdictsOutput {
            config_hash: run.hash.clone(),
            seed: run.config.seed,
            all_pass,
            verdicts,
        },
    )?;
    Ok(if all_pass { 0 } else { 1 })
}

/// Order-one extrapolation from the two finest lattices.
fn extrapolate(n_coarse: usize, p_coarse: f64, n_fine: usize, p_fine: f64) -> f64 {
    let rho = n_fine as f64 / n_coarse as f64;
    (rho * p_fine - p_coarse) / (rho - 1.0)
}

pub fn convergence(run: &Run, n_override: &[usize]) -> Result<u8, CliError> {
    let ns: Vec<usize> = if !n_override.is_empty() {
        n_override.to_vec()
    } else if let Some(c) = &run.config.convergence {
        c.n.clone()
    } else {
        vec![250, 500, 1000, 2000]
    };
    if ns.len() < 2 || ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
        return Err(CliError::Config("convergence needs at least two strictly increasing positive step counts".into()));
    }
    let req = run.config.request()?;
    let mut prices = Vec::new();
    for &n in &ns {
        let rep = pricing::price(&req.with_steps(n)).map_err(CliError::core)?;
        prices.push((rep.p_h0(), rep.p_c0()));
    }
    let k = ns.len() - 1;
    let mut rows = Vec::new();
    for (party, pick) in [("hedger", 0usize), ("counterparty", 1)] {
        let p = |i: usize| if pick == 0 { prices[i].0 } else { prices[i].1 };
        let reference = extrapolate(ns[k - 1], p(k - 1), ns[k], p(k));
        let errors: Vec<f64> = (0..ns.len()).map(|i| (p(i) - reference).abs()).collect();
        for i in 0..ns.len() {
            let ratio = if i > 0 && errors[i] > 0.0 {
                Cell::Num(errors[i - 1] / errors[i])
            } else {
                Cell::Empty
            };
            rows.push(vec![Cell::Text(party.into()), Cell::Int(ns[i]), Cell::Num(p(i)), Cell::Num(errors[i]), ratio]);
        }
    }
    write_csv(&run.out, "convergence.csv", &["party", "n", "price", "error", "ratio"], &rows)?;
    Ok(0)
}

#[derive(Serialize)]
#[serde(untagged)]
enum WitnessOut {
    Contract(ContractConfig),
    None(&'static str),
}

#[derive(Serialize)]
struct ViolationOutput {
    config_hash: String,
    found: bool,
    witness: WitnessOut,
    /// Prices of the contract with the largest `P^c₀ − P^h₀`.
    p_h0: f64,
    p_c0: f64,
    gap: f64,
    tol: f64,
    evaluated: usize,
}

pub fn search(run: &Run) -> Result<u8, CliError> {
    let req = run.config.request()?;
    let maturity = run.config.contract.maturity();
    let mut grid = SearchGrid::standard(maturity, 1.0);
    if let Some(s) = &run.config.search {
        if let Some(t) = &s.early_times {
            grid.early_times = t.clone();
        }
        grid.scale = s.scale;
        grid.points = s.points;
        grid.tol = s.tol;
    }
    let out = search_range_violation(&req, &grid).map_err(CliError::core)?;
    let witness = if out.found {
        WitnessOut::Contract(ContractConfig::Discrete {
            maturity,
            flows: vec![
                FlowConfig {
                    t: out.early_time,
                    payoff: MapConfig::Constant { value: out.early_amount },
                },
                FlowConfig {
                    t: maturity,
                    payoff: MapConfig::Constant { value: out.final_amount },
                },
            ],
        })
    } else {
        WitnessOut::None("none")
    };
    write_json(
        &run.out,
        "violation.json",
        &ViolationOutput {
            config_hash: run.hash.clone(),
            found: out.found,
            witness,
            p_h0: out.p_h0,
            p_c0: out.p_c0,
            gap: out.gap,
            tol: grid.tol,
            evaluated: out.evaluated,
        },
    )?;
    Ok(0)
}
