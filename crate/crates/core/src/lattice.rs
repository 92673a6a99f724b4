//! Recombining binomial lattice for the driving Brownian motion and the asset.

use crate::error::{Error, Result};
use crate::market::{driver_asset_drift, AssetDynamics, Measure, RateEnvironment};
use crate::scalar::{from_usize, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig<T> {
    pub n_steps: usize,
    pub horizon: T,
    pub measure: Measure,
}

/// Symmetric ±√dt walk with log-Euler asset nodes.
///
/// Node `(i, j)` sits at step `i` after `j` up-moves.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice<T> {
    n_steps: usize,
    horizon: T,
    dt: T,
    sqrt_dt: T,
    drift: T,
    sigma_bar: T,
    kappa_bar: T,
    measure: Measure,
    nodes: Vec<Vec<T>>,
}

impl<T: Scalar> Lattice<T> {
    pub fn build(
        asset: &AssetDynamics<T>,
        rates: &RateEnvironment<T>,
        config: &LatticeConfig<T>,
    ) -> Result<Self> {
        if config.n_steps == 0 {
            return Err(Error::InvalidLattice("n_steps ≥ 1".into()));
        }
        if !(config.horizon > T::zero() && config.horizon.is_finite()) {
            return Err(Error::InvalidLattice("horizon T > 0".into()));
        }
        asset.validate()?;
        let drift = driver_asset_drift(asset, rates, config.measure)?;
        let n = config.n_steps;
        let dt = config.horizon / from_usize(n);
        let sqrt_dt = dt.sqrt();
        let sigma = asset.sigma_bar;
        let log_drift = drift - T::half() * sigma * sigma;
        let nodes = (0..=n)
            .map(|i| {
                let t = config.horizon * from_usize::<T>(i) / from_usize(n);
                (0..=i)
                    .map(|j| {
                        let w = from_usize::<T>(2 * j) - from_usize::<T>(i);
                        asset.s0 * (log_drift * t + sigma * w * sqrt_dt).exp()
                    })
                    .collect()
            })
            .collect();
        Ok(Lattice {
            n_steps: n,
            horizon: config.horizon,
            dt,
            sqrt_dt,
            drift,
            sigma_bar: sigma,
            kappa_bar: asset.kappa_bar,
            measure: config.measure,
            nodes,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn sqrt_dt(&self) -> T {
        self.sqrt_dt
    }

    /// Proportional asset drift under the lattice measure.
    pub fn drift(&self) -> T {
        self.drift
    }

    pub fn sigma_bar(&self) -> T {
        self.sigma_bar
    }

    pub fn kappa_bar(&self) -> T {
        self.kappa_bar
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn time(&self, i: usize) -> T {
        self.horizon * from_usize::<T>(i) / from_usize(self.n_steps)
    }

    pub fn node(&self, i: usize, j: usize) -> T {
        self.nodes[i][j]
    }

    pub fn nodes_at(&self, i: usize) -> &[T] {
        &self.nodes[i]
    }

    /// Half-width in log-price of the cell around a node, σ̄√dt.
    pub fn cell_half_width(&self) -> T {
        self.sigma_bar * self.sqrt_dt
    }

    /// Conditional mean and Brownian coefficient of `next` seen from node `j`.
    #[inline]
    pub fn step_expectation(&self, next: &[T], j: usize) -> (T, T) {
        let (up, down) = (next[j + 1], next[j]);
        (
            T::half() * (up + down),
            (up - down) / (T::two() * self.sqrt_dt),
        )
    }

    /// Empty grid shaped like the lattice.
    pub fn grid(&self) -> Vec<Vec<T>> {
        (0..=self.n_steps).map(|i| vec![T::zero(); i + 1]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, sigma: f64, drift: f64) -> Lattice<f64> {
        let asset = AssetDynamics::new(100.0, 0.1, sigma, 0.0);
        let rates = RateEnvironment::new(drift, drift, drift);
        Lattice::build(
            &asset,
            &rates,
            &LatticeConfig {
                n_steps: n,
                horizon: 1.0,
                measure: Measure::Lending,
            },
        )
        .unwrap()
    }

    #[test]
    fn one_step_nodes() {
        let l = lattice(1, 0.2, 0.05);
        assert!((l.node(1, 1) - 100.0 * (0.03f64 + 0.2).exp()).abs() < 1e-12);
        assert!((l.node(1, 0) - 100.0 * (0.03f64 - 0.2).exp()).abs() < 1e-12);
    }

    #[test]
    fn midline_without_drift_or_volatility_stays_flat() {
        let asset = AssetDynamics::new(100.0, 0.0, 1e-300, 0.0);
        let rates = RateEnvironment::new(0.0, 0.0, 0.0);
        let l = Lattice::build(
            &asset,
            &rates,
            &LatticeConfig {
                n_steps: 6,
                horizon: 1.0,
                measure: Measure::Lending,
            },
        )
        .unwrap();
        assert_eq!(l.node(6, 3), 100.0);
        assert_eq!(l.node(4, 2), 100.0);
    }

    #[test]
    fn one_step_martingale_bias_is_second_order() {
        for n in [10, 100, 1000] {
            let l = lattice(n, 0.2, 0.05);
            let dt = l.dt();
            let factor = (-l.drift() * dt).exp() * 0.5 * (l.node(1, 1) + l.node(1, 0)) / 100.0;
            let analytic = (0.2 * dt.sqrt()).cosh() * (-0.02 * dt).exp();
            assert!((factor - analytic).abs() <= 1e-12);
            assert!((factor - 1.0).abs() <= 5.0 * dt * dt);
        }
    }

    #[test]
    fn step_expectation_examples() {
        let l = lattice(4, 0.2, 0.05);
        assert_eq!(l.step_expectation(&[3.0, 3.0], 0), (3.0, 0.0));
        assert_eq!(l.step_expectation(&[0.0, 1.0], 0), (0.5, 1.0));
        // v = W at step 1: ±√dt
        let w = [-l.sqrt_dt(), l.sqrt_dt()];
        assert!((l.step_expectation(&w, 0).1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        let asset = AssetDynamics::new(100.0, 0.1, 0.2, 0.0);
        let rates = RateEnvironment::new(0.05, 0.05, 0.05);
        let bad = LatticeConfig {
            n_steps: 0,
            horizon: 1.0,
            measure: Measure::Lending,
        };
        assert!(Lattice::build(&asset, &rates, &bad).is_err());
    }

    #[test]
    fn reproducible() {
        assert_eq!(lattice(50, 0.3, 0.02), lattice(50, 0.3, 0.02));
    }
}
