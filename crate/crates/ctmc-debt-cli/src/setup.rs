// SPDX-License-Identifier: Apache-2.0

//! Chains built from a resolved configuration.

use anyhow::{bail, Context, Result};
use ctmc_debt::calibration::{calibrate_theta, calibrate_theta_shifted, Calibration, DiscountCurve, RootSearch};
use ctmc_debt::ctmc::PiecewiseGenerator;
use ctmc_debt::grid::Grid;
use ctmc_debt::hybrid::{initial_log_state, TwoLayerChain};
use ctmc_debt::models::ShortRateModel;
use ctmc_debt::schedule::TimeGrid;
use log::{info, warn};

use crate::config::Config;

/// Time grid of step `config.time.dt` through every date in `dates`, every
/// curve knot up to the horizon, and the configured horizon.
pub fn time_grid(config: &Config, curve: Option<&DiscountCurve<f64>>, dates: &[f64]) -> Result<TimeGrid<f64>> {
    let horizon = dates.iter().copied().chain(config.time.horizon).fold(0.0f64, f64::max);
    if !(horizon > 0.0) {
        bail!("nothing to price: no positive instrument date or horizon");
    }
    let mut extra: Vec<f64> = dates.iter().copied().filter(|&t| t > 0.0).collect();
    if let Some(c) = curve {
        extra.extend(c.knot_times().iter().copied().filter(|&t| t <= horizon));
    }
    TimeGrid::uniform(config.time.dt, horizon).and_then(|g| g.with_times(&extra)).context("invalid time grid")
}

/// Rate chain, possibly fitted to a curve.
pub struct RateSetup {
    /// Model with its fitted θ attached when one was calibrated.
    pub model: ShortRateModel<f64>,
    pub grid: Grid<f64>,
    pub chain: PiecewiseGenerator<f64>,
    pub calibration: Option<Calibration<f64>>,
}

impl RateSetup {
    pub fn start(&self) -> usize {
        self.grid.anchor()
    }
}

/// Needs a θ-schedule or a deterministic shift from a curve.
pub fn needs_curve(model: &ShortRateModel<f64>) -> bool {
    model.uses_theta() || model.is_shifted()
}

pub fn rate_setup(
    config: &Config,
    curve: Option<&DiscountCurve<f64>>,
    tg: &TimeGrid<f64>,
    m: usize,
) -> Result<RateSetup> {
    let model = config.model.build()?;
    let grid = config.grid.clone();
    let grid = crate::config::GridConfig { m, ..grid }.build(model.r0())?;
    let policy = config.policy.into();
    if !needs_curve(&model) {
        let chain = PiecewiseGenerator::build(&model, &grid, tg, policy).context("building the rate chain")?;
        report_negatives(chain.negative_rates());
        return Ok(RateSetup { model, grid, chain, calibration: None });
    }
    let Some(curve) = curve else {
        bail!("this model takes its θ-schedule from a discount curve; pass --curve");
    };
    if model.is_shifted() {
        let aux = PiecewiseGenerator::build(&model, &grid, tg, policy).context("building the auxiliary chain")?;
        report_negatives(aux.negative_rates());
        let cal = calibrate_theta_shifted(&aux, curve, grid.anchor()).context("calibration failed")?;
        info!("closed-form shift fitted, max residual {:.3e}", cal.max_residual());
        let chain = aux.with_rate_shift(cal.theta.clone());
        let model = model.with_theta(cal.theta.clone());
        Ok(RateSetup { model, grid, chain, calibration: Some(cal) })
    } else {
        let cal =
            calibrate_theta(&model, &grid, curve, tg, policy, &RootSearch::default()).context("calibration failed")?;
        info!("θ fitted by root search, max residual {:.3e}", cal.max_residual());
        let model = model.with_theta(cal.theta.clone());
        let chain = PiecewiseGenerator::build(&model, &grid, tg, policy).context("building the rate chain")?;
        report_negatives(chain.negative_rates());
        Ok(RateSetup { model, grid, chain, calibration: Some(cal) })
    }
}

fn report_negatives(count: usize) {
    if count > 0 {
        warn!("{count} negative off-diagonal rates kept under the permissive policy");
    }
}

/// Two-layer chain on top of a fitted rate setup.
pub fn two_layer(config: &Config, rates: &RateSetup, tg: &TimeGrid<f64>, big_m: usize) -> Result<TwoLayerChain<f64>> {
    let Some(eq) = &config.equity else {
        bail!("convertibles need an `equity` section in the config");
    };
    let equity = eq.build()?;
    let x0 = initial_log_state(&rates.model, &equity).context("share transform")?;
    let x_grid = crate::config::EquityConfig { big_m, ..eq.clone() }.grid(x0)?;
    let chain = TwoLayerChain::build(&rates.model, &equity, &rates.grid, &x_grid, tg, config.policy.into())
        .context("building the two-layer chain")?;
    report_negatives(chain.negative_rates());
    Ok(chain)
}
