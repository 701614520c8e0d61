// SPDX-License-Identifier: Apache-2.0

//! Euler Monte Carlo over the short rate and, optionally, the share price.
//!
//! Used as an independent reference for models without closed forms. Every
//! path draws from its own ChaCha stream keyed by `(seed, path index)`, so
//! the estimate does not depend on how paths are split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::models::{EquityModel, ShortRateModel, StateSpace};
use crate::scalar::Real;

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    /// Number of simulated paths (counting both members of antithetic pairs).
    pub paths: usize,
    /// Euler steps per unit of time.
    pub steps_per_year: usize,
    /// Base seed.
    pub seed: u64,
    /// Pair every path with its sign-flipped twin.
    pub antithetic: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { paths: 100_000, steps_per_year: 252, seed: 0, antithetic: false }
    }
}

/// Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T> {
    /// Sample mean of the discounted payoff.
    pub price: T,
    /// Standard error of the mean.
    pub std_error: T,
    /// Independent samples behind the estimate (pairs count once).
    pub samples: usize,
    /// Euler steps where a square-root state went negative and was truncated.
    pub truncations: usize,
}

/// One simulated path, on the Euler time grid `t_0 = 0 < … < t_K`.
#[derive(Debug, Clone, Copy)]
pub struct McPath<'a, T> {
    /// Grid times.
    pub times: &'a [T],
    /// Short rate at each grid time.
    pub rates: &'a [T],
    /// Share price at each grid time (empty without an equity layer).
    pub shares: &'a [T],
    /// `exp(−Σ_{i<k} R_{t_i} Δ)` at each grid time.
    pub discounts: &'a [T],
}

impl<T: Real> McPath<'_, T> {
    /// Grid index nearest to `t`.
    pub fn index(&self, t: T) -> usize {
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            0
        } else if i >= self.times.len() {
            self.times.len() - 1
        } else if (self.times[i] - t).abs() < (t - self.times[i - 1]).abs() {
            i
        } else {
            i - 1
        }
    }

    /// Discount factor to the last grid time.
    pub fn terminal_discount(&self) -> T {
        *self.discounts.last().expect("non-empty path")
    }
}

/// Prices `payoff` by Euler simulation up to `horizon`.
///
/// `payoff` receives the whole path and returns a present value (typically
/// a discount factor from [`McPath::discounts`] times a cash flow). Shifted
/// models simulate the auxiliary process and add the deterministic shift.
pub fn mc_price<T, F>(
    model: &ShortRateModel<T>,
    equity: Option<&EquityModel<T>>,
    horizon: T,
    payoff: F,
    config: &SimulationConfig,
) -> Result<McEstimate<T>>
where
    T: Real,
    F: Fn(&McPath<'_, T>) -> T + Sync,
{
    if config.paths == 0 || config.steps_per_year == 0 {
        return Err(invalid("paths", "paths and steps_per_year must be positive"));
    }
    if !(horizon > T::zero()) {
        return Err(invalid("horizon", "must be positive"));
    }
    let steps = ((horizon.as_f64() * config.steps_per_year as f64).ceil() as usize).max(1);
    let dt = horizon / T::from_count(steps);
    let times: Vec<T> = (0..=steps).map(|k| T::from_count(k) * dt).collect();
    let state_model = model.auxiliary().unwrap_or_else(|| model.clone());
    let shift: Vec<T> = match (model.is_shifted(), model.theta()) {
        (true, Some(theta)) => times.iter().map(|&t| theta.value(t)).collect::<Result<_>>()?,
        _ => vec![T::zero(); times.len()],
    };
    // Validate the drift on the grid once so the parallel loop cannot fail.
    for &t in &times[..steps] {
        state_model.drift(t, state_model.r0())?;
    }
    let positive = state_model.state_space() == StateSpace::Positive;
    let dividends: Vec<T> = match equity {
        Some(e) => times[..steps].iter().map(|&t| e.dividend.value(t)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let sim =
        Simulator { model: &state_model, equity, times: &times, shift: &shift, dividends: &dividends, dt, positive };

    let samples = if config.antithetic { config.paths.div_ceil(2) } else { config.paths };
    let results: Vec<(f64, usize)> = (0..samples)
        .into_par_iter()
        .map_init(
            || Buffers::new(times.len(), equity.is_some()),
            |buf, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i as u64);
                if config.antithetic {
                    let mut draws = Vec::with_capacity(2 * steps);
                    for _ in 0..2 * steps {
                        draws.push(StandardNormal.sample(&mut rng));
                    }
                    let (a, ta) = sim.run(buf, &draws, 1.0, &payoff);
                    let (b, tb) = sim.run(buf, &draws, -1.0, &payoff);
                    (0.5 * (a + b), ta + tb)
                } else {
                    let draws: Vec<f64> = (0..2 * steps).map(|_| StandardNormal.sample(&mut rng)).collect();
                    sim.run(buf, &draws, 1.0, &payoff)
                }
            },
        )
        .collect();
    // Shifted-data moments: identical samples give exactly zero variance.
    let n = results.len() as f64;
    let origin = results[0].0;
    let (sum, sum_sq) = results.iter().fold((0.0, 0.0), |(s, q), r| {
        let d = r.0 - origin;
        (s + d, q + d * d)
    });
    let mean = origin + sum / n;
    let var = if results.len() > 1 { ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate {
        price: T::lit(mean),
        std_error: T::lit((var / n).sqrt()),
        samples: results.len(),
        truncations: results.iter().map(|r| r.1).sum(),
    })
}

struct Buffers<T> {
    rates: Vec<T>,
    shares: Vec<T>,
    discounts: Vec<T>,
}

impl<T: Real> Buffers<T> {
    fn new(len: usize, with_equity: bool) -> Self {
        Self {
            rates: vec![T::zero(); len],
            shares: if with_equity { vec![T::zero(); len] } else { Vec::new() },
            discounts: vec![T::zero(); len],
        }
    }
}

struct Simulator<'a, T> {
    model: &'a ShortRateModel<T>,
    equity: Option<&'a EquityModel<T>>,
    times: &'a [T],
    shift: &'a [T],
    dividends: &'a [T],
    dt: T,
    positive: bool,
}

impl<T: Real> Simulator<'_, T> {
    /// Runs one path from the normal draws (two per step, scaled by `sign`)
    /// and returns the payoff with the number of truncated steps.
    fn run<F>(&self, buf: &mut Buffers<T>, draws: &[f64], sign: f64, payoff: &F) -> (f64, usize)
    where
        F: Fn(&McPath<'_, T>) -> T,
    {
        let steps = self.times.len() - 1;
        let sqdt = self.dt.sqrt();
        let mut x = self.model.r0();
        let mut log_s = self.equity.map_or(T::zero(), |e| e.s0.ln());
        let mut integral = T::zero();
        let mut truncations = 0usize;
        for k in 0..=steps {
            let r = x + self.shift[k];
            buf.rates[k] = r;
            buf.discounts[k] = (-integral).exp();
            if self.equity.is_some() {
                buf.shares[k] = log_s.exp();
            }
            if k == steps {
                break;
            }
            let z_r = T::lit(sign * draws[2 * k]);
            let z_o = T::lit(sign * draws[2 * k + 1]);
            let xe = if self.positive && x < T::zero() {
                truncations += 1;
                T::zero()
            } else {
                x
            };
            let t = self.times[k];
            let mu = self.model.drift(t, xe).unwrap_or_else(|_| T::nan());
            let sig = self.model.volatility(xe);
            if let Some(e) = self.equity {
                let z_s = e.rho * z_r + (T::one() - e.rho * e.rho).sqrt() * z_o;
                log_s = log_s
                    + (r - self.dividends[k] - T::lit(0.5) * e.sigma_s * e.sigma_s) * self.dt
                    + e.sigma_s * sqdt * z_s;
            }
            integral = integral + r * self.dt;
            x = x + mu * self.dt + sig * sqdt * z_r;
        }
        let path = McPath { times: self.times, rates: &buf.rates, shares: &buf.shares, discounts: &buf.discounts };
        (payoff(&path).as_f64(), truncations)
    }
}
