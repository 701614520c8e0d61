// SPDX-License-Identifier: Apache-2.0

//! Two-layer chain for the joint (share price, short rate) model and
//! convertible-bond pricing.
//!
//! The share enters through the decorrelated state `X = ln S − ρ f(R)`,
//! which is a regime-switching diffusion driven by the rate chain. For every
//! rate node `r_k` the regime generator `Λ_k` discretises `X` on its own grid;
//! the pair `(k, l)` is flattened to `k·M + l` (0-based), so value surfaces
//! are `m × M` row-major matrices indexed by rate node then share node.
//!
//! Two pricing paths are provided. The direct path exponentiates the full
//! enlarged generator and is limited to small state spaces. The fast path
//! alternates per-regime share steps with one rate step per time step.

use rayon::prelude::*;

use crate::ctmc::{assemble_birth_death, exp_apply, GeneratorPolicy, PiecewiseGenerator};
use crate::error::{invalid, Error, Result};
use crate::expm::{expm_action, LinearOperator};
use crate::grid::Grid;
use crate::linalg::{DenseMatrix, Tridiagonal};
use crate::models::{EquityModel, ShortRateModel};
use crate::rates::{BondSpec, EmbeddedOptionSchedule};
use crate::scalar::Real;
use crate::schedule::{StepFunction, TimeGrid};

/// Largest enlarged state space the direct path accepts.
pub const DIRECT_STATE_LIMIT: usize = 4096;

/// When the holder may convert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConversionStyle {
    /// Conversion at maturity only.
    European,
    /// Conversion at any time step up to maturity.
    #[default]
    American,
}

/// Which numerical path prices a convertible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CbMethod {
    /// Exponentials of the enlarged `mM × mM` generator.
    Direct,
    /// Per-regime share steps followed by one rate step.
    #[default]
    Fast,
}

/// Convertible bond terms.
#[derive(Debug, Clone)]
pub struct ConvertibleSpec<T> {
    /// Face value `F`.
    pub face: T,
    /// Shares received per bond on conversion, `η`.
    pub conversion_ratio: T,
    /// Annual coupon rate (fraction of face).
    pub coupon_rate: T,
    /// Coupons per year.
    pub frequency: u32,
    /// Maturity `T`.
    pub maturity: T,
    /// Credit spread `c_t` added to the discount rate of the cash leg.
    pub credit_spread: StepFunction<T>,
    /// Conversion style.
    pub style: ConversionStyle,
    /// Issuer call and holder put features (experimental).
    pub embedded: Option<EmbeddedOptionSchedule<T>>,
}

impl<T: Real> ConvertibleSpec<T> {
    /// Zero-coupon convertible without credit spread or embedded options.
    pub fn new(face: T, conversion_ratio: T, maturity: T, style: ConversionStyle) -> Self {
        Self {
            face,
            conversion_ratio,
            coupon_rate: T::zero(),
            frequency: 1,
            maturity,
            credit_spread: StepFunction::constant(T::zero()),
            style,
            embedded: None,
        }
    }

    /// Sets the coupon.
    pub fn with_coupon(mut self, coupon_rate: T, frequency: u32) -> Self {
        self.coupon_rate = coupon_rate;
        self.frequency = frequency;
        self
    }

    /// Sets the credit spread.
    pub fn with_credit_spread(mut self, spread: StepFunction<T>) -> Self {
        self.credit_spread = spread;
        self
    }

    /// Sets the conversion style.
    pub fn with_style(mut self, style: ConversionStyle) -> Self {
        self.style = style;
        self
    }

    /// Adds embedded call and put features.
    pub fn with_embedded(mut self, schedule: EmbeddedOptionSchedule<T>) -> Self {
        self.embedded = Some(schedule);
        self
    }

    /// Underlying straight bond.
    pub fn bond(&self) -> BondSpec<T> {
        BondSpec { face: self.face, coupon_rate: self.coupon_rate, frequency: self.frequency, maturity: self.maturity }
    }

    /// Validates the contract terms.
    pub fn validate(&self) -> Result<()> {
        self.bond().validate()?;
        if !(self.conversion_ratio > T::zero()) {
            return Err(invalid("conversion_ratio", "must be positive"));
        }
        if self.credit_spread.values().iter().any(|&c| !(c >= T::zero())) {
            return Err(invalid("credit_spread", "must be non-negative"));
        }
        Ok(())
    }
}

/// Price of a convertible split into its cash-only and equity legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbValue<T> {
    /// Total value.
    pub total: T,
    /// Cash-only leg, discounted at the risky rate.
    pub cash_only: T,
    /// Equity leg, discounted at the risk-free rate.
    pub equity: T,
}

/// Value surfaces at time zero over every `(rate, share)` state.
#[derive(Debug, Clone, PartialEq)]
pub struct CbSurface<T> {
    /// Number of rate nodes `m`.
    pub rate_states: usize,
    /// Number of share nodes `M`.
    pub equity_states: usize,
    /// Cash-only leg, `m × M` row-major.
    pub cash_only: Vec<T>,
    /// Equity leg, `m × M` row-major.
    pub equity: Vec<T>,
}

impl<T: Real> CbSurface<T> {
    /// Value at rate node `k` and share node `l`.
    pub fn at(&self, k: usize, l: usize) -> CbValue<T> {
        let z = flatten_index(k, l, self.equity_states);
        CbValue { total: self.cash_only[z] + self.equity[z], cash_only: self.cash_only[z], equity: self.equity[z] }
    }
}

/// Flattened index of rate node `k` and share node `l` (0-based).
pub fn flatten_index(k: usize, l: usize, equity_states: usize) -> usize {
    k * equity_states + l
}

/// Inverse of [`flatten_index`]: `(rate node, share node)`.
pub fn unflatten_index(z: usize, equity_states: usize) -> (usize, usize) {
    (z / equity_states, z % equity_states)
}

/// Initial decorrelated state `X_0 = ln S_0 − ρ f(R_0)`.
pub fn initial_log_state<T: Real>(model: &ShortRateModel<T>, equity: &EquityModel<T>) -> Result<T> {
    Ok(equity.s0.ln() - equity.rho * model.equity_potential(equity.sigma_s, model.r0())?)
}

/// Rate chain plus one share chain per rate regime.
#[derive(Debug, Clone)]
pub struct TwoLayerChain<T> {
    model: ShortRateModel<T>,
    equity: EquityModel<T>,
    rate: PiecewiseGenerator<T>,
    r_grid: Grid<T>,
    x_grid: Grid<T>,
    potential: Vec<T>,
    negative_regime_rates: usize,
}

impl<T: Real> TwoLayerChain<T> {
    /// Builds the chain and checks every regime generator on every step.
    ///
    /// Shifted models are rejected because the transform needs the drift of
    /// `R` itself on the grid.
    pub fn build(
        model: &ShortRateModel<T>,
        equity: &EquityModel<T>,
        r_grid: &Grid<T>,
        x_grid: &Grid<T>,
        time_grid: &TimeGrid<T>,
        policy: GeneratorPolicy,
    ) -> Result<Self> {
        if model.is_shifted() {
            return Err(Error::Unsupported("convertible pricing needs an unshifted rate model".into()));
        }
        let rate = PiecewiseGenerator::build(model, r_grid, time_grid, policy)?;
        let potential =
            r_grid.nodes().iter().map(|&r| model.equity_potential(equity.sigma_s, r)).collect::<Result<Vec<T>>>()?;
        let mut chain = Self {
            model: model.clone(),
            equity: equity.clone(),
            rate,
            r_grid: r_grid.clone(),
            x_grid: x_grid.clone(),
            potential,
            negative_regime_rates: 0,
        };
        let mut negatives = 0usize;
        for n in 1..=time_grid.steps() {
            for k in 0..chain.rate_states() {
                let (_, count, first) = chain.assemble_regime(n, k)?;
                negatives += count;
                if let (GeneratorPolicy::Strict, Some(bad)) = (policy, first) {
                    return Err(Error::NegativeRegimeRate { regime: k, node: bad.node, rate: bad.rate });
                }
            }
        }
        chain.negative_regime_rates = negatives;
        Ok(chain)
    }

    /// Rate model.
    pub fn model(&self) -> &ShortRateModel<T> {
        &self.model
    }

    /// Equity layer.
    pub fn equity(&self) -> &EquityModel<T> {
        &self.equity
    }

    /// Rate chain.
    pub fn rate_chain(&self) -> &PiecewiseGenerator<T> {
        &self.rate
    }

    /// Rate grid.
    pub fn r_grid(&self) -> &Grid<T> {
        &self.r_grid
    }

    /// Grid of the decorrelated share state.
    pub fn x_grid(&self) -> &Grid<T> {
        &self.x_grid
    }

    /// Pricing time grid.
    pub fn time_grid(&self) -> &TimeGrid<T> {
        self.rate.time_grid()
    }

    /// Number of rate nodes `m`.
    pub fn rate_states(&self) -> usize {
        self.r_grid.len()
    }

    /// Number of share nodes `M`.
    pub fn equity_states(&self) -> usize {
        self.x_grid.len()
    }

    /// Size of the enlarged chain `mM`.
    pub fn len(&self) -> usize {
        self.rate_states() * self.equity_states()
    }

    /// Whether the chain has no states.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starting state `(rate node, share node)` at the grid anchors.
    pub fn start(&self) -> (usize, usize) {
        (self.r_grid.anchor(), self.x_grid.anchor())
    }

    /// `f(r_k)` for every rate node.
    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    /// Share price `exp(x_l + ρ f(r_k))` on state `(k, l)`.
    pub fn share_price(&self, k: usize, l: usize) -> T {
        (self.x_grid.nodes()[l] + self.equity.rho * self.potential[k]).exp()
    }

    /// Negative regime rates accepted under [`GeneratorPolicy::Permissive`].
    pub fn negative_regime_rates(&self) -> usize {
        self.negative_regime_rates
    }

    /// Negative rate-chain rates accepted under [`GeneratorPolicy::Permissive`].
    pub fn negative_rates(&self) -> usize {
        self.rate.negative_rates()
    }

    fn assemble_regime(
        &self,
        n: usize,
        k: usize,
    ) -> Result<(Tridiagonal<T>, usize, Option<crate::ctmc::NegativeRate>)> {
        let t = self.time_grid().times()[n - 1];
        let c = self.model.transform_coefficients(&self.equity, t, self.r_grid.nodes()[k])?;
        let size = self.equity_states();
        Ok(assemble_birth_death(self.x_grid.nodes(), &vec![c.mu_x; size], &vec![c.sigma_x * c.sigma_x; size]))
    }

    /// Regime generator `Λ_k` on step `n` (`1 ≤ n ≤ N`), drift frozen at `t_{n−1}`.
    pub fn regime_generator(&self, n: usize, k: usize) -> Result<Tridiagonal<T>> {
        Ok(self.assemble_regime(n, k)?.0)
    }

    /// Every regime generator on step `n`.
    pub fn regime_generators(&self, n: usize) -> Result<Vec<Tridiagonal<T>>> {
        (0..self.rate_states()).into_par_iter().map(|k| self.regime_generator(n, k)).collect()
    }

    /// Enlarged generator `G_n` on step `n`.
    pub fn enlarged_generator(&self, n: usize) -> Result<EnlargedGenerator<T>> {
        Ok(EnlargedGenerator {
            rate: self.rate.generator(n).clone(),
            regimes: self.regime_generators(n)?,
            discount: None,
        })
    }

    /// Conversion value `η·S` on every state.
    pub fn conversion_values(&self, ratio: T) -> Vec<T> {
        let size = self.equity_states();
        (0..self.len())
            .map(|z| {
                let (k, l) = unflatten_index(z, size);
                ratio * self.share_price(k, l)
            })
            .collect()
    }
}

/// Sparse enlarged generator: block diagonal `Λ_k` plus `q_kj·I` coupling.
#[derive(Debug, Clone)]
pub struct EnlargedGenerator<T> {
    rate: Tridiagonal<T>,
    regimes: Vec<Tridiagonal<T>>,
    discount: Option<Vec<T>>,
}

impl<T: Real> EnlargedGenerator<T> {
    /// Number of share nodes per regime.
    pub fn block_size(&self) -> usize {
        self.regimes.first().map_or(0, |r| r.dim())
    }

    /// Subtracts `r_k` on every state of regime `k`.
    pub fn discounted(mut self, rates: &[T]) -> Self {
        self.discount = Some(rates.to_vec());
        self
    }

    /// Entry `(i, j)` of the enlarged matrix.
    pub fn get(&self, i: usize, j: usize) -> T {
        let size = self.block_size();
        let (ki, li) = unflatten_index(i, size);
        let (kj, lj) = unflatten_index(j, size);
        let mut v = T::zero();
        if li == lj {
            v = v + self.rate.get(ki, kj);
        }
        if ki == kj {
            v = v + self.regimes[ki].get(li, lj);
            if li == lj {
                if let Some(d) = &self.discount {
                    v = v - d[ki];
                }
            }
        }
        v
    }

    /// Dense copy (small chains only).
    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = LinearOperator::dim(self);
        DenseMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

impl<T: Real> LinearOperator<T> for EnlargedGenerator<T> {
    fn dim(&self) -> usize {
        self.rate.dim() * self.block_size()
    }

    fn exit_rate(&self) -> T {
        let mut out = T::zero();
        for (k, reg) in self.regimes.iter().enumerate() {
            let shift = self.discount.as_ref().map_or(T::zero(), |d| d[k]);
            for &d in &reg.diag {
                out = out.max(-(d + self.rate.diag[k] - shift));
            }
        }
        out
    }

    fn apply_block(&self, x: &[T], ncols: usize, out: &mut [T]) {
        let size = self.block_size();
        let width = size * ncols;
        // Coupling: every share node moves with the rate chain.
        self.rate.apply_block(x, width, out);
        let mut tmp = vec![T::zero(); width];
        for (k, reg) in self.regimes.iter().enumerate() {
            let block = &x[k * width..(k + 1) * width];
            reg.apply_block(block, ncols, &mut tmp);
            let shift = self.discount.as_ref().map_or(T::zero(), |d| d[k]);
            for ((o, &t), &b) in out[k * width..(k + 1) * width].iter_mut().zip(&tmp).zip(block) {
                *o = *o + t - shift * b;
            }
        }
    }
}

/// Backward-induction state: cash-only and equity legs, `m × M` row-major.
struct Legs<T> {
    co: Vec<T>,
    eq: Vec<T>,
}

struct Contract<T> {
    conversion: Vec<T>,
    coupons: Vec<T>,
    bond: BondSpec<T>,
}

fn prepare<T: Real>(chain: &TwoLayerChain<T>, spec: &ConvertibleSpec<T>) -> Result<Contract<T>> {
    spec.validate()?;
    let grid = chain.time_grid();
    let horizon = grid.horizon();
    if (horizon - spec.maturity).abs() > T::lit(1e-9) * horizon.max(T::one()) {
        return Err(invalid("maturity", format!("{} differs from the time-grid horizon {horizon}", spec.maturity)));
    }
    let bond = spec.bond();
    Ok(Contract { conversion: chain.conversion_values(spec.conversion_ratio), coupons: bond.coupon_flows(grid)?, bond })
}

fn terminal<T: Real>(spec: &ConvertibleSpec<T>, conversion: &[T]) -> Legs<T> {
    let mut co = vec![T::zero(); conversion.len()];
    let mut eq = vec![T::zero(); conversion.len()];
    for ((c, e), &h) in co.iter_mut().zip(eq.iter_mut()).zip(conversion) {
        if h >= spec.face {
            *e = h;
        } else {
            *c = spec.face;
        }
    }
    Legs { co, eq }
}

/// Conversion decision, then the experimental call/put adjustment.
fn exercise<T: Real>(legs: &mut Legs<T>, spec: &ConvertibleSpec<T>, contract: &Contract<T>, t: T, american: bool) {
    let (put, call) = match &spec.embedded {
        Some(s) => {
            let accrued = if s.accrued_on_call { contract.bond.accrued(t) } else { T::zero() };
            (s.put_price(t), s.call_price(t).map(|k| k + accrued))
        }
        None => (T::zero(), None),
    };
    for ((co, eq), &h) in legs.co.iter_mut().zip(legs.eq.iter_mut()).zip(&contract.conversion) {
        if american {
            let total = h.max(*co + *eq);
            // Ties count as conversion.
            if total == h {
                *co = T::zero();
                *eq = h;
            } else {
                *eq = total - *co;
            }
        }
        if put > T::zero() || call.is_some() {
            let before = *co + *eq;
            let floor = before.max(put);
            let capped = match call {
                // A called holder may still convert.
                Some(k) => floor.min(if american { k.max(h) } else { k }),
                None => floor,
            };
            if capped != before {
                if before > T::zero() {
                    let s = capped / before;
                    *co = *co * s;
                    *eq = *eq * s;
                } else {
                    *co = capped;
                }
            }
        }
    }
}

fn credit_factor<T: Real>(spec: &ConvertibleSpec<T>, a: T, b: T) -> Result<T> {
    Ok((-spec.credit_spread.integral(a, b)?).exp())
}

/// Backward recursion shared by both styles and both paths.
///
/// The cash leg is discounted step by step at the risky rate and receives
/// each coupon before the step that precedes its payment date; the equity
/// leg is discounted at the risk-free rate. European contracts skip the
/// conversion decision before maturity, which reproduces the terminal
/// credit discount `exp(−∫_0^T c)` of the redemption payment.
pub fn convertible_surface<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    method: CbMethod,
) -> Result<CbSurface<T>> {
    let contract = prepare(chain, spec)?;
    let (m, size) = (chain.rate_states(), chain.equity_states());
    if method == CbMethod::Direct && chain.len() > DIRECT_STATE_LIMIT {
        return Err(Error::TooLarge { states: chain.len(), limit: DIRECT_STATE_LIMIT });
    }
    let grid = chain.time_grid().clone();
    let times = grid.times();
    let american = spec.style == ConversionStyle::American;
    let mut legs = terminal(spec, &contract.conversion);
    for n in (0..grid.steps()).rev() {
        let (t0, t1) = (times[n], times[n + 1]);
        let dt = grid.dt(n + 1);
        let credit = credit_factor(spec, t0, t1)?;
        let coupon = contract.coupons[n + 1];
        if coupon != T::zero() {
            legs.co.iter_mut().for_each(|c| *c = *c + coupon);
        }
        match method {
            CbMethod::Direct => direct_step(chain, n + 1, dt, &mut legs)?,
            CbMethod::Fast => fast_step(chain, n + 1, dt, &mut legs)?,
        }
        legs.co.iter_mut().for_each(|c| *c = *c * credit);
        exercise(&mut legs, spec, &contract, t0, american);
    }
    debug_assert_eq!(legs.co.len(), m * size);
    Ok(CbSurface { rate_states: m, equity_states: size, cash_only: legs.co, equity: legs.eq })
}

fn direct_step<T: Real>(chain: &TwoLayerChain<T>, n: usize, dt: T, legs: &mut Legs<T>) -> Result<()> {
    let op = chain.enlarged_generator(n)?.discounted(chain.r_grid().nodes());
    let stacked: Vec<T> = legs.co.iter().zip(&legs.eq).flat_map(|(&c, &e)| [c, e]).collect();
    let out = expm_action(&op, dt, &stacked, 2)?;
    for (z, pair) in out.chunks_exact(2).enumerate() {
        legs.co[z] = pair[0];
        legs.eq[z] = pair[1];
    }
    Ok(())
}

/// One time step of the regime-separated scheme: each regime moves the share
/// with its own generator and discounts at its own rate, then the rate chain
/// moves across regimes with the share node held fixed.
fn fast_step<T: Real>(chain: &TwoLayerChain<T>, n: usize, dt: T, legs: &mut Legs<T>) -> Result<()> {
    let (m, size) = (chain.rate_states(), chain.equity_states());
    let rates = chain.r_grid().nodes();
    let rows: Vec<Vec<T>> = (0..m)
        .into_par_iter()
        .map(|k| -> Result<Vec<T>> {
            let lambda = chain.regime_generator(n, k)?;
            let block: Vec<T> = (0..size).flat_map(|l| [legs.co[k * size + l], legs.eq[k * size + l]]).collect();
            let mut out = exp_apply(&lambda, dt, &block, 2)?;
            let disc = (-rates[k] * dt).exp();
            out.iter_mut().for_each(|v| *v = *v * disc);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    // Row k of the stacked block holds [co_k, eq_k] so one rate step moves both legs.
    let mut stacked = vec![T::zero(); 2 * m * size];
    for (k, row) in rows.iter().enumerate() {
        for l in 0..size {
            stacked[k * 2 * size + l] = row[2 * l];
            stacked[k * 2 * size + size + l] = row[2 * l + 1];
        }
    }
    let moved = chain.rate_chain().step_action(n, &stacked, 2 * size)?;
    for k in 0..m {
        legs.co[k * size..(k + 1) * size].copy_from_slice(&moved[k * 2 * size..k * 2 * size + size]);
        legs.eq[k * size..(k + 1) * size].copy_from_slice(&moved[k * 2 * size + size..(k + 1) * 2 * size]);
    }
    Ok(())
}

fn price_at<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    start: (usize, usize),
    method: CbMethod,
) -> Result<CbValue<T>> {
    if start.0 >= chain.rate_states() || start.1 >= chain.equity_states() {
        return Err(invalid(
            "start_state",
            format!("{start:?} outside a {}x{} chain", chain.rate_states(), chain.equity_states()),
        ));
    }
    Ok(convertible_surface(chain, spec, method)?.at(start.0, start.1))
}

/// Convertible price from state `start = (rate node, share node)` in the style of `spec`.
pub fn price_cb<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    start: (usize, usize),
    method: CbMethod,
) -> Result<CbValue<T>> {
    price_at(chain, spec, start, method)
}

/// European convertible through the enlarged generator.
pub fn price_cb_european_direct<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    start: (usize, usize),
) -> Result<CbValue<T>> {
    price_at(chain, &spec.clone().with_style(ConversionStyle::European), start, CbMethod::Direct)
}

/// European convertible through the regime-separated scheme.
pub fn price_cb_european_fast<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    start: (usize, usize),
) -> Result<CbValue<T>> {
    price_at(chain, &spec.clone().with_style(ConversionStyle::European), start, CbMethod::Fast)
}

/// American convertible through the enlarged generator.
pub fn price_cb_american<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    start: (usize, usize),
) -> Result<CbValue<T>> {
    price_at(chain, &spec.clone().with_style(ConversionStyle::American), start, CbMethod::Direct)
}

/// American convertible through the regime-separated scheme.
pub fn price_cb_american_fast<T: Real>(
    chain: &TwoLayerChain<T>,
    spec: &ConvertibleSpec<T>,
    start: (usize, usize),
) -> Result<CbValue<T>> {
    price_at(chain, &spec.clone().with_style(ConversionStyle::American), start, CbMethod::Fast)
}
