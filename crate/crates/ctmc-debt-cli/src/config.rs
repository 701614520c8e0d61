// SPDX-License-Identifier: Apache-2.0

//! Run configuration: JSON on disk, library types in memory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ctmc_debt::calibration::DiscountCurve;
use ctmc_debt::ctmc::GeneratorPolicy;
use ctmc_debt::grid::Grid;
use ctmc_debt::hybrid::{CbMethod, ConversionStyle, ConvertibleSpec};
use ctmc_debt::models::{EquityModel, ModelKind, ShortRateModel};
use ctmc_debt::rates::{BondOptionSpec, BondSpec, EmbeddedOptionSchedule, ExerciseWindow, OptionFlavor};
use ctmc_debt::schedule::StepFunction;
use serde::{Deserialize, Serialize};

/// Everything a run needs apart from the discount curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub equity: Option<EquityConfig>,
    #[serde(default)]
    pub instruments: Vec<Instrument>,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub seed: u64,
}

/// Short-rate model and its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Vasicek { kappa: f64, theta: f64, sigma: f64, r0: f64 },
    Cir { kappa: f64, theta: f64, sigma: f64, r0: f64 },
    Dothan { kappa: f64, sigma: f64, r0: f64 },
    ExpVasicek { eta: f64, alpha: f64, sigma: f64, r0: f64 },
    HoLee { sigma: f64, r0: f64 },
    Bdt { sigma: f64, r0: f64 },
    HullWhite { kappa: f64, sigma: f64, r0: f64 },
    BlackKarasinski { kappa: f64, sigma: f64, r0: f64 },
    MercurioMoraleda { lambda: f64, gamma: f64, sigma: f64, r0: f64 },
    CirPlus { kappa: f64, sigma: f64, r0: f64 },
    VasicekShifted { kappa: f64, alpha: f64, sigma: f64, r0: f64 },
    CirPp { kappa: f64, alpha: f64, sigma: f64, r0: f64 },
    EevShifted { eta: f64, alpha: f64, sigma: f64, r0: f64 },
}

impl ModelConfig {
    pub fn build(&self) -> Result<ShortRateModel<f64>> {
        use ModelConfig as C;
        let (kind, r0) = match *self {
            C::Vasicek { kappa, theta, sigma, r0 } => (ModelKind::Vasicek { kappa, theta, sigma }, r0),
            C::Cir { kappa, theta, sigma, r0 } => (ModelKind::Cir { kappa, theta, sigma }, r0),
            C::Dothan { kappa, sigma, r0 } => (ModelKind::Dothan { kappa, sigma }, r0),
            C::ExpVasicek { eta, alpha, sigma, r0 } => (ModelKind::ExpVasicek { eta, alpha, sigma }, r0),
            C::HoLee { sigma, r0 } => (ModelKind::HoLee { sigma }, r0),
            C::Bdt { sigma, r0 } => (ModelKind::Bdt { sigma }, r0),
            C::HullWhite { kappa, sigma, r0 } => (ModelKind::HullWhite { kappa, sigma }, r0),
            C::BlackKarasinski { kappa, sigma, r0 } => (ModelKind::BlackKarasinski { kappa, sigma }, r0),
            C::MercurioMoraleda { lambda, gamma, sigma, r0 } => {
                (ModelKind::MercurioMoraleda { lambda, gamma, sigma }, r0)
            }
            C::CirPlus { kappa, sigma, r0 } => (ModelKind::CirPlus { kappa, sigma }, r0),
            C::VasicekShifted { kappa, alpha, sigma, r0 } => (ModelKind::VasicekShifted { kappa, alpha, sigma }, r0),
            C::CirPp { kappa, alpha, sigma, r0 } => (ModelKind::CirPP { kappa, alpha, sigma }, r0),
            C::EevShifted { eta, alpha, sigma, r0 } => (ModelKind::EevShifted { eta, alpha, sigma }, r0),
        };
        ShortRateModel::new(kind, r0).context("invalid model parameters")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    #[default]
    Sinh,
    Uniform,
}

/// Rate grid. Nodes cluster around `center` (default: the initial state).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub kind: GridKind,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_rate_alpha")]
    pub alpha: f64,
}

fn default_m() -> usize {
    160
}

fn default_rate_alpha() -> f64 {
    0.5
}

impl GridConfig {
    pub fn build(&self, center: f64) -> Result<Grid<f64>> {
        let center = self.center.unwrap_or(center);
        let grid = match self.kind {
            GridKind::Sinh => Grid::sinh(self.lower, self.upper, center, self.m, self.alpha),
            GridKind::Uniform => Grid::uniform(self.lower, self.upper, center, self.m),
        };
        grid.context("invalid rate grid")
    }
}

/// Time stepping.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Optional horizon beyond the last instrument date.
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn default_dt() -> f64 {
    0.01
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt: default_dt(), horizon: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Strict,
    Permissive,
}

impl From<Policy> for GeneratorPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Strict => GeneratorPolicy::Strict,
            Policy::Permissive => GeneratorPolicy::Permissive,
        }
    }
}

/// Share layer for convertibles. The log-state grid spans
/// `x0 + lower_offset ..= x0 + upper_offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquityConfig {
    pub s0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub dividend: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_big_m")]
    pub big_m: usize,
    #[serde(default)]
    pub kind: GridKind,
    #[serde(default = "default_lower_offset")]
    pub lower_offset: f64,
    #[serde(default = "default_upper_offset")]
    pub upper_offset: f64,
    #[serde(default = "default_equity_alpha")]
    pub alpha: f64,
}

fn default_big_m() -> usize {
    160
}

fn default_lower_offset() -> f64 {
    -2.5
}

fn default_upper_offset() -> f64 {
    2.5
}

fn default_equity_alpha() -> f64 {
    2.0
}

impl EquityConfig {
    pub fn build(&self) -> Result<EquityModel<f64>> {
        EquityModel::new(self.s0, self.sigma, StepFunction::constant(self.dividend), self.rho)
            .context("invalid equity parameters")
    }

    pub fn grid(&self, x0: f64) -> Result<Grid<f64>> {
        let (lo, hi) = (x0 + self.lower_offset, x0 + self.upper_offset);
        let grid = match self.kind {
            GridKind::Sinh => Grid::sinh(lo, hi, x0, self.big_m, self.alpha),
            GridKind::Uniform => Grid::uniform(lo, hi, x0, self.big_m),
        };
        grid.context("invalid share grid")
    }
}

/// Plain bond terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondConfig {
    #[serde(default = "default_face")]
    pub face: f64,
    #[serde(default)]
    pub coupon_rate: f64,
    #[serde(default = "default_frequency")]
    pub frequency: u32,
    pub maturity: f64,
}

fn default_face() -> f64 {
    1.0
}

fn default_frequency() -> u32 {
    2
}

impl From<BondConfig> for BondSpec<f64> {
    fn from(b: BondConfig) -> Self {
        BondSpec { face: b.face, coupon_rate: b.coupon_rate, frequency: b.frequency, maturity: b.maturity }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZcbConfig {
    pub maturity: f64,
    #[serde(default)]
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Call,
    Put,
}

impl From<Flavor> for OptionFlavor {
    fn from(f: Flavor) -> Self {
        match f {
            Flavor::Call => OptionFlavor::Call,
            Flavor::Put => OptionFlavor::Put,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondOptionConfig {
    pub expiry: f64,
    pub strike: f64,
    pub flavor: Flavor,
    pub bond: BondConfig,
}

impl From<BondOptionConfig> for BondOptionSpec<f64> {
    fn from(o: BondOptionConfig) -> Self {
        BondOptionSpec { expiry: o.expiry, strike: o.strike, flavor: o.flavor.into(), underlying: o.bond.into() }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: f64,
    pub end: f64,
    pub price: f64,
}

impl From<WindowConfig> for ExerciseWindow<f64> {
    fn from(w: WindowConfig) -> Self {
        ExerciseWindow { start: w.start, end: w.end, price: w.price }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallablePutableConfig {
    pub bond: BondConfig,
    #[serde(default)]
    pub call: Vec<WindowConfig>,
    #[serde(default)]
    pub put: Vec<WindowConfig>,
    #[serde(default = "default_true")]
    pub accrued_on_call: bool,
}

fn default_true() -> bool {
    true
}

impl CallablePutableConfig {
    pub fn schedule(&self) -> EmbeddedOptionSchedule<f64> {
        EmbeddedOptionSchedule {
            call: self.call.iter().map(|&w| w.into()).collect(),
            put: self.put.iter().map(|&w| w.into()).collect(),
            accrued_on_call: self.accrued_on_call,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Fast,
    Direct,
}

impl From<Method> for CbMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Fast => CbMethod::Fast,
            Method::Direct => CbMethod::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertibleConfig {
    pub face: f64,
    pub conversion_ratio: f64,
    pub maturity: f64,
    #[serde(default)]
    pub coupon_rate: f64,
    #[serde(default = "default_frequency")]
    pub frequency: u32,
    #[serde(default)]
    pub credit_spread: f64,
    #[serde(default)]
    pub method: Method,
}

impl ConvertibleConfig {
    pub fn spec(&self, style: ConversionStyle) -> ConvertibleSpec<f64> {
        ConvertibleSpec::new(self.face, self.conversion_ratio, self.maturity, style)
            .with_coupon(self.coupon_rate, self.frequency)
            .with_credit_spread(StepFunction::constant(self.credit_spread))
    }
}

/// One priced instrument.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstrumentKind {
    Zcb(ZcbConfig),
    Bond(BondConfig),
    BondOption(BondOptionConfig),
    CallablePutable(CallablePutableConfig),
    CbEuropean(ConvertibleConfig),
    CbAmerican(ConvertibleConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instrument {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: InstrumentKind,
}

impl Instrument {
    pub fn type_name(&self) -> &'static str {
        match self.kind {
            InstrumentKind::Zcb(_) => "zcb",
            InstrumentKind::Bond(_) => "bond",
            InstrumentKind::BondOption(_) => "bond_option",
            InstrumentKind::CallablePutable(_) => "callable_putable",
            InstrumentKind::CbEuropean(_) => "cb_european",
            InstrumentKind::CbAmerican(_) => "cb_american",
        }
    }

    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}_{index}", self.type_name()))
    }

    pub fn is_convertible(&self) -> bool {
        matches!(self.kind, InstrumentKind::CbEuropean(_) | InstrumentKind::CbAmerican(_))
    }

    /// Dates that must lie on the time grid.
    pub fn dates(&self) -> Vec<f64> {
        let coupons = |b: BondConfig| BondSpec::from(b).coupon_dates();
        match &self.kind {
            InstrumentKind::Zcb(z) => vec![z.start, z.maturity],
            InstrumentKind::Bond(b) => coupons(*b),
            InstrumentKind::BondOption(o) => {
                let mut d = coupons(o.bond);
                d.push(o.expiry);
                d
            }
            InstrumentKind::CallablePutable(c) => {
                let mut d = coupons(c.bond);
                d.extend(c.call.iter().chain(&c.put).flat_map(|w| [w.start, w.end]));
                d
            }
            InstrumentKind::CbEuropean(c) | InstrumentKind::CbAmerican(c) => {
                BondSpec { face: c.face, coupon_rate: c.coupon_rate, frequency: c.frequency, maturity: c.maturity }
                    .coupon_dates()
            }
        }
    }
}

/// Grid-refinement study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Index into `instruments`.
    #[serde(default)]
    pub instrument: usize,
    /// Rate-grid sizes to sweep.
    #[serde(default)]
    pub m_list: Vec<usize>,
    /// Share-grid sizes to sweep (convertibles only).
    #[serde(default)]
    pub big_m_list: Vec<usize>,
    /// Fall back to a fine-grid run of the same scheme when no closed form exists.
    #[serde(default = "default_true")]
    pub self_benchmark: bool,
    /// Grid size of the self-benchmark (`m` or `M`, matching the sweep).
    #[serde(default = "default_benchmark_size")]
    pub benchmark_size: usize,
}

fn default_benchmark_size() -> usize {
    350
}

/// Optional simulation cross-check in `price`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps_per_year: usize,
    #[serde(default)]
    pub antithetic: bool,
}

fn default_steps() -> usize {
    252
}

/// Reads a config file, or the resolved config echoed in a run manifest.
pub fn load(path: &Path) -> Result<(Config, Option<String>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(resolved) = value.get("resolved_config") {
        let config = serde_json::from_value(resolved.clone()).context("manifest holds an invalid config")?;
        let curve = value.get("curve_path").and_then(|c| c.as_str()).map(str::to_owned);
        return Ok((config, curve));
    }
    let config = serde_json::from_value(value).with_context(|| format!("invalid config in {}", path.display()))?;
    Ok((config, None))
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    t: f64,
    discount: f64,
}

/// Reads a `t,discount` curve.
pub fn load_curve(path: &Path) -> Result<DiscountCurve<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let knots = reader
        .deserialize()
        .map(|row| row.map(|r: CurveRow| (r.t, r.discount)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    if knots.len() < 2 {
        bail!("{} needs at least two knots", path.display());
    }
    DiscountCurve::new(&knots).with_context(|| format!("invalid curve in {}", path.display()))
}
