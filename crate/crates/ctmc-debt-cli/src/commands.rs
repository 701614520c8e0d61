// SPDX-License-Identifier: Apache-2.0

//! `calibrate`, `price` and `convergence`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ctmc_debt::analytic::{analytic_zcb, analytic_zcb_option};
use ctmc_debt::calibration::DiscountCurve;
use ctmc_debt::hybrid::{price_cb, ConversionStyle, TwoLayerChain};
use ctmc_debt::mc::{mc_price, McPath, SimulationConfig};
use ctmc_debt::rates::{
    estimate_convergence_rate, price_bond, price_bond_option, price_callable_putable, price_zcb, BondOptionSpec,
};
use ctmc_debt::schedule::TimeGrid;
use log::info;

use crate::config::{self, Config, Instrument, InstrumentKind};
use crate::output::{write_csv, write_manifest, Manifest, PriceRow, ResidualRow, Stopwatch, ThetaRow};
use crate::setup::{needs_curve, rate_setup, time_grid, two_layer, RateSetup};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub config: PathBuf,
    pub curve: Option<PathBuf>,
    pub out: PathBuf,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

struct Loaded {
    config: Config,
    curve: Option<DiscountCurve<f64>>,
    curve_path: Option<String>,
}

fn load(inputs: &Inputs) -> Result<Loaded> {
    let (mut config, manifest_curve) = config::load(&inputs.config)?;
    if let Some(dt) = inputs.dt {
        config.time.dt = dt;
    }
    if let Some(seed) = inputs.seed {
        config.seed = seed;
    }
    let curve_path = inputs.curve.as_ref().map(|p| p.display().to_string()).or(manifest_curve);
    let curve = curve_path.as_deref().map(|p| config::load_curve(Path::new(p))).transpose()?;
    std::fs::create_dir_all(&inputs.out).with_context(|| format!("creating {}", inputs.out.display()))?;
    Ok(Loaded { config, curve, curve_path })
}

fn finish(
    inputs: &Inputs,
    loaded: &Loaded,
    command: &'static str,
    outputs: Vec<PathBuf>,
    watch: &Stopwatch,
) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_path: inputs.config.display().to_string(),
        curve_path: loaded.curve_path.clone(),
        out_dir: inputs.out.display().to_string(),
        resolved_config: &loaded.config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        timings: &watch.timings,
    };
    let path = write_manifest(&inputs.out, &manifest)?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Fits θ to the curve and writes `theta.csv` and `residuals.csv`.
pub fn calibrate(inputs: &Inputs, m: Option<usize>) -> Result<()> {
    let mut loaded = load(inputs)?;
    if let Some(m) = m {
        loaded.config.grid.m = m;
    }
    let config = &loaded.config;
    let Some(curve) = loaded.curve.as_ref() else {
        bail!("calibrate needs --curve");
    };
    if !needs_curve(&config.model.build()?) {
        bail!("this model has no θ-schedule or shift to calibrate");
    }
    let mut watch = Stopwatch::default();
    let knots = curve.knot_times().to_vec();
    let tg = time_grid(config, Some(curve), &knots)?;
    let setup = watch.time("calibration", || rate_setup(config, Some(curve), &tg, config.grid.m))?;
    let cal = setup.calibration.as_ref().expect("curve-driven models are calibrated");

    let theta: Vec<ThetaRow> = cal
        .theta
        .ends()
        .iter()
        .zip(cal.theta.values())
        .map(|(&t_n, &theta_star)| ThetaRow { t_n, theta_star })
        .collect();
    let residuals = watch.time("residuals", || {
        knots
            .iter()
            .filter(|&&t| t <= tg.horizon())
            .map(|&t| {
                let model = price_zcb(&setup.chain, 0.0, t, setup.start())?;
                let market = curve.discount(t);
                Ok(ResidualRow { t, market, model, residual: model - market })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let worst = residuals.iter().fold(0.0f64, |m, r| m.max(r.residual.abs()));
    for r in &residuals {
        println!("t = {:<8} market {:.9}  model {:.9}  residual {:+.3e}", r.t, r.market, r.model, r.residual);
    }
    println!("max |residual| over {} knots: {worst:.3e}", residuals.len());

    let theta_path = inputs.out.join("theta.csv");
    let residual_path = inputs.out.join("residuals.csv");
    write_csv(&theta_path, &theta)?;
    write_csv(&residual_path, &residuals)?;
    finish(inputs, &loaded, "calibrate", vec![theta_path, residual_path], &watch)
}

/// Chains shared by the instruments of one run.
struct Pricer<'a> {
    config: &'a Config,
    tg: TimeGrid<f64>,
    rates: RateSetup,
    hybrid: Option<TwoLayerChain<f64>>,
}

impl<'a> Pricer<'a> {
    fn new(
        config: &'a Config,
        curve: Option<&DiscountCurve<f64>>,
        instruments: &[&Instrument],
        m: usize,
        big_m: usize,
    ) -> Result<Self> {
        let dates: Vec<f64> = instruments.iter().flat_map(|i| i.dates()).collect();
        let tg = time_grid(config, curve, &dates)?;
        let rates = rate_setup(config, curve, &tg, m)?;
        let hybrid = if instruments.iter().any(|i| i.is_convertible()) {
            Some(two_layer(config, &rates, &tg, big_m)?)
        } else {
            None
        };
        Ok(Self { config, tg, rates, hybrid })
    }

    fn method(&self, instrument: &Instrument) -> &'static str {
        match &instrument.kind {
            InstrumentKind::CbEuropean(c) | InstrumentKind::CbAmerican(c) => match c.method {
                config::Method::Fast => "fast",
                config::Method::Direct => "direct",
            },
            _ if self.rates.chain.is_homogeneous() => "homogeneous",
            _ => "piecewise",
        }
    }

    fn value(&self, instrument: &Instrument) -> Result<f64> {
        let (chain, j) = (&self.rates.chain, self.rates.start());
        let v = match &instrument.kind {
            InstrumentKind::Zcb(z) => price_zcb(chain, z.start, z.maturity, j)?,
            InstrumentKind::Bond(b) => price_bond(chain, &(*b).into(), j)?,
            InstrumentKind::BondOption(o) => price_bond_option(chain, 0.0, &(*o).into(), j)?,
            InstrumentKind::CallablePutable(c) => price_callable_putable(chain, &c.bond.into(), &c.schedule(), j)?,
            InstrumentKind::CbEuropean(c) | InstrumentKind::CbAmerican(c) => {
                let style = match instrument.kind {
                    InstrumentKind::CbEuropean(_) => ConversionStyle::European,
                    _ => ConversionStyle::American,
                };
                let hybrid = self.hybrid.as_ref().context("two-layer chain missing")?;
                price_cb(hybrid, &c.spec(style), hybrid.start(), c.method.into())?.total
            }
        };
        Ok(v)
    }

    /// Closed-form value, where the model and instrument have one and the
    /// model was not fitted on this grid.
    fn analytic(&self, instrument: &Instrument) -> Option<f64> {
        if self.rates.calibration.is_some() {
            return None;
        }
        let (model, x) = (&self.rates.model, self.rates.model.r0());
        match &instrument.kind {
            InstrumentKind::Zcb(z) if z.start == 0.0 => analytic_zcb(model, 0.0, z.maturity, x).ok(),
            InstrumentKind::BondOption(o) if o.bond.coupon_rate == 0.0 => {
                analytic_zcb_option(model, 0.0, o.expiry, o.bond.maturity, o.strike, o.flavor.into(), x)
                    .ok()
                    .map(|v| v * o.bond.face)
            }
            _ => None,
        }
    }

    /// Simulation estimate for zero-coupon bonds and options on them.
    fn monte_carlo(&self, instrument: &Instrument) -> Result<Option<(f64, f64)>> {
        let Some(mc) = self.config.monte_carlo else { return Ok(None) };
        let cfg = SimulationConfig {
            paths: mc.paths,
            steps_per_year: mc.steps_per_year,
            seed: self.config.seed,
            antithetic: mc.antithetic,
        };
        let model = &self.rates.model;
        let est = match &instrument.kind {
            InstrumentKind::Zcb(z) if z.start == 0.0 => {
                mc_price(model, None, z.maturity, |p: &McPath<f64>| p.terminal_discount(), &cfg)?
            }
            InstrumentKind::BondOption(o) if o.bond.coupon_rate == 0.0 => {
                let spec: BondOptionSpec<f64> = (*o).into();
                let theta = model.theta().filter(|_| model.is_shifted()).cloned();
                // Fails early when the model has no closed-form bond price.
                analytic_zcb(model, spec.expiry, spec.underlying.maturity, model.r0())?;
                let payoff = |p: &McPath<f64>| {
                    let k = p.times.len() - 1;
                    let shift = theta.as_ref().map_or(0.0, |th| th.value(p.times[k]).unwrap_or(f64::NAN));
                    let bond = analytic_zcb(model, spec.expiry, spec.underlying.maturity, p.rates[k] - shift)
                        .unwrap_or(f64::NAN);
                    p.discounts[k] * spec.flavor.payoff(spec.underlying.face * bond, spec.strike)
                };
                mc_price(model, None, spec.expiry, payoff, &cfg)?
            }
            _ => return Ok(None),
        };
        Ok(Some((est.price, est.std_error)))
    }
}

/// Prices every configured instrument and writes `prices.csv`.
pub fn price(inputs: &Inputs, m: Option<usize>, big_m: Option<usize>) -> Result<()> {
    let mut loaded = load(inputs)?;
    if let Some(m) = m {
        loaded.config.grid.m = m;
    }
    if let (Some(big_m), Some(eq)) = (big_m, loaded.config.equity.as_mut()) {
        eq.big_m = big_m;
    }
    let config = &loaded.config;
    if config.instruments.is_empty() {
        bail!("the config lists no instruments");
    }
    let mut watch = Stopwatch::default();
    let all: Vec<&Instrument> = config.instruments.iter().collect();
    let big_m = config.equity.as_ref().map_or(0, |e| e.big_m);
    let pricer = watch.time("setup", || Pricer::new(config, loaded.curve.as_ref(), &all, config.grid.m, big_m))?;
    info!("time grid: {} steps to {}", pricer.tg.steps(), pricer.tg.horizon());

    let mut rows = Vec::new();
    for (i, instrument) in config.instruments.iter().enumerate() {
        let name = instrument.label(i);
        let start = Instant::now();
        let value = pricer.value(instrument).with_context(|| format!("pricing {name}"))?;
        let elapsed_sec = start.elapsed().as_secs_f64();
        let mc = pricer.monte_carlo(instrument).with_context(|| format!("simulating {name}"))?;
        let method = pricer.method(instrument);
        match mc {
            Some((p, se)) => {
                println!("{name:<20} {:<16} {method:<12} {value:.9}  (MC {p:.9} ± {se:.9})", instrument.type_name())
            }
            None => println!("{name:<20} {:<16} {method:<12} {value:.9}", instrument.type_name()),
        }
        rows.push(PriceRow {
            name,
            kind: instrument.type_name(),
            method,
            value,
            mc_value: mc.map(|m| m.0),
            mc_std_error: mc.map(|m| m.1),
            elapsed_sec,
        });
    }
    watch
        .timings
        .push(crate::output::Timing { phase: "pricing".into(), seconds: rows.iter().map(|r| r.elapsed_sec).sum() });
    let path = inputs.out.join("prices.csv");
    write_csv(&path, &rows)?;
    finish(inputs, &loaded, "price", vec![path], &watch)
}

/// Which grid a convergence study refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    Rate,
    Share,
}

/// Refines one grid and writes `study.csv` with errors against a closed
/// form or a fine-grid self-benchmark.
pub fn convergence(inputs: &Inputs, m_list: Vec<usize>, big_m_list: Vec<usize>) -> Result<()> {
    let mut loaded = load(inputs)?;
    let study = loaded.config.convergence.get_or_insert_with(|| config::ConvergenceConfig {
        instrument: 0,
        m_list: Vec::new(),
        big_m_list: Vec::new(),
        self_benchmark: true,
        benchmark_size: 350,
    });
    if !m_list.is_empty() {
        study.m_list = m_list;
    }
    if !big_m_list.is_empty() {
        study.big_m_list = big_m_list;
    }
    let config = &loaded.config;
    let study = config.convergence.as_ref().expect("inserted above");
    let (sweep, sizes) = match (study.m_list.is_empty(), study.big_m_list.is_empty()) {
        (false, true) => (Sweep::Rate, &study.m_list),
        (true, false) => (Sweep::Share, &study.big_m_list),
        (true, true) => bail!("give grid sizes with --m or --big-m (or convergence.m_list / big_m_list)"),
        (false, false) => bail!("sweep either the rate grid or the share grid, not both"),
    };
    let instrument = config.instruments.get(study.instrument).with_context(|| {
        format!("convergence.instrument = {} but only {} instruments", study.instrument, config.instruments.len())
    })?;
    if sweep == Sweep::Share && !instrument.is_convertible() {
        bail!("--big-m sweeps need a convertible instrument");
    }
    let curve = loaded.curve.as_ref();
    let base_big_m = config.equity.as_ref().map_or(0, |e| e.big_m);
    let sized = |size: usize| match sweep {
        Sweep::Rate => Pricer::new(config, curve, &[instrument], size, base_big_m),
        Sweep::Share => Pricer::new(config, curve, &[instrument], config.grid.m, size),
    };

    let mut watch = Stopwatch::default();
    let mut runs = Vec::new();
    for &size in sizes {
        let start = Instant::now();
        let pricer = sized(size)?;
        let value = pricer.value(instrument).with_context(|| format!("pricing at size {size}"))?;
        runs.push((size, value, start.elapsed().as_secs_f64(), pricer.analytic(instrument)));
        info!("size {size}: {value:.9}");
    }
    watch.timings.push(crate::output::Timing { phase: "sweep".into(), seconds: runs.iter().map(|r| r.2).sum() });

    let closed_form = runs.first().and_then(|r| r.3).filter(|_| sweep == Sweep::Rate);
    let (benchmark, source) = match closed_form {
        Some(v) => (v, "analytic".to_owned()),
        None if study.self_benchmark => {
            let v = watch.time("benchmark", || sized(study.benchmark_size)?.value(instrument))?;
            (v, format!("self-benchmark at size {}", study.benchmark_size))
        }
        None => bail!("no closed form for this instrument and self_benchmark is disabled"),
    };
    println!("benchmark {benchmark:.9} ({source})");

    let errors: Vec<(usize, f64)> = runs.iter().map(|r| (r.0, (r.1 - benchmark).abs())).collect();
    let rates = if errors.len() > 1 { estimate_convergence_rate(&errors)? } else { Vec::new() };
    let path = inputs.out.join("study.csv");
    let mut writer = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    let size_header = if sweep == Sweep::Rate { "m" } else { "big_m" };
    writer.write_record([size_header, "value", "abs_error", "rate", "elapsed_sec"])?;
    for (i, (size, value, elapsed, _)) in runs.iter().enumerate() {
        let rate = if i == 0 { String::new() } else { rates[i - 1].to_string() };
        writer.write_record([
            size.to_string(),
            value.to_string(),
            errors[i].1.to_string(),
            rate.clone(),
            elapsed.to_string(),
        ])?;
        println!("{size_header} = {size:<6} value {value:.9}  abs_error {:.3e}  rate {rate}", errors[i].1);
    }
    writer.flush()?;
    finish(inputs, &loaded, "convergence", vec![path], &watch)
}
