// SPDX-License-Identifier: Apache-2.0

//! Closed-form reference prices for affine short-rate models.
//!
//! Zero-coupon bonds are written `P(t,T) = exp(A(t,T) − B(t,T)·r)`.
//! Special functions are evaluated in `f64`.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::models::{ModelKind, ShortRateModel};
use crate::rates::OptionFlavor;
use crate::scalar::Real;
use crate::schedule::StepFunction;

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Affine coefficients `(A, B)` of a zero-coupon bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoefficients {
    /// `A(t, T)`.
    pub a: f64,
    /// `B(t, T)`.
    pub b: f64,
}

impl AffineCoefficients {
    /// `exp(A − B r)`.
    pub fn price(&self, r: f64) -> f64 {
        (self.a - self.b * r).exp()
    }
}

/// `B(t,T) = (1 − e^{−κτ})/κ`, with the `κ → 0` limit `τ`.
pub fn mean_reversion_factor(kappa: f64, tau: f64) -> f64 {
    if kappa.abs() * tau < 1e-8 {
        tau * (1.0 - 0.5 * kappa * tau)
    } else {
        -(-kappa * tau).exp_m1() / kappa
    }
}

/// Below this value of `κτ` the factor integrals switch to their power series.
const SERIES_CUTOFF: f64 = 0.5;

/// Power-series terms; at `κτ = 0.5` the last one is below `1e-20`.
const SERIES_TERMS: usize = 24;

/// Taylor coefficients of `φ(y) = (1 − e^{−y})/y`.
fn phi_coefficients() -> [f64; SERIES_TERMS] {
    let mut c = [0.0; SERIES_TERMS];
    let mut factorial = 1.0;
    for (n, slot) in c.iter_mut().enumerate() {
        factorial *= (n + 1) as f64;
        *slot = if n % 2 == 0 { 1.0 } else { -1.0 } / factorial;
    }
    c
}

/// Evaluates `Σ c_n x^n / (n + shift)` by Horner's rule.
fn weighted_series(c: &[f64], x: f64, shift: f64) -> f64 {
    c.iter().enumerate().rev().fold(0.0, |acc, (n, &cn)| acc * x + cn / (n as f64 + shift))
}

/// `∫_0^τ B(u) du = (τ − B(τ))/κ`, accurate as `κ → 0`.
pub fn integrated_factor(kappa: f64, tau: f64) -> f64 {
    let x = kappa * tau;
    if x.abs() < SERIES_CUTOFF {
        tau * tau * weighted_series(&phi_coefficients(), x, 2.0)
    } else {
        (tau - mean_reversion_factor(kappa, tau)) / kappa
    }
}

/// `∫_0^τ B(u)² du = (τ − B(τ) − κB(τ)²/2)/κ²`, accurate as `κ → 0`.
pub fn integrated_factor_squared(kappa: f64, tau: f64) -> f64 {
    let x = kappa * tau;
    if x.abs() < SERIES_CUTOFF {
        let a = phi_coefficients();
        let mut sq = [0.0; SERIES_TERMS];
        for (n, slot) in sq.iter_mut().enumerate() {
            *slot = (0..=n).map(|i| a[i] * a[n - i]).sum();
        }
        tau.powi(3) * weighted_series(&sq, x, 3.0)
    } else {
        let b = mean_reversion_factor(kappa, tau);
        (tau - b - 0.5 * kappa * b * b) / (kappa * kappa)
    }
}

/// Vasicek coefficients: `A = −κθ∫B + σ²/2·∫B²`.
pub fn vasicek_affine(kappa: f64, theta: f64, sigma: f64, tau: f64) -> AffineCoefficients {
    let b = mean_reversion_factor(kappa, tau);
    let a =
        -kappa * theta * integrated_factor(kappa, tau) + 0.5 * sigma * sigma * integrated_factor_squared(kappa, tau);
    AffineCoefficients { a, b }
}

/// CIR coefficients.
pub fn cir_affine(kappa: f64, theta: f64, sigma: f64, tau: f64) -> AffineCoefficients {
    let h = (kappa * kappa + 2.0 * sigma * sigma).sqrt();
    let e = (h * tau).exp_m1();
    let den = 2.0 * h + (kappa + h) * e;
    let b = 2.0 * e / den;
    let a = 2.0 * kappa * theta / (sigma * sigma) * ((2.0 * h).ln() + 0.5 * (kappa + h) * tau - den.ln());
    AffineCoefficients { a, b }
}

fn theta_f64<T: Real>(model: &ShortRateModel<T>) -> Result<&StepFunction<T>> {
    model.theta().ok_or(Error::InvalidParameter { name: "theta", reason: "model has no θ-schedule".into() })
}

/// Segments `(lo, hi, θ)` of a step function restricted to `[t, T]`.
fn segments<T: Real>(theta: &StepFunction<T>, t: f64, maturity: f64) -> Result<Vec<(f64, f64, f64)>> {
    if maturity > theta.horizon().as_f64() * (1.0 + 1e-12) {
        return Err(Error::ScheduleExhausted { t: maturity, horizon: theta.horizon().as_f64() });
    }
    let mut out = Vec::new();
    let mut start = 0.0f64;
    for (&end, &v) in theta.ends().iter().zip(theta.values()) {
        let (end, v) = (end.as_f64(), v.as_f64());
        let lo = start.max(t);
        let hi = end.min(maturity);
        if hi > lo {
            out.push((lo, hi, v));
        }
        if end >= maturity {
            break;
        }
        start = end;
    }
    Ok(out)
}

/// Ho-Lee coefficients with piecewise-constant θ: `B = τ`,
/// `A = −∫θ(s)(T − s)ds + σ²τ³/6`.
pub fn ho_lee_affine<T: Real>(
    sigma: f64,
    theta: &StepFunction<T>,
    t: f64,
    maturity: f64,
) -> Result<AffineCoefficients> {
    let tau = maturity - t;
    let mut a = sigma * sigma * tau.powi(3) / 6.0;
    for (lo, hi, v) in segments(theta, t, maturity)? {
        // ∫_lo^hi (T − s) ds
        a -= v * 0.5 * ((maturity - lo).powi(2) - (maturity - hi).powi(2));
    }
    Ok(AffineCoefficients { a, b: tau })
}

/// Hull-White coefficients with piecewise-constant θ:
/// `A = ∫ (σ²B(s,T)²/2 − θ(s)B(s,T)) ds`.
pub fn hull_white_affine<T: Real>(
    kappa: f64,
    sigma: f64,
    theta: &StepFunction<T>,
    t: f64,
    maturity: f64,
) -> Result<AffineCoefficients> {
    let tau = maturity - t;
    let b = mean_reversion_factor(kappa, tau);
    let mut a = 0.5 * sigma * sigma * integrated_factor_squared(kappa, tau);
    for (lo, hi, v) in segments(theta, t, maturity)? {
        // ∫_lo^hi B(s,T) ds
        a -= v * (integrated_factor(kappa, maturity - lo) - integrated_factor(kappa, maturity - hi));
    }
    Ok(AffineCoefficients { a, b })
}

/// Closed-form zero-coupon bond price from state `x` at time `t`.
///
/// `x` is the chain state: the short rate, or `Y` for shifted models
/// (whose price is `exp(−∫θ)·P^Y(t,T;y)`).
pub fn analytic_zcb<T: Real>(model: &ShortRateModel<T>, t: T, maturity: T, x: T) -> Result<T> {
    let (t, mat, x) = (t.as_f64(), maturity.as_f64(), x.as_f64());
    if mat < t {
        return Err(Error::InvalidParameter { name: "maturity", reason: "precedes valuation time".into() });
    }
    let tau = mat - t;
    let f = |v: f64| T::lit(v);
    Ok(match *model.kind() {
        ModelKind::Vasicek { kappa, theta, sigma } => {
            f(vasicek_affine(kappa.as_f64(), theta.as_f64(), sigma.as_f64(), tau).price(x))
        }
        ModelKind::Cir { kappa, theta, sigma } => {
            f(cir_affine(kappa.as_f64(), theta.as_f64(), sigma.as_f64(), tau).price(x))
        }
        ModelKind::HoLee { sigma } => f(ho_lee_affine(sigma.as_f64(), theta_f64(model)?, t, mat)?.price(x)),
        ModelKind::HullWhite { kappa, sigma } => {
            f(hull_white_affine(kappa.as_f64(), sigma.as_f64(), theta_f64(model)?, t, mat)?.price(x))
        }
        ModelKind::CirPP { .. } | ModelKind::VasicekShifted { .. } => {
            let aux = model.auxiliary().expect("shifted model");
            let shift = model.theta().map(|s| s.integral(T::lit(t), T::lit(mat))).transpose()?.unwrap_or(T::zero());
            analytic_zcb(&aux, T::lit(t), T::lit(mat), T::lit(x))? * (-shift).exp()
        }
        _ => return Err(Error::Unsupported("no closed-form bond price for this model".into())),
    })
}

/// Gaussian bond-option price from the two discount factors and the
/// bond-price volatility `σ_p`.
pub fn gaussian_bond_option(p_expiry: f64, p_maturity: f64, sigma_p: f64, strike: f64, flavor: OptionFlavor) -> f64 {
    if strike <= 0.0 {
        return match flavor {
            OptionFlavor::Call => p_maturity - strike * p_expiry,
            OptionFlavor::Put => 0.0,
        };
    }
    if sigma_p <= 0.0 {
        return flavor.payoff(p_maturity, strike * p_expiry);
    }
    let h = (p_maturity / (p_expiry * strike)).ln() / sigma_p + 0.5 * sigma_p;
    match flavor {
        OptionFlavor::Call => p_maturity * norm_cdf(h) - strike * p_expiry * norm_cdf(h - sigma_p),
        OptionFlavor::Put => strike * p_expiry * norm_cdf(sigma_p - h) - p_maturity * norm_cdf(-h),
    }
}

/// Bond-price volatility of a Gaussian one-factor model (`κ = 0` gives Ho-Lee).
pub fn gaussian_sigma_p(kappa: f64, sigma: f64, t: f64, expiry: f64, maturity: f64) -> f64 {
    let v = mean_reversion_factor(2.0 * kappa, expiry - t);
    sigma * v.sqrt() * mean_reversion_factor(kappa, maturity - expiry)
}

/// Distribution function of the non-central χ² law with `k` degrees of
/// freedom and non-centrality `lambda`, as a Poisson mixture of central laws.
pub fn noncentral_chi2_cdf(x: f64, k: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return ChiSquared::new(k).map(|d| d.cdf(x)).unwrap_or(f64::NAN);
    }
    let mu = lambda / 2.0;
    let weight = |j: f64| (-mu + j * mu.ln() - ln_gamma(j + 1.0)).exp();
    let term = |j: f64| weight(j) * ChiSquared::new(k + 2.0 * j).map(|d| d.cdf(x)).unwrap_or(0.0);
    let mode = mu.floor();
    let mut sum = term(mode);
    let mut j = mode + 1.0;
    loop {
        let w = weight(j);
        sum += term(j);
        if w < 1e-17 && j > mu {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = weight(j);
        sum += term(j);
        if w < 1e-17 {
            break;
        }
        j -= 1.0;
    }
    sum.min(1.0)
}

/// CIR zero-coupon bond option at time `t` on a bond maturing at `maturity`,
/// expiring at `expiry`, from short rate `r`.
#[allow(clippy::too_many_arguments)]
pub fn cir_bond_option(
    kappa: f64,
    theta: f64,
    sigma: f64,
    r: f64,
    t: f64,
    expiry: f64,
    maturity: f64,
    strike: f64,
    flavor: OptionFlavor,
) -> f64 {
    let p_t = cir_affine(kappa, theta, sigma, maturity - t).price(r);
    let p_s = cir_affine(kappa, theta, sigma, expiry - t).price(r);
    let call = if strike <= 0.0 {
        p_t - strike * p_s
    } else {
        let h = (kappa * kappa + 2.0 * sigma * sigma).sqrt();
        let rho = 2.0 * h / (sigma * sigma * (h * (expiry - t)).exp_m1());
        let psi = (kappa + h) / (sigma * sigma);
        let st = cir_affine(kappa, theta, sigma, maturity - expiry);
        let r_hat = (st.a - strike.ln()) / st.b;
        let dof = 4.0 * kappa * theta / (sigma * sigma);
        let num = 2.0 * rho * rho * r * (h * (expiry - t)).exp();
        let first = noncentral_chi2_cdf(2.0 * r_hat * (rho + psi + st.b), dof, num / (rho + psi + st.b));
        let second = noncentral_chi2_cdf(2.0 * r_hat * (rho + psi), dof, num / (rho + psi));
        p_t * first - strike * p_s * second
    };
    match flavor {
        OptionFlavor::Call => call,
        OptionFlavor::Put => call - p_t + strike * p_s,
    }
}

/// Closed-form option on a zero-coupon bond from chain state `x` at time `t`.
///
/// Shifted models use `exp(−∫_t^T θ)·ZBC^Y(t, expiry, T, K·exp(∫_expiry^T θ))`.
pub fn analytic_zcb_option<T: Real>(
    model: &ShortRateModel<T>,
    t: T,
    expiry: T,
    maturity: T,
    strike: T,
    flavor: OptionFlavor,
    x: T,
) -> Result<T> {
    let (t, s, mat, k, x) = (t.as_f64(), expiry.as_f64(), maturity.as_f64(), strike.as_f64(), x.as_f64());
    if !(t <= s && s <= mat) {
        return Err(Error::InvalidParameter { name: "expiry", reason: "need t ≤ expiry ≤ maturity".into() });
    }
    let value = match *model.kind() {
        ModelKind::Vasicek { kappa, sigma, .. } | ModelKind::HullWhite { kappa, sigma } => {
            let p_s = analytic_zcb(model, T::lit(t), T::lit(s), T::lit(x))?.as_f64();
            let p_t = analytic_zcb(model, T::lit(t), T::lit(mat), T::lit(x))?.as_f64();
            gaussian_bond_option(p_s, p_t, gaussian_sigma_p(kappa.as_f64(), sigma.as_f64(), t, s, mat), k, flavor)
        }
        ModelKind::HoLee { sigma } => {
            let p_s = analytic_zcb(model, T::lit(t), T::lit(s), T::lit(x))?.as_f64();
            let p_t = analytic_zcb(model, T::lit(t), T::lit(mat), T::lit(x))?.as_f64();
            gaussian_bond_option(p_s, p_t, gaussian_sigma_p(0.0, sigma.as_f64(), t, s, mat), k, flavor)
        }
        ModelKind::Cir { kappa, theta, sigma } => {
            cir_bond_option(kappa.as_f64(), theta.as_f64(), sigma.as_f64(), x, t, s, mat, k, flavor)
        }
        ModelKind::CirPP { kappa, alpha, sigma } => {
            let (whole, tail) = match model.theta() {
                Some(th) => {
                    (th.integral(T::lit(t), T::lit(mat))?.as_f64(), th.integral(T::lit(s), T::lit(mat))?.as_f64())
                }
                None => (0.0, 0.0),
            };
            (-whole).exp()
                * cir_bond_option(kappa.as_f64(), alpha.as_f64(), sigma.as_f64(), x, t, s, mat, k * tail.exp(), flavor)
        }
        _ => return Err(Error::Unsupported("no closed-form bond option for this model".into())),
    };
    Ok(T::lit(value))
}

/// CIR++ option priced off a market curve that the shift fits exactly:
/// `e^{−∫_0^T θ} = P*(0,T)/P^CIR(0,T)`.
#[allow(clippy::too_many_arguments)]
pub fn cir_pp_bond_option_from_curve(
    kappa: f64,
    alpha: f64,
    sigma: f64,
    y0: f64,
    market_expiry: f64,
    market_maturity: f64,
    expiry: f64,
    maturity: f64,
    strike: f64,
    flavor: OptionFlavor,
) -> f64 {
    let cir_s = cir_affine(kappa, alpha, sigma, expiry).price(y0);
    let cir_t = cir_affine(kappa, alpha, sigma, maturity).price(y0);
    let fit_s = market_expiry / cir_s;
    let fit_t = market_maturity / cir_t;
    fit_t * cir_bond_option(kappa, alpha, sigma, y0, 0.0, expiry, maturity, strike * fit_s / fit_t, flavor)
}

/// Inputs of the closed-form European convertible bond under a Gaussian
/// one-factor rate (Vasicek, Hull-White or Ho-Lee) with lognormal equity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianConvertible {
    /// Spot price of the share.
    pub spot: f64,
    /// Conversion ratio `η`.
    pub conversion_ratio: f64,
    /// Face value `F`.
    pub face: f64,
    /// Time to maturity `T − t`.
    pub tau: f64,
    /// Risk-free discount factor `P(t, T)`.
    pub discount: f64,
    /// `∫_t^T q`.
    pub dividend_integral: f64,
    /// `∫_t^T c`.
    pub credit_integral: f64,
    /// Rate mean reversion `κ` (zero for Ho-Lee).
    pub kappa: f64,
    /// Rate volatility.
    pub sigma_r: f64,
    /// Equity volatility.
    pub sigma_s: f64,
    /// Equity/rate correlation.
    pub rho: f64,
}

impl GaussianConvertible {
    /// Variance of `ln S_T` under the `T`-forward measure.
    pub fn forward_variance(&self) -> f64 {
        let (tau, ss, sr, rho, k) = (self.tau, self.sigma_s, self.sigma_r, self.rho, self.kappa);
        ss * ss * tau + 2.0 * rho * ss * sr * integrated_factor(k, tau) + sr * sr * integrated_factor_squared(k, tau)
    }

    /// Value of the zero-coupon European convertible: conversion leg plus
    /// the credit-discounted redemption leg.
    pub fn price(&self) -> f64 {
        let v = self.forward_variance();
        let conversion = self.conversion_ratio * self.spot;
        let equity = conversion * (-self.dividend_integral).exp();
        let bond = (-self.credit_integral).exp() * self.discount * self.face;
        if v <= 0.0 {
            return if equity >= self.face * self.discount { equity } else { bond };
        }
        let sd = v.sqrt();
        let d1 = ((conversion / (self.face * self.discount)).ln() - self.dividend_integral + 0.5 * v) / sd;
        equity * norm_cdf(d1) + bond * norm_cdf(sd - d1)
    }
}
