// SPDX-License-Identifier: Apache-2.0

//! Short-rate diffusions and the equity layer.
//!
//! Every model is written as `dR = μ_R(t, R) dt + σ_R(R) dW`. Time-inhomogeneous
//! models take their drift shift from a [`ThetaSchedule`]; the shifted family
//! (`VasicekShifted`, `CirPP`, `EevShifted`) is `R = Y + θ(t)` for a
//! time-homogeneous auxiliary process `Y` exposed by [`ShortRateModel::auxiliary`].

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::schedule::{StepFunction, ThetaSchedule};

/// Support of the short rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    /// Rates may take any real value.
    Real,
    /// Rates stay strictly positive.
    Positive,
}

/// Drift function `(θ, t, r) ↦ μ` of a user-defined model.
pub type DriftFn<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;
/// Volatility function `r ↦ σ` of a user-defined model.
pub type VolFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// User-defined diffusion; `f` falls back to adaptive quadrature.
#[derive(Clone)]
pub struct CustomModel<T> {
    /// Display name.
    pub name: String,
    /// `μ(θ, t, r)`; `θ` is the current schedule value (zero if homogeneous).
    pub drift: DriftFn<T>,
    /// `σ(r)`.
    pub vol: VolFn<T>,
    /// Support of the rate.
    pub space: StateSpace,
    /// Whether the drift consumes a θ-schedule.
    pub uses_theta: bool,
}

impl<T> fmt::Debug for CustomModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("uses_theta", &self.uses_theta)
            .finish_non_exhaustive()
    }
}

/// Model family and its constant parameters.
#[derive(Debug, Clone)]
pub enum ModelKind<T> {
    /// `dR = κ(θ − R)dt + σ dW`.
    Vasicek { kappa: T, theta: T, sigma: T },
    /// `dR = κ(θ − R)dt + σ√R dW`.
    Cir { kappa: T, theta: T, sigma: T },
    /// `dR = κR dt + σR dW`.
    Dothan { kappa: T, sigma: T },
    /// `dR = R(η − α ln R)dt + σR dW`.
    ExpVasicek { eta: T, alpha: T, sigma: T },
    /// `dR = θ(t)dt + σ dW`.
    HoLee { sigma: T },
    /// `dR = θ(t)R dt + σR dW`.
    Bdt { sigma: T },
    /// `dR = (θ(t) − κR)dt + σ dW`.
    HullWhite { kappa: T, sigma: T },
    /// `dR = R(θ(t) − κ ln R)dt + σR dW`.
    BlackKarasinski { kappa: T, sigma: T },
    /// `dR = R[θ(t) − (λ − γ/(1+γt)) ln R]dt + σR dW`.
    MercurioMoraleda { lambda: T, gamma: T, sigma: T },
    /// `dR = (θ(t) − κR)dt + σ√R dW`.
    CirPlus { kappa: T, sigma: T },
    /// `R = Y + θ(t)`, `dY = κ(α − Y)dt + σ dW`.
    VasicekShifted { kappa: T, alpha: T, sigma: T },
    /// `R = Y + θ(t)`, `dY = κ(α − Y)dt + σ√Y dW`.
    CirPP { kappa: T, alpha: T, sigma: T },
    /// `R = Y + θ(t)`, `dY = Y(η − α ln Y)dt + σY dW`.
    EevShifted { eta: T, alpha: T, sigma: T },
    /// User-defined diffusion.
    Custom(CustomModel<T>),
}

/// Shape of `σ_R`, which fixes the closed forms of `f` and `σ_R'`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum VolShape<T> {
    Constant(T),
    Sqrt(T),
    Linear(T),
    Custom,
}

/// Short-rate model with its initial rate and optional θ-schedule.
#[derive(Debug, Clone)]
pub struct ShortRateModel<T> {
    kind: ModelKind<T>,
    r0: T,
    theta: Option<ThetaSchedule<T>>,
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn finite<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "must be finite"))
    }
}

fn non_negative<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be non-negative, got {v}")))
    }
}

impl<T: Real> ShortRateModel<T> {
    /// Validates `kind` against its parameter domain and wraps it.
    pub fn new(kind: ModelKind<T>, r0: T) -> Result<Self> {
        use ModelKind::*;
        finite("r0", r0)?;
        match &kind {
            Vasicek { kappa, theta, sigma } => {
                positive("kappa", *kappa)?;
                finite("theta", *theta)?;
                non_negative("sigma", *sigma)?;
            }
            Cir { kappa, theta, sigma } => {
                positive("kappa", *kappa)?;
                positive("theta", *theta)?;
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            Dothan { kappa, sigma } => {
                finite("kappa", *kappa)?;
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            ExpVasicek { eta, alpha, sigma } | EevShifted { eta, alpha, sigma } => {
                positive("eta", *eta)?;
                positive("alpha", *alpha)?;
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            HoLee { sigma } => positive("sigma", *sigma)?,
            Bdt { sigma } => {
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            HullWhite { kappa, sigma } => {
                positive("kappa", *kappa)?;
                non_negative("sigma", *sigma)?;
            }
            BlackKarasinski { kappa, sigma } | CirPlus { kappa, sigma } => {
                positive("kappa", *kappa)?;
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            MercurioMoraleda { lambda, gamma, sigma } => {
                non_negative("lambda", *lambda)?;
                non_negative("gamma", *gamma)?;
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            VasicekShifted { kappa, alpha, sigma } => {
                positive("kappa", *kappa)?;
                finite("alpha", *alpha)?;
                positive("sigma", *sigma)?;
            }
            CirPP { kappa, alpha, sigma } => {
                positive("kappa", *kappa)?;
                positive("alpha", *alpha)?;
                positive("sigma", *sigma)?;
                positive("r0", r0)?;
            }
            Custom(c) => {
                if c.space == StateSpace::Positive {
                    positive("r0", r0)?;
                }
            }
        }
        let model = Self { kind, r0, theta: None };
        for w in model.warnings() {
            log::warn!("{w}");
        }
        Ok(model)
    }

    /// Vasicek model.
    pub fn vasicek(kappa: T, theta: T, sigma: T, r0: T) -> Result<Self> {
        Self::new(ModelKind::Vasicek { kappa, theta, sigma }, r0)
    }

    /// CIR model.
    pub fn cir(kappa: T, theta: T, sigma: T, r0: T) -> Result<Self> {
        Self::new(ModelKind::Cir { kappa, theta, sigma }, r0)
    }

    /// Hull-White model; attach θ with [`Self::with_theta`].
    pub fn hull_white(kappa: T, sigma: T, r0: T) -> Result<Self> {
        Self::new(ModelKind::HullWhite { kappa, sigma }, r0)
    }

    /// Ho-Lee model; attach θ with [`Self::with_theta`].
    pub fn ho_lee(sigma: T, r0: T) -> Result<Self> {
        Self::new(ModelKind::HoLee { sigma }, r0)
    }

    /// CIR++ model `R = Y + θ(t)` with `Y_0 = r0`.
    pub fn cir_pp(kappa: T, alpha: T, sigma: T, r0: T) -> Result<Self> {
        Self::new(ModelKind::CirPP { kappa, alpha, sigma }, r0)
    }

    /// Returns the model with its θ-schedule replaced.
    pub fn with_theta(mut self, theta: ThetaSchedule<T>) -> Self {
        self.theta = Some(theta);
        self
    }

    /// Model family.
    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    /// Initial short rate.
    pub fn r0(&self) -> T {
        self.r0
    }

    /// Attached θ-schedule, if any.
    pub fn theta(&self) -> Option<&ThetaSchedule<T>> {
        self.theta.as_ref()
    }

    /// Whether the drift depends on θ(t).
    pub fn uses_theta(&self) -> bool {
        use ModelKind::*;
        match &self.kind {
            Vasicek { .. } | Cir { .. } | Dothan { .. } | ExpVasicek { .. } => false,
            Custom(c) => c.uses_theta,
            _ => true,
        }
    }

    /// Whether the model is a deterministic shift of a homogeneous process.
    pub fn is_shifted(&self) -> bool {
        matches!(self.kind, ModelKind::VasicekShifted { .. } | ModelKind::CirPP { .. } | ModelKind::EevShifted { .. })
    }

    /// Whether the generator is identical on every time interval.
    pub fn is_time_homogeneous(&self) -> bool {
        !self.uses_theta() && !matches!(self.kind, ModelKind::MercurioMoraleda { .. })
    }

    /// Support of the short rate.
    pub fn state_space(&self) -> StateSpace {
        use ModelKind::*;
        match &self.kind {
            Vasicek { .. } | HoLee { .. } | HullWhite { .. } | VasicekShifted { .. } => StateSpace::Real,
            Custom(c) => c.space,
            _ => StateSpace::Positive,
        }
    }

    /// Default grid bounds: `[r0 − 31|r0|, r0 + 24|r0|]` (that is −30r₀..25r₀)
    /// for real-valued rates and `[r0/100, 7r0]` for positive rates.
    pub fn default_bounds(&self) -> Result<(T, T)> {
        let r0 = self.r0;
        if r0 == T::zero() {
            return Err(invalid("r0", "default grid bounds need r0 != 0; give explicit bounds"));
        }
        Ok(match self.state_space() {
            StateSpace::Real => (r0 - T::lit(31.0) * r0.abs(), r0 + T::lit(24.0) * r0.abs()),
            StateSpace::Positive => (r0 / T::lit(100.0), T::lit(7.0) * r0),
        })
    }

    /// Advisory messages (e.g. a violated Feller condition).
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (kappa, theta, sigma) = match self.kind {
            ModelKind::Cir { kappa, theta, sigma } => (kappa, theta, sigma),
            ModelKind::CirPP { kappa, alpha, sigma } => (kappa, alpha, sigma),
            _ => return out,
        };
        if T::lit(2.0) * kappa * theta <= sigma * sigma {
            out.push(format!(
                "Feller condition 2κθ > σ² fails (2κθ = {}, σ² = {}); zero is attainable",
                T::lit(2.0) * kappa * theta,
                sigma * sigma
            ));
        }
        out
    }

    /// Time-homogeneous auxiliary process `Y` of a shifted model (`Y_0 = r0`).
    pub fn auxiliary(&self) -> Option<Self> {
        let kind = match self.kind {
            ModelKind::VasicekShifted { kappa, alpha, sigma } => ModelKind::Vasicek { kappa, theta: alpha, sigma },
            ModelKind::CirPP { kappa, alpha, sigma } => ModelKind::Cir { kappa, theta: alpha, sigma },
            ModelKind::EevShifted { eta, alpha, sigma } => ModelKind::ExpVasicek { eta, alpha, sigma },
            _ => return None,
        };
        Some(Self { kind, r0: self.r0, theta: None })
    }

    fn vol_shape(&self) -> VolShape<T> {
        use ModelKind::*;
        match &self.kind {
            Vasicek { sigma, .. } | HoLee { sigma } | HullWhite { sigma, .. } | VasicekShifted { sigma, .. } => {
                VolShape::Constant(*sigma)
            }
            Cir { sigma, .. } | CirPlus { sigma, .. } | CirPP { sigma, .. } => VolShape::Sqrt(*sigma),
            Dothan { sigma, .. }
            | ExpVasicek { sigma, .. }
            | Bdt { sigma }
            | BlackKarasinski { sigma, .. }
            | MercurioMoraleda { sigma, .. }
            | EevShifted { sigma, .. } => VolShape::Linear(*sigma),
            Custom(_) => VolShape::Custom,
        }
    }

    /// Drift of the state variable for a given value of the shift `θ`.
    ///
    /// For shifted models this is the drift of `Y` at `y` (θ is ignored).
    pub fn drift_with_theta(&self, theta: T, t: T, r: T) -> T {
        use ModelKind::*;
        match &self.kind {
            Vasicek { kappa, theta: m, .. } => *kappa * (*m - r),
            Cir { kappa, theta: m, .. } => *kappa * (*m - r),
            Dothan { kappa, .. } => *kappa * r,
            ExpVasicek { eta, alpha, .. } => r * (*eta - *alpha * r.ln()),
            HoLee { .. } => theta,
            Bdt { .. } => theta * r,
            HullWhite { kappa, .. } | CirPlus { kappa, .. } => theta - *kappa * r,
            BlackKarasinski { kappa, .. } => r * (theta - *kappa * r.ln()),
            MercurioMoraleda { lambda, gamma, .. } => {
                let a = *lambda - *gamma / (T::one() + *gamma * t);
                r * (theta - a * r.ln())
            }
            VasicekShifted { kappa, alpha, .. } | CirPP { kappa, alpha, .. } => *kappa * (*alpha - r),
            EevShifted { eta, alpha, .. } => r * (*eta - *alpha * r.ln()),
            Custom(c) => (c.drift)(theta, t, r),
        }
    }

    fn theta_at(&self, t: T) -> Result<T> {
        if !self.uses_theta() {
            return Ok(T::zero());
        }
        match &self.theta {
            Some(s) => s.value(t),
            None => Err(invalid("theta", "time-inhomogeneous model has no θ-schedule attached")),
        }
    }

    /// `μ_R(t, r)`. Shifted models evaluate `μ_Y(r − θ(t))`.
    pub fn drift(&self, t: T, r: T) -> Result<T> {
        let theta = self.theta_at(t)?;
        if self.is_shifted() {
            Ok(self.drift_with_theta(T::zero(), t, r - theta))
        } else {
            Ok(self.drift_with_theta(theta, t, r))
        }
    }

    /// `σ_R(r)` of the state variable (of `Y` for shifted models).
    pub fn volatility(&self, r: T) -> T {
        match self.vol_shape() {
            VolShape::Constant(s) => s,
            VolShape::Sqrt(s) => s * r.max(T::zero()).sqrt(),
            VolShape::Linear(s) => s * r,
            VolShape::Custom => match &self.kind {
                ModelKind::Custom(c) => (c.vol)(r),
                _ => unreachable!(),
            },
        }
    }

    /// `σ_R'(r)`.
    pub fn volatility_derivative(&self, r: T) -> Result<T> {
        match self.vol_shape() {
            VolShape::Constant(_) => Ok(T::zero()),
            VolShape::Sqrt(s) => {
                if r <= T::zero() {
                    Err(Error::SingularVolatility { r: r.as_f64() })
                } else {
                    Ok(s / (T::lit(2.0) * r.sqrt()))
                }
            }
            VolShape::Linear(s) => Ok(s),
            VolShape::Custom => {
                let h = T::epsilon().cbrt() * r.abs().max(T::one());
                Ok((self.volatility(r + h) - self.volatility(r - h)) / (h + h))
            }
        }
    }

    /// Antiderivative of `σ_S / σ_R` at `r` for constant `σ_S`.
    ///
    /// The integration constant is arbitrary; only differences and the
    /// combination `x + ρ f(r)` are meaningful.
    pub fn equity_potential(&self, sigma_s: T, r: T) -> Result<T> {
        match self.vol_shape() {
            VolShape::Constant(s) => Ok(sigma_s / s * r),
            VolShape::Sqrt(s) => {
                if r < T::zero() {
                    Err(Error::SingularVolatility { r: r.as_f64() })
                } else {
                    Ok(T::lit(2.0) * sigma_s * r.sqrt() / s)
                }
            }
            VolShape::Linear(s) => {
                if r <= T::zero() {
                    Err(Error::SingularVolatility { r: r.as_f64() })
                } else {
                    Ok(sigma_s / s * r.ln())
                }
            }
            VolShape::Custom => {
                let g = |u: T| sigma_s / self.volatility(u);
                adaptive_simpson(&g, self.r0, r, T::lit(1e-10), 40).ok_or(Error::SingularVolatility { r: r.as_f64() })
            }
        }
    }

    /// Stock-layer coefficients `(f(r), μ_X(t, r), σ_X(r))` of the decorrelated
    /// state `X = ln S − ρ f(R)`.
    pub fn transform_coefficients(&self, equity: &EquityModel<T>, t: T, r: T) -> Result<Transform<T>> {
        if self.is_shifted() {
            return Err(Error::Unsupported(
                "the equity transform needs a time-independent σ_R; shifted models are not supported".into(),
            ));
        }
        let sigma_r = self.volatility(r);
        if !(sigma_r.abs() > T::zero()) {
            return Err(Error::SingularVolatility { r: r.as_f64() });
        }
        let s = equity.sigma_s;
        let f = self.equity_potential(s, r)?;
        let mu_r = self.drift(t, r)?;
        let psi = mu_r * s / sigma_r - T::lit(0.5) * s * self.volatility_derivative(r)?;
        let q = equity.dividend.value(t)?;
        let mu_x = r - q - T::lit(0.5) * s * s - equity.rho * psi;
        let sigma_x = s * (T::one() - equity.rho * equity.rho).sqrt();
        Ok(Transform { f, mu_x, sigma_x })
    }
}

/// Output of [`ShortRateModel::transform_coefficients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform<T> {
    /// `f(r)`.
    pub f: T,
    /// `μ_X(t, r)`.
    pub mu_x: T,
    /// `σ_X(r)`.
    pub sigma_x: T,
}

/// Equity layer `dS = (R − q)S dt + σ_S S dW¹`, `d[W¹, W²] = ρ dt`.
#[derive(Debug, Clone)]
pub struct EquityModel<T> {
    /// Spot `S_0`.
    pub s0: T,
    /// Constant equity volatility `σ_S`.
    pub sigma_s: T,
    /// Dividend yield `q_t`.
    pub dividend: StepFunction<T>,
    /// Correlation with the rate driver.
    pub rho: T,
}

impl<T: Real> EquityModel<T> {
    /// Validates and builds the equity layer.
    pub fn new(s0: T, sigma_s: T, dividend: StepFunction<T>, rho: T) -> Result<Self> {
        positive("s0", s0)?;
        positive("sigma_s", sigma_s)?;
        if !(rho.abs() <= T::one()) {
            return Err(invalid("rho", "must lie in [-1, 1]"));
        }
        Ok(Self { s0, sigma_s, dividend, rho })
    }
}

/// Adaptive Simpson quadrature; `None` if the integrand is not finite.
fn adaptive_simpson<T: Real>(g: &impl Fn(T) -> T, a: T, b: T, tol: T, depth: u32) -> Option<T> {
    fn simpson<T: Real>(fa: T, fm: T, fb: T, a: T, b: T) -> T {
        (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<T: Real>(
        g: &impl Fn(T) -> T,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        tol: T,
        depth: u32,
    ) -> Option<T> {
        let m = (a + b) / T::lit(2.0);
        let lm = (a + m) / T::lit(2.0);
        let rm = (m + b) / T::lit(2.0);
        let flm = g(lm);
        let frm = g(rm);
        if !flm.is_finite() || !frm.is_finite() {
            return None;
        }
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
            return Some(left + right + delta / T::lit(15.0));
        }
        let half = tol / T::lit(2.0);
        Some(
            recurse(g, a, m, fa, flm, fm, left, half, depth - 1)?
                + recurse(g, m, b, fm, frm, fb, right, half, depth - 1)?,
        )
    }
    if a == b {
        return Some(T::zero());
    }
    let (fa, fb) = (g(a), g(b));
    let fm = g((a + b) / T::lit(2.0));
    if !fa.is_finite() || !fb.is_finite() || !fm.is_finite() {
        return None;
    }
    let whole = simpson(fa, fm, fb, a, b);
    recurse(g, a, b, fa, fm, fb, whole, tol, depth)
}
