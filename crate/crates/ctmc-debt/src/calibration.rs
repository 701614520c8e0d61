// SPDX-License-Identifier: Apache-2.0

//! Fitting the drift shift θ to a market discount curve.

use std::collections::HashMap;

use roots::{find_root_brent, Convergency};

use crate::ctmc::{rate_generator_with_theta, GeneratorPolicy, PiecewiseGenerator};
use crate::error::{invalid, Error, Result};
use crate::expm::{expm_action, expm_dense};
use crate::grid::Grid;
use crate::linalg::DenseMatrix;
use crate::models::ShortRateModel;
use crate::scalar::Real;
use crate::schedule::{ThetaSchedule, TimeGrid};

/// Market zero-coupon curve `t ↦ P*(0,t)`, log-linear between knots and
/// flat-forward beyond the last knot, with `P*(0,0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve<T> {
    times: Vec<T>,
    log_discounts: Vec<T>,
}

impl<T: Real> DiscountCurve<T> {
    /// Builds a curve from `(t, P)` knots with `t > 0` strictly increasing.
    pub fn new(knots: &[(T, T)]) -> Result<Self> {
        if knots.is_empty() {
            return Err(invalid("curve", "needs at least one knot"));
        }
        let mut times = vec![T::zero()];
        let mut log_discounts = vec![T::zero()];
        for &(t, p) in knots {
            if !(t > *times.last().expect("non-empty")) {
                return Err(invalid("curve", "knot times must be positive and strictly increasing"));
            }
            if !(p > T::zero()) || !p.is_finite() {
                return Err(invalid("curve", format!("discount factor at t = {t} must be positive, got {p}")));
            }
            if p.ln() > *log_discounts.last().expect("non-empty") {
                log::warn!("discount curve increases at t = {t} (negative forward rate)");
            }
            times.push(t);
            log_discounts.push(p.ln());
        }
        Ok(Self { times, log_discounts })
    }

    /// Knots `(t, P)` excluding the implicit `(0, 1)`.
    pub fn knots(&self) -> Vec<(T, T)> {
        self.times[1..].iter().zip(&self.log_discounts[1..]).map(|(&t, &l)| (t, l.exp())).collect()
    }

    /// Knot times excluding zero.
    pub fn knot_times(&self) -> &[T] {
        &self.times[1..]
    }

    /// `P*(0, t)`.
    pub fn discount(&self, t: T) -> T {
        if t <= T::zero() {
            return T::one();
        }
        let n = self.times.len();
        let i = self.times.partition_point(|&s| s < t);
        let (i0, i1) = if i >= n { (n - 2, n - 1) } else { (i - 1, i) };
        let (t0, t1) = (self.times[i0], self.times[i1]);
        let (l0, l1) = (self.log_discounts[i0], self.log_discounts[i1]);
        let slope = (l1 - l0) / (t1 - t0);
        (l0 + slope * (t - t0)).exp()
    }
}

/// Output of a θ calibration.
#[derive(Debug, Clone)]
pub struct Calibration<T> {
    /// Fitted shift, one value per time step.
    pub theta: ThetaSchedule<T>,
    /// Model minus market discount factor at every grid time `t_1..t_N`.
    pub residuals: Vec<T>,
}

impl<T: Real> Calibration<T> {
    /// Largest absolute residual.
    pub fn max_residual(&self) -> T {
        self.residuals.iter().fold(T::zero(), |m, r| m.max(r.abs()))
    }
}

/// Settings of the bracketing search used by [`calibrate_theta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSearch {
    /// Hard bounds on θ.
    pub bounds: (f64, f64),
    /// Initial half-width of the bracket around the previous θ.
    pub initial_width: f64,
    /// Absolute tolerance on the discount-factor residual.
    pub tolerance: f64,
    /// Iteration cap per step.
    pub max_iter: usize,
}

impl Default for RootSearch {
    fn default() -> Self {
        Self { bounds: (-100.0, 100.0), initial_width: 0.05, tolerance: 1e-12, max_iter: 200 }
    }
}

struct Stop {
    tolerance: f64,
    max_iter: usize,
}

impl Convergency<f64> for Stop {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() <= self.tolerance * 1e-2
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= 1e-15 * x1.abs().max(1.0)
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= self.max_iter
    }
}

/// Finds a sign change of the decreasing function `g` around `guess`.
fn bracket(g: &mut impl FnMut(f64) -> f64, guess: f64, search: &RootSearch) -> Option<(f64, f64)> {
    let (lo_bound, hi_bound) = search.bounds;
    let mut width = search.initial_width;
    let guess = guess.clamp(lo_bound, hi_bound);
    loop {
        let lo = (guess - width).max(lo_bound);
        let hi = (guess + width).min(hi_bound);
        let (glo, ghi) = (g(lo), g(hi));
        if glo.is_finite() && ghi.is_finite() && glo.signum() != ghi.signum() || glo == 0.0 || ghi == 0.0 {
            return Some((lo, hi));
        }
        if lo == lo_bound && hi == hi_bound {
            return None;
        }
        width *= 4.0;
    }
}

fn bisect(g: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, search: &RootSearch) -> f64 {
    let mut glo = g(lo);
    for _ in 0..search.max_iter {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= search.tolerance * 1e-2 || hi - lo <= 1e-15 {
            return mid;
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fits a piecewise-constant θ step by step so that model bond prices from
/// `grid.anchor()` match `curve` at every time of `time_grid`.
///
/// Each θ_n solves `a·exp((Q_n(θ) − D)Δ_n)·1 = P*(0, t_n)`, where `a` is the
/// accumulated row vector `e_j ∏_{k<n} exp((Q_k − D)Δ_k)`. For shifted
/// models `R = Y + θ(t)` the grid discretises `Y`, `Q` does not depend on θ
/// and the step price is `exp(−θΔ_n)·a·exp((Q − D)Δ_n)·1`; the result then
/// matches [`calibrate_theta_shifted`] up to the root-search tolerance.
pub fn calibrate_theta<T: Real>(
    model: &ShortRateModel<T>,
    grid: &Grid<T>,
    curve: &DiscountCurve<T>,
    time_grid: &TimeGrid<T>,
    policy: GeneratorPolicy,
    search: &RootSearch,
) -> Result<Calibration<T>> {
    let shifted = model.is_shifted();
    if !model.uses_theta() && !shifted {
        return Err(Error::Unsupported("step-by-step calibration needs a model whose drift takes θ".into()));
    }
    let state_model = model.auxiliary().unwrap_or_else(|| model.clone());
    // Discount factor contributed by the shift itself over one step.
    let shift_factor = |theta: f64, dt: T| if shifted { T::lit((-theta * dt.as_f64()).exp()) } else { T::one() };
    let times = time_grid.times();
    let rates = grid.nodes();
    let m = grid.len();
    let ones = vec![T::one(); m];
    let mut a = vec![T::zero(); m];
    a[grid.anchor()] = T::one();
    let mut thetas = Vec::with_capacity(time_grid.steps());
    let mut residuals = Vec::with_capacity(time_grid.steps());
    let mut guess = 0.0;
    for n in 1..=time_grid.steps() {
        let (t0, dt) = (times[n - 1], time_grid.dt(n));
        let target = curve.discount(times[n]);
        let mut failure: Option<Error> = None;
        let mut g = |theta: f64| -> f64 {
            let price = rate_generator_with_theta(&state_model, grid, T::lit(theta), t0, GeneratorPolicy::Permissive)
                .and_then(|(q, _)| expm_action(&q.minus_diagonal(rates), dt, &ones, 1))
                .map(|v| a.iter().zip(&v).map(|(&x, &y)| x * y).sum::<T>() * shift_factor(theta, dt));
            match price {
                Ok(p) => (p - target).as_f64(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let fail = |reason: String| Error::Calibration { t: times[n].as_f64(), reason };
        let (lo, hi) = bracket(&mut g, guess, search)
            .ok_or_else(|| fail(format!("no sign change of the residual within {:?}", search.bounds)))?;
        let mut stop = Stop { tolerance: search.tolerance, max_iter: search.max_iter };
        let theta = match find_root_brent(lo, hi, &mut g, &mut stop) {
            Ok(x) if g(x).abs() <= search.tolerance => x,
            _ => {
                log::warn!("Brent search failed at t = {}; falling back to bisection", times[n]);
                bisect(&mut g, lo, hi, search)
            }
        };
        if let Some(e) = failure {
            return Err(fail(e.to_string()));
        }
        let (q, _) = rate_generator_with_theta(&state_model, grid, T::lit(theta), t0, policy)?;
        let dq = q.minus_diagonal(rates);
        let factor = shift_factor(theta, dt);
        a = expm_action(&dq.transpose(), dt, &a, 1)?.into_iter().map(|x| x * factor).collect();
        let price: T = a.iter().copied().sum();
        let residual = price - target;
        if residual.abs().as_f64() > search.tolerance.max(1e3 * T::epsilon().as_f64()) {
            return Err(fail(format!("residual {residual} above tolerance")));
        }
        residuals.push(residual);
        thetas.push(T::lit(theta));
        guess = theta;
    }
    Ok(Calibration { theta: ThetaSchedule::on_grid(time_grid, thetas)?, residuals })
}

/// Closed-form θ for shifted models `R = Y + θ(t)`.
///
/// `aux` must be the homogeneous chain of `Y` (no rate shift attached);
/// `state` is the index of `Y_0`. One discounted kernel per distinct step
/// length is exponentiated and reused.
pub fn calibrate_theta_shifted<T: Real>(
    aux: &PiecewiseGenerator<T>,
    curve: &DiscountCurve<T>,
    state: usize,
) -> Result<Calibration<T>> {
    if !aux.is_homogeneous() || aux.rate_shift().is_some() {
        return Err(Error::Unsupported(
            "closed-form calibration needs the unshifted homogeneous auxiliary chain".into(),
        ));
    }
    if state >= aux.dim() {
        return Err(invalid("state_index", "outside the chain"));
    }
    let time_grid = aux.time_grid();
    let times = time_grid.times();
    let dq = aux.discounted_generator(1).to_dense();
    let mut kernels: HashMap<u64, DenseMatrix<T>> = HashMap::new();
    let mut a = vec![T::zero(); aux.dim()];
    a[state] = T::one();
    let mut p_prev = T::one();
    let mut thetas = Vec::with_capacity(time_grid.steps());
    for n in 1..=time_grid.steps() {
        let dt = time_grid.dt(n);
        let key = dt.as_f64().to_bits();
        let kernel = match kernels.entry(key) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(expm_dense(&dq.scaled(dt))?),
        };
        a = kernel.vecmat(&a);
        let p_aux: T = a.iter().copied().sum();
        let ratio = (curve.discount(times[n]) / curve.discount(times[n - 1])) * (p_prev / p_aux);
        if !(ratio > T::zero()) || !ratio.is_finite() {
            return Err(Error::Calibration {
                t: times[n].as_f64(),
                reason: format!("non-positive ratio {ratio} between market and auxiliary discounts"),
            });
        }
        thetas.push(-ratio.ln() / dt);
        p_prev = p_aux;
    }
    let theta = ThetaSchedule::on_grid(time_grid, thetas)?;
    let shifted = aux.clone().with_rate_shift(theta.clone());
    let mut v = vec![T::zero(); aux.dim()];
    v[state] = T::one();
    let mut residuals = Vec::with_capacity(time_grid.steps());
    for (n, &t) in times.iter().enumerate().skip(1) {
        v = shifted.discounted_step_left(n, &v)?;
        residuals.push(v.iter().copied().sum::<T>() - curve.discount(t));
    }
    Ok(Calibration { theta, residuals })
}
