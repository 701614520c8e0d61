// SPDX-License-Identifier: Apache-2.0

//! One-factor pricing on the rate chain: zero-coupon and coupon bonds, bond
//! options and bonds with embedded call/put features.

use crate::ctmc::PiecewiseGenerator;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::schedule::TimeGrid;

/// Fixed-coupon bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondSpec<T> {
    /// Face value `F`.
    pub face: T,
    /// Annual coupon rate `α` (fraction of face).
    pub coupon_rate: T,
    /// Coupons per year; ignored when the coupon rate is zero.
    pub frequency: u32,
    /// Maturity `T` in years.
    pub maturity: T,
}

impl<T: Real> BondSpec<T> {
    /// Zero-coupon bond paying `face` at `maturity`.
    pub fn zero_coupon(face: T, maturity: T) -> Self {
        Self { face, coupon_rate: T::zero(), frequency: 1, maturity }
    }

    /// Validates the contract terms.
    pub fn validate(&self) -> Result<()> {
        if !(self.face > T::zero()) {
            return Err(invalid("face", "must be positive"));
        }
        if !(self.coupon_rate >= T::zero()) {
            return Err(invalid("coupon_rate", "must be non-negative"));
        }
        if !(self.maturity > T::zero()) {
            return Err(invalid("maturity", "must be positive"));
        }
        if self.coupon_rate > T::zero() && self.frequency == 0 {
            return Err(invalid("frequency", "coupon-bearing bonds need a positive frequency"));
        }
        Ok(())
    }

    /// Coupon paid on each coupon date, `F·α/frequency`.
    pub fn coupon_amount(&self) -> T {
        if self.coupon_rate == T::zero() {
            T::zero()
        } else {
            self.face * self.coupon_rate / T::from_count(self.frequency as usize)
        }
    }

    /// Coupon period in years.
    pub fn period(&self) -> T {
        T::one() / T::from_count(self.frequency.max(1) as usize)
    }

    /// Coupon dates `T − k·period > 0`, ascending (empty for zero coupons).
    pub fn coupon_dates(&self) -> Vec<T> {
        if self.coupon_amount() == T::zero() {
            return Vec::new();
        }
        let p = self.period();
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let t = self.maturity - p * T::from_count(k);
            if t <= p * T::lit(1e-9) {
                break;
            }
            out.push(t);
            k += 1;
        }
        out.reverse();
        out
    }

    /// Coupon amount due at each time-grid index (snapped to the nearest grid time).
    pub fn coupon_flows(&self, grid: &TimeGrid<T>) -> Result<Vec<T>> {
        let mut flows = vec![T::zero(); grid.times().len()];
        let c = self.coupon_amount();
        for t in self.coupon_dates() {
            flows[snap(grid, t)?] = flows[snap(grid, t)?] + c;
        }
        Ok(flows)
    }

    /// Accrued coupon at time `t` (linear in the current period; zero on coupon dates).
    pub fn accrued(&self, t: T) -> T {
        let c = self.coupon_amount();
        if c == T::zero() {
            return T::zero();
        }
        let p = self.period();
        let first = self.maturity - p * ((self.maturity / p) - T::lit(1e-9)).floor();
        let start = first - p;
        let since = t - start;
        let frac = since / p - (since / p + T::lit(1e-9)).floor();
        c * frac.max(T::zero())
    }
}

/// Snaps `t` to the nearest grid index, warning when the shift exceeds half a step.
fn snap<T: Real>(grid: &TimeGrid<T>, t: T) -> Result<usize> {
    if t > grid.horizon() * (T::one() + T::lit(1e-9)) {
        return Err(Error::Misaligned { t: t.as_f64(), dt: grid.min_step().as_f64() });
    }
    let i = grid.nearest_index(t);
    let gap = (grid.times()[i] - t).abs();
    let local = if i > 0 { grid.dt(i) } else { grid.dt(1) };
    if gap > local / T::lit(2.0) {
        log::warn!("date {t} snapped to grid time {} (more than half a step)", grid.times()[i]);
    }
    Ok(i)
}

fn state_check<T: Real>(gen: &PiecewiseGenerator<T>, state: usize) -> Result<()> {
    if state >= gen.dim() {
        return Err(invalid("state_index", format!("{state} outside a chain of {} states", gen.dim())));
    }
    Ok(())
}

/// Zero-coupon bond prices `P_k(t_i, T)` for every state `k`.
pub fn zcb_vector<T: Real>(gen: &PiecewiseGenerator<T>, t: T, maturity: T) -> Result<Vec<T>> {
    if maturity < t {
        return Err(invalid("maturity", format!("maturity {maturity} precedes valuation time {t}")));
    }
    let grid = gen.time_grid();
    let i = grid.index_of(t)?;
    let n = grid.index_of(maturity)?;
    gen.propagate(i, n, &vec![T::one(); gen.dim()], 1)
}

/// Price at `t` of a unit zero-coupon bond maturing at `maturity`, from state `state`.
pub fn price_zcb<T: Real>(gen: &PiecewiseGenerator<T>, t: T, maturity: T, state: usize) -> Result<T> {
    state_check(gen, state)?;
    Ok(zcb_vector(gen, t, maturity)?[state])
}

/// Values at grid index `from` of the bond's remaining cash flows strictly after
/// `from` (coupons and face), for every state.
pub fn bond_cash_flow_vector<T: Real>(gen: &PiecewiseGenerator<T>, bond: &BondSpec<T>, from: usize) -> Result<Vec<T>> {
    bond.validate()?;
    let grid = gen.time_grid();
    let n_end = grid.index_of(bond.maturity)?;
    let flows = bond.coupon_flows(grid)?;
    let m = gen.dim();
    let mut v = vec![bond.face + flows[n_end]; m];
    for n in (from + 1..=n_end).rev() {
        v = gen.discounted_step_action(n, &v, 1)?;
        if n - 1 > from && flows[n - 1] != T::zero() {
            v.iter_mut().for_each(|x| *x = *x + flows[n - 1]);
        }
    }
    Ok(v)
}

/// Price of a coupon bond at time zero from state `state`.
pub fn price_bond<T: Real>(gen: &PiecewiseGenerator<T>, bond: &BondSpec<T>, state: usize) -> Result<T> {
    state_check(gen, state)?;
    Ok(bond_cash_flow_vector(gen, bond, 0)?[state])
}

/// Call or put.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionFlavor {
    /// Pays `max(P − K, 0)`.
    Call,
    /// Pays `max(K − P, 0)`.
    Put,
}

impl OptionFlavor {
    /// Payoff `h(x)`.
    pub fn payoff<T: Real>(self, x: T, strike: T) -> T {
        match self {
            Self::Call => (x - strike).max(T::zero()),
            Self::Put => (strike - x).max(T::zero()),
        }
    }
}

/// European option on a bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondOptionSpec<T> {
    /// Option expiry `t_{n₂}`.
    pub expiry: T,
    /// Strike `K`.
    pub strike: T,
    /// Call or put.
    pub flavor: OptionFlavor,
    /// Underlying bond (coupons after the expiry count towards its value).
    pub underlying: BondSpec<T>,
}

/// Price at `t` of a European bond option from state `state`.
pub fn price_bond_option<T: Real>(
    gen: &PiecewiseGenerator<T>,
    t: T,
    spec: &BondOptionSpec<T>,
    state: usize,
) -> Result<T> {
    state_check(gen, state)?;
    if !(spec.strike >= T::zero()) {
        return Err(invalid("strike", "must be non-negative"));
    }
    if !(t < spec.expiry && spec.expiry < spec.underlying.maturity) {
        return Err(invalid("expiry", "need t < expiry < bond maturity"));
    }
    let grid = gen.time_grid();
    let i = grid.index_of(t)?;
    let n2 = grid.index_of(spec.expiry)?;
    let bond = bond_cash_flow_vector(gen, &spec.underlying, n2)?;
    let h: Vec<T> = bond.iter().map(|&p| spec.flavor.payoff(p, spec.strike)).collect();
    Ok(gen.propagate(i, n2, &h, 1)?[state])
}

/// Constant strike over a closed exercise window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExerciseWindow<T> {
    /// First exercise time.
    pub start: T,
    /// Last exercise time.
    pub end: T,
    /// Strike paid on exercise.
    pub price: T,
}

impl<T: Real> ExerciseWindow<T> {
    fn contains(&self, t: T) -> bool {
        let tol = T::lit(1e-9) * T::one().max(self.end.abs());
        t >= self.start - tol && t <= self.end + tol
    }
}

/// Embedded call and put features of a bond.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddedOptionSchedule<T> {
    /// Issuer call windows; outside them the bond is not callable.
    pub call: Vec<ExerciseWindow<T>>,
    /// Holder put windows; outside them the put price is zero.
    pub put: Vec<ExerciseWindow<T>>,
    /// Whether the call price is increased by accrued interest.
    pub accrued_on_call: bool,
}

impl<T: Real> EmbeddedOptionSchedule<T> {
    /// Call price at `t`; `None` when the call cannot be exercised.
    pub fn call_price(&self, t: T) -> Option<T> {
        self.call.iter().filter(|w| w.contains(t)).map(|w| w.price).reduce(T::min)
    }

    /// Put price at `t`; zero when the put cannot be exercised.
    pub fn put_price(&self, t: T) -> T {
        self.put.iter().filter(|w| w.contains(t)).map(|w| w.price).fold(T::zero(), T::max)
    }
}

/// Callable/putable bond value by backward induction, for every state at time zero.
///
/// The coupon paid at `t_{n+1}` is added to `V_{n+1}` before discounting; the
/// call cap (plus accrued interest when requested) and the put floor are then
/// applied element-wise.
pub fn callable_putable_vector<T: Real>(
    gen: &PiecewiseGenerator<T>,
    bond: &BondSpec<T>,
    sched: &EmbeddedOptionSchedule<T>,
) -> Result<Vec<T>> {
    bond.validate()?;
    let grid = gen.time_grid();
    let times = grid.times();
    let n_end = grid.index_of(bond.maturity)?;
    for w in sched.call.iter().chain(&sched.put) {
        if w.start > w.end {
            return Err(invalid("window", "start after end"));
        }
        grid.index_of(w.start.max(T::zero()).min(bond.maturity))?;
        grid.index_of(w.end.min(bond.maturity))?;
    }
    let flows = bond.coupon_flows(grid)?;
    let m = gen.dim();
    let apply = |v: &mut [T], n: usize| {
        let t = times[n];
        if let Some(k) = sched.call_price(t) {
            let cap = if sched.accrued_on_call && n < n_end { k + bond.accrued(t) } else { k };
            v.iter_mut().for_each(|x| *x = x.min(cap));
        }
        let floor = sched.put_price(t);
        if floor > T::zero() {
            v.iter_mut().for_each(|x| *x = x.max(floor));
        }
    };
    let mut v = vec![bond.face; m];
    apply(&mut v, n_end);
    for n in (1..=n_end).rev() {
        if flows[n] != T::zero() {
            v.iter_mut().for_each(|x| *x = *x + flows[n]);
        }
        v = gen.discounted_step_action(n, &v, 1)?;
        apply(&mut v, n - 1);
    }
    Ok(v)
}

/// Callable/putable bond price at time zero from state `state`.
pub fn price_callable_putable<T: Real>(
    gen: &PiecewiseGenerator<T>,
    bond: &BondSpec<T>,
    sched: &EmbeddedOptionSchedule<T>,
    state: usize,
) -> Result<T> {
    state_check(gen, state)?;
    Ok(callable_putable_vector(gen, bond, sched)?[state])
}

/// Pairwise convergence rates `ln(e₂/e₁)/ln(m₁/m₂)` of consecutive entries.
///
/// Entries with a zero error are skipped with a warning.
pub fn estimate_convergence_rate(errors: &[(usize, f64)]) -> Result<Vec<f64>> {
    let kept: Vec<(usize, f64)> = errors
        .iter()
        .copied()
        .filter(|&(m, e)| {
            let ok = e > 0.0 && e.is_finite();
            if !ok {
                log::warn!("error at m = {m} is {e}; excluded from the rate estimate");
            }
            ok
        })
        .collect();
    if kept.len() < 2 {
        return Err(invalid("errors", "need at least two positive errors"));
    }
    Ok(kept.windows(2).map(|w| (w[1].1 / w[0].1).ln() / (w[0].0 as f64 / w[1].0 as f64).ln()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupon_schedule() {
        let b = BondSpec { face: 100.0f64, coupon_rate: 0.05, frequency: 2, maturity: 4.0 };
        assert_eq!(b.coupon_amount(), 2.5);
        let d = b.coupon_dates();
        assert_eq!(d.len(), 8);
        assert!((d[0] - 0.5).abs() < 1e-12);
        assert!(b.accrued(2.0).abs() < 1e-9);
        assert!((b.accrued(2.25) - 1.25).abs() < 1e-9);
    }

    #[test]
    fn rates_from_errors() {
        let r = estimate_convergence_rate(&[(50, 7.24e-6), (100, 1.82e-6)]).unwrap();
        assert!((r[0] - 1.99).abs() < 0.01);
        let r = estimate_convergence_rate(&[(50, 1e-3), (100, 1e-3)]).unwrap();
        assert_eq!(r[0], 0.0);
        let r = estimate_convergence_rate(&[(10, 16e-4), (20, 4e-4), (40, 1e-4)]).unwrap();
        assert!(r.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }
}
