// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant functions of time.
//!
//! A [`StepFunction`] with knots `t_1 < t_2 < ... < t_N` takes the value
//! `v_n` on `[t_{n-1}, t_n)` with `t_0 = 0`. It backs the drift shift
//! `θ(t)`, dividend yields and credit spreads.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Piecewise-constant function on `[0, t_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction<T> {
    ends: Vec<T>,
    values: Vec<T>,
}

/// Deterministic drift shift of the time-inhomogeneous models.
pub type ThetaSchedule<T> = StepFunction<T>;

impl<T: Real> StepFunction<T> {
    /// Builds a step function from `(t_n, v_n)` knots.
    pub fn new(knots: &[(T, T)]) -> Result<Self> {
        if knots.is_empty() {
            return Err(invalid("knots", "at least one knot is required"));
        }
        let mut prev = T::zero();
        for &(t, v) in knots {
            if !(t > prev) {
                return Err(invalid("knots", "knot times must be positive and strictly increasing"));
            }
            if !v.is_finite() {
                return Err(invalid("knots", "knot values must be finite"));
            }
            prev = t;
        }
        Ok(Self { ends: knots.iter().map(|k| k.0).collect(), values: knots.iter().map(|k| k.1).collect() })
    }

    /// Function equal to `v` on `[0, ∞)`.
    pub fn constant(v: T) -> Self {
        Self { ends: vec![T::infinity()], values: vec![v] }
    }

    /// Step function on the uniform grid `t_n = n·dt`, `n = 1..=values.len()`.
    pub fn uniform(dt: T, values: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) || values.is_empty() {
            return Err(invalid("dt", "uniform schedule needs dt > 0 and at least one value"));
        }
        let ends = (1..=values.len()).map(|n| T::from_count(n) * dt).collect();
        Ok(Self { ends, values })
    }

    /// Step function with value `values[n−1]` on step `n` of `grid`.
    pub fn on_grid(grid: &TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(Error::Dimension { expected: grid.steps(), found: values.len() });
        }
        let knots: Vec<(T, T)> = grid.times()[1..].iter().copied().zip(values).collect();
        Self::new(&knots)
    }

    /// Last knot (`+∞` for constants).
    pub fn horizon(&self) -> T {
        *self.ends.last().expect("non-empty")
    }

    /// Knot times.
    pub fn ends(&self) -> &[T] {
        &self.ends
    }

    /// Knot values.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn tolerance(t: T) -> T {
        T::epsilon() * T::lit(64.0) * t.abs().max(T::one())
    }

    /// Index of the interval containing `t`; times within rounding of a knot
    /// belong to the interval that starts there.
    fn index(&self, t: T) -> Option<usize> {
        let probe = t + Self::tolerance(t);
        let idx = self.ends.partition_point(|&e| e <= probe);
        (idx < self.ends.len()).then_some(idx)
    }

    /// Value at `t`.
    pub fn value(&self, t: T) -> Result<T> {
        self.index(t)
            .map(|i| self.values[i])
            .ok_or(Error::ScheduleExhausted { t: t.as_f64(), horizon: self.horizon().as_f64() })
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: T, b: T) -> Result<T> {
        if b < a {
            return Ok(-self.integral(b, a)?);
        }
        if b > self.horizon() + Self::tolerance(b) {
            return Err(Error::ScheduleExhausted { t: b.as_f64(), horizon: self.horizon().as_f64() });
        }
        let mut acc = T::zero();
        let mut start = T::zero();
        for (&end, &v) in self.ends.iter().zip(&self.values) {
            let lo = start.max(a);
            let hi = end.min(b);
            if hi > lo {
                acc = acc + v * (hi - lo);
            }
            if end >= b {
                break;
            }
            start = end;
        }
        Ok(acc)
    }
}


/// Pricing time grid `0 = t_0 < t_1 < … < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    times: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    /// Wraps explicit times; the first must be zero.
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.len() < 2 || times[0] != T::zero() {
            return Err(invalid("time_grid", "needs t_0 = 0 and at least one step"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(invalid("time_grid", "times must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    /// Steps of length `dt` up to `horizon`; a shorter final step absorbs any remainder.
    pub fn uniform(dt: T, horizon: T) -> Result<Self> {
        if !(dt > T::zero()) || !(horizon > T::zero()) {
            return Err(invalid("dt", "step and horizon must be positive"));
        }
        let ratio = horizon / dt;
        let n = (ratio - T::lit(1e-9) * ratio.max(T::one())).ceil().to_usize().unwrap_or(0).max(1);
        let mut times: Vec<T> = (0..n).map(|k| dt * T::from_count(k)).collect();
        times.push(horizon);
        Self::new(times)
    }

    /// Inserts extra times (e.g. curve knots); points within `1e-9·dt` of an
    /// existing time are merged into it. Times beyond the horizon are ignored.
    pub fn with_times(&self, extra: &[T]) -> Result<Self> {
        let tol = T::lit(1e-9) * self.min_step();
        let mut times = self.times.clone();
        for &t in extra {
            if !(t > T::zero()) || t > *times.last().expect("non-empty") + tol {
                continue;
            }
            let pos = times.partition_point(|&s| s < t);
            let close = |i: usize| i < times.len() && (times[i] - t).abs() <= tol;
            if close(pos) || (pos > 0 && close(pos - 1)) {
                continue;
            }
            times.insert(pos, t);
        }
        Self::new(times)
    }

    /// All times.
    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Final time `t_N`.
    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty")
    }

    /// Length of step `n` (interval `[t_{n−1}, t_n)`, `1 ≤ n ≤ N`).
    pub fn dt(&self, n: usize) -> T {
        self.times[n] - self.times[n - 1]
    }

    /// Smallest step.
    pub fn min_step(&self) -> T {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(T::infinity(), T::min)
    }

    /// Whether all steps have the same length (within `1e-9` relative).
    pub fn is_uniform(&self) -> bool {
        let d0 = self.dt(1);
        self.times.windows(2).all(|w| ((w[1] - w[0]) - d0).abs() <= T::lit(1e-9) * d0)
    }

    /// Index of the grid time equal to `t` (within `1e-9·min_step`).
    pub fn index_of(&self, t: T) -> Result<usize> {
        let i = self.nearest_index(t);
        if (self.times[i] - t).abs() <= T::lit(1e-9) * self.min_step().max(T::epsilon()) {
            Ok(i)
        } else {
            Err(Error::Misaligned { t: t.as_f64(), dt: self.min_step().as_f64() })
        }
    }

    /// Index of the grid time closest to `t`.
    pub fn nearest_index(&self, t: T) -> usize {
        let pos = self.times.partition_point(|&s| s < t);
        if pos == 0 {
            0
        } else if pos >= self.times.len() {
            self.times.len() - 1
        } else if (t - self.times[pos - 1]) <= (self.times[pos] - t) {
            pos - 1
        } else {
            pos
        }
    }
}
