// SPDX-License-Identifier: Apache-2.0

//! Generator assembly and transition kernels of the rate chain.

use crate::error::{Error, Result};
use crate::expm::{expm_action, expm_dense};
use crate::grid::Grid;
use crate::linalg::{DenseMatrix, Tridiagonal};
use crate::models::ShortRateModel;
use crate::scalar::Real;
use crate::schedule::{StepFunction, TimeGrid};

/// What to do when a generator row has a negative off-diagonal rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorPolicy {
    /// Reject the grid with an error naming the node.
    #[default]
    Strict,
    /// Keep the raw entries and count them in [`PiecewiseGenerator::negative_rates`].
    ///
    /// The result is then not a Markov generator; use only for grid studies
    /// on coarse grids where the drift overwhelms the diffusion at the edges.
    Permissive,
}

/// Location of the first negative rate found during assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeRate {
    /// Row index.
    pub node: usize,
    /// Offending rate.
    pub rate: f64,
}

/// Assembles the tridiagonal generator of a birth-death chain on `nodes`
/// matching drift `mu[i]` and variance `var[i]` at every node.
///
/// Interior rows use the non-uniform central scheme; the boundary rows move
/// inward at rate `|μ|/δ`. Returns the matrix, the number of negative
/// off-diagonal rates and the first one found.
pub fn assemble_birth_death<T: Real>(
    nodes: &[T],
    mu: &[T],
    var: &[T],
) -> (Tridiagonal<T>, usize, Option<NegativeRate>) {
    let m = nodes.len();
    let mut q = Tridiagonal::zeros(m);
    if m < 2 {
        return (q, 0, None);
    }
    let mut negatives = 0usize;
    let mut first = None;
    let mut check = |node: usize, rate: T| {
        if rate < T::zero() {
            negatives += 1;
            if first.is_none() {
                first = Some(NegativeRate { node, rate: rate.as_f64() });
            }
        }
    };
    let up0 = mu[0].abs() / (nodes[1] - nodes[0]);
    q.upper[0] = up0;
    q.diag[0] = -up0;
    for i in 1..m - 1 {
        let dl = nodes[i] - nodes[i - 1];
        let dr = nodes[i + 1] - nodes[i];
        let down = (var[i] - dr * mu[i]) / (dl * (dl + dr));
        let up = (var[i] + dl * mu[i]) / (dr * (dl + dr));
        check(i, down);
        check(i, up);
        q.lower[i - 1] = down;
        q.upper[i] = up;
        q.diag[i] = -(down + up);
    }
    let dn = mu[m - 1].abs() / (nodes[m - 1] - nodes[m - 2]);
    q.lower[m - 2] = dn;
    q.diag[m - 1] = -dn;
    (q, negatives, first)
}

/// Rate generator at time `t` (drift frozen at `t`), honouring `policy`.
pub fn rate_generator_at<T: Real>(
    model: &ShortRateModel<T>,
    grid: &Grid<T>,
    t: T,
    policy: GeneratorPolicy,
) -> Result<(Tridiagonal<T>, usize)> {
    let nodes = grid.nodes();
    let mu = nodes.iter().map(|&r| model.drift(t, r)).collect::<Result<Vec<T>>>()?;
    generator_from_drift(model, grid, &mu, policy)
}

/// Rate generator with the drift shift fixed to `theta` (used by calibration).
pub fn rate_generator_with_theta<T: Real>(
    model: &ShortRateModel<T>,
    grid: &Grid<T>,
    theta: T,
    t: T,
    policy: GeneratorPolicy,
) -> Result<(Tridiagonal<T>, usize)> {
    let mu: Vec<T> = grid.nodes().iter().map(|&r| model.drift_with_theta(theta, t, r)).collect();
    generator_from_drift(model, grid, &mu, policy)
}

fn generator_from_drift<T: Real>(
    model: &ShortRateModel<T>,
    grid: &Grid<T>,
    mu: &[T],
    policy: GeneratorPolicy,
) -> Result<(Tridiagonal<T>, usize)> {
    let nodes = grid.nodes();
    let var: Vec<T> = nodes.iter().map(|&r| model.volatility(r).powi(2)).collect();
    if var.iter().all(|&v| v == T::zero()) {
        return Err(Error::Unsupported("a zero-volatility model has no diffusion to discretise".into()));
    }
    let (q, negatives, first) = assemble_birth_death(nodes, mu, &var);
    if let (GeneratorPolicy::Strict, Some(bad)) = (policy, first) {
        return Err(Error::NegativeRate { node: bad.node, state: nodes[bad.node].as_f64(), rate: bad.rate });
    }
    Ok((q, negatives))
}

/// Sequence of generators, one per step of a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct PiecewiseGenerator<T> {
    time_grid: TimeGrid<T>,
    generators: Vec<Tridiagonal<T>>,
    rates: Vec<T>,
    shift: Option<StepFunction<T>>,
    negative_rates: usize,
}

impl<T: Real> PiecewiseGenerator<T> {
    /// Builds the generators of `model` on `grid` for every step of `time_grid`.
    ///
    /// Time-homogeneous models store a single matrix. For shifted models
    /// (`R = Y + θ(t)`) `grid` discretises `Y`: the chain is the homogeneous
    /// auxiliary chain and θ enters as a scalar discount shift.
    pub fn build(
        model: &ShortRateModel<T>,
        grid: &Grid<T>,
        time_grid: &TimeGrid<T>,
        policy: GeneratorPolicy,
    ) -> Result<Self> {
        if let Some(aux) = model.auxiliary() {
            let base = Self::build(&aux, grid, time_grid, policy)?;
            return Ok(match model.theta() {
                Some(theta) => base.with_rate_shift(theta.clone()),
                None => base,
            });
        }
        let times = time_grid.times();
        let mut negative_rates = 0;
        let generators = if model.is_time_homogeneous() {
            let (q, neg) = rate_generator_at(model, grid, T::zero(), policy)?;
            negative_rates += neg;
            vec![q]
        } else {
            let mut out = Vec::with_capacity(time_grid.steps());
            for n in 1..=time_grid.steps() {
                let (q, neg) = rate_generator_at(model, grid, times[n - 1], policy)?;
                negative_rates += neg;
                out.push(q);
            }
            out
        };
        Ok(Self { time_grid: time_grid.clone(), generators, rates: grid.nodes().to_vec(), shift: None, negative_rates })
    }

    /// Adds a deterministic shift to the discount rate: `D_n = D + θ_n I`.
    pub fn with_rate_shift(mut self, shift: StepFunction<T>) -> Self {
        self.shift = Some(shift);
        self
    }

    /// Deterministic discount shift, if any.
    pub fn rate_shift(&self) -> Option<&StepFunction<T>> {
        self.shift.as_ref()
    }

    /// `exp(−∫ θ)` between grid indices `from` and `to`.
    pub fn shift_discount(&self, from: usize, to: usize) -> Result<T> {
        match &self.shift {
            None => Ok(T::one()),
            Some(s) => {
                let times = self.time_grid.times();
                Ok((-s.integral(times[from], times[to])?).exp())
            }
        }
    }

    /// Wraps precomputed generators (one, or one per step).
    pub fn from_parts(time_grid: TimeGrid<T>, generators: Vec<Tridiagonal<T>>, rates: Vec<T>) -> Result<Self> {
        if generators.len() != 1 && generators.len() != time_grid.steps() {
            return Err(Error::Dimension { expected: time_grid.steps(), found: generators.len() });
        }
        if generators.iter().any(|g| g.dim() != rates.len()) {
            return Err(Error::Dimension { expected: rates.len(), found: generators[0].dim() });
        }
        Ok(Self { time_grid, generators, rates, shift: None, negative_rates: 0 })
    }

    /// Whether every step shares one generator.
    pub fn is_homogeneous(&self) -> bool {
        self.generators.len() == 1
    }

    /// Pricing time grid.
    pub fn time_grid(&self) -> &TimeGrid<T> {
        &self.time_grid
    }

    /// Generator on step `n` (`1 ≤ n ≤ N`).
    pub fn generator(&self, n: usize) -> &Tridiagonal<T> {
        if self.is_homogeneous() {
            &self.generators[0]
        } else {
            &self.generators[n - 1]
        }
    }

    /// Discount rates `D` (grid nodes).
    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    /// Chain dimension.
    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    /// Number of negative off-diagonal rates accepted under [`GeneratorPolicy::Permissive`].
    pub fn negative_rates(&self) -> usize {
        self.negative_rates
    }

    /// `Q_n − D` for step `n`.
    pub fn discounted_generator(&self, n: usize) -> Tridiagonal<T> {
        self.generator(n).minus_diagonal(&self.rates)
    }

    /// `v ← exp((Q_n − D)Δ_n)·v` for a block `v` of `ncols` columns.
    pub fn discounted_step_action(&self, n: usize, v: &[T], ncols: usize) -> Result<Vec<T>> {
        let mut out = exp_apply(&self.discounted_generator(n), self.time_grid.dt(n), v, ncols)?;
        scale(&mut out, self.shift_discount(n - 1, n)?);
        Ok(out)
    }

    /// `v ← exp(Q_n Δ_n)·v` (no discounting).
    pub fn step_action(&self, n: usize, v: &[T], ncols: usize) -> Result<Vec<T>> {
        exp_apply(self.generator(n), self.time_grid.dt(n), v, ncols)
    }

    /// Row-vector step `a ← a·exp((Q_n − D)Δ_n)`.
    pub fn discounted_step_left(&self, n: usize, a: &[T]) -> Result<Vec<T>> {
        let mut out = expm_action(&self.discounted_generator(n).transpose(), self.time_grid.dt(n), a, 1)?;
        scale(&mut out, self.shift_discount(n - 1, n)?);
        Ok(out)
    }

    /// Applies `∏_{n=from+1}^{to} exp((Q_n − D)Δ_n)` to `v` (right to left).
    ///
    /// Homogeneous chains use a single exponential over `t_to − t_from`.
    pub fn propagate(&self, from: usize, to: usize, v: &[T], ncols: usize) -> Result<Vec<T>> {
        if to < from {
            return Err(Error::InvalidParameter { name: "to", reason: "propagation end precedes start".into() });
        }
        if from == to {
            return Ok(v.to_vec());
        }
        if self.is_homogeneous() {
            let t = self.time_grid.times()[to] - self.time_grid.times()[from];
            let mut out = exp_apply(&self.discounted_generator(1), t, v, ncols)?;
            scale(&mut out, self.shift_discount(from, to)?);
            return Ok(out);
        }
        let mut cur = v.to_vec();
        for n in (from + 1..=to).rev() {
            cur = self.discounted_step_action(n, &cur, ncols)?;
        }
        Ok(cur)
    }
}

fn scale<T: Real>(v: &mut [T], s: T) {
    if s != T::one() {
        v.iter_mut().for_each(|x| *x = *x * s);
    }
}

/// `exp(t·M)·v`, choosing between uniformization and a dense exponential by
/// estimated flop count.
pub fn exp_apply<T: Real>(m: &Tridiagonal<T>, t: T, v: &[T], ncols: usize) -> Result<Vec<T>> {
    let n = m.dim() as f64;
    let lt = (m.max_exit_rate() * t).as_f64();
    let uniformization = 2.0 * (lt + 10.0) * 3.0 * n * ncols as f64;
    let squarings = (lt / 5.37).log2().max(0.0);
    let dense = (10.0 + squarings) * n * n * n + n * n * ncols as f64;
    if uniformization <= dense {
        expm_action(m, t, v, ncols)
    } else {
        let e = expm_dense(&m.to_dense().scaled(t))?;
        let x = DenseMatrix::from_row_major(m.dim(), ncols, v.to_vec())?;
        Ok(e.matmul(&x).as_slice().to_vec())
    }
}

fn row_sum_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(1e3))
}

/// `exp(Q·dt)` as a dense row-stochastic matrix.
///
/// Entries within `1e-12` of `[0, 1]` are clamped; rows must sum to one.
pub fn matrix_exponential<T: Real>(q: &Tridiagonal<T>, dt: T) -> Result<DenseMatrix<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive, got {dt}") });
    }
    let mut p = expm_dense(&q.to_dense().scaled(dt))?;
    let slack = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    for v in p.as_mut_slice() {
        if *v < -slack || *v > T::one() + slack {
            return Err(Error::Exponential(format!("transition probability {v} outside [0, 1]")));
        }
        *v = v.max(T::zero()).min(T::one());
    }
    let tol = row_sum_tolerance::<T>();
    for i in 0..p.rows() {
        let s: T = p.row(i).iter().copied().sum();
        if (s - T::one()).abs() > tol {
            return Err(Error::Exponential(format!("row {i} sums to {s}")));
        }
    }
    Ok(p)
}

/// `exp((Q − D)·dt)` as a dense matrix.
pub fn discounted_step<T: Real>(q: &Tridiagonal<T>, rates: &[T], dt: T) -> Result<DenseMatrix<T>> {
    if rates.len() != q.dim() {
        return Err(Error::Dimension { expected: q.dim(), found: rates.len() });
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive, got {dt}") });
    }
    expm_dense(&q.minus_diagonal(rates).to_dense().scaled(dt))
}
