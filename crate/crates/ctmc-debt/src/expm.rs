// SPDX-License-Identifier: Apache-2.0

//! Matrix exponentials.
//!
//! Dense matrices use scaling and squaring with a degree-13 Padé approximant.
//! The action `exp(tM)·X` on a block of vectors uses uniformization, which only
//! needs products with `M` and therefore works for large sparse generators.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Tridiagonal};
use crate::scalar::Real;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

/// `exp(a)` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm_dense<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension { expected: n, found: a.cols() });
    }
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(Error::Exponential("matrix has non-finite entries".into()));
    }
    if norm == T::zero() {
        return Ok(DenseMatrix::identity(n));
    }
    let ratio = norm.as_f64() / THETA13;
    let squarings = if ratio > 1.0 { ratio.log2().ceil() as i32 } else { 0 };
    if squarings > 1000 {
        return Err(Error::Exponential(format!("norm {norm} needs {squarings} squarings")));
    }
    let a = a.scaled(T::lit(0.5f64.powi(squarings)));
    let b = |k: usize| T::lit(PADE13[k]);
    let id = DenseMatrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let inner_u = a6.scaled(b(13)).add_scaled(&a4, b(11)).add_scaled(&a2, b(9));
    let u = a6.matmul(&inner_u).add_scaled(&a6, b(7)).add_scaled(&a4, b(5)).add_scaled(&a2, b(3)).add_scaled(&id, b(1));
    let u = a.matmul(&u);
    let inner_v = a6.scaled(b(12)).add_scaled(&a4, b(10)).add_scaled(&a2, b(8));
    let v = a6.matmul(&inner_v).add_scaled(&a6, b(6)).add_scaled(&a4, b(4)).add_scaled(&a2, b(2)).add_scaled(&id, b(0));

    let num = v.add_scaled(&u, T::one());
    let den = v.add_scaled(&u, -T::one());
    let mut r = den.solve(&num).map_err(|e| Error::Exponential(format!("{e} (scaling 2^-{squarings})")))?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    if r.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Exponential(format!("non-finite result after {squarings} squarings")));
    }
    Ok(r)
}

/// Linear operator with non-negative off-diagonal entries, as produced by a
/// generator minus a diagonal discount.
pub trait LinearOperator<T: Real>: Sync {
    /// Dimension.
    fn dim(&self) -> usize;
    /// Upper bound on `max_i(−M_ii)`, used as the uniformization rate.
    fn exit_rate(&self) -> T;
    /// `out = M · x` with `x` stored as `dim × ncols` row-major.
    fn apply_block(&self, x: &[T], ncols: usize, out: &mut [T]);
}

impl<T: Real> LinearOperator<T> for Tridiagonal<T> {
    fn dim(&self) -> usize {
        Tridiagonal::dim(self)
    }
    fn exit_rate(&self) -> T {
        self.max_exit_rate()
    }
    fn apply_block(&self, x: &[T], ncols: usize, out: &mut [T]) {
        Tridiagonal::apply_block(self, x, ncols, out)
    }
}

impl<T: Real> LinearOperator<T> for DenseMatrix<T> {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn exit_rate(&self) -> T {
        (0..self.rows()).fold(T::zero(), |m, i| m.max(-self[(i, i)]))
    }
    fn apply_block(&self, x: &[T], ncols: usize, out: &mut [T]) {
        let xm = DenseMatrix::from_row_major(self.cols(), ncols, x.to_vec()).expect("block shape");
        out.copy_from_slice(self.matmul(&xm).as_slice());
    }
}

/// Largest uniformization argument `λΔ` per sub-step; keeps `e^{−λΔ}` normal.
fn max_poisson_mean<T: Real>() -> f64 {
    (-T::min_positive_value().as_f64().ln() / 4.0).min(100.0)
}

/// `exp(t·M)·X` by uniformization, `X` being `dim × ncols` row-major.
pub fn expm_action<T: Real, Op: LinearOperator<T> + ?Sized>(op: &Op, t: T, x: &[T], ncols: usize) -> Result<Vec<T>> {
    let n = op.dim();
    if x.len() != n * ncols {
        return Err(Error::Dimension { expected: n * ncols, found: x.len() });
    }
    if t < T::zero() {
        return Err(Error::Exponential(format!("negative time {t}")));
    }
    let lambda = op.exit_rate();
    if !lambda.is_finite() {
        return Err(Error::Exponential("non-finite exit rate".into()));
    }
    let total = (lambda * t).as_f64();
    if total == 0.0 {
        // Uniformization degenerates; fall back to a Taylor series of a diagonal-free operator.
        return taylor_action(op, t, x, ncols);
    }
    let steps = (total / max_poisson_mean::<T>()).ceil().max(1.0) as usize;
    let h = t / T::from_count(steps);
    let mean = lambda * h;
    let mut cur = x.to_vec();
    let mut term = vec![T::zero(); x.len()];
    let mut next = vec![T::zero(); x.len()];
    let eps = T::epsilon();
    let inv_lambda = lambda.recip();
    for _ in 0..steps {
        // acc = Σ_k w_k P^k cur, P = I + M/λ.
        let mut weight = (-mean).exp();
        term.copy_from_slice(&cur);
        let mut acc: Vec<T> = term.iter().map(|&v| v * weight).collect();
        let mut k = 0usize;
        loop {
            k += 1;
            op.apply_block(&term, ncols, &mut next);
            for (nv, &tv) in next.iter_mut().zip(&term) {
                *nv = tv + *nv * inv_lambda;
            }
            std::mem::swap(&mut term, &mut next);
            weight = weight * mean / T::from_count(k);
            let mut term_norm = T::zero();
            let mut acc_norm = T::zero();
            for (a, &tv) in acc.iter_mut().zip(&term) {
                *a = *a + weight * tv;
                term_norm = term_norm.max(tv.abs());
                acc_norm = acc_norm.max(a.abs());
            }
            if !acc_norm.is_finite() {
                return Err(Error::Exponential(format!("uniformization diverged (λΔ = {mean})")));
            }
            let tail_small = weight * term_norm <= eps * acc_norm || weight * term_norm == T::zero();
            if T::from_count(k + 1) >= mean + mean && tail_small {
                break;
            }
            if k > 100_000 {
                return Err(Error::Exponential(format!("uniformization did not converge (λΔ = {mean})")));
            }
        }
        cur = acc;
    }
    Ok(cur)
}

/// Taylor series for operators with no exit rate (nilpotent or zero part only).
fn taylor_action<T: Real, Op: LinearOperator<T> + ?Sized>(op: &Op, t: T, x: &[T], ncols: usize) -> Result<Vec<T>> {
    let mut acc = x.to_vec();
    let mut term = x.to_vec();
    let mut next = vec![T::zero(); x.len()];
    for k in 1..=200usize {
        op.apply_block(&term, ncols, &mut next);
        let scale = t / T::from_count(k);
        let mut norm = T::zero();
        for (tv, &nv) in term.iter_mut().zip(&next) {
            *tv = nv * scale;
            norm = norm.max(tv.abs());
        }
        if norm == T::zero() {
            return Ok(acc);
        }
        for (a, &tv) in acc.iter_mut().zip(&term) {
            *a = *a + tv;
        }
        let acc_norm = acc.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if norm <= T::epsilon() * acc_norm {
            return Ok(acc);
        }
    }
    Err(Error::Exponential("Taylor series did not converge".into()))
}
