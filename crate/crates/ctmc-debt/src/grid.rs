// SPDX-License-Identifier: Apache-2.0

//! Hyperbolic-sine state grids concentrated around an anchor value.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sorted finite state space with a distinguished anchor node.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nodes: Vec<T>,
    anchor: usize,
}

impl<T: Real> Grid<T> {
    /// Wraps explicit nodes; `anchor` must index one of them.
    pub fn from_nodes(nodes: Vec<T>, anchor: usize) -> Result<Self> {
        if nodes.is_empty() || anchor >= nodes.len() {
            return Err(Error::Grid("anchor index outside the node list".into()));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Grid("non-finite node".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes, anchor })
    }

    /// Builds `r_1 = lower`, `r_m = upper` and
    /// `r_k = center + α sinh(c₂ k/m + c₁ (1 − k/m))` for `k = 2..m−1`, with
    /// `c₁ = asinh((lower − center)/α)`, `c₂ = asinh((upper − center)/α)`.
    ///
    /// The center is inserted when absent (the grid then has `m + 1` nodes).
    /// A node closer than `1e-12·(upper − lower)` to the center is replaced.
    pub fn sinh(lower: T, upper: T, center: T, m: usize, alpha: T) -> Result<Self> {
        check_bounds(lower, upper, center, m)?;
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::Grid(format!("alpha must be positive and finite, got {alpha}")));
        }
        let c1 = ((lower - center) / alpha).asinh();
        let c2 = ((upper - center) / alpha).asinh();
        if !c1.is_finite() || !c2.is_finite() {
            return Err(Error::Grid("non-finite sinh arguments".into()));
        }
        let mf = T::from_count(m);
        let mut nodes = Vec::with_capacity(m + 1);
        nodes.push(lower);
        for k in 2..m {
            let u = T::from_count(k) / mf;
            let x = center + alpha * (c2 * u + c1 * (T::one() - u)).sinh();
            if !x.is_finite() {
                return Err(Error::Grid(format!("non-finite node at k = {k}")));
            }
            nodes.push(x);
        }
        nodes.push(upper);
        with_center(nodes, center, T::lit(1e-12) * (upper - lower))
    }

    /// `m` equally spaced nodes from `lower` to `upper`, with the center
    /// inserted (or snapped) as in [`Grid::sinh`].
    pub fn uniform(lower: T, upper: T, center: T, m: usize) -> Result<Self> {
        check_bounds(lower, upper, center, m)?;
        let step = (upper - lower) / T::from_count(m - 1);
        let mut nodes: Vec<T> = (0..m - 1).map(|i| lower + step * T::from_count(i)).collect();
        nodes.push(upper);
        with_center(nodes, center, T::lit(1e-12) * (upper - lower))
    }

    /// Nodes in increasing order.
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false: grids have at least one node.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the anchor node.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// Value of the anchor node.
    pub fn anchor_value(&self) -> T {
        self.nodes[self.anchor]
    }

    /// Spacings `δ_i = r_{i+1} − r_i`.
    pub fn spacings(&self) -> Vec<T> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn check_bounds<T: Real>(lower: T, upper: T, center: T, m: usize) -> Result<()> {
    if !(lower < upper) {
        return Err(Error::Grid(format!("lower bound {lower} must be below upper bound {upper}")));
    }
    if !(lower < center && center < upper) {
        return Err(Error::Grid(format!("center {center} must lie strictly inside ({lower}, {upper})")));
    }
    if m < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {m}")));
    }
    Ok(())
}

/// Snaps the nearest interior node to `center` when within `tol`, otherwise
/// inserts `center`.
fn with_center<T: Real>(mut nodes: Vec<T>, center: T, tol: T) -> Result<Grid<T>> {
    let pos = nodes.partition_point(|&x| x < center);
    let near = [pos.checked_sub(1), Some(pos)].into_iter().flatten().filter(|&i| i < nodes.len()).min_by(|&a, &b| {
        (nodes[a] - center).abs().partial_cmp(&(nodes[b] - center).abs()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let anchor = match near {
        Some(i) if (nodes[i] - center).abs() <= tol && i != 0 && i + 1 != nodes.len() => {
            nodes[i] = center;
            i
        }
        _ => {
            nodes.insert(pos, center);
            pos
        }
    };
    Grid::from_nodes(nodes, anchor)
}
