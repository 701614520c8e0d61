// SPDX-License-Identifier: Apache-2.0

//! Randomised invariants of grids, generators and transition kernels.

use ctmc_debt::ctmc::{matrix_exponential, rate_generator_at, GeneratorPolicy, PiecewiseGenerator};
use ctmc_debt::expm::expm_dense;
use ctmc_debt::grid::Grid;
use ctmc_debt::linalg::{DenseMatrix, Tridiagonal};
use ctmc_debt::models::{EquityModel, ShortRateModel};
use ctmc_debt::schedule::{StepFunction, TimeGrid};
use proptest::prelude::*;

fn max_abs_diff(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A model from the catalogue with parameters drawn from `u`, and grid bounds
/// inside its state space.
fn catalogue_model(which: usize, u: [f64; 3]) -> (ShortRateModel<f64>, f64, f64) {
    let kappa = 0.2 + 2.0 * u[0];
    let sigma = 0.02 + 0.2 * u[1];
    let r0 = 0.01 + 0.05 * u[2];
    match which % 5 {
        0 => (ShortRateModel::vasicek(kappa, 0.04, sigma, r0).unwrap(), r0 - 0.5, r0 + 0.5),
        1 => (ShortRateModel::cir(kappa, 0.04, sigma, r0).unwrap(), r0 / 50.0, 8.0 * r0),
        2 => (ShortRateModel::hull_white(kappa, sigma, r0).unwrap(), r0 - 0.5, r0 + 0.5),
        3 => (ShortRateModel::ho_lee(sigma, r0).unwrap(), r0 - 0.5, r0 + 0.5),
        _ => (ShortRateModel::cir_pp(kappa, 0.03, sigma, r0).unwrap(), r0 / 50.0, 8.0 * r0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinh_grid_is_monotone_with_exact_endpoints_and_anchor(
        lower in -2.0f64..0.0,
        width in 0.1f64..4.0,
        frac in 0.05f64..0.95,
        m in 3usize..300,
        alpha in 0.001f64..5.0,
    ) {
        let upper = lower + width;
        let center = lower + frac * width;
        let grid = Grid::sinh(lower, upper, center, m, alpha).unwrap();
        let nodes = grid.nodes();
        prop_assert_eq!(nodes[0], lower);
        prop_assert_eq!(*nodes.last().unwrap(), upper);
        prop_assert_eq!(grid.anchor_value(), center);
        prop_assert!(nodes.len() == m || nodes.len() == m + 1);
        prop_assert!(grid.spacings().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn generators_have_zero_row_sums_and_nonnegative_rates(
        which in 0usize..5,
        u in prop::array::uniform3(0.0f64..1.0),
        m in 10usize..120,
        theta in -0.5f64..0.5,
    ) {
        let (model, lo, hi) = catalogue_model(which, u);
        let model = if model.uses_theta() { model.with_theta(StepFunction::constant(theta)) } else { model };
        let grid = Grid::uniform(lo, hi, model.r0(), m).unwrap();
        let aux = model.auxiliary().unwrap_or_else(|| model.clone());
        let (q, negatives) = rate_generator_at(&aux, &grid, 0.0, GeneratorPolicy::Permissive).unwrap();
        let scale = q.diag.iter().fold(1.0f64, |a, d| a.max(d.abs()));
        for i in 0..q.dim() {
            let row: f64 = (0..q.dim()).map(|j| q.get(i, j)).sum();
            prop_assert!(row.abs() <= 1e-12 * scale, "row {} sums to {}", i, row);
        }
        if negatives == 0 {
            prop_assert!(q.lower.iter().chain(&q.upper).all(|&x| x >= 0.0));
            prop_assert!(q.diag.iter().all(|&x| x <= 0.0));
        }
    }

    #[test]
    fn transition_kernels_are_stochastic_and_compose(
        which in 0usize..5,
        u in prop::array::uniform3(0.0f64..1.0),
        m in 10usize..60,
        dt in 0.001f64..0.5,
        split in 0.1f64..0.9,
    ) {
        let (model, lo, hi) = catalogue_model(which, u);
        let model = if model.uses_theta() { model.with_theta(StepFunction::constant(0.02)) } else { model };
        let grid = Grid::uniform(lo, hi, model.r0(), m).unwrap();
        let aux = model.auxiliary().unwrap_or_else(|| model.clone());
        let (q, negatives) = rate_generator_at(&aux, &grid, 0.0, GeneratorPolicy::Permissive).unwrap();
        prop_assume!(negatives == 0);
        let p = matrix_exponential(&q, dt).unwrap();
        for i in 0..p.rows() {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-10);
            prop_assert!(p.row(i).iter().all(|&x| x >= -1e-12));
        }
        let a = matrix_exponential(&q, split * dt).unwrap();
        let b = matrix_exponential(&q, (1.0 - split) * dt).unwrap();
        prop_assert!(max_abs_diff(&a.matmul(&b), &p) <= 1e-10);
    }

    #[test]
    fn two_state_chain_matches_closed_form(lambda in 0.01f64..20.0, mu in 0.01f64..20.0, dt in 0.0f64..3.0) {
        let q = Tridiagonal { lower: vec![mu], diag: vec![-lambda, -mu], upper: vec![lambda] };
        let p = matrix_exponential(&q, dt).unwrap();
        let decay = (-(lambda + mu) * dt).exp();
        let p11 = mu / (lambda + mu) + lambda / (lambda + mu) * decay;
        let p22 = lambda / (lambda + mu) + mu / (lambda + mu) * decay;
        prop_assert!((p.row(0)[0] - p11).abs() <= 1e-12);
        prop_assert!((p.row(1)[1] - p22).abs() <= 1e-12);
    }

    #[test]
    fn decorrelated_volatility_is_pythagorean(
        sigma_s in 0.01f64..1.0,
        rho in -1.0f64..1.0,
        r in -0.2f64..0.3,
    ) {
        let model = ShortRateModel::vasicek(1.0, 0.04, 0.1, 0.04).unwrap();
        let equity = EquityModel::new(100.0, sigma_s, StepFunction::constant(0.0), rho).unwrap();
        let tr = model.transform_coefficients(&equity, 0.0, r).unwrap();
        let lhs = tr.sigma_x.powi(2) + (rho * sigma_s).powi(2);
        prop_assert!((lhs - sigma_s * sigma_s).abs() <= 1e-14);
    }
}

#[test]
fn density_peaks_next_to_the_anchor() {
    let grid = Grid::sinh(-1.2, 1.0, 0.04, 160, 0.5).unwrap();
    let d = grid.spacings();
    let (imin, _) = d.iter().enumerate().fold((0, f64::MAX), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc });
    let a = grid.anchor();
    assert!(imin + 1 == a || imin == a, "smallest gap at {imin}, anchor {a}");
}

#[test]
fn interval_generators_differ_only_through_the_drift() {
    let grid = Grid::uniform(-0.3, 0.4, 0.04, 71).unwrap();
    let tg = TimeGrid::uniform(0.1, 1.0).unwrap();
    let theta = StepFunction::on_grid(&tg, (0..10).map(|i| 0.01 * i as f64).collect()).unwrap();
    let hw = ShortRateModel::hull_white(1.0, 0.1, 0.04).unwrap().with_theta(theta);
    let chain = PiecewiseGenerator::build(&hw, &grid, &tg, GeneratorPolicy::Strict).unwrap();
    let (a, b) = (chain.generator(1), chain.generator(2));
    // Uniform grid, interior rows: up + down = σ²/h² does not involve the drift
    // and up − down = μ/h moves by Δθ/h.
    let h = grid.spacings()[0];
    for i in 1..a.dim() - 1 {
        let (down_a, up_a) = (a.lower[i - 1], a.upper[i]);
        let (down_b, up_b) = (b.lower[i - 1], b.upper[i]);
        assert!(((up_a + down_a) - (up_b + down_b)).abs() < 1e-9, "node {i}");
        let shift = (up_b - down_b) - (up_a - down_a);
        assert!((shift - 0.01 / h).abs() < 1e-9, "node {i}: {shift}");
    }
}

#[test]
fn lie_product_error_decays_at_first_order() {
    let model = ShortRateModel::vasicek(1.0, 0.04, 0.1, 0.04).unwrap();
    let grid = Grid::uniform(-0.2, 0.3, 0.04, 20).unwrap();
    let (q, _) = rate_generator_at(&model, &grid, 0.0, GeneratorPolicy::Strict).unwrap();
    let horizon = 2.0;
    let exact = expm_dense(&q.minus_diagonal(grid.nodes()).to_dense().scaled(horizon)).unwrap();
    let error = |k: usize| {
        let dt = horizon / k as f64;
        let step = matrix_exponential(&q, dt).unwrap();
        let disc =
            DenseMatrix::from_fn(
                grid.len(),
                grid.len(),
                |i, j| if i == j { (-grid.nodes()[i] * dt).exp() } else { 0.0 },
            );
        let one = step.matmul(&disc);
        let mut acc = DenseMatrix::identity(grid.len());
        for _ in 0..k {
            acc = acc.matmul(&one);
        }
        max_abs_diff(&acc, &exact)
    };
    let (e1, e2) = (error(50), error(100));
    let order = (e1 / e2).log2();
    assert!((order - 1.0).abs() < 0.1, "order {order} from {e1:.3e}, {e2:.3e}");
}
