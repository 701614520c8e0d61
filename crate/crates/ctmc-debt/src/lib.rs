// SPDX-License-Identifier: Apache-2.0

//! Markov chain approximation of one-factor short-rate models, with pricers
//! for zero-coupon and coupon bonds, European bond options, callable and
//! putable bonds, and convertible bonds under a two-factor rate/equity model.
//!
//! The rate diffusion is replaced by a birth-death chain on a sinh-stretched
//! grid. Prices are matrix exponentials of the discounted generator applied
//! to payoff vectors, stepped backwards over a piecewise-constant time grid.
//! Time-dependent drifts are fitted to a discount curve with
//! [`calibration::calibrate_theta`].
//!
//! All numerics are generic over [`scalar::Real`] (`f32` or `f64`). The
//! [`f64`] and [`f32`] modules re-export the main types at a fixed precision.
//!
//! ```
//! use ctmc_debt::f64::*;
//!
//! let model = ShortRateModel::vasicek(1.0, 0.04, 0.2, 0.04).unwrap();
//! let grid = Grid::sinh(-0.5, 0.6, 0.04, 80, 0.5).unwrap();
//! let times = TimeGrid::uniform(0.25, 4.0).unwrap();
//! let chain = PiecewiseGenerator::build(&model, &grid, &times, GeneratorPolicy::Strict).unwrap();
//! let p = price_zcb(&chain, 0.0, 4.0, grid.anchor()).unwrap();
//! let exact = analytic_zcb(&model, 0.0, 4.0, 0.04).unwrap();
//! assert!((p - exact).abs() < 1e-3);
//! ```

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod calibration;
pub mod ctmc;
pub mod error;
pub mod expm;
pub mod grid;
pub mod hybrid;
pub mod linalg;
pub mod mc;
pub mod models;
pub mod rates;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use scalar::Real;

macro_rules! precision_aliases {
    ($t:ty) => {
        pub use crate::analytic::{analytic_zcb, analytic_zcb_option};
        pub use crate::calibration::{calibrate_theta, calibrate_theta_shifted, RootSearch};
        pub use crate::ctmc::GeneratorPolicy;
        pub use crate::hybrid::{CbMethod, ConversionStyle};
        pub use crate::mc::{mc_price, SimulationConfig};
        pub use crate::rates::{price_bond, price_bond_option, price_callable_putable, price_zcb, OptionFlavor};

        pub type Grid = crate::grid::Grid<$t>;
        pub type TimeGrid = crate::schedule::TimeGrid<$t>;
        pub type StepFunction = crate::schedule::StepFunction<$t>;
        pub type ShortRateModel = crate::models::ShortRateModel<$t>;
        pub type EquityModel = crate::models::EquityModel<$t>;
        pub type PiecewiseGenerator = crate::ctmc::PiecewiseGenerator<$t>;
        pub type DiscountCurve = crate::calibration::DiscountCurve<$t>;
        pub type Calibration = crate::calibration::Calibration<$t>;
        pub type BondSpec = crate::rates::BondSpec<$t>;
        pub type BondOptionSpec = crate::rates::BondOptionSpec<$t>;
        pub type ExerciseWindow = crate::rates::ExerciseWindow<$t>;
        pub type EmbeddedOptionSchedule = crate::rates::EmbeddedOptionSchedule<$t>;
        pub type ConvertibleSpec = crate::hybrid::ConvertibleSpec<$t>;
        pub type TwoLayerChain = crate::hybrid::TwoLayerChain<$t>;
        pub type CbValue = crate::hybrid::CbValue<$t>;
        pub type McEstimate = crate::mc::McEstimate<$t>;
    };
}

/// Double-precision aliases.
pub mod f64 {
    precision_aliases!(f64);
}

/// Single-precision aliases.
pub mod f32 {
    precision_aliases!(f32);
}
