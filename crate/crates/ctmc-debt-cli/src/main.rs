// SPDX-License-Identifier: Apache-2.0

//! `ctmc-debt`: calibrate short-rate models to a discount curve, price rate
//! and convertible instruments, and run grid-convergence studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod setup;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Inputs;

#[derive(Debug, Parser)]
#[command(name = "ctmc-debt", version, about = "Markov-chain pricing of bonds, bond options and convertibles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration, or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Discount curve CSV with header `t,discount`.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Time step, overriding `time.dt`.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<Common> for Inputs {
    fn from(c: Common) -> Self {
        Inputs { config: c.config, curve: c.curve, out: c.out, dt: c.dt, seed: c.seed }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit θ to the curve; writes theta.csv and residuals.csv.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Rate-grid size.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Price the configured instruments; writes prices.csv.
    Price {
        #[command(flatten)]
        common: Common,
        /// Rate-grid size.
        #[arg(long)]
        m: Option<usize>,
        /// Share-grid size for convertibles.
        #[arg(long = "big-m")]
        big_m: Option<usize>,
    },
    /// Refine one grid and report errors and rates; writes study.csv.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rate-grid sizes.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Comma-separated share-grid sizes.
        #[arg(long = "big-m", value_delimiter = ',')]
        big_m: Vec<usize>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Calibrate { common, m } => commands::calibrate(&common.into(), m),
        Command::Price { common, m, big_m } => commands::price(&common.into(), m, big_m),
        Command::Convergence { common, m, big_m } => commands::convergence(&common.into(), m, big_m),
    }
}
