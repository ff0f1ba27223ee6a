//! Core building blocks for regime-aware volatility forecasting.
//!
//! This crate is `no_std` (with `alloc`) and holds everything that does not
//! touch the filesystem or the network: return/window derivation, the
//! classical forecasters, prompt rendering and parsing, deterministic mock
//! models, demonstration-pool construction, regime-conditioned demonstration
//! sampling, and metric computation. IO, the remote model backend, and the
//! CLI live in the companion `volregime` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod baselines;
pub mod evaluator;
pub mod forecast;
pub mod gateway;
pub mod marketdata;
pub mod pool;
pub mod promptcodec;
pub mod sampler;

mod math;

pub use marketdata::{PricePoint, PriceSeries, ReturnObservation, SplitSpec, WindowSample};
pub use pool::{DemoPool, Demonstration, Regime};
