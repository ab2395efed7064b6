//! Distortion exponent of layered source transmission over block-fading
//! MIMO channels with a 1-bit-per-channel-use ARQ feedback link.
//!
//! * [`dmt`]: the diversity–multiplexing tradeoff curve.
//! * [`exponent`]: the optimal exponent, in closed form and as the intercept
//!   of the supporting line under the DMT curve.
//! * [`layering`]: the two-pass layer-rate construction and its finite-layer
//!   exponent.
//! * [`channel`]: Rayleigh channel draws, capacity and outage probability.
//! * [`simulator`]: finite-SNR average distortion of the layered scheme.
//! * [`cli`]: the `distexp` command-line tool.
//!
//! ```
//! use distexp::{AntennaConfig, upper_bound_exponent, delta_line};
//!
//! let cfg = AntennaConfig::new(2, 2)?;
//! assert_eq!(upper_bound_exponent(cfg, 2.0)?, 3.0);
//! assert_eq!(delta_line(cfg, 2.0)?.intercept, 3.0);
//! # Ok::<(), distexp::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod dmt;
mod error;
pub mod exponent;
pub mod layering;
pub mod simulator;
pub mod stats;

pub use channel::{
    capacity, estimate_diversity, outage_prob_mc, outage_prob_siso_exact, sample_channel,
    ChannelMatrix, DiversityFit, OutageEstimate, OutageSource, RateLaw,
};
pub use dmt::{build_dmt, AntennaConfig, Corner, DmtCurve};
pub use error::{Error, Result};
pub use exponent::{
    delta_line, exponent_breakpoints, interpolate_breakpoints, optimal_exponent,
    upper_bound_exponent, Breakpoint, DeltaLine,
};
pub use layering::{
    assign_layers, assign_layers_default, assign_layers_tuned, convergence_sweep, exponent_terms,
    finite_layer_exponent, single_layer_gain, verify_equal_exponents, EqualExponentCheck,
    LayerAllocation,
};
pub use simulator::{
    decoded_layers, distortion_of, fit_exponent, run_sim, DistortionReport, Oracle, PointRecord,
    SimConfig,
};

// The guide under book/ is compiled and run as doc-tests so its snippets
// stay in sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/dmt.md")]
    pub struct Dmt;
    #[doc = include_str!("../../../book/src/exponent.md")]
    pub struct Exponent;
    #[doc = include_str!("../../../book/src/layering.md")]
    pub struct Layering;
    #[doc = include_str!("../../../book/src/channel.md")]
    pub struct Channel;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
