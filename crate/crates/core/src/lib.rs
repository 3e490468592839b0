//! Transient mean virtual waiting time of the M/G/1 FIFO queue.
//!
//! `φ(t) = E W(t)` for a queue started empty is computed three independent
//! ways and checked against its Pollaczek–Khinchine limit:
//!
//! * [`mm1`]: the exact series for M/M/1, built on exponentially scaled
//!   modified Bessel functions;
//! * [`renewal`]: the renewal-equation solution `φ = q * dH` on a grid;
//! * [`sim`]: regenerative Monte-Carlo simulation of the workload.
//!
//! [`analysis`] fits the exponential rate at which `φ(t)` approaches its
//! limit and scores the methods against each other. [`dist`] and [`busy`]
//! supply the service laws, busy-period transforms and cycle moments the
//! other modules consume.
//!
//! ```
//! use transient_queue::mm1::Mm1Model;
//!
//! let m = Mm1Model::new(0.5, 1.0)?;
//! let phi = m.phi_exact(200.0, false)?;
//! assert!((phi - 1.0).abs() < 1e-6);
//! # Ok::<(), transient_queue::Error>(())
//! ```

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod busy;
pub mod curve;
pub mod dist;
pub mod error;
pub mod mm1;
pub mod renewal;
pub mod sim;

pub use busy::{CycleMoments, QueueModel};
pub use curve::{Curve, TimeGrid};
pub use dist::ServiceDistribution;
pub use error::{Error, Result};
pub use sim::McConfig;

// Chapters of the guide under `book/`; `cargo test --doc` runs their snippets.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/service-laws.md")]
    mod service_laws {}
    #[doc = include_str!("../../../book/src/busy-periods.md")]
    mod busy_periods {}
    #[doc = include_str!("../../../book/src/renewal.md")]
    mod renewal {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/mm1.md")]
    mod mm1 {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
