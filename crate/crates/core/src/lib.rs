//! Price and capacity competition between storage operators in a balancing
//! market.
//!
//! Storage firms post prices, a market operator dispatches imbalances in
//! merit order with a backstop at the reservation utility `R`, and firms
//! earn price times absolute throughput. The crate computes
//!
//! * the dispatch itself ([`dispatch`]),
//! * the priority-ordered throughput moments that summarise it
//!   ([`throughput`], [`imbalance`]),
//! * the mixed-strategy price equilibrium ([`pricing`]),
//! * the capacity investment equilibria built on top ([`capacity`]),
//! * and the numerical sweeps that tie these together ([`experiments`]).

pub mod capacity;
pub mod dispatch;
pub mod error;
pub mod experiments;
pub mod imbalance;
pub mod numeric;
pub mod pricing;
pub mod rng;
pub mod throughput;

pub use error::{Error, Result};

// Guide chapters run as doctests so their snippets stay in sync.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/dispatch.md")]
    mod dispatch {}
    #[doc = include_str!("../../../book/src/throughput.md")]
    mod throughput {}
    #[doc = include_str!("../../../book/src/pricing.md")]
    mod pricing {}
    #[doc = include_str!("../../../book/src/capacity.md")]
    mod capacity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
