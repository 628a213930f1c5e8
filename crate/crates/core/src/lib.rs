//! Helper selection, resource-block allocation and late-fusion evaluation
//! for cooperative perception over V2V links.
//!
//! * [`scenario`]: road scenarios, their generator and TOML storage.
//! * [`objectives`]: visual range and motion blur of a selection.
//! * [`comms`]: link model, goodput, energy and the delay bound.
//! * [`selector`]: exact, GA and baseline helper selection.
//! * [`allocator`]: resource-block and power allocation, link-quality sweeps.
//! * [`fusion`]: detection sets, IoU-max fusion, metrics and synthetic frames.
//! * [`harness`]: batch experiments and their output tables.
//!
//! The guide in `book/` walks through each piece with runnable examples.

pub mod allocator;
pub mod comms;
pub mod fusion;
pub mod harness;
pub mod objectives;
pub mod rng;
pub mod scenario;
pub mod selector;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/links.md")]
    mod links {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
