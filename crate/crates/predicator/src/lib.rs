//! If-conversion autotuning toolkit.
//!
//! The pipeline: parse a module ([`ir`]), discover if-convertible branches
//! and apply convert/keep decisions from a bitmask ([`ifconv`]), describe
//! each candidate with static code features ([`features`]), cost candidate
//! modules on a cycle-level model with branch prediction ([`sim`]), and
//! search the per-branch decision space with an evolved network ([`neat`],
//! [`tuner`]) against the built-in heuristic as the baseline.

pub mod features;
pub mod ifconv;
pub mod ir;
pub mod kernels;
pub mod neat;
pub mod sim;
pub mod tuner;
