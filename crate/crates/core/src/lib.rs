//! Contract design for an agent with hidden action and a private cost per
//! unit of effort.
//!
//! * [`model`]: instances and elementary expectations.
//! * [`lp`]: exact rational simplex with dual and Farkas certificates.
//! * [`discrete`]: implementability, optimal payments and optimal contracts
//!   for finitely many types, with deviation-plan certificates.
//! * [`continuous`]: piecewise-constant rules on an interval of types,
//!   virtual costs, and the virtual-welfare contract for uniform costs.
//! * [`document`]: JSON documents read and written by the command-line tool.
//! * [`cli`]: the commands behind the binary.

pub mod cli;
pub mod continuous;
pub mod discrete;
pub mod document;
pub mod lp;
pub mod model;
pub mod rational;

pub use model::{validate_instance, Contract, Instance, RawInstance, TypeSpace};
pub use rational::Rational;
