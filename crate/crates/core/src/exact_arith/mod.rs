//! Exact scalars: big rationals and elements of cyclotomic fields.

pub mod cyclotomic;
pub mod rational;

pub use cyclotomic::{euler_phi, order_data, Cyclotomic};
pub use rational::{
    binomial_int, factorial, gen_binomial, int, odd_double_factorial, parse_rational, pochhammer, rat, Rational,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("order {from} does not divide {to}")]
    NotDivisible { from: u32, to: u32 },
}
