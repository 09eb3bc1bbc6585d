// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod building;
pub mod env;
pub mod grid;
pub mod metrics;
pub mod par;
pub mod ppo;
pub mod rng;
