//! Exact p-adic computation: arithmetic, SL2 machinery, ultrametric point
//! statistics, restricted projections, random-walk contraction, congruence
//! quotient Sobolev norms and S-adic heights.

pub mod heights;
pub mod lie;
pub mod margulis;
pub mod padic;
pub mod projection;
pub mod sample;
pub mod sobolev;
pub mod tree;
