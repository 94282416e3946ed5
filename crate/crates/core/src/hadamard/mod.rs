//! Hadamard matrices, fast rotations and operation counts.

pub mod construct;
mod field;
pub mod opcount;
pub mod transform;

pub use construct::{
    build_any, build_hadamard, format_hadamard, load_hadamard, parse_hadamard, Construction,
    HadamardSpec,
};
pub use opcount::{count_ops, DimensionFactorization, OpCount, OpMethod};
pub use transform::{
    fwht, fwht_counted, fwht_in_place, rotate_block, rotate_nonpo2, BlockRotation,
    HadamardTransform, NoTally, OpCounter, Schedule, Tally,
};
