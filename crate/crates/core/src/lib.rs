#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod graph;
pub mod linalg;
pub mod riccati;
pub mod scenario;
pub mod sdp;
pub mod smf;
pub mod sync;
pub mod system;
