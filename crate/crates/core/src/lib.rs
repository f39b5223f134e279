//! PageRank optimization: maximize a linear utility of the occupation
//! measure of a damped random walk over the hyperlinks a webmaster controls.

pub mod analysis;
pub mod chain;
pub mod model;
pub mod oracle;
pub mod polytope;
pub mod solver;
pub mod synth;
