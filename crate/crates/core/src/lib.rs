//! Exact belief-net inference by factoring, with an analytic model of running the
//! resulting evaluation trees on a distributed-memory hypercube.

pub mod costmodel;
pub mod experiment;
pub mod factoring;
pub mod factors;
pub mod metrics;
pub mod network;
