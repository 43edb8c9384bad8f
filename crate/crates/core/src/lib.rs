//! Decentralized momentum gradient descent ascent (DM-GDA) for stochastic
//! nonconvex-PL minimax problems over gossip networks.

pub mod algorithm;
pub mod metrics;
pub mod problems;
pub mod runner;
pub mod topology;
pub mod verify;
