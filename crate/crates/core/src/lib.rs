//! Discrete-event simulation of fault-tolerant gradient clock
//! synchronization over clustered networks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod cli;
pub mod cluster_sync;
pub mod intercluster_sync;
pub mod metrics;
pub mod params;
pub mod simcore;
pub mod topology;
pub mod world;
