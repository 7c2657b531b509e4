//! Orchestration of function-as-a-service workloads over duty-cycled IoT
//! workers.
//!
//! A central dispatcher tracks workers through keep-alives, partitions them
//! into clusters of 3 to 7 nodes by duty-cycle speed, picks each cluster's
//! leader, and offloads every task to one whole cluster. Each member runs
//! the task and a majority of identical digests decides the result. All
//! traffic goes through a pub/sub [`bus::Bus`] with consume-until-acked
//! delivery. The [`sim`] module drives the full stack in deterministic
//! simulated time.

pub mod bus;
pub mod consensus;
pub mod energy;
pub mod partitioner;
pub mod protocol;
pub mod registry;
pub mod worker;
pub mod dispatcher;
pub mod sim;
