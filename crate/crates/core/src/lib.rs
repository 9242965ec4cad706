//! Optimistic-abort transactions for geo-distributed key-value stores.
//!
//! A store validates transactions with value compares (optimistic concurrency
//! control). A switch on the path between clients and the store logs the
//! writes it sees and aborts transactions whose compares it already knows to
//! be stale, so the client can retry without paying the round trip to the
//! store.
//!
//! - [`wire`]: message format, fragmentation and reassembly
//! - [`store`]: the authoritative store
//! - [`middlebox`]: forwarding, read-cache and optimistic-abort switch logic
//! - [`client`]: closed-loop transaction runtime
//! - [`netsim`]: discrete-event network simulator and UDP transport
//! - [`workloads`]: counter microbenchmark and TPC-C-lite
//! - [`bench`]: experiment runner, metrics and trend checks

pub mod bench;
pub mod client;
pub mod middlebox;
pub mod netsim;
pub mod store;
pub mod wire;
pub mod workloads;
