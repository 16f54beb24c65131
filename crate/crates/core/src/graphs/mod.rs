//! Product catalog, transaction log, and the co-purchase reference networks.

mod catalog;
mod log;
mod network;

pub use catalog::{AttributeKind, Catalog, Product, RawProduct};
pub use log::{distinct_recent, Purchase, TransactionLog};
pub use network::{
    attach_cold_node, build_reference_network, decompose_arn, Adjacency, EdgeWeighting,
    GraphConfig, ReferenceNetworks, TimeWindow,
};
