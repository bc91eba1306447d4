//! Per-country AS-level Internet topologies, topology features, and
//! press-freedom regression.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`ingest`] parses relationship, delegation, prefix, IXP and country files.
//! 2. [`topology`] builds the annotated global AS graph and per-country views.
//! 3. [`traceroute`] turns traceroutes into AS paths, new edges and
//!    valley-free relationship constraints.
//! 4. [`bgpsim`] computes customer cones, AS rank and valley-free distances.
//! 5. [`features`] computes the twenty per-country features and scales them.
//! 6. [`ml`] fits LR, LASSO and the two tree models and evaluates them with
//!    leave-one-out cross-validation.
//! 7. [`pipeline`] wires the stages together for the command line tool.

pub mod bgpsim;
pub mod error;
pub mod features;
pub mod ingest;
pub mod lpm;
pub mod ml;
pub mod pipeline;
pub mod synthetic;
pub mod topology;
pub mod traceroute;
pub mod types;

pub use error::{Error, Result};
pub use topology::{AsGraph, CountryView, EdgeLabel, LabelSet};
pub use types::{Asn, CountryCode, Ipv4Net};
