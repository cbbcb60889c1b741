//! Decision-based heterogeneous graph attention for ordinal news
//! classification.
//!
//! The crate is `no_std + alloc`: every numeric routine goes through `libm`
//! and all collections are order-deterministic, so a fixed seed reproduces a
//! run bit-for-bit on any platform. IO, file formats, and the CLI live in the
//! companion crate.
//!
//! Layout, bottom up:
//! - [`tensor`], [`tape`], [`optim`], [`gradcheck`]: dense matrices, a
//!   reverse-mode autodiff tape with fused graph-attention primitives,
//!   decoupled-weight-decay Adam, and finite-difference verification.
//! - [`rng`], [`gumbel`]: named deterministic random streams and
//!   Gumbel-softmax discrete selection.
//! - [`liar`], [`graph`], [`embed`]: record model, heterogeneous relation
//!   graph with per-node neighborhood-type lattices, embeddings and KNN.
//! - [`layers`], [`model`], [`train`]: GATv2 / GCN layers, the
//!   decision+representation network, and the training loop.
//! - [`split`], [`metrics`], [`synth`]: stratified splits, evaluation
//!   metrics, and a planted synthetic benchmark graph.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod embed;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod gumbel;
pub mod layers;
pub mod liar;
pub mod mathx;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod split;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Matrix;
