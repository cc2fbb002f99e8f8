//! Desk-scale decoder-only language-model toolkit.
//!
//! The crate covers the whole pipeline: corpus cleaning and packing
//! ([`datapipe`]), byte-fallback BPE ([`tokenizer`]), a RoPE/GQA/RMSNorm/SwiGLU
//! decoder ([`model`]) built on a small reverse-mode tape ([`tape`]),
//! AdamW training ([`trainer`]), nucleus sampling ([`textgen`]), lexical
//! metrics ([`evalmetrics`]) and throughput/carbon accounting
//! ([`accounting`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod tape;
pub mod tensor;

pub use error::KernelError;
pub use gradcheck::{grad_check, GradCheck};
pub use kernels::LossValue;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub mod accounting;
pub mod datapipe;
pub mod evalmetrics;
pub mod model;
pub mod textgen;
pub mod tokenizer;
pub mod trainer;
