//! Counterfactual data augmentation toolkit.
//!
//! The crate is organised around the stages a text record flows through:
//!
//! - [`corpus`]: records, corpora, tokenization and word lists.
//! - [`dictionary`]: word-pair substitution with name pairing (CDA / CDS).
//! - [`backends`]: the four model roles (token scorer, infiller, gender
//!   classifier, language model) behind traits, with deterministic mocks and
//!   an HTTP client.
//! - [`pipeline`]: seed generation, erratic-token masking, infilling and
//!   classifier filtration producing parallel training pairs.
//! - [`biobjective`]: a toy seq2seq generator trained jointly with a frozen
//!   discriminator that reads generator logits.
//! - [`eval`]: perplexity, transfer accuracy, TPRD/FPRD, word2vec and WEAT.

// Slot lists routinely hold a single range, and `!(x > 0.0)` is how
// validation rejects NaN along with non-positive values.
#![allow(clippy::single_range_in_vec_init, clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod biobjective;
pub mod corpus;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod pipeline;

pub use error::{Error, Result};
