// SPDX-License-Identifier: Apache-2.0
//! Core library of the tensor rewrite-rule verifier.
//!
//! The pipeline: a rank-polymorphic rewrite rule ([`ir`]) is analyzed for a
//! sufficient rank bound per rank class ([`analysis`]), instantiated at every
//! concrete rank tuple up to the bounds ([`instantiate`]), symbolically
//! evaluated on both sides ([`symeval`]), and the resulting proof obligations
//! are discharged by an SMT solver ([`smt`], [`verifier`]). Counterexamples
//! are replayed through an independent concrete interpreter ([`concrete`]).

pub mod analysis;
pub mod concrete;
pub mod instantiate;
pub mod ir;
pub mod smt;
pub mod symeval;
pub mod term;
pub mod testkit;
pub mod verifier;

use thiserror::Error;

/// Unified error type across the verifier pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("undeclared identifier: {0}")]
    UndeclaredIdentifier(String),
    #[error("duplicate declaration: {0}")]
    DuplicateDeclaration(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("axes mismatch: {0}")]
    AxesMismatch(String),
    #[error("axis must belong to a singleton rank class: {0}")]
    NonSingletonAxis(String),
    #[error("reduction element reached SMT lowering: {0}")]
    ResidualReduction(String),
    #[error("failed to spawn solver: {0}")]
    SolverSpawnError(String),
    #[error("rejection sampling exhausted: {0}")]
    SamplingExhausted(String),
    #[error("rank must be at least 1")]
    RankZero,
    #[error("rank class mismatch: {0}")]
    RClassMismatch(String),
    #[error("si-relation hint references unknown reduction index: {0}")]
    HintReferencesUnknownIndex(String),
    #[error("failed to parse solver model: {0}")]
    ModelParseError(String),
    #[error("unsupported operation: {0}")]
    UnsupportedOp(String),
    #[error("validity violation: {0}")]
    ValidityViolation(String),
    #[error("rule file parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
