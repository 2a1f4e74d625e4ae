//! Zero-shot fine-grained entity typing over an enriched type ontology.
//!
//! The pipeline enriches ontology nodes with instances and topics
//! ([`enrichment`]), synthesizes sentences containing those instances
//! ([`generation`]), turns them into premise/hypothesis examples labeled by
//! ontology structure ([`nli_data`]), trains a gated entailment classifier
//! ([`entailment_model`]) and types mentions top-down ([`inference`]).
//! [`metrics`] scores predicted type sets against gold sets.

pub mod enrichment;
pub mod entailment_model;
pub mod generation;
pub mod inference;
pub mod metrics;
pub mod nli_data;
pub mod ontology;
pub mod seed;
pub mod synthetic;
pub mod text;
