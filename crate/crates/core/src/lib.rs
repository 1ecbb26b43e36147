//! Core of the medipipe note pipeline.
//!
//! Diarized transcripts are turned into SOAP notes by an instruction-prompted
//! generator, notes are chunked and embedded into an exact cosine index, and
//! queries are answered by retrieval-augmented generation. The [`metrics`]
//! module scores generated notes against references (ROUGE family and a
//! greedy-matching BERTScore).
//!
//! Data-parallel inner loops (index scans, per-pair metric evaluation, batch
//! chunking) run on rayon when the `parallel` feature is enabled and fall back
//! to plain iterators otherwise. See [`par`].

pub mod chunking;
pub mod corpus;
pub mod metrics;
pub mod par;
pub mod providers;
pub mod rag;
pub mod soap;
pub mod transcript;
pub mod tuning;
pub mod vindex;

pub mod fixtures;
