//! Near-duplicate web page detection and crawl model inference.
//!
//! The pipeline goes: HTML pages are parsed into lossy DOM trees and reduced
//! to token sequences ([`dom`]), document-embedding models are trained on
//! token corpora and used to infer vectors for unseen pages ([`embedding`]),
//! pairs of pages are mapped to cosine-similarity features and classified as
//! clone or distinct ([`saf`]), a crawler uses that classifier to decide
//! which captured pages become new model states ([`crawl`]), the crawl event
//! log is segmented into test paths ([`testgen`]), and detection/model
//! quality are scored against labeled data ([`eval`]).

pub mod crawl;
pub mod dom;
pub mod embedding;
pub mod eval;
pub mod saf;
pub mod testgen;

pub(crate) mod binio;
