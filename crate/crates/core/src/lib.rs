//! Storage, indexing, fuzzy matching and rewriting for replaying archived
//! web pages, with special handling for advertisement URLs that embed
//! values generated at run time.
//!
//! The crate is organised bottom-up:
//!
//! * [`warc`] and [`wacz`] read and write archive containers.
//! * [`canon`] and [`index`] build the capture index and answer lookups.
//! * [`fuzzy`] resolves requests that miss the exact index.
//! * [`urim`] and [`rewrite`] produce memento URLs and rewrite payloads.
//! * [`seeded_random`] reproduces the client-side deterministic generator.
//! * [`ads`] classifies ad resources and simulates capture-time blocklists.

pub mod ads;
pub mod canon;
pub mod fuzzy;
pub mod index;
pub mod rewrite;
pub mod seeded_random;
pub mod timestamp;
pub mod urim;
pub mod wacz;
pub mod warc;

pub use canon::{canonicalize, CanonicalUrl};
pub use fuzzy::{resolve, FuzzyMatcher, MissReport, Resolution, RuleSet};
pub use index::{build_index, CaptureIndex, CdxEntry};
pub use timestamp::Timestamp14;
pub use urim::{make_urim, parse_urim, Modifier, UriM};
pub use warc::{ArchiveSource, CaptureRecord, RecordType, SourceKind};
