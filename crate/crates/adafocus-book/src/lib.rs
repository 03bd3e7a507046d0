//! mdbook renders the guide in `book/` but cannot execute its Rust
//! listings. This crate closes that gap: each chapter is included as
//! the doc comment of an empty module, so `cargo test --doc` compiles
//! and runs every ```rust fence exactly as rustdoc doctests. One
//! module per chapter keeps failures attributable.
//!
//! Listings stay honest by construction; editing a chapter edits the
//! tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/preview-sampling.md")]
pub mod preview_sampling {}

#[doc = include_str!("../../../book/src/confidence-gate.md")]
pub mod confidence_gate {}

#[doc = include_str!("../../../book/src/grounding.md")]
pub mod grounding {}

#[doc = include_str!("../../../book/src/archive-format.md")]
pub mod archive_format {}

#[doc = include_str!("../../../book/src/pipeline-and-traces.md")]
pub mod pipeline_and_traces {}

#[doc = include_str!("../../../book/src/cli-and-wire.md")]
pub mod cli_and_wire {}
