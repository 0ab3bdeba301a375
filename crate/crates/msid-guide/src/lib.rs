//! Compiles every code block in the book as a doc-test.
//!
//! mdBook renders `book/` on its own but cannot type-check the samples
//! against this workspace. Including each chapter as module documentation
//! makes `cargo test --doc` pick up the fences, so a sample that drifts
//! from the library breaks the build instead of the reader.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/signals.md")]
pub mod signals {}

#[doc = include_str!("../../../book/src/images.md")]
pub mod images {}

#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}

#[doc = include_str!("../../../book/src/svm.md")]
pub mod svm {}

#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
