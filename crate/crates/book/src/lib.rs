//! The guide's chapters, compiled so that every listing runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/seeds-and-splits.md")]
pub mod seeds_and_splits {}
#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}
#[doc = include_str!("../../../book/src/server.md")]
pub mod server {}
#[doc = include_str!("../../../book/src/statistics.md")]
pub mod statistics {}
#[doc = include_str!("../../../book/src/study.md")]
pub mod study {}
