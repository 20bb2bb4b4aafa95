//! IO, CLI and HTTP service around `blobforge-core`.

pub mod archive;
pub mod bench;
pub mod cli;
pub mod curate;
pub mod fixtures;
pub mod formats;
pub mod render;
pub mod schema;
pub mod server;
pub mod store;
