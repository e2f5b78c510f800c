//! Persistence and network transport for tag streams.

pub mod file;
pub mod terminal;
pub mod wire;

pub use file::{
    decode_tags, read_tag_file, read_tags, write_tag_file, write_tags, TagFileHeader, HEADER_LEN,
};
pub use terminal::{site_run, SiteStreams, Terminal};
pub use wire::{decode_wire, encode_wire, site_send, DEFAULT_BATCH};
