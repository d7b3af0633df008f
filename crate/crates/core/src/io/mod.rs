//! Configuration files, stream files and result tables.

pub mod config;
pub mod report;
pub mod stream_file;

pub use config::{load_config, parse_config, RunConfig};
pub use report::{read_csv, read_json, write_csv, write_json, RunMetadata};
pub use stream_file::{
    open_stream, read_stream, write_stream, StreamFileHeader, StreamReader, StreamWriter,
};
