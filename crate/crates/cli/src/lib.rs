//! Library side of the `explab` command-line tool: channel files, run
//! configurations and result persistence.

pub mod channel;
pub mod output;
pub mod run;

pub use channel::{parse_channel, ChannelSpec, ParseError};
pub use run::{run, CommandConfig, RunConfig, RunOutput};
