//! File formats, corpus handling and the `melcap` command-line tool.
//!
//! Binary artifacts are little-endian and start with a 4-byte magic and a
//! `u16` version:
//!
//! | magic  | contents                                   |
//! |--------|--------------------------------------------|
//! | `MCBK` | patch codebook                             |
//! | `MCAP` | token grid for one clip                    |
//! | `MFST` | convolutional feature stack                |
//! | `MLMS` | log-mel spectrogram with its analysis setup |

pub mod commands;
pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod formats;
pub mod report;
pub mod wav;

pub use error::{CliError, Result};
