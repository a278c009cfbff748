//! Session protocol: one-time asset transfer, then per-frame parameters
//! (client-blend) or blended maps (server-blend). PROTOCOL.md has the byte
//! layout.

mod client;
mod message;
mod server;
mod texframe;

use thiserror::Error;

use crate::codec::CodecError;
use crate::error::InputError;

pub use client::{client_session, ClientConfig, ClientFailure, ClientStats};
pub use message::*;
pub use server::{serve, ServerConfig, Server, SessionStats, StreamFrame, Transport};
pub use texframe::{
    decode_texframe, encode_texframe, TexFrame, TexFrameShape, TextureCodec, CODEC_DEFLATE, CODEC_RAW,
    TEXFRAME_HEADER_LEN,
};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("websocket: {0}")]
    WebSocket(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("peer disconnected: {0}")]
    Disconnected(String),
    #[error("asset reassembly failed: {0}")]
    Reassembly(String),
    #[error("session refused with code {code}: {text}")]
    Refused { code: u16, text: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("frame sink: {0}")]
    Sink(String),
}
