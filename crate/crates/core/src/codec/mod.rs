//! The `.lava` asset container and the per-frame wire packet. Both are
//! little-endian; see FORMAT.md for the byte layout.

mod asset;
mod frame;

use thiserror::Error;

use crate::error::InputError;

pub use asset::{
    decode_asset, encode_asset, read_container_info, ChunkEntry, ContainerInfo, EncodeOptions, Meta, CHUNK_ORDER,
    FLAG_DEFLATE, FLAG_SPECULAR, HEADER_LEN, MAGIC, META_LEN, TABLE_ENTRY_LEN,
};
pub use frame::{decode_frame, encode_frame, FramePacket, Pose, FRAME_TYPE, MAX_FRAME_BYTES, MAX_FRAME_PARAMS};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad magic \"{}\", expected \"LAVA\"", .0.escape_ascii())]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),
    #[error("{0}: truncated")]
    Truncated(String),
    #[error("chunk table: {0}")]
    ChunkTable(String),
    #[error("unknown chunk id {0:?}")]
    UnknownChunk(String),
    #[error("missing chunk {0}")]
    MissingChunk(String),
    #[error("chunk {chunk}: out of bounds ({reason})")]
    ChunkBounds { chunk: String, reason: String },
    #[error("chunk {chunk}: inconsistent dimensions ({reason})")]
    Dimension { chunk: &'static str, reason: String },
    #[error("chunk {chunk}: deflate stream is corrupt ({reason})")]
    Deflate { chunk: String, reason: String },
    #[error("chunk {chunk}: {source}")]
    Invalid { chunk: &'static str, source: InputError },
    #[error("frame packet: {0}")]
    Frame(String),
    #[error("frame packet carries {got} parameters, session expects {expected}")]
    ParamMismatch { expected: usize, got: usize },
}

/// Bounds-checked little-endian cursor; errors name the section being read.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], section: &'static str) -> Self {
        Self { bytes, pos: 0, section }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated(self.section.to_string()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
