//! Session message framing and the two transports that carry it.
//!
//! Every message is `u32 length` (little-endian, counting the kind byte and
//! the payload), `u8 kind`, payload. Over TCP messages are written back to
//! back; over WebSocket each binary message holds exactly one framed
//! message, length prefix included.

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::TcpStream;

use tungstenite::protocol::WebSocketConfig;
use tungstenite::{Message, WebSocket};

use super::StreamError;

pub const PROTOCOL_VERSION: u16 = 1;
pub const ASSET_CHUNK_LEN: usize = 64 * 1024;
/// Upper bound on `length`; large enough for server-blend frames at 1024².
pub const MAX_MESSAGE_LEN: usize = 1 << 30;

pub const KIND_HELLO: u8 = 0;
pub const KIND_ASSET_CHUNK: u8 = 1;
pub const KIND_FRAME: u8 = 2;
pub const KIND_TEXFRAME: u8 = 3;
pub const KIND_END: u8 = 4;
pub const KIND_ERROR: u8 = 5;

pub const MODE_CLIENT_BLEND: u8 = 0;
pub const MODE_SERVER_BLEND: u8 = 1;

pub const ERR_VERSION: u16 = 1;
pub const ERR_BAD_MODE: u16 = 2;
pub const ERR_MODE_UNAVAILABLE: u16 = 3;
pub const ERR_PROTOCOL: u16 = 4;
pub const ERR_INTERNAL: u16 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendSite {
    Client,
    Server,
}

impl BlendSite {
    pub fn code(self) -> u8 {
        match self {
            BlendSite::Client => MODE_CLIENT_BLEND,
            BlendSite::Server => MODE_SERVER_BLEND,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            MODE_CLIENT_BLEND => Some(BlendSite::Client),
            MODE_SERVER_BLEND => Some(BlendSite::Server),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionMessage {
    /// `mode` is kept raw so that invalid requests can be answered.
    Hello { version: u16, mode: u8 },
    AssetChunk { seq: u32, total: u32, data: Vec<u8> },
    /// An encoded frame packet.
    Frame(Vec<u8>),
    /// An encoded texture frame.
    TexFrame(Vec<u8>),
    End,
    Error { code: u16, text: String },
}

impl SessionMessage {
    pub fn kind(&self) -> u8 {
        match self {
            SessionMessage::Hello { .. } => KIND_HELLO,
            SessionMessage::AssetChunk { .. } => KIND_ASSET_CHUNK,
            SessionMessage::Frame(_) => KIND_FRAME,
            SessionMessage::TexFrame(_) => KIND_TEXFRAME,
            SessionMessage::End => KIND_END,
            SessionMessage::Error { .. } => KIND_ERROR,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SessionMessage::Hello { .. } => "HELLO",
            SessionMessage::AssetChunk { .. } => "ASSET_CHUNK",
            SessionMessage::Frame(_) => "FRAME",
            SessionMessage::TexFrame(_) => "TEXFRAME",
            SessionMessage::End => "END",
            SessionMessage::Error { .. } => "ERROR",
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            SessionMessage::Hello { version, mode } => {
                let mut p = version.to_le_bytes().to_vec();
                p.push(*mode);
                p
            }
            SessionMessage::AssetChunk { seq, total, data } => {
                let mut p = Vec::with_capacity(8 + data.len());
                p.extend_from_slice(&seq.to_le_bytes());
                p.extend_from_slice(&total.to_le_bytes());
                p.extend_from_slice(data);
                p
            }
            SessionMessage::Frame(b) | SessionMessage::TexFrame(b) => b.clone(),
            SessionMessage::End => Vec::new(),
            SessionMessage::Error { code, text } => {
                let mut p = code.to_le_bytes().to_vec();
                p.extend_from_slice(text.as_bytes());
                p
            }
        }
    }

    /// The complete framed message: length, kind, payload.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(payload.len() as u32 + 1).to_le_bytes());
        out.push(self.kind());
        out.extend_from_slice(&payload);
        out
    }

    /// Parses a kind byte and its payload.
    pub fn parse(kind: u8, payload: Vec<u8>) -> Result<Self, StreamError> {
        let bad = |what: &str| StreamError::Protocol(format!("{what}: {} byte payload", payload.len()));
        Ok(match kind {
            KIND_HELLO => {
                if payload.len() != 3 {
                    return Err(bad("HELLO"));
                }
                SessionMessage::Hello { version: u16::from_le_bytes([payload[0], payload[1]]), mode: payload[2] }
            }
            KIND_ASSET_CHUNK => {
                if payload.len() < 8 || payload.len() > 8 + ASSET_CHUNK_LEN {
                    return Err(bad("ASSET_CHUNK"));
                }
                let seq = u32::from_le_bytes(payload[0..4].try_into().unwrap());
                let total = u32::from_le_bytes(payload[4..8].try_into().unwrap());
                if seq >= total {
                    return Err(StreamError::Protocol(format!("ASSET_CHUNK seq {seq} >= total {total}")));
                }
                SessionMessage::AssetChunk { seq, total, data: payload[8..].to_vec() }
            }
            KIND_FRAME => SessionMessage::Frame(payload),
            KIND_TEXFRAME => SessionMessage::TexFrame(payload),
            KIND_END => {
                if !payload.is_empty() {
                    return Err(bad("END"));
                }
                SessionMessage::End
            }
            KIND_ERROR => {
                if payload.len() < 2 {
                    return Err(bad("ERROR"));
                }
                SessionMessage::Error {
                    code: u16::from_le_bytes([payload[0], payload[1]]),
                    text: String::from_utf8_lossy(&payload[2..]).into_owned(),
                }
            }
            other => return Err(StreamError::Protocol(format!("unknown message kind {other}"))),
        })
    }

    /// Parses one complete framed message (as carried by a WebSocket
    /// binary message).
    pub fn decode(bytes: &[u8]) -> Result<Self, StreamError> {
        if bytes.len() < 5 {
            return Err(StreamError::Protocol(format!("framed message of {} bytes", bytes.len())));
        }
        let len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if len != bytes.len() - 4 {
            return Err(StreamError::Protocol(format!("length field {len}, message carries {}", bytes.len() - 4)));
        }
        Self::parse(bytes[4], bytes[5..].to_vec())
    }
}

/// A bidirectional, ordered message pipe. `send` returns the number of
/// bytes the framed message occupies; `recv` returns `None` on a clean end
/// of stream between messages.
pub trait Channel {
    fn send(&mut self, msg: &SessionMessage) -> Result<usize, StreamError>;
    fn recv(&mut self) -> Result<Option<(SessionMessage, usize)>, StreamError>;
}

/// Messages over any reliable byte stream (TCP, pipes, in-memory).
pub struct StreamChannel<R: Read, W: Write> {
    reader: R,
    writer: W,
}

impl<R: Read, W: Write> StreamChannel<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }
}

pub type TcpChannel = StreamChannel<BufReader<TcpStream>, BufWriter<TcpStream>>;

impl TcpChannel {
    pub fn tcp(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self::new(reader, BufWriter::new(stream)))
    }
}

impl<R: Read, W: Write> Channel for StreamChannel<R, W> {
    fn send(&mut self, msg: &SessionMessage) -> Result<usize, StreamError> {
        let bytes = msg.encode();
        self.writer.write_all(&bytes)?;
        self.writer.flush()?;
        Ok(bytes.len())
    }

    fn recv(&mut self) -> Result<Option<(SessionMessage, usize)>, StreamError> {
        let mut len = [0u8; 4];
        match self.reader.read(&mut len[..1]) {
            Ok(0) => return Ok(None),
            Ok(_) => {}
            Err(e) if e.kind() == ErrorKind::ConnectionReset => return Err(StreamError::Disconnected(e.to_string())),
            Err(e) => return Err(e.into()),
        }
        read_exact(&mut self.reader, &mut len[1..])?;
        let len = u32::from_le_bytes(len) as usize;
        if len == 0 || len > MAX_MESSAGE_LEN {
            return Err(StreamError::Protocol(format!("message length {len}")));
        }
        let mut kind = [0u8; 1];
        read_exact(&mut self.reader, &mut kind)?;
        // Grow with the data instead of trusting the length field up front.
        let mut payload = Vec::new();
        (&mut self.reader).take(len as u64 - 1).read_to_end(&mut payload)?;
        if payload.len() != len - 1 {
            return Err(StreamError::Disconnected(format!("message cut short after {} of {} bytes", payload.len(), len - 1)));
        }
        Ok(Some((SessionMessage::parse(kind[0], payload)?, len + 4)))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), StreamError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset => StreamError::Disconnected("message header cut short".into()),
        _ => e.into(),
    })
}

pub fn websocket_config() -> WebSocketConfig {
    WebSocketConfig::default()
        .max_message_size(Some(MAX_MESSAGE_LEN + 4))
        .max_frame_size(Some(MAX_MESSAGE_LEN + 4))
}

/// Messages over a WebSocket, one binary message per framed message.
pub struct WsChannel<S: Read + Write> {
    socket: WebSocket<S>,
}

impl<S: Read + Write> WsChannel<S> {
    pub fn new(socket: WebSocket<S>) -> Self {
        Self { socket }
    }

    /// Server side of the opening handshake.
    pub fn accept(stream: S) -> Result<Self, StreamError> {
        tungstenite::accept_with_config(stream, Some(websocket_config()))
            .map(Self::new)
            .map_err(|e| StreamError::WebSocket(e.to_string()))
    }

    /// Client side of the opening handshake; `url` is `ws://host:port/path`.
    pub fn connect(url: &str, stream: S) -> Result<Self, StreamError> {
        tungstenite::client::client_with_config(url, stream, Some(websocket_config()))
            .map(|(socket, _)| Self::new(socket))
            .map_err(|e| StreamError::WebSocket(e.to_string()))
    }

    pub fn close(&mut self) {
        let _ = self.socket.close(None);
        let _ = self.socket.flush();
    }
}

impl<S: Read + Write> Channel for WsChannel<S> {
    fn send(&mut self, msg: &SessionMessage) -> Result<usize, StreamError> {
        let bytes = msg.encode();
        let n = bytes.len();
        self.socket.send(Message::binary(bytes)).map_err(ws_error)?;
        Ok(n)
    }

    fn recv(&mut self) -> Result<Option<(SessionMessage, usize)>, StreamError> {
        loop {
            match self.socket.read() {
                Ok(Message::Binary(b)) => return Ok(Some((SessionMessage::decode(&b)?, b.len()))),
                Ok(Message::Close(_)) => {
                    let _ = self.socket.flush();
                    return Ok(None);
                }
                Ok(Message::Text(_)) => return Err(StreamError::Protocol("text WebSocket message".into())),
                Ok(_) => continue,
                Err(tungstenite::Error::ConnectionClosed) => return Ok(None),
                Err(e) => return Err(ws_error(e)),
            }
        }
    }
}

fn ws_error(e: tungstenite::Error) -> StreamError {
    match e {
        tungstenite::Error::Io(io) => StreamError::Disconnected(io.to_string()),
        tungstenite::Error::AlreadyClosed | tungstenite::Error::ConnectionClosed => {
            StreamError::Disconnected("WebSocket closed".into())
        }
        tungstenite::Error::Protocol(p) => StreamError::Disconnected(p.to_string()),
        other => StreamError::WebSocket(other.to_string()),
    }
}
