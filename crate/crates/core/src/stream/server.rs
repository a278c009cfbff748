use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread;

use crate::blend::{blend_weights, BlendBasis};
use crate::codec::{encode_asset, encode_frame, EncodeOptions, FramePacket, Pose};
use crate::model::{AvatarAsset, ExpressionParams};

use super::message::*;
use super::texframe::{encode_texframe, TextureCodec};
use super::StreamError;

/// One entry of the server's frame source.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFrame {
    pub params: ExpressionParams,
    pub pose: Option<Pose>,
}

impl StreamFrame {
    pub fn new(params: ExpressionParams) -> Self {
        Self { params, pose: None }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Modes a client may request.
    pub modes: Vec<BlendSite>,
    pub texture_codec: TextureCodec,
    pub asset_encoding: EncodeOptions,
}

impl ServerConfig {
    pub fn single(mode: BlendSite) -> Self {
        Self { modes: vec![mode], texture_codec: TextureCodec::Raw, asset_encoding: EncodeOptions::default() }
    }
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            modes: vec![BlendSite::Client, BlendSite::Server],
            texture_codec: TextureCodec::Raw,
            asset_encoding: EncodeOptions::default(),
        }
    }
}

/// What one session put on the wire. Frame payloads exclude the 5-byte
/// message header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionStats {
    pub mode: BlendSite,
    pub bytes_sent: u64,
    pub asset_bytes: u64,
    pub asset_messages: u32,
    pub asset_transfers: u32,
    pub frames: u32,
    pub frame_payload_bytes: u64,
    pub max_frame_payload: u64,
}

impl SessionStats {
    fn new(mode: BlendSite) -> Self {
        Self {
            mode,
            bytes_sent: 0,
            asset_bytes: 0,
            asset_messages: 0,
            asset_transfers: 0,
            frames: 0,
            frame_payload_bytes: 0,
            max_frame_payload: 0,
        }
    }

    pub fn mean_frame_payload(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.frame_payload_bytes as f64 / self.frames as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp,
    WebSocket,
}

/// Immutable state shared by every session: the asset, its encoded bytes,
/// and the frame sequence.
pub struct Server {
    asset: AvatarAsset,
    encoded: Vec<u8>,
    frames: Vec<StreamFrame>,
    config: ServerConfig,
}

impl Server {
    pub fn new(asset: AvatarAsset, frames: Vec<StreamFrame>, config: ServerConfig) -> Result<Self, StreamError> {
        let p = asset.mapper().param_count();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.params.len() != p) {
            return Err(StreamError::Protocol(format!("frame {i} has {} parameters, asset expects {p}", f.params.len())));
        }
        if config.modes.is_empty() {
            return Err(StreamError::Protocol("server offers no blend mode".into()));
        }
        let encoded = encode_asset(&asset, config.asset_encoding)?;
        Ok(Self { asset, encoded, frames, config })
    }

    pub fn asset(&self) -> &AvatarAsset {
        &self.asset
    }

    pub fn encoded_asset(&self) -> &[u8] {
        &self.encoded
    }

    /// Runs one session to completion on `ch`.
    pub fn serve_session(&self, ch: &mut dyn Channel) -> Result<SessionStats, StreamError> {
        let mode = self.handshake(ch)?;
        let mut stats = SessionStats::new(mode);
        stats.bytes_sent += ch.send(&SessionMessage::Hello { version: PROTOCOL_VERSION, mode: mode.code() })? as u64;
        match self.stream(ch, &mut stats) {
            Ok(()) => Ok(stats),
            Err(e) => {
                let _ = ch.send(&SessionMessage::Error { code: ERR_INTERNAL, text: e.to_string() });
                Err(e)
            }
        }
    }

    fn handshake(&self, ch: &mut dyn Channel) -> Result<BlendSite, StreamError> {
        let (version, mode) = match ch.recv()? {
            Some((SessionMessage::Hello { version, mode }, _)) => (version, mode),
            Some((other, _)) => return refuse(ch, ERR_PROTOCOL, format!("expected HELLO, got {}", other.kind_name())),
            None => return Err(StreamError::Disconnected("client left before HELLO".into())),
        };
        if version != PROTOCOL_VERSION {
            return refuse(ch, ERR_VERSION, format!("protocol version {version} unsupported, server speaks {PROTOCOL_VERSION}"));
        }
        let Some(site) = BlendSite::from_code(mode) else {
            return refuse(ch, ERR_BAD_MODE, format!("unknown mode {mode}"));
        };
        if !self.config.modes.contains(&site) {
            return refuse(ch, ERR_MODE_UNAVAILABLE, format!("mode {mode} not offered"));
        }
        Ok(site)
    }

    fn stream(&self, ch: &mut dyn Channel, stats: &mut SessionStats) -> Result<(), StreamError> {
        let total = self.encoded.len().div_ceil(ASSET_CHUNK_LEN) as u32;
        for (seq, data) in self.encoded.chunks(ASSET_CHUNK_LEN).enumerate() {
            let msg = SessionMessage::AssetChunk { seq: seq as u32, total, data: data.to_vec() };
            stats.bytes_sent += ch.send(&msg)? as u64;
            stats.asset_messages += 1;
        }
        stats.asset_bytes = self.encoded.len() as u64;
        stats.asset_transfers += 1;

        let (mut warp, mut tex) = (None, None);
        for (i, f) in self.frames.iter().enumerate() {
            let frame = i as u32;
            let msg = match stats.mode {
                BlendSite::Client => SessionMessage::Frame(encode_frame(&FramePacket::new(frame, &f.params, f.pose))?),
                BlendSite::Server => {
                    let w = blend_weights(self.asset.mapper(), &f.params)?;
                    self.asset.warps().blend_into(&w.gamma, &mut warp)?;
                    self.asset.textures().blend_into(&w.beta, &mut tex)?;
                    let (warp, tex) = (warp.as_ref().expect("blended"), tex.as_ref().expect("blended"));
                    SessionMessage::TexFrame(encode_texframe(frame, f.pose, warp, tex, self.config.texture_codec)?)
                }
            };
            let n = ch.send(&msg)? as u64;
            stats.bytes_sent += n;
            stats.frames += 1;
            stats.frame_payload_bytes += n - 5;
            stats.max_frame_payload = stats.max_frame_payload.max(n - 5);
        }
        stats.bytes_sent += ch.send(&SessionMessage::End)? as u64;
        Ok(())
    }

    /// Accepts connections on `listener`, one thread per session. Stops
    /// accepting after `max_sessions` (if set), waits for those sessions,
    /// and returns their outcomes in accept order.
    pub fn serve_listener(
        self: &Arc<Self>,
        listener: TcpListener,
        transport: Transport,
        max_sessions: Option<usize>,
        report: impl Fn(SocketAddr, &Result<SessionStats, StreamError>) + Send + Sync + 'static,
    ) -> std::io::Result<Vec<Result<SessionStats, StreamError>>> {
        let report = Arc::new(report);
        let mut handles = Vec::new();
        while max_sessions.is_none_or(|m| handles.len() < m) {
            let (stream, peer) = listener.accept()?;
            let server = Arc::clone(self);
            let report = Arc::clone(&report);
            handles.push(thread::spawn(move || {
                let result = match transport {
                    Transport::Tcp => TcpChannel::tcp(stream)
                        .map_err(StreamError::from)
                        .and_then(|mut ch| server.serve_session(&mut ch)),
                    Transport::WebSocket => WsChannel::accept(stream).and_then(|mut ch| {
                        let r = server.serve_session(&mut ch);
                        ch.close();
                        r
                    }),
                };
                report(peer, &result);
                result
            }));
            if max_sessions.is_none() {
                handles.retain(|h| !h.is_finished());
            }
        }
        Ok(handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(StreamError::Protocol("session thread panicked".into()))))
            .collect())
    }
}

fn refuse<T>(ch: &mut dyn Channel, code: u16, text: String) -> Result<T, StreamError> {
    let _ = ch.send(&SessionMessage::Error { code, text: text.clone() });
    Err(StreamError::Refused { code, text })
}

/// Serves one session of `frames` over `ch` in a fixed mode.
pub fn serve(
    asset: AvatarAsset,
    frames: Vec<StreamFrame>,
    mode: BlendSite,
    ch: &mut dyn Channel,
) -> Result<SessionStats, StreamError> {
    Server::new(asset, frames, ServerConfig::single(mode))?.serve_session(ch)
}
