use crate::camera::Camera;
use crate::codec::{decode_asset, decode_frame, Pose};
use crate::model::AvatarAsset;
use crate::raster::{Frame, RenderOptions, Renderer};

use super::message::*;
use super::texframe::{decode_texframe, TexFrameShape};
use super::StreamError;

#[derive(Debug, Clone, Default)]
pub struct ClientConfig {
    pub mode: Option<BlendSite>,
    pub options: RenderOptions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientStats {
    pub mode: Option<BlendSite>,
    pub bytes_received: u64,
    pub asset_bytes: u64,
    pub asset_messages: u32,
    pub frames: u32,
    pub frame_payload_bytes: u64,
}

/// A session that stopped early. Frames already handed to the sink are the
/// partial result.
#[derive(Debug)]
pub struct ClientFailure {
    pub stats: ClientStats,
    pub error: StreamError,
}

impl std::fmt::Display for ClientFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "session failed after {} frames: {}", self.stats.frames, self.error)
    }
}

impl std::error::Error for ClientFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs a viewing session: requests `config.mode` (client-blend when
/// unset), reassembles the asset, and renders every frame with the camera
/// returned by `camera` for that frame index. A pose in the frame replaces
/// the camera's position and orientation. Rendered frames go to `sink`.
pub fn client_session(
    ch: &mut dyn Channel,
    config: &ClientConfig,
    camera: &mut dyn FnMut(u32) -> Camera,
    sink: &mut dyn FnMut(u32, Frame) -> Result<(), StreamError>,
) -> Result<ClientStats, ClientFailure> {
    let mut session = Session {
        stats: ClientStats {
            mode: None,
            bytes_received: 0,
            asset_bytes: 0,
            asset_messages: 0,
            frames: 0,
            frame_payload_bytes: 0,
        },
    };
    match session.run(ch, config, camera, sink) {
        Ok(()) => Ok(session.stats),
        Err(error) => Err(ClientFailure { stats: session.stats, error }),
    }
}

struct Session {
    stats: ClientStats,
}

impl Session {
    fn recv(&mut self, ch: &mut dyn Channel) -> Result<Option<SessionMessage>, StreamError> {
        let m = ch.recv()?;
        if let Some((msg, n)) = m {
            self.stats.bytes_received += n as u64;
            if let SessionMessage::Error { code, text } = msg {
                return Err(StreamError::Refused { code, text });
            }
            return Ok(Some(msg));
        }
        Ok(None)
    }

    fn run(
        &mut self,
        ch: &mut dyn Channel,
        config: &ClientConfig,
        camera: &mut dyn FnMut(u32) -> Camera,
        sink: &mut dyn FnMut(u32, Frame) -> Result<(), StreamError>,
    ) -> Result<(), StreamError> {
        let requested = config.mode.unwrap_or(BlendSite::Client);
        ch.send(&SessionMessage::Hello { version: PROTOCOL_VERSION, mode: requested.code() })?;
        let mode = match self.recv(ch)? {
            Some(SessionMessage::Hello { version, mode }) if version == PROTOCOL_VERSION && mode == requested.code() => {
                requested
            }
            Some(SessionMessage::Hello { version, mode }) => {
                return Err(StreamError::Protocol(format!("server answered version {version} mode {mode}")))
            }
            Some(other) => return Err(StreamError::Protocol(format!("expected HELLO, got {}", other.kind_name()))),
            None => return Err(StreamError::Disconnected("server closed before HELLO".into())),
        };
        self.stats.mode = Some(mode);

        let asset = self.receive_asset(ch)?;
        let shape = TexFrameShape::of(&asset);
        let params = asset.mapper().param_count();
        let mut renderer = Renderer::new();
        loop {
            let msg = match self.recv(ch) {
                Ok(Some(m)) => m,
                Ok(None) => return Err(StreamError::Disconnected("stream ended before END".into())),
                Err(e) => return Err(e),
            };
            let payload = match &msg {
                SessionMessage::Frame(b) | SessionMessage::TexFrame(b) => b.len() as u64,
                _ => 0,
            };
            let (index, frame) = match (mode, msg) {
                (_, SessionMessage::End) => return Ok(()),
                (BlendSite::Client, SessionMessage::Frame(bytes)) => {
                    let packet = decode_frame(&bytes, Some(params))?;
                    let cam = posed(camera(packet.frame), packet.pose)?;
                    (packet.frame, renderer.render(&asset, &packet.expression()?, &cam, &config.options)?)
                }
                (BlendSite::Server, SessionMessage::TexFrame(bytes)) => {
                    let t = decode_texframe(&bytes, &shape)?;
                    let cam = posed(camera(t.frame), t.pose)?;
                    (t.frame, renderer.render_blended(asset.mesh(), &t.warp, &t.tex, &cam, &config.options)?)
                }
                (_, other) => {
                    return Err(StreamError::Protocol(format!("unexpected {} in {mode:?}-blend session", other.kind_name())))
                }
            };
            self.stats.frames += 1;
            self.stats.frame_payload_bytes += payload;
            sink(index, frame)?;
        }
    }

    fn receive_asset(&mut self, ch: &mut dyn Channel) -> Result<AvatarAsset, StreamError> {
        let mut bytes = Vec::new();
        let mut expected_total = None;
        loop {
            let got = self.stats.asset_messages;
            let msg = self.recv(ch).map_err(|e| match e {
                StreamError::Disconnected(why) => {
                    StreamError::Reassembly(format!("connection lost after {got} chunks ({why})"))
                }
                other => other,
            })?;
            match msg {
                Some(SessionMessage::AssetChunk { seq, total, data }) => {
                    if *expected_total.get_or_insert(total) != total || seq != got {
                        return Err(StreamError::Reassembly(format!("chunk {seq}/{total} arrived as number {got}")));
                    }
                    bytes.extend_from_slice(&data);
                    self.stats.asset_messages += 1;
                    if seq + 1 == total {
                        break;
                    }
                }
                Some(other) => {
                    return Err(StreamError::Reassembly(format!(
                        "{} after {got} chunks, asset incomplete",
                        other.kind_name()
                    )))
                }
                None => return Err(StreamError::Reassembly(format!("stream ended after {got} chunks"))),
            }
        }
        self.stats.asset_bytes = bytes.len() as u64;
        Ok(decode_asset(&bytes)?)
    }
}

fn posed(camera: Camera, pose: Option<Pose>) -> Result<Camera, StreamError> {
    match pose {
        Some(p) => Ok(camera.with_pose(p.translation(), p.rotation())?),
        None => Ok(camera),
    }
}
