use crate::math::{Quat, Vec3};
use crate::model::ExpressionParams;

use super::{ByteReader, CodecError};

pub const FRAME_TYPE: u8 = 1;
/// Keeps every packet within 2 KiB.
pub const MAX_FRAME_PARAMS: usize = 500;
pub const MAX_FRAME_BYTES: usize = 2048;

/// Camera pose for server-side blending: translation and a unit
/// quaternion `(x, y, z, w)` rotating the canonical camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: [f32; 3],
    pub rotation: [f32; 4],
}

impl Pose {
    pub fn translation(&self) -> Vec3 {
        Vec3::from_f32(self.translation)
    }

    pub fn rotation(&self) -> Quat {
        let [x, y, z, w] = self.rotation.map(|v| v as f64);
        Quat { x, y, z, w }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket {
    pub frame: u32,
    pub params: Vec<f32>,
    pub pose: Option<Pose>,
}

impl FramePacket {
    pub fn new(frame: u32, params: &ExpressionParams, pose: Option<Pose>) -> Self {
        Self { frame, params: params.to_f32(), pose }
    }

    pub fn expression(&self) -> Result<ExpressionParams, CodecError> {
        ExpressionParams::from_f32(&self.params).map_err(|e| CodecError::Frame(e.to_string()))
    }

    pub fn encoded_len(&self) -> usize {
        1 + 4 + 2 + 4 * self.params.len() + 1 + if self.pose.is_some() { 28 } else { 0 }
    }
}

pub fn encode_frame(packet: &FramePacket) -> Result<Vec<u8>, CodecError> {
    if packet.params.len() > MAX_FRAME_PARAMS {
        return Err(CodecError::Frame(format!("{} parameters exceed the limit of {MAX_FRAME_PARAMS}", packet.params.len())));
    }
    let mut out = Vec::with_capacity(packet.encoded_len());
    out.push(FRAME_TYPE);
    out.extend_from_slice(&packet.frame.to_le_bytes());
    out.extend_from_slice(&(packet.params.len() as u16).to_le_bytes());
    for v in &packet.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    match &packet.pose {
        None => out.push(0),
        Some(p) => {
            out.push(1);
            for v in p.translation.iter().chain(&p.rotation) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parses one packet; `expected_params` is the session's declared `p`.
pub fn decode_frame(bytes: &[u8], expected_params: Option<usize>) -> Result<FramePacket, CodecError> {
    let mut r = ByteReader::new(bytes, "frame packet");
    let kind = r.u8()?;
    if kind != FRAME_TYPE {
        return Err(CodecError::Frame(format!("packet type {kind}, expected {FRAME_TYPE}")));
    }
    let frame = r.u32()?;
    let p = r.u16()? as usize;
    if let Some(expected) = expected_params {
        if p != expected {
            return Err(CodecError::ParamMismatch { expected, got: p });
        }
    }
    let mut params = Vec::with_capacity(p.min(MAX_FRAME_PARAMS));
    for _ in 0..p {
        params.push(r.f32()?);
    }
    let pose = match r.u8()? {
        0 => None,
        1 => {
            let mut v = [0f32; 7];
            for x in &mut v {
                *x = r.f32()?;
            }
            Some(Pose { translation: [v[0], v[1], v[2]], rotation: [v[3], v[4], v[5], v[6]] })
        }
        other => return Err(CodecError::Frame(format!("pose flag {other}, expected 0 or 1"))),
    };
    if r.remaining() != 0 {
        return Err(CodecError::Frame(format!("{} trailing bytes", r.remaining())));
    }
    Ok(FramePacket { frame, params, pose })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_params_packet_is_260_bytes() {
        let pkt = FramePacket::new(0, &ExpressionParams::zeros(63), None);
        // 1 type + 4 frame + 2 count + 63 * 4 values + 1 pose flag.
        assert_eq!(encode_frame(&pkt).unwrap().len(), 1 + 4 + 2 + 252 + 1);
        assert_eq!(pkt.encoded_len(), 260);
    }

    #[test]
    fn largest_packet_fits_budget() {
        let pose = Pose { translation: [1.0; 3], rotation: [0.0, 0.0, 0.0, 1.0] };
        let pkt = FramePacket { frame: 9, params: vec![0.5; MAX_FRAME_PARAMS], pose: Some(pose) };
        assert!(encode_frame(&pkt).unwrap().len() <= MAX_FRAME_BYTES);
        let too_big = FramePacket { params: vec![0.0; MAX_FRAME_PARAMS + 1], ..pkt };
        assert!(encode_frame(&too_big).is_err());
    }

    #[test]
    fn truncation_and_mismatch() {
        let bytes = encode_frame(&FramePacket::new(3, &ExpressionParams::zeros(4), None)).unwrap();
        for cut in 0..bytes.len() {
            assert!(matches!(decode_frame(&bytes[..cut], None), Err(CodecError::Truncated(_))), "cut {cut}");
        }
        assert!(matches!(decode_frame(&bytes, Some(5)), Err(CodecError::ParamMismatch { expected: 5, got: 4 })));
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() = 2;
        assert!(decode_frame(&bad, None).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_frame(&long, None).is_err());
    }

    proptest! {
        #[test]
        fn random_packets_round_trip(
            frame in any::<u32>(),
            params in proptest::collection::vec(-1e6f32..1e6, 0..80),
            pose in proptest::option::of((proptest::array::uniform3(-10f32..10.0), proptest::array::uniform4(-1f32..1.0))),
        ) {
            let pkt = FramePacket {
                frame,
                params,
                pose: pose.map(|(t, r)| Pose { translation: t, rotation: r }),
            };
            let bytes = encode_frame(&pkt).unwrap();
            prop_assert_eq!(bytes.len(), pkt.encoded_len());
            prop_assert_eq!(decode_frame(&bytes, Some(pkt.params.len())).unwrap(), pkt);
        }
    }
}
