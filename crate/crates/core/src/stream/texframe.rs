//! TEXFRAME payloads: blended maps computed on the server.
//!
//! Layout: u32 frame, u8 codec (0 raw, 1 deflate), u8 flags (bit 0 pose,
//! bit 1 specular), optional 28-byte pose, then the body. The body (after
//! inflating when codec is 1) holds, per layer, the blended warp map as
//! `res_w² * 2` f32 values, the blended RGBA as `res_t² * 4` unorm8 bytes,
//! and with bit 1 set the specular SH as `res_t² * 24` f16 values.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use half::f16;

use crate::blend::{BlendedTexture, BlendedWarp};
use crate::codec::Pose;
use crate::model::{AvatarAsset, SH_TEXEL_LEN};

use super::StreamError;

pub const CODEC_RAW: u8 = 0;
pub const CODEC_DEFLATE: u8 = 1;
const FLAG_POSE: u8 = 1;
const FLAG_SPECULAR: u8 = 2;
pub const TEXFRAME_HEADER_LEN: usize = 6;
const POSE_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureCodec {
    Raw,
    Deflate,
}

impl TextureCodec {
    pub fn id(self) -> u8 {
        match self {
            TextureCodec::Raw => CODEC_RAW,
            TextureCodec::Deflate => CODEC_DEFLATE,
        }
    }
}

/// Map dimensions a session's texture frames must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TexFrameShape {
    pub layers: usize,
    pub warp_res: usize,
    pub tex_res: usize,
    pub specular: bool,
}

impl TexFrameShape {
    pub fn of(asset: &AvatarAsset) -> Self {
        Self {
            layers: asset.mesh().num_layers(),
            warp_res: asset.warps().res(),
            tex_res: asset.textures().res(),
            specular: asset.textures().has_specular(),
        }
    }

    fn layer_len(&self) -> usize {
        let w = self.warp_res * self.warp_res;
        let t = self.tex_res * self.tex_res;
        w * 8 + t * 4 + if self.specular { t * SH_TEXEL_LEN * 2 } else { 0 }
    }

    /// Uncompressed body size in bytes.
    pub fn body_len(&self) -> usize {
        self.layers * self.layer_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexFrame {
    pub frame: u32,
    pub pose: Option<Pose>,
    pub warp: BlendedWarp,
    pub tex: BlendedTexture,
}

pub fn encode_texframe(
    frame: u32,
    pose: Option<Pose>,
    warp: &BlendedWarp,
    tex: &BlendedTexture,
    codec: TextureCodec,
) -> Result<Vec<u8>, StreamError> {
    if warp.layers() != tex.layers() {
        return Err(StreamError::Protocol(format!("{} warp layers vs {} texture layers", warp.layers(), tex.layers())));
    }
    let shape = TexFrameShape {
        layers: warp.layers(),
        warp_res: warp.res(),
        tex_res: tex.res(),
        specular: tex.specular().is_some(),
    };
    let rgba = tex.quantized_rgba();
    let (wl, tl) = (shape.warp_res * shape.warp_res * 2, shape.tex_res * shape.tex_res);
    let mut body = Vec::with_capacity(shape.body_len());
    for i in 0..shape.layers {
        for v in &warp.data()[i * wl..(i + 1) * wl] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body.extend_from_slice(&rgba[i * tl * 4..(i + 1) * tl * 4]);
        if let Some(s) = tex.specular() {
            let sl = tl * SH_TEXEL_LEN;
            for v in &s[i * sl..(i + 1) * sl] {
                body.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
            }
        }
    }
    let mut out = Vec::with_capacity(TEXFRAME_HEADER_LEN + POSE_LEN + body.len());
    out.extend_from_slice(&frame.to_le_bytes());
    out.push(codec.id());
    out.push(if pose.is_some() { FLAG_POSE } else { 0 } | if shape.specular { FLAG_SPECULAR } else { 0 });
    if let Some(p) = pose {
        for v in p.translation.iter().chain(&p.rotation) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    match codec {
        TextureCodec::Raw => out.extend_from_slice(&body),
        TextureCodec::Deflate => {
            let mut enc = DeflateEncoder::new(out, Compression::fast());
            enc.write_all(&body)?;
            out = enc.finish()?;
        }
    }
    Ok(out)
}

pub fn decode_texframe(bytes: &[u8], shape: &TexFrameShape) -> Result<TexFrame, StreamError> {
    let bad = |m: String| StreamError::Protocol(format!("TEXFRAME: {m}"));
    if bytes.len() < TEXFRAME_HEADER_LEN {
        return Err(bad("truncated header".into()));
    }
    let frame = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let (codec, flags) = (bytes[4], bytes[5]);
    if flags & !(FLAG_POSE | FLAG_SPECULAR) != 0 {
        return Err(bad(format!("unknown flags {flags:#04x}")));
    }
    if (flags & FLAG_SPECULAR != 0) != shape.specular {
        return Err(bad("specular flag disagrees with the asset".into()));
    }
    let mut rest = &bytes[TEXFRAME_HEADER_LEN..];
    let pose = if flags & FLAG_POSE != 0 {
        if rest.len() < POSE_LEN {
            return Err(bad("truncated pose".into()));
        }
        let v: Vec<f32> = rest[..POSE_LEN].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        rest = &rest[POSE_LEN..];
        Some(Pose { translation: [v[0], v[1], v[2]], rotation: [v[3], v[4], v[5], v[6]] })
    } else {
        None
    };
    let expected = shape.body_len();
    let inflated;
    let body = match codec {
        CODEC_RAW => rest,
        CODEC_DEFLATE => {
            let mut buf = Vec::new();
            DeflateDecoder::new(rest)
                .take(expected as u64 + 1)
                .read_to_end(&mut buf)
                .map_err(|e| bad(format!("corrupt deflate stream ({e})")))?;
            inflated = buf;
            &inflated
        }
        other => return Err(bad(format!("unknown codec id {other}"))),
    };
    if body.len() != expected {
        return Err(bad(format!("body is {} bytes, expected {expected}", body.len())));
    }

    let (wl, tl) = (shape.warp_res * shape.warp_res * 2, shape.tex_res * shape.tex_res);
    let mut warp = Vec::with_capacity(shape.layers * wl);
    let mut rgba = Vec::with_capacity(shape.layers * tl * 4);
    let mut spec = shape.specular.then(|| Vec::with_capacity(shape.layers * tl * SH_TEXEL_LEN));
    for layer in body.chunks_exact(shape.layer_len()) {
        let (w, layer) = layer.split_at(wl * 4);
        let (t, s) = layer.split_at(tl * 4);
        warp.extend(w.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
        rgba.extend(t.iter().map(|&q| q as f32 / 255.0));
        if let Some(spec) = &mut spec {
            spec.extend(s.chunks_exact(2).map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32()));
        }
    }
    if !warp.iter().chain(spec.iter().flatten()).all(|v| v.is_finite()) {
        return Err(bad("non-finite map value".into()));
    }
    let warp = BlendedWarp::from_raw(shape.layers, shape.warp_res, warp).map_err(|e| bad(e.to_string()))?;
    let tex = BlendedTexture::from_raw(shape.layers, shape.tex_res, rgba, spec).map_err(|e| bad(e.to_string()))?;
    Ok(TexFrame { frame, pose, warp, tex })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(specular: bool) -> (BlendedWarp, BlendedTexture) {
        let warp = BlendedWarp::from_raw(2, 2, (0..16).map(|i| i as f32 * 0.125 - 1.0).collect()).unwrap();
        let rgba = (0..32).map(|i| i as f32 / 31.0).collect();
        let spec = specular.then(|| (0..2 * 4 * SH_TEXEL_LEN).map(|i| (i % 7) as f32 * 0.25).collect());
        (warp, BlendedTexture::from_raw(2, 2, rgba, spec).unwrap())
    }

    #[test]
    fn raw_size_is_arithmetic() {
        let (w, t) = maps(false);
        let b = encode_texframe(3, None, &w, &t, TextureCodec::Raw).unwrap();
        assert_eq!(b.len(), 6 + 2 * (4 * 2 * 4 + 4 * 4));
        let shape = TexFrameShape { layers: 2, warp_res: 2, tex_res: 2, specular: false };
        assert_eq!(b.len(), TEXFRAME_HEADER_LEN + shape.body_len());
    }

    #[test]
    fn round_trip_quantizes_rgba_once() {
        for specular in [false, true] {
            let (w, t) = maps(specular);
            let pose = Some(Pose { translation: [1.0, 2.0, 3.0], rotation: [0.0, 0.0, 0.0, 1.0] });
            let shape = TexFrameShape { layers: 2, warp_res: 2, tex_res: 2, specular };
            for codec in [TextureCodec::Raw, TextureCodec::Deflate] {
                let d = decode_texframe(&encode_texframe(9, pose, &w, &t, codec).unwrap(), &shape).unwrap();
                assert_eq!((d.frame, d.pose), (9, pose));
                assert_eq!(d.warp, w);
                for (a, b) in d.tex.rgba().iter().zip(t.rgba()) {
                    assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
                }
                assert_eq!(d.tex.specular(), t.specular());
            }
        }
    }

    #[test]
    fn rejects_mismatches() {
        let (w, t) = maps(false);
        let b = encode_texframe(0, None, &w, &t, TextureCodec::Raw).unwrap();
        let shape = TexFrameShape { layers: 2, warp_res: 2, tex_res: 2, specular: false };
        assert!(decode_texframe(&b[..b.len() - 1], &shape).is_err());
        assert!(decode_texframe(&b, &TexFrameShape { specular: true, ..shape }).is_err());
        assert!(decode_texframe(&b, &TexFrameShape { layers: 3, ..shape }).is_err());
        let mut c = b.clone();
        c[4] = 2;
        assert!(decode_texframe(&c, &shape).is_err());
        let mut nan = b.clone();
        nan[6..10].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_texframe(&nan, &shape).is_err());
    }
}
