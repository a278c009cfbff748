use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use half::f16;

use crate::model::{
    AvatarAsset, BlendMapper, LayeredMesh, MeshLayer, TextureAtlas, WarpAtlas, FORMAT_VERSION, SH_TEXEL_LEN,
};

use super::{ByteReader, CodecError};

pub const MAGIC: [u8; 4] = *b"LAVA";
pub const FLAG_SPECULAR: u16 = 1;
pub const FLAG_DEFLATE: u16 = 1 << 1;
/// Magic, version, flags, chunk count.
pub const HEADER_LEN: usize = 12;
/// Id, offset, length.
pub const TABLE_ENTRY_LEN: usize = 20;
pub const META_LEN: usize = 8 * 4 + 3 * 4;

pub const CHUNK_ORDER: [&[u8; 4]; 6] = [b"META", b"MESH", b"WARP", b"TDIF", b"TSPC", b"BLND"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncodeOptions {
    pub deflate: bool,
}

/// Decoded `META` chunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meta {
    pub layers: u32,
    pub warp_basis: u32,
    pub tex_basis: u32,
    pub params: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub tex_res: u32,
    pub warp_res: u32,
    pub scene_center: [f32; 3],
}

/// One chunk table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkEntry {
    pub id: [u8; 4],
    pub offset: u64,
    pub length: u64,
}

impl ChunkEntry {
    pub fn name(&self) -> String {
        String::from_utf8_lossy(&self.id).into_owned()
    }
}

/// Header fields and chunk table, without decoding chunk payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainerInfo {
    pub version: u16,
    pub flags: u16,
    pub chunks: Vec<ChunkEntry>,
    pub meta: Meta,
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    out.reserve(v.len() * 4);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn dim(v: usize, what: &'static str) -> Result<u32, CodecError> {
    u32::try_from(v).map_err(|_| CodecError::Dimension { chunk: "META", reason: format!("{what} {v} exceeds u32") })
}

fn meta_bytes(asset: &AvatarAsset) -> Result<Vec<u8>, CodecError> {
    let m = asset.meta();
    let (rows, cols) = asset.mesh().grid();
    let mut out = Vec::with_capacity(META_LEN);
    for v in [
        dim(m.layers, "layers")?,
        dim(m.warp_basis, "warp basis")?,
        dim(m.tex_basis, "texture basis")?,
        dim(m.params, "params")?,
        rows,
        cols,
        dim(asset.textures().res(), "texture resolution")?,
        dim(asset.warps().res(), "warp resolution")?,
    ] {
        put_u32(&mut out, v);
    }
    put_f32s(&mut out, &m.scene_center);
    Ok(out)
}

fn mesh_bytes(mesh: &LayeredMesh) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    for layer in mesh.layers() {
        put_u32(&mut out, dim(layer.vertex_count(), "vertex count")?);
        for p in &layer.positions {
            put_f32s(&mut out, p);
        }
        for uv in &layer.canonical_uv {
            put_f32s(&mut out, uv);
        }
        put_u32(&mut out, dim(layer.indices.len(), "triangle count")?);
        for t in &layer.indices {
            for i in t {
                put_u32(&mut out, *i);
            }
        }
    }
    Ok(out)
}

fn blend_bytes(mapper: &BlendMapper) -> Vec<u8> {
    let mut out = Vec::with_capacity((mapper.warp_matrix().len() + mapper.tex_matrix().len()) * 4);
    put_f32s(&mut out, mapper.warp_matrix());
    put_f32s(&mut out, mapper.tex_matrix());
    out
}

/// Serializes `asset` as a `.lava` container. Deterministic for fixed
/// options.
pub fn encode_asset(asset: &AvatarAsset, options: EncodeOptions) -> Result<Vec<u8>, CodecError> {
    let mut chunks: Vec<(&[u8; 4], Vec<u8>)> = vec![
        (b"META", meta_bytes(asset)?),
        (b"MESH", mesh_bytes(asset.mesh())?),
        (b"WARP", {
            let mut v = Vec::new();
            put_f32s(&mut v, asset.warps().data());
            v
        }),
        (b"TDIF", asset.textures().rgba().to_vec()),
    ];
    if let Some(sh) = asset.textures().specular() {
        let mut v = Vec::with_capacity(sh.len() * 2);
        for h in sh {
            v.extend_from_slice(&h.to_bits().to_le_bytes());
        }
        chunks.push((b"TSPC", v));
    }
    chunks.push((b"BLND", blend_bytes(asset.mapper())));

    if options.deflate {
        for (id, body) in &mut chunks {
            let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
            enc.write_all(body).and_then(|_| enc.finish()).map(|b| *body = b).map_err(|e| CodecError::Deflate {
                chunk: String::from_utf8_lossy(*id).into_owned(),
                reason: e.to_string(),
            })?;
        }
    }

    let mut flags = 0;
    if asset.textures().has_specular() {
        flags |= FLAG_SPECULAR;
    }
    if options.deflate {
        flags |= FLAG_DEFLATE;
    }
    let table_end = HEADER_LEN + chunks.len() * TABLE_ENTRY_LEN;
    let total = table_end + chunks.iter().map(|c| c.1.len()).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    put_u32(&mut out, chunks.len() as u32);
    let mut offset = table_end as u64;
    for (id, body) in &chunks {
        out.extend_from_slice(*id);
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        offset += body.len() as u64;
    }
    for (_, body) in &chunks {
        out.extend_from_slice(body);
    }
    Ok(out)
}

/// Parses and validates the header, chunk table and `META`.
pub fn read_container_info(bytes: &[u8]) -> Result<ContainerInfo, CodecError> {
    let mut r = ByteReader::new(bytes, "header");
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let flags = r.u16()?;
    if flags & !(FLAG_SPECULAR | FLAG_DEFLATE) != 0 {
        return Err(CodecError::UnknownFlags(flags));
    }
    let count = r.u32()? as usize;
    if count > CHUNK_ORDER.len() {
        return Err(CodecError::ChunkTable(format!("{count} chunks declared, at most {} allowed", CHUNK_ORDER.len())));
    }
    let mut r = ByteReader::new(&bytes[HEADER_LEN..], "chunk table");
    let mut chunks = Vec::with_capacity(count);
    // Chunks must tile the file after the table, so any damaged offset or
    // length is caught here.
    let mut expected_offset = (HEADER_LEN + count * TABLE_ENTRY_LEN) as u64;
    let mut order = 0;
    for _ in 0..count {
        let id: [u8; 4] = r.take(4)?.try_into().unwrap();
        let offset = r.u64()?;
        let length = r.u64()?;
        let entry = ChunkEntry { id, offset, length };
        let position = CHUNK_ORDER.iter().position(|c| **c == id).ok_or_else(|| CodecError::UnknownChunk(entry.name()))?;
        if position < order {
            return Err(CodecError::ChunkTable(format!("chunk {} out of order or repeated", entry.name())));
        }
        order = position + 1;
        if offset != expected_offset {
            return Err(CodecError::ChunkBounds { chunk: entry.name(), reason: format!("offset {offset}, expected {expected_offset}") });
        }
        expected_offset = offset
            .checked_add(length)
            .filter(|&end| end <= bytes.len() as u64)
            .ok_or_else(|| CodecError::Truncated(entry.name()))?;
        chunks.push(entry);
    }
    if expected_offset != bytes.len() as u64 {
        return Err(CodecError::ChunkTable(format!(
            "{} trailing bytes after the last chunk",
            bytes.len() as u64 - expected_offset
        )));
    }
    for required in [b"META", b"MESH", b"WARP", b"TDIF", b"BLND"] {
        if !chunks.iter().any(|c| &c.id == required) {
            return Err(CodecError::MissingChunk(String::from_utf8_lossy(required).into_owned()));
        }
    }
    let has_tspc = chunks.iter().any(|c| &c.id == b"TSPC");
    if has_tspc != (flags & FLAG_SPECULAR != 0) {
        return Err(CodecError::ChunkTable("specular flag disagrees with TSPC presence".into()));
    }
    let info = ContainerInfo { version, flags, chunks, meta: Meta::default() };
    let meta_body = chunk_body(bytes, &info, b"META", META_LEN)?;
    let meta = parse_meta(&meta_body)?;
    Ok(ContainerInfo { meta, ..info })
}

impl Default for Meta {
    fn default() -> Self {
        Meta { layers: 0, warp_basis: 0, tex_basis: 0, params: 0, grid_rows: 0, grid_cols: 0, tex_res: 0, warp_res: 0, scene_center: [0.0; 3] }
    }
}

/// Raw (decompressed) body of chunk `id`, expected to be `expected` bytes.
fn chunk_body(bytes: &[u8], info: &ContainerInfo, id: &[u8; 4], expected: usize) -> Result<Vec<u8>, CodecError> {
    let name = || String::from_utf8_lossy(id).into_owned();
    let entry = info.chunks.iter().find(|c| &c.id == id).ok_or_else(|| CodecError::MissingChunk(name()))?;
    let stored = &bytes[entry.offset as usize..(entry.offset + entry.length) as usize];
    let body = if info.flags & FLAG_DEFLATE != 0 {
        let mut out = Vec::with_capacity(expected);
        DeflateDecoder::new(stored)
            .take(expected as u64 + 1)
            .read_to_end(&mut out)
            .map_err(|e| CodecError::Deflate { chunk: name(), reason: e.to_string() })?;
        out
    } else {
        stored.to_vec()
    };
    if body.len() < expected {
        return Err(CodecError::Truncated(name()));
    }
    if body.len() > expected {
        return Err(CodecError::Dimension {
            chunk: static_name(id),
            reason: format!("more than the {expected} bytes its dimensions imply"),
        });
    }
    Ok(body)
}

fn static_name(id: &[u8; 4]) -> &'static str {
    match id {
        b"META" => "META",
        b"MESH" => "MESH",
        b"WARP" => "WARP",
        b"TDIF" => "TDIF",
        b"TSPC" => "TSPC",
        _ => "BLND",
    }
}

/// Upper bound on deflate expansion (the format's best case is about 1032:1).
const MAX_INFLATE_RATIO: u64 = 1100;

fn parse_meta(body: &[u8]) -> Result<Meta, CodecError> {
    let mut r = ByteReader::new(body, "META");
    let mut v = [0u32; 8];
    for x in &mut v {
        *x = r.u32()?;
    }
    let scene_center = [r.f32()?, r.f32()?, r.f32()?];
    let [layers, warp_basis, tex_basis, params, grid_rows, grid_cols, tex_res, warp_res] = v;
    let bad = |reason: &str| Err(CodecError::Dimension { chunk: "META", reason: reason.into() });
    if layers == 0 || warp_basis == 0 || tex_basis == 0 {
        return bad("layer and basis counts must be positive");
    }
    if tex_res == 0 || warp_res == 0 {
        return bad("map resolutions must be positive");
    }
    if scene_center.iter().any(|c| !c.is_finite()) {
        return bad("scene center is not finite");
    }
    Ok(Meta { layers, warp_basis, tex_basis, params, grid_rows, grid_cols, tex_res, warp_res, scene_center })
}

/// Byte count of a map payload, guarding against overflow from corrupt
/// dimensions.
fn payload_len(chunk: &'static str, factors: &[u32], per: usize) -> Result<usize, CodecError> {
    factors
        .iter()
        .try_fold(per, |acc, &f| acc.checked_mul(f as usize))
        .filter(|&n| n <= isize::MAX as usize)
        .ok_or_else(|| CodecError::Dimension { chunk, reason: "declared dimensions overflow".into() })
}

pub fn decode_asset(bytes: &[u8]) -> Result<AvatarAsset, CodecError> {
    let info = read_container_info(bytes)?;
    let m = info.meta;
    // MESH length is not implied by META; inflate up to a ratio bound.
    let entry = info.chunks.iter().find(|c| &c.id == b"MESH").expect("checked by read_container_info");
    let stored = &bytes[entry.offset as usize..(entry.offset + entry.length) as usize];
    let mesh_body = if info.flags & FLAG_DEFLATE != 0 {
        let mut out = Vec::new();
        DeflateDecoder::new(stored)
            .take(entry.length.saturating_mul(MAX_INFLATE_RATIO) + 1024)
            .read_to_end(&mut out)
            .map_err(|e| CodecError::Deflate { chunk: "MESH".into(), reason: e.to_string() })?;
        out
    } else {
        stored.to_vec()
    };
    let mesh = parse_mesh(&mesh_body, &m)?;

    let warp_len = payload_len("WARP", &[m.layers, m.warp_basis, m.warp_res, m.warp_res], 8)?;
    let warp_body = chunk_body(bytes, &info, b"WARP", warp_len)?;
    let warps = WarpAtlas::new(m.layers as usize, m.warp_basis as usize, m.warp_res as usize, f32s(&warp_body))
        .map_err(|e| CodecError::Invalid { chunk: "WARP", source: e })?;

    let tex_len = payload_len("TDIF", &[m.layers, m.tex_basis, m.tex_res, m.tex_res], 4)?;
    let rgba = chunk_body(bytes, &info, b"TDIF", tex_len)?;
    let specular = if info.flags & FLAG_SPECULAR != 0 {
        let len = payload_len("TSPC", &[m.layers, m.tex_basis, m.tex_res, m.tex_res], SH_TEXEL_LEN * 2)?;
        let body = chunk_body(bytes, &info, b"TSPC", len)?;
        Some(body.chunks_exact(2).map(|b| f16::from_bits(u16::from_le_bytes([b[0], b[1]]))).collect())
    } else {
        None
    };
    let textures = TextureAtlas::new(m.layers as usize, m.tex_basis as usize, m.tex_res as usize, rgba, specular)
        .map_err(|e| CodecError::Invalid { chunk: if info.flags & FLAG_SPECULAR != 0 { "TSPC" } else { "TDIF" }, source: e })?;

    let cols = m.params as usize + 1;
    let blnd_len = payload_len("BLND", &[m.warp_basis + m.tex_basis], cols * 4)?;
    let blnd = f32s(&chunk_body(bytes, &info, b"BLND", blnd_len)?);
    let (wm, tm) = blnd.split_at(m.warp_basis as usize * cols);
    let mapper = BlendMapper::new(m.warp_basis as usize, m.tex_basis as usize, m.params as usize, wm.to_vec(), tm.to_vec())
        .map_err(|e| CodecError::Invalid { chunk: "BLND", source: e })?;

    AvatarAsset::new(mesh, warps, textures, mapper, m.scene_center).map_err(|e| CodecError::Invalid { chunk: "META", source: e })
}

fn f32s(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

fn parse_mesh(body: &[u8], m: &Meta) -> Result<LayeredMesh, CodecError> {
    let mut r = ByteReader::new(body, "MESH");
    let mut layers = Vec::with_capacity(m.layers as usize);
    for _ in 0..m.layers {
        let nv = r.u32()? as usize;
        // Each vertex needs 20 bytes; reject counts the body cannot hold
        // before allocating.
        if nv.saturating_mul(20) > r.remaining() {
            return Err(CodecError::Truncated("MESH".into()));
        }
        let mut positions = Vec::with_capacity(nv);
        for _ in 0..nv {
            positions.push([r.f32()?, r.f32()?, r.f32()?]);
        }
        let mut canonical_uv = Vec::with_capacity(nv);
        for _ in 0..nv {
            canonical_uv.push([r.f32()?, r.f32()?]);
        }
        let nt = r.u32()? as usize;
        if nt.saturating_mul(12) > r.remaining() {
            return Err(CodecError::Truncated("MESH".into()));
        }
        let mut indices = Vec::with_capacity(nt);
        for _ in 0..nt {
            indices.push([r.u32()?, r.u32()?, r.u32()?]);
        }
        layers.push(MeshLayer { positions, canonical_uv, indices });
    }
    if r.remaining() != 0 {
        return Err(CodecError::Dimension { chunk: "MESH", reason: format!("{} bytes beyond the declared layers", r.remaining()) });
    }
    LayeredMesh::new(m.grid_rows, m.grid_cols, layers).map_err(|e| CodecError::Invalid { chunk: "MESH", source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(specular: bool) -> AvatarAsset {
        let layer = MeshLayer {
            positions: vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]],
            canonical_uv: vec![[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]],
            indices: vec![[0, 1, 3], [0, 3, 2]],
        };
        let mesh = LayeredMesh::new(2, 2, vec![layer]).unwrap();
        let warps = WarpAtlas::new(1, 1, 1, vec![0.25, -0.5]).unwrap();
        let sh = specular.then(|| (0..SH_TEXEL_LEN).map(|i| f16::from_f32(i as f32 / 8.0 - 1.0)).collect());
        let tex = TextureAtlas::new(1, 1, 1, vec![10, 20, 30, 255], sh).unwrap();
        let mapper = BlendMapper::new(1, 1, 2, vec![0.5, -1.0, 0.0], vec![0.0, 0.0, 1.0]).unwrap();
        AvatarAsset::new(mesh, warps, tex, mapper, [0.1, 0.2, 0.3]).unwrap()
    }

    #[test]
    fn minimal_round_trip() {
        for specular in [false, true] {
            for deflate in [false, true] {
                let a = minimal(specular);
                let bytes = encode_asset(&a, EncodeOptions { deflate }).unwrap();
                assert_eq!(decode_asset(&bytes).unwrap(), a);
            }
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_asset(&minimal(false), EncodeOptions::default()).unwrap();
        assert_eq!(&bytes[..4], b"LAVA");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 0);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
        assert_eq!(&bytes[12..16], b"META");
        let info = read_container_info(&bytes).unwrap();
        assert_eq!(info.chunks[0].offset as usize, HEADER_LEN + 5 * TABLE_ENTRY_LEN);
        assert_eq!(info.chunks[0].length as usize, META_LEN);
        // MESH: u32 + 4 * 12 + 4 * 8 + u32 + 2 * 12.
        assert_eq!(info.chunks[1].length, 4 + 48 + 32 + 4 + 24);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_asset(&minimal(false), EncodeOptions::default()).unwrap();
        let mut m = bytes.clone();
        m[0] = b'X';
        assert!(matches!(decode_asset(&m), Err(CodecError::BadMagic(_))));
        bytes[4] = 2;
        assert!(matches!(decode_asset(&bytes), Err(CodecError::UnsupportedVersion(2))));
    }

    #[test]
    fn every_table_byte_corruption_is_rejected() {
        let bytes = encode_asset(&minimal(true), EncodeOptions::default()).unwrap();
        let table_end = HEADER_LEN + 6 * TABLE_ENTRY_LEN;
        for i in 0..table_end {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut b = bytes.clone();
                b[i] ^= flip;
                assert!(decode_asset(&b).is_err(), "byte {i} ^ {flip:#x} accepted");
            }
        }
    }

    #[test]
    fn truncated_chunk_is_named() {
        let bytes = encode_asset(&minimal(false), EncodeOptions::default()).unwrap();
        let err = decode_asset(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(&err, CodecError::Truncated(c) if c == "BLND"), "{err}");
    }
}
