//! 8-bit RGB images, PNG I/O, the raw framebuffer dump, the transmittance
//! sidecar, and PSNR.
//!
//! Raw framebuffer: `"LVFB"`, u32 width, u32 height (little-endian), then
//! `width * height * 3` bytes of row-major RGB.
//! Transmittance sidecar: u32 width, u32 height, then `width * height`
//! little-endian f32 values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, InputError, Result};

pub const RAW_MAGIC: [u8; 4] = *b"LVFB";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, InputError> {
        InputError::check_len("rgb image", width as usize * height as usize * 3, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Largest per-channel difference.
    pub fn max_abs_diff(&self, other: &RgbImage) -> Result<u8, InputError> {
        self.check_same_size(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0))
    }

    fn check_same_size(&self, other: &RgbImage) -> Result<(), InputError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(InputError::invalid(
                "image pair",
                format!("{}x{} vs {}x{}", self.width, self.height, other.width, other.height),
            ));
        }
        Ok(())
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
            w.write_image_data(&self.data).map_err(|e| Error::Image(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Reads 8-bit RGB or RGBA PNGs (alpha is dropped).
    pub fn read_png(path: &Path) -> Result<Self> {
        let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = decoder.read_info().map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Image(format!("{}: only 8-bit PNGs are supported", path.display())));
        }
        let buf = &buf[..info.buffer_size()];
        let data = match info.color_type {
            png::ColorType::Rgb => buf.to_vec(),
            png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            other => return Err(Error::Image(format!("{}: unsupported color type {other:?}", path.display()))),
        };
        Ok(Self::new(info.width, info.height, data)?)
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len());
        out.extend_from_slice(&RAW_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Self, InputError> {
        if bytes.len() < 12 || bytes[..4] != RAW_MAGIC {
            return Err(InputError::invalid("raw framebuffer", "missing LVFB header"));
        }
        let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        Self::new(w, h, bytes[12..].to_vec())
    }
}

pub fn write_transmittance(path: &Path, width: u32, height: u32, values: &[f32]) -> Result<()> {
    InputError::check_len("transmittance", width as usize * height as usize, values.len())?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_transmittance(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(InputError::invalid("transmittance", "truncated header").into());
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let body = &bytes[8..];
    InputError::check_len("transmittance bytes", w as usize * h as usize * 4, body.len())?;
    Ok((w, h, body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()))
}

/// PSNR in dB over 8-bit channels, restricted to pixels where `mask` is
/// set. Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> Result<f64, InputError> {
    a.check_same_size(b)?;
    let pixels = a.width as usize * a.height as usize;
    if let Some(m) = mask {
        InputError::check_len("psnr mask", pixels, m.len())?;
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for p in 0..pixels {
        if mask.is_some_and(|m| !m[p]) {
            continue;
        }
        for c in 0..3 {
            let d = a.data[p * 3 + c] as f64 - b.data[p * 3 + c] as f64;
            sum += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return Err(InputError::invalid("psnr", "empty mask"));
    }
    if sum == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sum / count as f64;
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}
