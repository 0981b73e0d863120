//! Thin PNG codec layer. Everything above this module works on plain sample
//! buffers; only this file knows about `png`.

use std::io::Cursor;

use crate::error::{Error, Result};

/// Decoded raster with samples widened to `u16` regardless of bit depth.
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bit_depth: u8,
    /// Row-major, channel-interleaved samples.
    pub samples: Vec<u16>,
}

impl Raster {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // EXPAND unpacks palettes and sub-byte grays but keeps 16-bit samples.
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png header: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    buf.truncate(info.buffer_size());

    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::Format("zero-sized raster".into()));
    }
    let channels = info.color_type.samples();
    let samples: Vec<u16> = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
        png::BitDepth::Eight => buf.iter().map(|&b| b as u16).collect(),
        other => {
            return Err(Error::Format(format!("unsupported bit depth {other:?}")));
        }
    };
    if samples.len() != width * height * channels {
        return Err(Error::Format(format!(
            "expected {} samples, found {}",
            width * height * channels,
            samples.len()
        )));
    }
    Ok(Raster {
        width,
        height,
        channels,
        bit_depth: info.bit_depth as u8,
        samples,
    })
}

fn encode(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(depth);
        encoder.set_compression(png::Compression::Default);
        encoder.set_filter(png::FilterType::Sub);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub fn encode_gray16(width: usize, height: usize, samples: &[u16]) -> Result<Vec<u8>> {
    debug_assert_eq!(samples.len(), width * height);
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    encode(
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &bytes,
    )
}

pub fn encode_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    debug_assert_eq!(rgb.len(), width * height * 3);
    encode(
        width,
        height,
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        rgb,
    )
}
