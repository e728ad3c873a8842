//! PNG reading and writing for images, binary masks and label maps.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};

use super::Palette;
use crate::error::{Error, Result};
use crate::label::LabelMask;
use crate::mask::BinaryMask;
use crate::nn::Tensor;

fn codec(e: impl std::fmt::Display) -> Error {
    Error::Codec(e.to_string())
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    bytes: Vec<u8>,
}

fn decode(bytes: &[u8], transform: Transformations) -> Result<Decoded> {
    let mut decoder = Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(transform);
    let mut reader = decoder.read_info().map_err(codec)?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| codec("image too large"))?
    ];
    let info = reader.next_frame(&mut buf).map_err(codec)?;
    if info.bit_depth != BitDepth::Eight {
        return Err(codec(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        bytes: buf,
    })
}

fn encode(
    width: usize,
    height: usize,
    color: ColorType,
    palette: Option<Vec<u8>>,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut writer = enc.write_header().map_err(codec)?;
        writer.write_image_data(data).map_err(codec)?;
        writer.finish().map_err(codec)?;
    }
    Ok(out)
}

/// Any 8- or 16-bit PNG as a `(3, H, W)` tensor in `[0, 1]`; alpha is
/// dropped and grey is replicated.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<Tensor> {
    let d = decode(bytes, Transformations::EXPAND | Transformations::STRIP_16)?;
    let n = d.width * d.height;
    let stride = match d.color {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(codec("palette was not expanded")),
    };
    let mut data = vec![0.0f32; 3 * n];
    for (i, px) in d.bytes.chunks_exact(stride).enumerate() {
        for k in 0..3 {
            let v = if stride < 3 { px[0] } else { px[k] };
            data[k * n + i] = v as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, d.height, d.width], data)
}

/// `(3, H, W)` in `[0, 1]` to an 8-bit RGB PNG.
pub fn encode_rgb_png(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    let n = h * w;
    let src = image.data();
    let mut bytes = Vec::with_capacity(3 * n);
    for i in 0..n {
        for k in 0..3 {
            bytes.push((src[k * n + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    encode(w, h, ColorType::Rgb, None, &bytes)
}

/// Label maps are 8-bit indexed or greyscale PNGs whose raw sample values
/// are the class ids.
pub fn decode_label_png(bytes: &[u8]) -> Result<LabelMask> {
    let d = decode(bytes, Transformations::IDENTITY)?;
    match d.color {
        ColorType::Indexed | ColorType::Grayscale => {
            LabelMask::from_labels(d.width, d.height, d.bytes)
        }
        other => Err(codec(format!(
            "label maps must be indexed or greyscale, got {other:?}"
        ))),
    }
}

pub fn encode_label_png(labels: &LabelMask, palette: &Palette) -> Result<Vec<u8>> {
    let (w, h) = labels.dims();
    encode(
        w,
        h,
        ColorType::Indexed,
        Some(palette.png_palette()),
        labels.labels(),
    )
}

/// Greyscale PNG; any non-zero sample is foreground.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask> {
    let d = decode(bytes, Transformations::EXPAND | Transformations::STRIP_16)?;
    let stride = d.bytes.len() / (d.width * d.height).max(1);
    BinaryMask::from_bits(
        d.width,
        d.height,
        d.bytes.chunks_exact(stride).map(|px| px[0] != 0).collect(),
    )
}

/// Foreground 255, background 0.
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    encode(
        mask.width(),
        mask.height(),
        ColorType::Grayscale,
        None,
        &bytes,
    )
}

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_rgb_png(&fs::read(path)?)
}

pub fn write_rgb_png(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_rgb_png(image)?)?)
}

pub fn read_label_png(path: impl AsRef<Path>) -> Result<LabelMask> {
    decode_label_png(&fs::read(path)?)
}

pub fn write_label_png(
    labels: &LabelMask,
    palette: &Palette,
    path: impl AsRef<Path>,
) -> Result<()> {
    Ok(fs::write(path, encode_label_png(labels, palette)?)?)
}

pub fn read_mask_png(path: impl AsRef<Path>) -> Result<BinaryMask> {
    decode_mask_png(&fs::read(path)?)
}

pub fn write_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_mask_png(mask)?)?)
}
