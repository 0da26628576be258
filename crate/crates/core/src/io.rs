//! Image ingestion (binary PGM, 8-bit PNG) and the `SPDT` tensor file.
//!
//! Pixel values `v` in `[0, 255]` are rescaled to `v / 127.5 - 1`.
//!
//! Tensor file layout: the magic bytes `SPDT`, three little-endian `u32`
//! dimensions `(C, H, W)`, then `C*H*W` little-endian `f32` values in
//! row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::ImageTensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"SPDT";

#[inline]
pub fn byte_to_unit<T: Real>(v: u8) -> T {
    T::from_u8(v).unwrap() / T::lit(127.5) - T::one()
}

/// Inverse of [`byte_to_unit`], rounding and clamping to `[0, 255]`.
#[inline]
pub fn unit_to_byte<T: Real>(v: T) -> u8 {
    let scaled = ((v + T::one()) * T::lit(127.5)).round();
    scaled.max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(0)
}

fn parse_pgm_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    // Returns (width, height, offset of pixel data).
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::UnsupportedFormat("not a binary PGM (P5)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::UnsupportedFormat("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::UnsupportedFormat("malformed PGM header".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::UnsupportedFormat("malformed PGM header".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval}; only 8-bit (255) is supported"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat("empty PGM".into()));
    }
    Ok((width, height, pos))
}

/// Decodes an 8-bit binary PGM.
pub fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<ImageTensor<T>> {
    let (width, height, offset) = parse_pgm_header(bytes)?;
    let pixels = &bytes[offset..];
    if pixels.len() < width * height {
        return Err(Error::UnsupportedFormat(format!(
            "PGM holds {} of {} pixels",
            pixels.len(),
            width * height
        )));
    }
    let data = pixels[..width * height].iter().map(|&v| byte_to_unit(v)).collect();
    ImageTensor::new(1, height, width, data)
}

/// Encodes a single-channel image as binary PGM.
pub fn encode_pgm<T: Real>(img: &ImageTensor<T>) -> Result<Vec<u8>> {
    if img.channels() != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM holds one channel, image has {}",
            img.channels()
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.as_slice().iter().map(|&v| unit_to_byte(v)));
    Ok(out)
}

/// Decodes an 8-bit grayscale or RGB PNG.
pub fn decode_png<T: Real>(bytes: &[u8]) -> Result<ImageTensor<T>> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::UnsupportedFormat(format!("PNG: {e}")))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let data = buf.as_raw().iter().map(|&v| byte_to_unit(v)).collect();
            ImageTensor::new(1, height, width, data)
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let raw = buf.as_raw();
            Ok(ImageTensor::from_fn((3, height, width), |c, i, j| {
                byte_to_unit(raw[(i * width + j) * 3 + c])
            }))
        }
        other => Err(Error::UnsupportedFormat(format!(
            "PNG color type {:?}; expected 8-bit gray or RGB",
            other.color()
        ))),
    }
}

/// Encodes a 1- or 3-channel image as 8-bit PNG.
pub fn encode_png<T: Real>(img: &ImageTensor<T>) -> Result<Vec<u8>> {
    let (c, h, w) = img.shape();
    let color = match c {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        _ => return Err(Error::UnsupportedFormat(format!("cannot write {c} channels as PNG"))),
    };
    let mut raw = Vec::with_capacity(c * h * w);
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                raw.push(unit_to_byte(img.get(ch, i, j)));
            }
        }
    }
    let mut out = Vec::new();
    image::ImageEncoder::write_image(
        image::codecs::png::PngEncoder::new(&mut out),
        &raw,
        w as u32,
        h as u32,
        color,
    )
    .map_err(|e| Error::UnsupportedFormat(format!("PNG: {e}")))?;
    Ok(out)
}

/// Reads one image, choosing the decoder from its magic bytes. Tensor files
/// are accepted too, for data that must not be quantized.
pub fn read_image<T: Real>(path: &Path) -> Result<ImageTensor<T>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else if bytes.starts_with(TENSOR_MAGIC) {
        decode_tensor(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!("{}: not PGM, PNG or tensor", path.display())))
    }
}

/// Writes PGM for one channel, PNG otherwise, regardless of extension.
pub fn write_image<T: Real>(path: &Path, img: &ImageTensor<T>) -> Result<()> {
    let bytes = if img.channels() == 1 {
        encode_pgm(img)?
    } else {
        encode_png(img)?
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Image files under `path` (sorted), or `path` itself when it is a file.
/// Hidden files are skipped.
pub fn list_images(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path)? {
        let entry = entry?;
        let p = entry.path();
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if p.is_file() && !hidden {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every image under a directory (or a single file). All images must
/// share one shape.
pub fn load_images<T: Real>(path: &Path) -> Result<Vec<ImageTensor<T>>> {
    load_image_files(&list_images(path)?)
}

pub fn load_image_files<T: Real>(files: &[PathBuf]) -> Result<Vec<ImageTensor<T>>> {
    let mut images: Vec<ImageTensor<T>> = Vec::with_capacity(files.len());
    for file in files {
        let img = read_image(file)?;
        if let Some(first) = images.first() {
            if first.shape() != img.shape() {
                return Err(Error::MixedShapes {
                    expected: first.shape(),
                    found: img.shape(),
                    path: file.display().to_string(),
                });
            }
        }
        images.push(img);
    }
    Ok(images)
}

pub fn encode_tensor<T: Real>(img: &ImageTensor<T>) -> Vec<u8> {
    let (c, h, w) = img.shape();
    let mut out = Vec::with_capacity(16 + 4 * img.len());
    out.extend_from_slice(TENSOR_MAGIC);
    for d in [c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in img.as_slice() {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    out
}

pub fn decode_tensor<T: Real>(bytes: &[u8]) -> Result<ImageTensor<T>> {
    if bytes.len() < 16 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::Format("missing SPDT magic".into()));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let payload = &bytes[16..];
    if payload.len() != 4 * c * h * w {
        return Err(Error::Format(format!(
            "SPDT payload has {} bytes, expected {}",
            payload.len(),
            4 * c * h * w
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| T::from_f32(f32::from_le_bytes(b.try_into().unwrap())).unwrap())
        .collect();
    ImageTensor::new(c, h, w, data)
}

pub fn write_tensor<T: Real>(path: &Path, img: &ImageTensor<T>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_tensor(img))?;
    Ok(())
}

pub fn read_tensor<T: Real>(path: &Path) -> Result<ImageTensor<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_tensor(&bytes)
}
