use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::ImageRaster;

const PNG_MAGIC: &[u8] = b"\x89PNG";

/// Loads a binary PPM (P6, maxval ≤ 255) or an 8-bit gray/RGB PNG.
/// Intensities are scaled to `[0, 1]` by `/ 255`.
pub fn load_image(path: &Path) -> Result<ImageRaster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageRaster> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else {
        Err(Error::UnsupportedImage(
            bytes.iter().take(4).copied().collect(),
        ))
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<ImageRaster> {
    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // '#' comments allowed, then exactly one whitespace byte before the data.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Image("truncated PPM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Image("malformed PPM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Image("PPM header value out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Image("malformed PPM header".into()));
    }
    pos += 1;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Image(format!("unsupported PPM maxval {maxval}")));
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::Image("PPM dimensions overflow".into()))?;
    let data = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::Image("truncated PPM data".into()))?;
    let scale = maxval as f64;
    ImageRaster::new(
        width,
        height,
        3,
        data.iter().map(|v| (*v as f64 / scale).min(1.0)).collect(),
    )
}

fn decode_png(bytes: &[u8]) -> Result<ImageRaster> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Image(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Image(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Image(format!(
            "unsupported PNG bit depth {:?}",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::Image(format!(
                "unsupported PNG color type {other:?}"
            )))
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * channels);
    for row in buf[..info.buffer_size()].chunks(info.line_size).take(h) {
        data.extend(row[..w * channels].iter().map(|v| *v as f64 / 255.0));
    }
    ImageRaster::new(w, h, channels, data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a binary PPM; single-channel rasters are replicated to RGB.
pub fn encode_ppm(img: &ImageRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for px in img.data.chunks_exact(img.channels) {
        if img.channels == 1 {
            out.extend([quantize(px[0]); 3]);
        } else {
            out.extend(px.iter().map(|v| quantize(*v)));
        }
    }
    out
}

pub fn save_ppm(path: &Path, img: &ImageRaster) -> Result<()> {
    fs::write(path, encode_ppm(img)).map_err(|e| Error::write(path, e))
}

pub fn save_png(path: &Path, img: &ImageRaster) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    let mut enc = png::Encoder::new(
        std::io::BufWriter::new(file),
        img.width as u32,
        img.height as u32,
    );
    enc.set_color(if img.channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img.data.iter().map(|v| quantize(*v)).collect();
    enc.write_header()
        .and_then(|mut w| w.write_image_data(&bytes))
        .map_err(|e| Error::write(path, std::io::Error::other(e)))
}
