//! File codecs: 8/16-bit PNG and binary PPM (P6) read, PNG write at 8-bit
//! and 16-bit depth. 16-bit output exists so adversarial images survive
//! storage without the perturbation being rounded away.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{ImageError, RgbImage};

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads an 8/16-bit PNG (RGB, RGBA with alpha dropped) or a binary PPM
/// (P6, maxval 255). Values are `byte / 255` (or `/ 65535`) exactly.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<RgbImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &bytes)
    } else {
        Err(ImageError::UnsupportedFormat(format!(
            "{}: not a PNG or binary PPM",
            path.display()
        )))
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let png_err = |e: png::DecodingError| ImageError::Png {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    if w == 0 || h == 0 {
        return Err(ImageError::ZeroDimension);
    }
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "{}: PNG color type {:?} (expected RGB or RGBA)",
                path.display(),
                other
            )))
        }
    };
    let raw = &buf[..info.buffer_size()];
    let mut data = Vec::with_capacity(h * w * 3);
    match info.bit_depth {
        png::BitDepth::Eight => {
            for px in raw.chunks_exact(channels) {
                for &b in &px[..3] {
                    data.push(b as f64 / 255.0);
                }
            }
        }
        png::BitDepth::Sixteen => {
            // 16-bit PNG samples are big-endian.
            for px in raw.chunks_exact(channels * 2) {
                for c in 0..3 {
                    let v = u16::from_be_bytes([px[2 * c], px[2 * c + 1]]);
                    data.push(v as f64 / 65535.0);
                }
            }
        }
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "{}: PNG bit depth {:?} (expected 8 or 16)",
                path.display(),
                other
            )))
        }
    }
    RgbImage::new(h, w, data)
}

fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let mut pos = 2; // past "P6"
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = read_ppm_int(bytes, &mut pos)?;
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if w == 0 || h == 0 {
        return Err(ImageError::ZeroDimension);
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "PPM maxval {maxval} (expected 255)"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = h * w * 3;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| ImageError::Truncated(format!("PPM raster shorter than {need} bytes")))?;
    let data = raster.iter().map(|&b| b as f64 / 255.0).collect();
    RgbImage::new(h, w, data)
}

fn read_ppm_int(bytes: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    // Skip whitespace and `#` comments.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(ImageError::Truncated("PPM header ended early".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_digit() {
            *pos += 1;
        } else {
            break;
        }
    }
    if *pos == start {
        return Err(ImageError::Truncated("expected integer in PPM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::Truncated("bad integer in PPM header".into()))
}

/// Writes an 8-bit RGB PNG, rounding each value to `round(v * 255)`.
pub fn save_png8<P: AsRef<Path>>(img: &RgbImage, path: P) -> Result<(), ImageError> {
    let samples: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_png(path.as_ref(), img, png::BitDepth::Eight, &samples)
}

/// Writes a 16-bit RGB PNG, rounding each value to `round(v * 65535)`.
pub fn save_png16<P: AsRef<Path>>(img: &RgbImage, path: P) -> Result<(), ImageError> {
    let mut samples = Vec::with_capacity(img.data().len() * 2);
    for &v in img.data() {
        let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
        samples.extend_from_slice(&q.to_be_bytes());
    }
    write_png(path.as_ref(), img, png::BitDepth::Sixteen, &samples)
}

fn write_png(
    path: &Path,
    img: &RgbImage,
    depth: png::BitDepth,
    samples: &[u8],
) -> Result<(), ImageError> {
    // Write to a sibling temp file and rename so readers never observe a
    // partial image.
    let tmp = path.with_extension("png.tmp");
    {
        let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        let mut encoder = png::Encoder::new(
            BufWriter::new(file),
            img.width() as u32,
            img.height() as u32,
        );
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(depth);
        let mut writer = encoder.write_header().map_err(|e| ImageError::Png {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        writer.write_image_data(samples).map_err(|e| ImageError::Png {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
