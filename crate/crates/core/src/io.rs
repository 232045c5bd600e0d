//! Image file i/o: 8-bit PNG and binary PPM (P6), and little-endian PFM
//! (scale -1.0) for floating data.
//!
//! 8-bit samples map to `[0, 1]` by division by 255; writing rounds
//! `v * 255` after clamping. PFM stores raw `f32` values, scanlines
//! bottom-to-top as usual for that format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Field, ImageF};

/// Loads an 8-bit PNG or PPM into `[0, 1]` values. Gray images come back
/// single-channel, everything else as RGB (alpha is dropped).
pub fn read_image(path: &Path) -> Result<ImageF> {
    if is_pfm(path) {
        return read_pfm(path);
    }
    let dyn_img = image::open(path)?;
    let (w, h) = (dyn_img.width() as usize, dyn_img.height() as usize);
    match dyn_img {
        image::DynamicImage::ImageLuma8(buf) => {
            let data = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            ImageF::from_vec(w, h, 1, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            ImageF::from_vec(w, h, 3, data)
        }
    }
}

/// Writes an image by extension: `.png`, `.ppm` (binary P6, 3-channel),
/// or `.pfm`. 8-bit targets clamp to `[0, 1]` and round.
pub fn write_image(path: &Path, img: &ImageF) -> Result<()> {
    if is_pfm(path) {
        return write_pfm(path, img);
    }
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match (ext.as_str(), img.channels()) {
        ("ppm", 1) => {
            // P6 is RGB-only; replicate the gray channel.
            let rgb: Vec<u8> = bytes.iter().flat_map(|&v| [v, v, v]).collect();
            image::save_buffer(
                path,
                &rgb,
                img.width() as u32,
                img.height() as u32,
                image::ColorType::Rgb8,
            )?;
        }
        (_, 1) => image::save_buffer(
            path,
            &bytes,
            img.width() as u32,
            img.height() as u32,
            image::ColorType::L8,
        )?,
        _ => image::save_buffer(
            path,
            &bytes,
            img.width() as u32,
            img.height() as u32,
            image::ColorType::Rgb8,
        )?,
    }
    Ok(())
}

fn is_pfm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("pfm"))
        .unwrap_or(false)
}

/// Reads a PFM file (`PF` color / `Pf` gray). Values must be finite; no
/// range restriction is imposed, so depth maps load unchanged.
pub fn read_pfm(path: &Path) -> Result<ImageF> {
    let mut file = BufReader::new(File::open(path)?);
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;

    let mut pos = 0;
    let magic = next_token(&raw, &mut pos)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("bad PFM magic {other:?}"))),
    };
    let width: usize = next_token(&raw, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let height: usize = next_token(&raw, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let scale: f64 = next_token(&raw, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the header from the samples;
    // next_token already consumed it.

    let expected = width * height * channels * 4;
    let samples = raw
        .get(pos..pos + expected)
        .ok_or_else(|| Error::Format("PFM file truncated".into()))?;

    let mut data = vec![0.0f64; width * height * channels];
    for (row, chunk) in samples.chunks_exact(width * channels * 4).enumerate() {
        // PFM scanlines run bottom-to-top.
        let y = height - 1 - row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let bits = [b[0], b[1], b[2], b[3]];
            let v = if little_endian {
                f32::from_le_bytes(bits)
            } else {
                f32::from_be_bytes(bits)
            };
            data[(y * width) * channels + i] = v as f64;
        }
    }
    ImageF::from_vec(width, height, channels, data)
}

fn next_token(raw: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < raw.len() && raw[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < raw.len() && !raw[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of PFM header".into()));
    }
    let token = String::from_utf8_lossy(&raw[start..*pos]).into_owned();
    // Consume the single whitespace terminator.
    if *pos < raw.len() {
        *pos += 1;
    }
    Ok(token)
}

/// Writes a little-endian PFM (scale -1.0), 1- or 3-channel.
pub fn write_pfm(path: &Path, img: &ImageF) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let magic = if img.channels() == 3 { "PF" } else { "Pf" };
    write!(out, "{magic}\n{} {}\n-1.0\n", img.width(), img.height())?;
    let (w, c) = (img.width(), img.channels());
    for y in (0..img.height()).rev() {
        let row = &img.data()[(y * w) * c..(y * w + w) * c];
        for &v in row {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes a single-channel field as gray PFM.
pub fn write_field_pfm(path: &Path, field: &Field) -> Result<()> {
    write_pfm(path, &field.to_image())
}
