//! File formats: 8-bit PNG/PGM images and masks, PFM float maps, text files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};
use crate::geometry::BinaryMask;
use crate::metrics::SaliencyMap;
use crate::tensor::Tensor;

/// Grey levels at or above this become foreground.
pub const MASK_THRESHOLD: u8 = 128;

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm"];

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

fn gray(path: &Path, size: Option<(usize, usize)>) -> Result<GrayImage> {
    let img = open(path)?.to_luma8();
    Ok(match size {
        Some((h, w)) if (img.height() as usize, img.width() as usize) != (h, w) => {
            image::imageops::resize(&img, w as u32, h as u32, FilterType::Nearest)
        }
        _ => img,
    })
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    read_mask_sized(path, None)
}

/// Reads a mask, resizing with nearest-neighbour sampling when `size`
/// (height, width) differs from the file.
pub fn read_mask_sized(path: &Path, size: Option<(usize, usize)>) -> Result<BinaryMask> {
    let img = gray(path, size)?;
    BinaryMask::from_gray(img.height() as usize, img.width() as usize, img.as_raw(), MASK_THRESHOLD)
}

/// Like [`read_mask`], also counting pixels that were neither 0 nor 255
/// before thresholding.
pub fn read_mask_counting_gray(path: &Path) -> Result<(BinaryMask, usize)> {
    let img = gray(path, None)?;
    let gray_pixels = img.as_raw().iter().filter(|&&v| v != 0 && v != 255).count();
    let mask = BinaryMask::from_gray(img.height() as usize, img.width() as usize, img.as_raw(), MASK_THRESHOLD)?;
    Ok((mask, gray_pixels))
}

pub fn read_saliency(path: &Path) -> Result<SaliencyMap> {
    let img = gray(path, None)?;
    SaliencyMap::from_gray(img.height() as usize, img.width() as usize, img.as_raw())
}

/// Reads an image as `[h, w, 3]` in [0, 1], bilinearly resized.
/// Single-channel images are replicated across the three channels.
pub fn read_image(path: &Path, h: usize, w: usize) -> Result<Tensor> {
    let mut img = open(path)?.to_rgb8();
    if (img.height() as usize, img.width() as usize) != (h, w) {
        img = image::imageops::resize(&img, w as u32, h as u32, FilterType::Triangle);
    }
    Tensor::from_vec(&[h, w, 3], img.as_raw().iter().map(|&v| v as f64 / 255.0).collect())
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes values in [0, 1] as an 8-bit grey PNG.
pub fn write_gray_png(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::shape("write_gray_png", format!("{} values for {height}x{width}", values.len())));
    }
    let img = GrayImage::from_raw(width as u32, height as u32, values.iter().map(|&v| to_u8(v)).collect())
        .expect("buffer length checked");
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Writes an 8-bit RGB PNG from `[h, w, 3]` values in [0, 1].
pub fn write_rgb_png(path: &Path, t: &Tensor) -> Result<()> {
    let &[h, w, 3] = t.shape() else {
        return Err(Error::shape("write_rgb_png", format!("{:?}", t.shape())));
    };
    let img = image::RgbImage::from_raw(w as u32, h as u32, t.data().iter().map(|&v| to_u8(v)).collect())
        .expect("buffer length checked");
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let values: Vec<f64> = mask.data().iter().map(|&v| v as f64).collect();
    write_gray_png(path, mask.height(), mask.width(), &values)
}

/// Single-channel PFM: little-endian f32, rows stored bottom-up.
pub fn encode_pfm(height: usize, width: usize, values: &[f64]) -> Result<Vec<u8>> {
    if height == 0 || width == 0 || values.len() != height * width {
        return Err(Error::shape("pfm", format!("{} values for {height}x{width}", values.len())));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for r in (0..height).rev() {
        for &v in &values[r * width..(r + 1) * width] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Returns (height, width, row-major values).
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let bad = |detail: &str| Error::Format { format: "PFM", detail: detail.into() };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // A single whitespace byte separates the header from the data.
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("only single-channel Pf maps are supported"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || width == 0 || height == 0 {
        return Err(bad("zero scale or extent"));
    }
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != 4 * width * height {
        return Err(bad(&format!("expected {} data bytes, found {}", 4 * width * height, body.len())));
    }
    let mut values = vec![0f32; width * height];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, c) = (i / width, i % width);
        values[(height - 1 - file_row) * width + c] = v;
    }
    Ok((height, width, values))
}

pub fn write_pfm(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    Ok(fs::write(path, encode_pfm(height, width, values)?)?)
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    decode_pfm(&fs::read(path)?)
}

/// Image files in `dir` keyed by file stem.
pub fn image_files_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path.clone());
        }
    }
    Ok(out)
}

/// Mask files named by a path that is either one image or a directory.
pub fn collect_images(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    if path.is_dir() {
        return Ok(image_files_by_stem(path)?.into_iter().collect());
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("{} has no file stem", path.display())))?;
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )));
    }
    Ok(vec![(stem.to_string(), path.to_path_buf())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_header_and_row_order() {
        let bytes = encode_pfm(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        let body = &bytes[bytes.len() - 24..];
        // Bottom row first.
        assert_eq!(f32::from_le_bytes(body[0..4].try_into().unwrap()), 4.0);
        let (h, w, v) = decode_pfm(&bytes).unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn pfm_big_endian_read() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&7f32.to_be_bytes());
        bytes.extend_from_slice(&9f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().2, vec![9.0, 7.0]);
    }

    #[test]
    fn pfm_rejects_truncation() {
        let mut bytes = encode_pfm(2, 2, &[0.0; 4]).unwrap();
        bytes.pop();
        assert!(decode_pfm(&bytes).is_err());
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn png_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = BinaryMask::from_fn(5, 7, |r, c| r > c);
        write_mask_png(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
        let big = read_mask_sized(&path, Some((10, 14))).unwrap();
        assert_eq!(big.height(), 10);
        assert!(big.data().iter().all(|&v| v <= 1));
    }

    #[test]
    fn gray_image_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        write_gray_png(&path, 2, 2, &[0.0, 1.0, 0.5, 0.25]).unwrap();
        let t = read_image(&path, 2, 2).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(&t.data()[3..6], &[1.0, 1.0, 1.0]);
    }
}
