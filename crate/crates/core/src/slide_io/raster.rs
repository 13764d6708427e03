use std::path::Path;

use image::{ColorType, ImageError, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// A decoded 8-bit RGB slide, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideRaster {
    slide_id: String,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl SlideRaster {
    pub fn new(slide_id: impl Into<String>, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "slide dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} bytes"),
                actual: format!("{} bytes", pixels.len()),
            });
        }
        Ok(Self {
            slide_id: slide_id.into(),
            width,
            height,
            pixels,
        })
    }

    /// A slide filled with one color.
    pub fn filled(slide_id: impl Into<String>, width: u32, height: u32, px: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let pixels = px.iter().copied().cycle().take(n * 3).collect();
        Self::new(slide_id, width, height, pixels)
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 3;
        let start = y as usize * stride;
        &self.pixels[start..start + stride]
    }

    pub fn with_slide_id(mut self, slide_id: impl Into<String>) -> Self {
        self.slide_id = slide_id.into();
        self
    }
}

fn map_image_error(path: &Path, err: ImageError) -> Error {
    match err {
        ImageError::Unsupported(_) => Error::UnsupportedFormat(path.to_path_buf()),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

pub(crate) fn decode_image(path: &Path) -> Result<image::DynamicImage> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    reader.decode().map_err(|e| map_image_error(path, e))
}

/// Loads a lossless raster; the slide id is the file stem.
pub fn load_slide(path: impl AsRef<Path>) -> Result<SlideRaster> {
    let path = path.as_ref();
    let img = decode_image(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SlideRaster::new(id, w, h, img.into_raw())
}

/// Writes the slide as an 8-bit RGB PNG, whatever the file extension.
pub fn save_slide(slide: &SlideRaster, path: impl AsRef<Path>) -> Result<()> {
    save_png(path.as_ref(), slide.pixels(), slide.width, slide.height, ColorType::Rgb8)
}

pub(crate) fn save_png(path: &Path, data: &[u8], w: u32, h: u32, color: ColorType) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    image::save_buffer_with_format(path, data, w, h, color, ImageFormat::Png).map_err(|e| match e {
        ImageError::IoError(io) => Error::Io(io),
        other => Error::format("png", other.to_string()),
    })
}

/// Loads a single-channel raster; any color input is reduced to luma.
pub fn load_gray(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<u8>)> {
    let img = decode_image(path.as_ref())?.into_luma8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw()))
}

pub fn save_gray(path: impl AsRef<Path>, w: u32, h: u32, data: &[u8]) -> Result<()> {
    save_png(path.as_ref(), data, w, h, ColorType::L8)
}
