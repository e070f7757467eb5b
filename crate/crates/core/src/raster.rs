//! 8-bit RGB and single-channel rasters with lossless PNG / binary PNM I/O.
//!
//! Pixels are stored row-major with the origin at the top-left corner, so
//! `(x, y)` lives at offset `y * width + x`.

use std::fs;
use std::io::{BufReader, BufWriter, Cursor, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt data: {0}")]
    CorruptData(String),
    #[error("unsupported output extension: {0:?}")]
    UnsupportedExtension(String),
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} pixels, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RasterError>;

/// One RGB sample triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Self { r: v, g: v, b: v }
    }

    pub const fn channels(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyImage { width, height });
    }
    let expected = width as usize * height as usize;
    if len != expected {
        return Err(RasterError::DimensionMismatch { expected, actual: len });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, px: Rgb) -> Result<Self> {
        Self::new(width, height, vec![px; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Builds an image from interleaved `r, g, b` bytes.
    pub fn from_interleaved(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(3) {
            return Err(RasterError::CorruptData(format!(
                "interleaved RGB buffer length {} is not a multiple of 3",
                bytes.len()
            )));
        }
        let pixels = bytes.chunks_exact(3).map(|c| Rgb::new(c[0], c[1], c[2])).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Rgb> {
        (x < self.width && y < self.height).then(|| self.pixels[self.index(x, y)])
    }

    pub fn put(&mut self, x: u32, y: u32, px: Rgb) {
        let i = self.index(x, y);
        self.pixels[i] = px;
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.channels()).collect()
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Rgb> {
        self.pixels.chunks_exact(self.width as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Option<u8> {
        (x < self.width && y < self.height)
            .then(|| self.pixels[y as usize * self.width as usize + x as usize])
    }
}

/// On-disk raster encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Png,
    Pnm,
}

impl RasterFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(Self::Png),
            "pgm" | "ppm" | "pnm" => Ok(Self::Pnm),
            _ => Err(RasterError::UnsupportedExtension(ext)),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => RasterError::FileNotFound(path.display().to_string()),
        _ => RasterError::Io(e),
    })
}

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Gray,
    Rgb,
}

impl Layout {
    fn channels(self) -> usize {
        match self {
            Layout::Gray => 1,
            Layout::Rgb => 3,
        }
    }
}

struct Decoded {
    width: u32,
    height: u32,
    layout: Layout,
    data: Vec<u8>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.starts_with(&PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else if bytes.starts_with(b"P1")
        || bytes.starts_with(b"P2")
        || bytes.starts_with(b"P3")
        || bytes.starts_with(b"P4")
    {
        Err(RasterError::UnsupportedFormat("only binary P5/P6 netpbm is supported".into()))
    } else {
        Err(RasterError::UnsupportedFormat("not a PNG or binary PPM/PGM file".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Decoded> {
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    // Palette images are flattened to RGB(A); bit depth is left alone so
    // 16-bit sources are seen and refused.
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    {
        let info = reader.info();
        if info.bit_depth == png::BitDepth::Sixteen {
            return Err(RasterError::UnsupportedFormat("16-bit PNG".into()));
        }
    }
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(RasterError::UnsupportedFormat(format!("PNG output bit depth {depth:?}")));
    }
    let layout = match color {
        png::ColorType::Grayscale => Layout::Gray,
        png::ColorType::Rgb => Layout::Rgb,
        other => {
            return Err(RasterError::UnsupportedFormat(format!(
                "PNG color type {other:?} carries alpha"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RasterError::CorruptData("PNG dimensions overflow".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(frame.buffer_size());
    let row = frame.width as usize * layout.channels();
    let data = if frame.line_size == row {
        buf
    } else {
        buf.chunks(frame.line_size).flat_map(|l| l[..row].iter().copied()).collect()
    };
    Ok(Decoded { width: frame.width, height: frame.height, layout, data })
}

fn png_err(e: png::DecodingError) -> RasterError {
    match e {
        png::DecodingError::IoError(io) => RasterError::CorruptData(io.to_string()),
        png::DecodingError::Format(f) => RasterError::CorruptData(f.to_string()),
        png::DecodingError::Parameter(p) => RasterError::UnsupportedFormat(p.to_string()),
        png::DecodingError::LimitsExceeded => RasterError::UnsupportedFormat("PNG exceeds decoder limits".into()),
    }
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn pnm_token(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&c) = bytes.get(*pos) {
                    *pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(RasterError::CorruptData("truncated netpbm header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(RasterError::CorruptData("expected a number in netpbm header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| RasterError::CorruptData("netpbm header value out of range".into()))
}

fn decode_pnm(bytes: &[u8]) -> Result<Decoded> {
    let layout = if bytes[1] == b'5' { Layout::Gray } else { Layout::Rgb };
    let mut pos = 2;
    let width = pnm_token(bytes, &mut pos)?;
    let height = pnm_token(bytes, &mut pos)?;
    let maxval = pnm_token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(RasterError::UnsupportedFormat(format!("netpbm maxval {maxval} (need 255)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(RasterError::CorruptData("missing separator after netpbm header".into())),
    }
    let need = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(layout.channels()))
        .ok_or_else(|| RasterError::CorruptData("netpbm dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(RasterError::CorruptData(format!(
            "netpbm payload has {} bytes, expected {need}",
            payload.len()
        )));
    }
    Ok(Decoded { width, height, layout, data: payload[..need].to_vec() })
}

/// Loads an 8-bit RGB image from a PNG or binary PPM file.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let d = decode(&read_file(path)?)?;
    if d.layout != Layout::Rgb {
        return Err(RasterError::UnsupportedFormat(format!(
            "{} is single-channel, expected RGB",
            path.display()
        )));
    }
    RgbImage::from_interleaved(d.width, d.height, &d.data)
}

/// Loads an 8-bit single-channel image from a PNG or binary PGM file.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let d = decode(&read_file(path)?)?;
    if d.layout != Layout::Gray {
        return Err(RasterError::UnsupportedFormat(format!(
            "{} has 3 channels, expected single-channel",
            path.display()
        )));
    }
    GrayImage::new(d.width, d.height, d.data)
}

fn encode_pnm(magic: &str, width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

fn encode_png(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_enc_err)?;
        writer.write_image_data(data).map_err(png_enc_err)?;
        writer.finish().map_err(png_enc_err)?;
    }
    Ok(out)
}

fn png_enc_err(e: png::EncodingError) -> RasterError {
    match e {
        png::EncodingError::IoError(io) => RasterError::Io(io),
        other => RasterError::CorruptData(other.to_string()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Encodes a grayscale image in the given format.
pub fn encode_gray(img: &GrayImage, format: RasterFormat) -> Result<Vec<u8>> {
    match format {
        RasterFormat::Pnm => Ok(encode_pnm("P5", img.width, img.height, &img.pixels)),
        RasterFormat::Png => encode_png(img.width, img.height, png::ColorType::Grayscale, &img.pixels),
    }
}

/// Encodes an RGB image in the given format.
pub fn encode_rgb(img: &RgbImage, format: RasterFormat) -> Result<Vec<u8>> {
    let data = img.to_interleaved();
    match format {
        RasterFormat::Pnm => Ok(encode_pnm("P6", img.width, img.height, &data)),
        RasterFormat::Png => encode_png(img.width, img.height, png::ColorType::Rgb, &data),
    }
}

/// Writes a PGM (`.pgm`) or grayscale PNG (`.png`), chosen by extension.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match RasterFormat::from_path(path)? {
        RasterFormat::Pnm if !has_ext(path, "pgm") => Err(RasterError::UnsupportedExtension(
            ext_of(path),
        )),
        f => write_file(path, &encode_gray(img, f)?),
    }
}

/// Writes a PPM (`.ppm`) or RGB PNG (`.png`), chosen by extension.
pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match RasterFormat::from_path(path)? {
        RasterFormat::Pnm if !has_ext(path, "ppm") => Err(RasterError::UnsupportedExtension(
            ext_of(path),
        )),
        f => write_file(path, &encode_rgb(img, f)?),
    }
}

fn ext_of(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase()
}

fn has_ext(path: &Path, ext: &str) -> bool {
    ext_of(path) == ext
}
