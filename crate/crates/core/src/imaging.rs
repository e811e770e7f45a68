//! Float images and their on-disk forms.
//!
//! Pixels are stored row-major with interleaved channels. PNG files are 8-bit
//! (gray or RGB) and map to `[0, 1]` by `v / 255`. PFM files follow the usual
//! layout (`Pf` gray or `PF` RGB, negative scale = little-endian, bottom row
//! first) and store `f32`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Read-only view shared by images and UV maps.
pub trait Planar {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    fn data(&self) -> &[f64];

    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width() + x) * self.channels() + c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            mask: None,
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
            mask: None,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Image {
            width,
            height,
            channels,
            data,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.width * self.height {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries for a {}x{} image",
                mask.len(),
                self.width,
                self.height
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Mask, or all-true when none is attached.
    pub fn mask_or_full(&self) -> Vec<bool> {
        self.mask
            .clone()
            .unwrap_or_else(|| vec![true; self.width * self.height])
    }

    pub fn clear_mask(&mut self) {
        self.mask = None;
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    /// RGB value of a pixel; gray images are replicated.
    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        if self.channels == 1 {
            let v = self.get(x, y, 0);
            [v, v, v]
        } else {
            [self.get(x, y, 0), self.get(x, y, 1), self.get(x, y, 2)]
        }
    }

    /// Zero every pixel outside the mask (no-op without a mask).
    pub fn masked(&self) -> Image {
        let mut out = self.clone();
        if let Some(mask) = &self.mask {
            for (p, &m) in mask.iter().enumerate() {
                if !m {
                    out.data[p * self.channels..(p + 1) * self.channels].fill(0.0);
                }
            }
        }
        out
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|e| Error::ImageFormat(format!("{}: {e}", path.display())))?;
        let (width, height) = (decoded.width() as usize, decoded.height() as usize);
        let (channels, bytes) = match decoded.color().channel_count() {
            1 | 2 => (1, decoded.into_luma8().into_raw()),
            _ => (3, decoded.into_rgb8().into_raw()),
        };
        Image::from_data(
            width,
            height,
            channels,
            bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
        )
    }

    /// 8-bit PNG; values are clamped to `[0, 1]` and rounded.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color)
            .map_err(|e| Error::ImageFormat(format!("{}: {e}", path.display())))
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (width, height, channels, data) = decode_pfm(&bytes, &["Pf", "PF"])?;
        Image::from_data(width, height, channels, data)
    }

    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let tag = if self.channels == 1 { "Pf" } else { "PF" };
        write_file(path.as_ref(), &encode_pfm(tag, self.width, self.height, self.channels, &self.data))
    }
}

impl Planar for Image {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_mask_png(mask: &[bool], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if mask.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for {width}x{height}",
            mask.len()
        )));
    }
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, width as u32, height as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::ImageFormat(format!("{}: {e}", path.display())))
}

/// Any nonzero gray level reads as `true`.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<(Vec<bool>, usize, usize)> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::ImageFormat(format!("{}: {e}", path.display())))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let mask = decoded.into_luma8().into_raw().into_iter().map(|b| b > 0).collect();
    Ok((mask, width, height))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_pfm(tag: &str, width: usize, height: usize, channels: usize, data: &[f64]) -> Vec<u8> {
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    for y in (0..height).rev() {
        let row = &data[y * width * channels..(y + 1) * width * channels];
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decode a PFM-style file whose tag is one of `tags`; the channel count is
/// inferred from the payload size.
pub(crate) fn decode_pfm(bytes: &[u8], tags: &[&str]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut fields = Vec::new();
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
            return Err(Error::ImageFormat("truncated PFM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    if !tags.contains(&fields[0].as_str()) {
        return Err(Error::ImageFormat(format!("unexpected PFM tag {:?}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::ImageFormat(format!("bad PFM dimension {s:?}")))
    };
    let width = parse(&fields[1])?;
    let height = parse(&fields[2])?;
    let scale: f64 = fields[3]
        .parse()
        .map_err(|_| Error::ImageFormat(format!("bad PFM scale {:?}", fields[3])))?;
    let little = scale < 0.0;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if width == 0 || height == 0 || payload.len() % (4 * width * height) != 0 {
        return Err(Error::ImageFormat(format!(
            "PFM payload of {} bytes does not fit {width}x{height}",
            payload.len()
        )));
    }
    let channels = payload.len() / (4 * width * height);
    let floats: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| {
            let b: [u8; 4] = c.try_into().unwrap();
            (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let row = width * channels;
    let mut data = Vec::with_capacity(floats.len());
    for y in (0..height).rev() {
        data.extend_from_slice(&floats[y * row..(y + 1) * row]);
    }
    Ok((width, height, channels, data))
}
