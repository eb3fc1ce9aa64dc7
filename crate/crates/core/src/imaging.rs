//! Grayscale frames, clips and the on-disk formats they travel in.
//!
//! A [`Frame`] is an 8-bit luminance raster stored row-major, top row first.
//! A [`Clip`] is an ordered run of equally sized frames at a nominal frame
//! rate. Frames are exchanged as binary PGM (P5, maxval 255); a clip on disk
//! is a directory of `frame_NNNNNN.pgm` files plus a `clip.json` sidecar.
//!
//! [`BoundingBox`] keeps the bottom-origin vertical convention used when the
//! anchor region is specified by hand: `bottom_offset` is the distance from
//! the bottom border up to the box's top-left corner. Only [`crop_bbox`]
//! converts it to top-origin coordinates.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} frame needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Pixel at top-origin row `y`, column `x`.
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    frames: Vec<Frame>,
    fps: f64,
}

impl Clip {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Parameter(format!("fps must be positive, got {fps}")));
        }
        if let Some(first) = frames.first() {
            if let Some((i, f)) = frames
                .iter()
                .enumerate()
                .find(|(_, f)| f.width != first.width || f.height != first.height)
            {
                return Err(Error::Dimension(format!(
                    "frame {i} is {}x{}, clip frames are {}x{}",
                    f.width, f.height, first.width, first.height
                )));
            }
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` shared by all frames, or `None` for an empty clip.
    pub fn dimensions(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height))
    }
}

/// Rectangle in bottom-origin offset convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: usize,
    pub bottom_offset: usize,
    pub width: usize,
    pub height: usize,
}

impl BoundingBox {
    /// Anchor-point box used for the original 640x480 footage.
    pub const DEFAULT_ANCHOR: BoundingBox = BoundingBox {
        left: 450,
        bottom_offset: 270,
        width: 30,
        height: 50,
    };

    pub fn new(left: usize, bottom_offset: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "bounding box must have positive size, got {width}x{height}"
            )));
        }
        Ok(Self {
            left,
            bottom_offset,
            width,
            height,
        })
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    /// Top-origin `(x, y, width, height)` of this box inside a frame, after
    /// checking that it fits.
    pub fn to_top_origin(&self, frame_width: usize, frame_height: usize) -> Result<TopOriginRect> {
        let fits = self.width > 0
            && self.height > 0
            && self.left + self.width <= frame_width
            && self.bottom_offset <= frame_height
            && (frame_height - self.bottom_offset) + self.height <= frame_height;
        if !fits {
            return Err(Error::Dimension(format!(
                "box {self} does not fit frame {frame_width}x{frame_height}"
            )));
        }
        Ok(TopOriginRect {
            x: self.left,
            y: frame_height - self.bottom_offset,
            width: self.width,
            height: self.height,
        })
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(left={}, bottom_offset={}, w={}, h={})",
            self.left, self.bottom_offset, self.width, self.height
        )
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = Error;

    /// Parses `left,bottom_offset,width,height`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parameter(format!("bad bounding box {s:?}: {e}")))?;
        match parts[..] {
            [l, b, w, h] => BoundingBox::new(l, b, w, h),
            _ => Err(Error::Parameter(format!(
                "bounding box needs 4 values left,bottom_offset,width,height; got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopOriginRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "missing P5 magic"));
    }
    pos += 2;

    let mut header = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        // at least one whitespace byte separates tokens; comments allowed between them
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if pos == start {
            return Err(Error::format(pos, format!("expected whitespace before {name}")));
        }
        let token_start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == token_start {
            return Err(Error::format(pos, format!("expected decimal {name}")));
        }
        let text = std::str::from_utf8(&bytes[token_start..pos]).expect("ascii digits");
        header[i] = text
            .parse()
            .map_err(|_| Error::format(token_start, format!("{name} out of range")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::format(pos, format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(pos, "zero image dimension"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos, "expected single whitespace before raster")),
    }
    let needed = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(pos, "image dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < needed {
        return Err(Error::format(
            bytes.len(),
            format!("truncated raster: need {needed} bytes, have {}", raster.len()),
        ));
    }
    if raster.len() > needed {
        return Err(Error::format(
            pos + needed,
            format!("{} trailing bytes after raster", raster.len() - needed),
        ));
    }
    Frame::new(width, height, raster.to_vec())
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

/// Channel average with half-up rounding. A raw channel sum would not fit
/// the 8-bit luminance range.
pub fn rgb_to_luminance(r: u8, g: u8, b: u8) -> u8 {
    let sum = r as u16 + g as u16 + b as u16;
    // round(sum / 3) half-up == floor((2 * sum + 3) / 6)
    ((2 * sum + 3) / 6) as u8
}

pub fn crop_bbox(frame: &Frame, bbox: &BoundingBox) -> Result<Frame> {
    let rect = bbox.to_top_origin(frame.width, frame.height)?;
    let mut pixels = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.y + rect.height {
        pixels.extend_from_slice(&frame.row(y)[rect.x..rect.x + rect.width]);
    }
    Frame::new(rect.width, rect.height, pixels)
}

/// Mean of the box pixels without materializing the crop.
pub(crate) fn box_mean(frame: &Frame, rect: &TopOriginRect) -> f64 {
    let mut total: u64 = 0;
    for y in rect.y..rect.y + rect.height {
        total += frame.row(y)[rect.x..rect.x + rect.width]
            .iter()
            .map(|&p| p as u64)
            .sum::<u64>();
    }
    total as f64 / (rect.width * rect.height) as f64
}

pub fn frame_mean_luminance(frame: &Frame) -> Result<f64> {
    if frame.pixels.is_empty() {
        return Err(Error::EmptyInput("frame has no pixels".into()));
    }
    // integer sum is exact for any realistic frame size
    let total: u64 = frame.pixels.iter().map(|&p| p as u64).sum();
    Ok(total as f64 / frame.pixels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub fps: f64,
    pub frame_count: usize,
}

pub const CLIP_META_FILE: &str = "clip.json";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{:06}.pgm", index + 1)
}

pub fn write_clip_dir(clip: &Clip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in clip.frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        fs::write(&path, encode_pgm(frame)).map_err(|e| Error::io(&path, e))?;
    }
    let meta = ClipMeta {
        fps: clip.fps,
        frame_count: clip.frames.len(),
    };
    let path = dir.join(CLIP_META_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn read_clip_dir(dir: &Path) -> Result<Clip> {
    let meta_path = dir.join(CLIP_META_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ClipMeta = serde_json::from_slice(&meta_bytes)?;
    let mut frames = Vec::with_capacity(meta.frame_count);
    for i in 0..meta.frame_count {
        let path = dir.join(frame_file_name(i));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let frame = decode_pgm(&bytes).map_err(|e| match e {
            Error::Format { offset, message } => Error::Format {
                offset,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        frames.push(frame);
    }
    Clip::new(frames, meta.fps)
}
