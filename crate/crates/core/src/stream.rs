//! Raw luminance frame streams for live monitoring.
//!
//! Wire format: an ASCII header line `FSPV1 <width> <height> <fps>\n`, then
//! back-to-back frames of `width * height` bytes. Ingestion runs on its own
//! thread and hands completed windows to the classifier through a bounded
//! channel, so a slow classifier blocks ingestion instead of dropping windows.

use std::io::{self, Read, Write};
use std::sync::mpsc::sync_channel;
use std::thread;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::push_crop;
use crate::imaging::Clip;
use crate::label::Binary;
use crate::pipeline::UnsupervisedModel;

pub const STREAM_MAGIC: &str = "FSPV1";
const MAX_HEADER_LEN: usize = 128;
/// Completed windows that may wait for classification before ingestion blocks.
pub const HANDOFF_CAPACITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

impl StreamHeader {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height
    }

    pub fn encode(&self) -> String {
        format!("{STREAM_MAGIC} {} {} {}\n", self.width, self.height, self.fps)
    }
}

/// Reads the header one byte at a time so nothing past the newline is consumed.
pub fn read_header<R: Read>(reader: &mut R) -> Result<StreamHeader> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = read_retrying(reader, &mut byte).map_err(|e| Error::io("<stream>", e))?;
        if n == 0 {
            let msg = if line.is_empty() { "empty stream, expected FSPV1 header" } else { "header line not terminated" };
            return Err(Error::format(line.len(), msg));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > MAX_HEADER_LEN {
            return Err(Error::format(line.len(), "header line too long"));
        }
    }
    let text = std::str::from_utf8(&line).map_err(|_| Error::format(0, "header is not ASCII"))?;
    let fields: Vec<&str> = text.split(' ').collect();
    if fields.first() != Some(&STREAM_MAGIC) {
        return Err(Error::format(0, format!("expected {STREAM_MAGIC} header, got {text:?}")));
    }
    if fields.len() != 4 {
        return Err(Error::format(0, "header must be `FSPV1 <width> <height> <fps>`"));
    }
    let dim = |s: &str, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::format(0, format!("bad {what} {s:?}"))),
        }
    };
    let fps = match fields[3].parse::<f64>() {
        Ok(f) if f.is_finite() && f > 0.0 => f,
        _ => return Err(Error::format(0, format!("bad fps {:?}", fields[3]))),
    };
    Ok(StreamHeader {
        width: dim(fields[1], "width")?,
        height: dim(fields[2], "height")?,
        fps,
    })
}

fn read_retrying<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    loop {
        match reader.read(buf) {
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            other => return other,
        }
    }
}

/// Fills `buf` unless the stream ends first; returns how many bytes arrived.
fn read_frame<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = read_retrying(reader, &mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

/// Writes a clip in stream format.
pub fn write_stream<W: Write>(clip: &Clip, mut writer: W) -> Result<()> {
    let (width, height) = clip
        .dimensions()
        .ok_or_else(|| Error::EmptyInput("clip has no frames".into()))?;
    let header = StreamHeader {
        width,
        height,
        fps: clip.fps(),
    };
    let io = |e| Error::io("<stream>", e);
    writer.write_all(header.encode().as_bytes()).map_err(io)?;
    for f in clip.frames() {
        writer.write_all(f.pixels()).map_err(io)?;
    }
    writer.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertRecord {
    pub window: usize,
    pub first_frame: usize,
    pub last_frame: usize,
    pub label: Binary,
    pub d_unstable: f64,
    pub d_other: f64,
}

/// Closing statistics; `partial_frames` counts whole frames of the discarded
/// incomplete window and `trailing_bytes` any incomplete frame after them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamSummary {
    pub frames: usize,
    pub windows: usize,
    pub unstable_windows: usize,
    pub partial_frames: usize,
    pub trailing_bytes: usize,
    pub truncated: bool,
}

struct Completed {
    index: usize,
    vector: Vec<f64>,
}

/// Classifies every complete window of the stream, calling `emit` as soon as
/// each is ready. Fails on a bad header or a frame size the model box does not fit.
pub fn monitor<R, F>(model: &UnsupervisedModel, mut reader: R, mut emit: F) -> Result<StreamSummary>
where
    R: Read + Send,
    F: FnMut(&AlertRecord) -> Result<()>,
{
    let header = read_header(&mut reader)?;
    let rect = model.bbox().to_top_origin(header.width, header.height)?;
    let window_len = model.window_len;
    let dim = model.feature_len();

    thread::scope(|scope| {
        let (tx, rx) = sync_channel::<Completed>(HANDOFF_CAPACITY);
        let ingest = scope.spawn(move || -> Result<(usize, usize, usize)> {
            let mut frame = vec![0u8; header.frame_bytes()];
            let mut window = Vec::with_capacity(dim);
            let mut frames = 0;
            let mut index = 0;
            loop {
                let got = read_frame(&mut reader, &mut frame).map_err(|e| Error::io("<stream>", e))?;
                if got < frame.len() {
                    return Ok((frames, window.len() / rect.width / rect.height, got));
                }
                frames += 1;
                push_crop(&mut window, &frame, header.width, &rect);
                if window.len() == dim {
                    let vector = std::mem::replace(&mut window, Vec::with_capacity(dim));
                    if tx.send(Completed { index, vector }).is_err() {
                        // classifier stopped; its error is reported below
                        return Ok((frames, 0, 0));
                    }
                    index += 1;
                }
            }
        });

        let mut windows = 0;
        let mut unstable_windows = 0;
        let mut failure = None;
        for done in rx {
            let result = model.classify_vector(&done.vector).and_then(|v| {
                let record = AlertRecord {
                    window: done.index,
                    first_frame: done.index * window_len,
                    last_frame: done.index * window_len + window_len - 1,
                    label: v.label,
                    d_unstable: v.d_unstable,
                    d_other: v.d_other,
                };
                emit(&record)
                    .map(|_| v.label.is_unstable())
            });
            match result {
                Ok(unstable) => {
                    windows += 1;
                    unstable_windows += unstable as usize;
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        let ingested = ingest.join().expect("ingestion thread panicked");
        if let Some(e) = failure {
            return Err(e);
        }
        let (frames, partial_frames, trailing_bytes) = ingested?;
        if partial_frames > 0 || trailing_bytes > 0 {
            tracing::warn!(partial_frames, trailing_bytes, "stream ended inside a window; partial window discarded");
        }
        Ok(StreamSummary {
            frames,
            windows,
            unstable_windows,
            partial_frames,
            trailing_bytes,
            truncated: partial_frames > 0 || trailing_bytes > 0,
        })
    })
}
