//! Feature windows: anchor-region luminance over consecutive frames,
//! flattened frame-major then row-major into one vector.

use rayon::prelude::*;

use crate::binio::{Payload, SectionReader, SectionWriter};
use crate::error::{Error, Result};
use crate::imaging::{BoundingBox, Clip, TopOriginRect};

pub const DEFAULT_WINDOW_LEN: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub clip_id: String,
    pub window_index: usize,
    pub vector: Vec<f64>,
}

impl FeatureWindow {
    /// Per-frame means of the flattened box crops, `frame_area` values per frame.
    pub fn frame_means(&self, frame_area: usize) -> Vec<f64> {
        self.vector
            .chunks_exact(frame_area)
            .map(|c| c.iter().sum::<f64>() / frame_area as f64)
            .collect()
    }
}

/// Windows cut from one clip. `short_clip` is set when the clip held fewer
/// frames than a single window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<FeatureWindow>,
    pub short_clip: bool,
}

pub fn window_count(n_frames: usize, window_len: usize, stride: usize) -> usize {
    if window_len == 0 || stride == 0 || n_frames < window_len {
        0
    } else {
        (n_frames - window_len) / stride + 1
    }
}

pub(crate) fn push_crop(out: &mut Vec<f64>, pixels: &[u8], frame_width: usize, rect: &TopOriginRect) {
    for y in rect.y..rect.y + rect.height {
        let row = &pixels[y * frame_width + rect.x..y * frame_width + rect.x + rect.width];
        out.extend(row.iter().map(|&p| p as f64));
    }
}

pub fn build_windows(
    clip_id: &str,
    clip: &Clip,
    bbox: &BoundingBox,
    window_len: usize,
    stride: usize,
) -> Result<WindowSet> {
    if window_len == 0 || stride == 0 {
        return Err(Error::Parameter("window_len and stride must be positive".into()));
    }
    let Some((w, h)) = clip.dimensions() else {
        return Ok(WindowSet {
            windows: vec![],
            short_clip: true,
        });
    };
    let rect = bbox.to_top_origin(w, h)?;
    let count = window_count(clip.len(), window_len, stride);
    if count == 0 {
        tracing::warn!(clip_id, frames = clip.len(), window_len, "clip shorter than one window");
        return Ok(WindowSet {
            windows: vec![],
            short_clip: true,
        });
    }
    let windows = (0..count)
        .into_par_iter()
        .map(|wi| {
            let mut vector = Vec::with_capacity(window_len * rect.width * rect.height);
            for frame in &clip.frames()[wi * stride..wi * stride + window_len] {
                push_crop(&mut vector, frame.pixels(), w, &rect);
            }
            FeatureWindow {
                clip_id: clip_id.to_string(),
                window_index: wi,
                vector,
            }
        })
        .collect();
    Ok(WindowSet {
        windows,
        short_clip: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    provenance: Vec<(String, usize)>,
}

impl FeatureMatrix {
    pub fn from_rows(cols: usize, data: Vec<f64>, provenance: Vec<(String, usize)>) -> Result<Self> {
        if cols == 0 && !data.is_empty() {
            return Err(Error::Dimension("zero-width matrix with data".into()));
        }
        let rows = provenance.len();
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows} rows of width {cols} need {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            provenance,
        })
    }

    /// Convenience for tests and small inputs: rows given as slices, provenance synthesized.
    pub fn from_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!("row {i} has length {}, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        let provenance = (0..rows.len()).map(|i| (String::new(), i)).collect();
        Self::from_rows(cols, data, provenance)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact with cols == 0 would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn provenance(&self) -> &[(String, usize)] {
        &self.provenance
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = SectionWriter::new(MATRIX_MAGIC, MATRIX_VERSION);
        let mut shape = Payload::default();
        shape.u64(self.rows as u64).u64(self.cols as u64);
        w.section(b"SHAP", &shape);
        let mut prov = Payload::default();
        for (id, idx) in &self.provenance {
            prov.str(id).u64(*idx as u64);
        }
        w.section(b"PROV", &prov);
        let mut data = Payload::default();
        data.f64s(&self.data);
        w.section(b"DATA", &data);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = SectionReader::open(bytes, MATRIX_MAGIC, MATRIX_VERSION)?;
        let mut shape = r.section(b"SHAP")?;
        let rows = shape.usize()?;
        let cols = shape.usize()?;
        shape.end()?;
        let mut prov = r.section(b"PROV")?;
        let mut provenance = Vec::with_capacity(rows.min(1 << 20));
        for _ in 0..rows {
            let id = prov.str()?;
            provenance.push((id, prov.usize()?));
        }
        prov.end()?;
        let mut data = r.section(b"DATA")?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| data.err("shape overflows"))?;
        let values = data.f64s(n)?;
        data.end()?;
        r.finish()?;
        Self::from_rows(cols, values, provenance)
    }
}

const MATRIX_MAGIC: &[u8; 4] = b"FSPX";
const MATRIX_VERSION: u32 = 1;

/// Stacks windows of length `dim` into a matrix, preserving order and provenance.
pub fn stack(windows: Vec<FeatureWindow>, dim: usize) -> Result<FeatureMatrix> {
    if let Some(bad) = windows.iter().find(|w| w.vector.len() != dim) {
        return Err(Error::Dimension(format!(
            "window {}#{} has length {}, expected {dim}",
            bad.clip_id,
            bad.window_index,
            bad.vector.len()
        )));
    }
    let mut data = Vec::with_capacity(windows.len() * dim);
    let mut provenance = Vec::with_capacity(windows.len());
    for w in windows {
        data.extend_from_slice(&w.vector);
        provenance.push((w.clip_id, w.window_index));
    }
    FeatureMatrix::from_rows(dim, data, provenance)
}
