//! Unsupervised stability classifier: one-second luminance windows are
//! projected onto two principal components and clustered with k-means. The
//! cluster holding the largest share of FLSC-unstable training windows is the
//! unstable cluster; a new window is unstable when it lies at least as close
//! to that centroid as to any other.
//!
//! # Model file
//!
//! `FSPM` magic, format version (u32 LE), then these sections in order, each
//! framed as `tag[4] | len u64 | payload | crc32(payload) u32`, and a trailing
//! CRC-32 over the whole file. Integers are u64 LE unless noted, floats are
//! f64 LE.
//!
//! | tag    | payload |
//! |--------|---------|
//! | `BBOX` | left, bottom_offset, width, height |
//! | `WIND` | window_len |
//! | `FLSC` | uncertain threshold, unstable threshold, label granularity (u8: 0 window, 1 clip) |
//! | `PCAM` | p, then p mean values |
//! | `PCAC` | n_components, then n_components x p component values, row-major |
//! | `PCAV` | n_components explained variances, then n_components ratios |
//! | `KMNS` | k, d, k x d centroid values, inertia, iterations_run, seed |
//! | `UNST` | unstable cluster index, low-confidence flag (u8) |
//! | `SUMM` | k, then per cluster: unstable, uncertain, stable window counts |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{Payload, SectionReader, SectionWriter};
use crate::error::{Error, Result};
use crate::features::{self, build_windows, stack, FeatureWindow};
use crate::flsc::{classify_clip_flsc, classify_frame_means, FlscConfig};
use crate::imaging::{BoundingBox, Clip};
use crate::kmeans::{fit_kmeans, KMeansModel, KMeansParams};
use crate::label::{Binary, StabilityLabel};
use crate::pca::{fit_pca, PcaModel};
use crate::stats::squared_distance;

pub const MODEL_MAGIC: &[u8; 4] = b"FSPM";
pub const MODEL_VERSION: u32 = 1;

/// Which frames define the FLSC mean when labeling a training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelGranularity {
    /// Each window is its own clip.
    #[default]
    Window,
    /// Every window inherits its whole clip's label.
    Clip,
}

impl std::str::FromStr for LabelGranularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(Self::Window),
            "clip" => Ok(Self::Clip),
            other => Err(Error::Parameter(format!("label granularity must be window or clip, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClusterSummary {
    pub unstable: u64,
    pub uncertain: u64,
    pub stable: u64,
}

impl ClusterSummary {
    pub fn total(&self) -> u64 {
        self.unstable + self.uncertain + self.stable
    }

    pub fn unstable_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.unstable as f64 / self.total() as f64
        }
    }

    fn count(&mut self, label: StabilityLabel) {
        match label {
            StabilityLabel::Unstable => self.unstable += 1,
            StabilityLabel::Uncertain => self.uncertain += 1,
            StabilityLabel::Stable => self.stable += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedModel {
    pub flsc: FlscConfig,
    pub granularity: LabelGranularity,
    pub window_len: usize,
    pub pca: PcaModel,
    pub kmeans: KMeansModel,
    pub unstable_cluster: usize,
    /// Set when the cluster could not be picked from FLSC labels.
    pub low_confidence: bool,
    pub training_summary: Vec<ClusterSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub flsc: FlscConfig,
    pub window_len: usize,
    pub n_components: usize,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub granularity: LabelGranularity,
}

impl TrainConfig {
    pub fn new(flsc: FlscConfig, seed: u64) -> Self {
        Self {
            flsc,
            window_len: features::DEFAULT_WINDOW_LEN,
            n_components: 2,
            k: 3,
            seed,
            restarts: 10,
            max_iter: 300,
            granularity: LabelGranularity::Window,
        }
    }
}

/// A trained model plus what was learned about the training windows.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: UnsupervisedModel,
    pub warnings: Vec<String>,
    /// `(clip_id, window_index, cluster, flsc_label)` per training window.
    pub windows: Vec<(String, usize, usize, StabilityLabel)>,
}

impl UnsupervisedModel {
    pub fn bbox(&self) -> BoundingBox {
        self.flsc.bbox
    }

    pub fn feature_len(&self) -> usize {
        self.window_len * self.flsc.bbox.area()
    }

    /// Projects a window onto the model's principal components.
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        self.pca.transform(vector)
    }

    pub fn classify_vector(&self, vector: &[f64]) -> Result<WindowVerdict> {
        let z = self.project(vector)?;
        let d2 = self.kmeans.distances(&z)?;
        let cluster = self.kmeans.assign(&z)?;
        let d_unstable = d2[self.unstable_cluster];
        let d_other = d2
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != self.unstable_cluster)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        // ties with the unstable centroid resolve conservatively
        let label = if d_unstable <= d_other {
            Binary::Unstable
        } else {
            Binary::Stable
        };
        Ok(WindowVerdict {
            label,
            cluster,
            projection: z,
            d_unstable: d_unstable.sqrt(),
            d_other: d_other.sqrt(),
        })
    }

    /// FLSC label of a window under this model's thresholds.
    pub fn window_flsc_label(&self, vector: &[f64]) -> Result<StabilityLabel> {
        classify_frame_means(&FeatureWindow::frame_means_of(vector, self.flsc.bbox.area()), &self.flsc)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = SectionWriter::new(MODEL_MAGIC, MODEL_VERSION);
        let b = self.flsc.bbox;
        w.section(
            b"BBOX",
            Payload::default()
                .u64(b.left as u64)
                .u64(b.bottom_offset as u64)
                .u64(b.width as u64)
                .u64(b.height as u64),
        );
        w.section(b"WIND", Payload::default().u64(self.window_len as u64));
        w.section(
            b"FLSC",
            Payload::default()
                .f64(self.flsc.uncertain_threshold)
                .f64(self.flsc.unstable_threshold)
                .u8(match self.granularity {
                    LabelGranularity::Window => 0,
                    LabelGranularity::Clip => 1,
                }),
        );
        w.section(
            b"PCAM",
            Payload::default().u64(self.pca.n_features() as u64).f64s(self.pca.mean()),
        );
        w.section(
            b"PCAC",
            Payload::default()
                .u64(self.pca.n_components() as u64)
                .f64s(self.pca.components()),
        );
        w.section(
            b"PCAV",
            Payload::default()
                .f64s(self.pca.explained_variance())
                .f64s(self.pca.explained_variance_ratio()),
        );
        let mut km = Payload::default();
        km.u64(self.kmeans.k as u64).u64(self.kmeans.dim() as u64);
        for c in &self.kmeans.centroids {
            km.f64s(c);
        }
        km.f64(self.kmeans.inertia)
            .u64(self.kmeans.iterations_run as u64)
            .u64(self.kmeans.seed);
        w.section(b"KMNS", &km);
        w.section(
            b"UNST",
            Payload::default()
                .u64(self.unstable_cluster as u64)
                .u8(self.low_confidence as u8),
        );
        let mut summ = Payload::default();
        summ.u64(self.training_summary.len() as u64);
        for s in &self.training_summary {
            summ.u64(s.unstable).u64(s.uncertain).u64(s.stable);
        }
        w.section(b"SUMM", &summ);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = SectionReader::open(bytes, MODEL_MAGIC, MODEL_VERSION)?;

        let mut s = r.section(b"BBOX")?;
        let bbox = BoundingBox::new(s.usize()?, s.usize()?, s.usize()?, s.usize()?)
            .map_err(|e| s.err(e.to_string()))?;
        s.end()?;

        let mut s = r.section(b"WIND")?;
        let window_len = s.usize()?;
        if window_len == 0 {
            return Err(s.err("window_len is zero"));
        }
        s.end()?;

        let mut s = r.section(b"FLSC")?;
        let (unc, unst) = (s.f64()?, s.f64()?);
        let flsc = FlscConfig::new(bbox, unc, unst).map_err(|e| s.err(e.to_string()))?;
        let granularity = match s.u8()? {
            0 => LabelGranularity::Window,
            1 => LabelGranularity::Clip,
            g => return Err(s.err(format!("unknown label granularity {g}"))),
        };
        s.end()?;

        let mut s = r.section(b"PCAM")?;
        let p = s.usize()?;
        if p != window_len * bbox.area() {
            return Err(s.err(format!(
                "feature dimension {p} does not match window_len x box area = {}",
                window_len * bbox.area()
            )));
        }
        let mean = s.f64s(p)?;
        s.end()?;

        let mut s = r.section(b"PCAC")?;
        let nc = s.usize()?;
        let components = s.f64s(nc.checked_mul(p).ok_or_else(|| s.err("size overflows"))?)?;
        s.end()?;

        let mut s = r.section(b"PCAV")?;
        let variances = s.f64s(nc)?;
        let ratios = s.f64s(nc)?;
        s.end()?;
        let pca = PcaModel::from_parts(mean, components, variances, ratios)
            .map_err(|e| Error::load("PCAV", e.to_string()))?;

        let mut s = r.section(b"KMNS")?;
        let k = s.usize()?;
        let d = s.usize()?;
        if d != nc || k == 0 {
            return Err(s.err(format!("{k} centroids of dimension {d} for {nc} principal components")));
        }
        let centroids = (0..k).map(|_| s.f64s(d)).collect::<Result<Vec<_>>>()?;
        let kmeans = KMeansModel {
            k,
            centroids,
            inertia: s.f64()?,
            iterations_run: s.usize()?,
            seed: s.u64()?,
        };
        s.end()?;

        let mut s = r.section(b"UNST")?;
        let unstable_cluster = s.usize()?;
        if unstable_cluster >= k {
            return Err(s.err(format!("unstable cluster {unstable_cluster} out of range for k = {k}")));
        }
        let low_confidence = s.u8()? != 0;
        s.end()?;

        let mut s = r.section(b"SUMM")?;
        let ks = s.usize()?;
        if ks != k {
            return Err(s.err(format!("summary covers {ks} clusters, model has {k}")));
        }
        let training_summary = (0..k)
            .map(|_| {
                Ok(ClusterSummary {
                    unstable: s.u64()?,
                    uncertain: s.u64()?,
                    stable: s.u64()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        s.end()?;
        r.finish()?;

        Ok(Self {
            flsc,
            granularity,
            window_len,
            pca,
            kmeans,
            unstable_cluster,
            low_confidence,
            training_summary,
        })
    }
}

impl FeatureWindow {
    pub(crate) fn frame_means_of(vector: &[f64], frame_area: usize) -> Vec<f64> {
        vector
            .chunks_exact(frame_area)
            .map(|c| c.iter().sum::<f64>() / frame_area as f64)
            .collect()
    }
}

pub fn save_model(model: &UnsupervisedModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<UnsupervisedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    UnsupervisedModel::from_bytes(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowVerdict {
    pub label: Binary,
    pub cluster: usize,
    pub projection: Vec<f64>,
    /// Euclidean distance in PC space to the unstable centroid.
    pub d_unstable: f64,
    /// Euclidean distance to the nearest other centroid.
    pub d_other: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipVerdict {
    pub label: Binary,
    pub windows: Vec<WindowVerdict>,
}

pub fn classify_window(model: &UnsupervisedModel, window: &FeatureWindow) -> Result<WindowVerdict> {
    model.classify_vector(&window.vector)
}

/// Unstable as soon as any one-second window is.
pub fn classify_clip(model: &UnsupervisedModel, clip: &Clip) -> Result<ClipVerdict> {
    let set = build_windows("", clip, &model.flsc.bbox, model.window_len, model.window_len)?;
    if set.windows.is_empty() {
        return Err(Error::TooShort {
            frames: clip.len(),
            window_len: model.window_len,
        });
    }
    let windows = set
        .windows
        .iter()
        .map(|w| classify_window(model, w))
        .collect::<Result<Vec<_>>>()?;
    let label = if windows.iter().any(|w| w.label.is_unstable()) {
        Binary::Unstable
    } else {
        Binary::Stable
    };
    Ok(ClipVerdict { label, windows })
}

/// FLSC labels for a clip's windows under the chosen granularity.
fn window_labels(
    clip: &Clip,
    windows: &[FeatureWindow],
    flsc: &FlscConfig,
    granularity: LabelGranularity,
) -> Result<Vec<StabilityLabel>> {
    match granularity {
        LabelGranularity::Window => windows
            .iter()
            .map(|w| classify_frame_means(&w.frame_means(flsc.bbox.area()), flsc))
            .collect(),
        LabelGranularity::Clip => {
            let l = classify_clip_flsc(clip, flsc)?;
            Ok(vec![l; windows.len()])
        }
    }
}

pub fn train_unsupervised<I>(clips: I, config: &TrainConfig) -> Result<Training>
where
    I: IntoIterator<Item = Result<(String, Clip)>>,
{
    config.flsc.validate()?;
    let dim = config.window_len * config.flsc.bbox.area();
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    let mut warnings = Vec::new();
    for item in clips {
        let (id, clip) = item?;
        let set = build_windows(&id, &clip, &config.flsc.bbox, config.window_len, config.window_len)?;
        if set.short_clip {
            warnings.push(format!("clip {id}: {} frames, shorter than one window", clip.len()));
        }
        labels.extend(window_labels(&clip, &set.windows, &config.flsc, config.granularity)?);
        windows.extend(set.windows);
    }
    let needed = config.k.max(config.n_components + 1);
    if windows.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: windows.len(),
        });
    }

    let matrix = stack(windows, dim)?;
    let pca = fit_pca(&matrix, config.n_components)?;
    let projected = matrix
        .iter_rows()
        .map(|r| pca.transform(r))
        .collect::<Result<Vec<_>>>()?;
    let kmeans = fit_kmeans(
        &projected,
        &KMeansParams {
            k: config.k,
            seed: config.seed,
            restarts: config.restarts,
            max_iter: config.max_iter,
            tol: 1e-9,
        },
    )?;
    let clusters = projected
        .iter()
        .map(|z| kmeans.assign(z))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = vec![ClusterSummary::default(); config.k];
    for (&c, &l) in clusters.iter().zip(&labels) {
        summary[c].count(l);
    }

    let all_same = labels.windows(2).all(|w| w[0] == w[1]);
    let (unstable_cluster, low_confidence) = if all_same {
        warnings.push(format!(
            "every training window has FLSC label {}; unstable cluster falls back to lowest PC1 centroid",
            labels[0]
        ));
        let leftmost = (0..config.k)
            .min_by(|&a, &b| kmeans.centroids[a][0].total_cmp(&kmeans.centroids[b][0]).then(a.cmp(&b)))
            .expect("k > 0");
        (leftmost, true)
    } else {
        let best = (0..config.k)
            .max_by(|&a, &b| {
                summary[a]
                    .unstable_fraction()
                    .total_cmp(&summary[b].unstable_fraction())
                    .then(b.cmp(&a))
            })
            .expect("k > 0");
        (best, false)
    };
    for w in &warnings {
        tracing::warn!("{w}");
    }

    let model = UnsupervisedModel {
        flsc: config.flsc,
        granularity: config.granularity,
        window_len: config.window_len,
        pca,
        kmeans,
        unstable_cluster,
        low_confidence,
        training_summary: summary,
    };
    let windows = matrix
        .provenance()
        .iter()
        .zip(clusters.iter().zip(&labels))
        .map(|((id, wi), (&c, &l))| (id.clone(), *wi, c, l))
        .collect();
    Ok(Training {
        model,
        warnings,
        windows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub clip_id: String,
    pub window_index: usize,
    pub pc1: f64,
    pub pc2: f64,
    pub cluster: usize,
    /// Empty on centroid rows.
    pub flsc_label: Option<StabilityLabel>,
    pub is_centroid: bool,
}

/// One row per window, then one row per centroid.
pub fn project_corpus<I>(model: &UnsupervisedModel, clips: I) -> Result<Vec<ProjectionRow>>
where
    I: IntoIterator<Item = Result<(String, Clip)>>,
{
    let pc = |z: &[f64], i: usize| z.get(i).copied().unwrap_or(0.0);
    let mut rows = Vec::new();
    for item in clips {
        let (id, clip) = item?;
        let set = build_windows(&id, &clip, &model.flsc.bbox, model.window_len, model.window_len)?;
        let labels = window_labels(&clip, &set.windows, &model.flsc, model.granularity)?;
        for (w, l) in set.windows.iter().zip(labels) {
            let v = classify_window(model, w)?;
            rows.push(ProjectionRow {
                clip_id: id.clone(),
                window_index: w.window_index,
                pc1: pc(&v.projection, 0),
                pc2: pc(&v.projection, 1),
                cluster: v.cluster,
                flsc_label: Some(l),
                is_centroid: false,
            });
        }
    }
    for (j, c) in model.kmeans.centroids.iter().enumerate() {
        rows.push(ProjectionRow {
            clip_id: "centroid".into(),
            window_index: j,
            pc1: pc(c, 0),
            pc2: pc(c, 1),
            cluster: j,
            flsc_label: None,
            is_centroid: true,
        });
    }
    Ok(rows)
}

/// `clip_id,window_index,pc1,pc2,cluster,flsc_label,is_centroid`.
pub fn write_projection_csv<W: Write>(rows: &[ProjectionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["clip_id", "window_index", "pc1", "pc2", "cluster", "flsc_label", "is_centroid"])?;
    for r in rows {
        w.write_record([
            r.clip_id.clone(),
            r.window_index.to_string(),
            r.pc1.to_string(),
            r.pc2.to_string(),
            r.cluster.to_string(),
            r.flsc_label.map(|l| l.as_str().to_string()).unwrap_or_default(),
            r.is_centroid.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Distance-based sanity check used by tests: squared distance of a PC point to a centroid.
pub fn centroid_distance(model: &UnsupervisedModel, z: &[f64], cluster: usize) -> f64 {
    squared_distance(z, &model.kmeans.centroids[cluster]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Frame;
    use crate::synthgen::{generate_clip, CorpusSpec};

    const W: usize = 12;
    const H: usize = 10;

    fn bbox() -> BoundingBox {
        BoundingBox::new(2, 8, 6, 5).unwrap()
    }

    fn corpus(stable: usize, unstable: usize) -> Vec<(String, Clip)> {
        let spec = CorpusSpec {
            width: W,
            height: H,
            frames_per_clip: 90,
            anchor_box: bbox(),
            noise_sigma: 2.0,
            ..CorpusSpec::full_size()
        };
        spec.scenarios(stable, unstable, 9)
            .into_iter()
            .map(|(id, s)| (id, generate_clip(&s).unwrap()))
            .collect()
    }

    fn train(clips: &[(String, Clip)], seed: u64) -> Training {
        train_unsupervised(
            clips.iter().cloned().map(Ok),
            &TrainConfig::new(FlscConfig::with_box(bbox()), seed),
        )
        .unwrap()
    }

    #[test]
    fn training_separates_extinction_windows() {
        let clips = corpus(40, 15);
        let t = train(&clips, 7);
        let m = &t.model;
        assert!(!m.low_confidence);
        let s = &m.training_summary;
        for (j, other) in s.iter().enumerate() {
            assert!(s[m.unstable_cluster].unstable_fraction() >= other.unstable_fraction(), "cluster {j}");
        }
        let in_unstable = t
            .windows
            .iter()
            .filter(|(id, ..)| id.starts_with("unstable"))
            .filter(|(_, _, c, _)| *c == m.unstable_cluster)
            .count();
        assert!(in_unstable as f64 >= 0.8 * 45.0, "{in_unstable} {:?}", m.training_summary);
        for (id, clip) in &clips {
            let v = classify_clip(m, clip).unwrap();
            let want = if id.starts_with("unstable") { Binary::Unstable } else { Binary::Stable };
            assert_eq!(v.label, want, "{id}");
            let any = v.windows.iter().any(|w| w.label == Binary::Unstable);
            assert_eq!(any, v.label == Binary::Unstable);
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let clips = corpus(6, 3);
        let a = train(&clips, 3).model;
        let b = train(&clips, 3).model;
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = UnsupervisedModel::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_bytes(), a.to_bytes());
    }

    #[test]
    fn identical_constant_clips_are_low_confidence() {
        let clip = Clip::new(vec![Frame::filled(W, H, 120).unwrap(); 30], 30.0).unwrap();
        let clips: Vec<_> = (0..4).map(|i| (format!("c{i}"), clip.clone())).collect();
        let t = train(&clips, 1);
        assert!(t.model.low_confidence);
        assert!(!t.warnings.is_empty());
        assert!(t.model.pca.explained_variance_ratio().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn too_few_windows_is_an_error() {
        let (id, clip) = corpus(1, 0).remove(0);
        let two_windows = Clip::new(clip.frames()[..60].to_vec(), 30.0).unwrap();
        let err = train_unsupervised(
            [Ok((id, two_windows))],
            &TrainConfig::new(FlscConfig::with_box(bbox()), 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }), "{err}");
    }

    #[test]
    fn ties_with_unstable_centroid_are_unstable() {
        let clips = corpus(6, 3);
        let mut m = train(&clips, 3).model;
        // place the unstable centroid and one other symmetrically around the mean projection
        m.unstable_cluster = 0;
        m.kmeans.centroids = vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 50.0]];
        let v = m.classify_vector(m.pca.mean()).unwrap();
        assert_eq!(v.label, Binary::Unstable);
        assert_eq!(v.d_unstable, v.d_other);

        // a window sitting exactly on the unstable centroid
        m.unstable_cluster = 1;
        let mut x = m.pca.mean().to_vec();
        for (xi, c) in x.iter_mut().zip(m.pca.component(0)) {
            *xi += c;
        }
        let v = m.classify_vector(&x).unwrap();
        assert_eq!(v.label, Binary::Unstable);
        assert!(v.d_unstable < 1e-9);
    }

    #[test]
    fn too_short_clip_cannot_be_classified() {
        let clips = corpus(6, 3);
        let m = train(&clips, 3).model;
        let short = Clip::new(clips[0].1.frames()[..10].to_vec(), 30.0).unwrap();
        assert!(matches!(classify_clip(&m, &short), Err(Error::TooShort { .. })));
        let one = Clip::new(clips[0].1.frames()[..30].to_vec(), 30.0).unwrap();
        let v = classify_clip(&m, &one).unwrap();
        assert_eq!(v.windows.len(), 1);
        assert_eq!(v.label, v.windows[0].label);
    }

    #[test]
    fn projection_reproduces_training_assignments() {
        let clips = corpus(6, 3);
        let t = train(&clips, 11);
        let rows = project_corpus(&t.model, clips.iter().cloned().map(Ok)).unwrap();
        let windows: Vec<_> = rows.iter().filter(|r| !r.is_centroid).collect();
        assert_eq!(windows.len(), t.windows.len());
        for (r, (id, wi, c, l)) in windows.iter().zip(&t.windows) {
            assert_eq!((&r.clip_id, r.window_index, r.cluster, r.flsc_label), (id, *wi, *c, Some(*l)));
        }
        let centroids: Vec<_> = rows.iter().filter(|r| r.is_centroid).collect();
        assert_eq!(centroids.len(), 3);
        for (j, r) in centroids.iter().enumerate() {
            assert_eq!(vec![r.pc1, r.pc2], t.model.kmeans.centroids[j]);
        }
        let mut out = Vec::new();
        write_projection_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("clip_id,window_index,pc1,pc2,cluster,flsc_label,is_centroid\n"));
        assert!(text.trim_end().ends_with(",,true"));
    }

    #[test]
    fn clip_granularity_labels_every_window_alike() {
        let clips = corpus(6, 3);
        let mut cfg = TrainConfig::new(FlscConfig::with_box(bbox()), 5);
        cfg.granularity = LabelGranularity::Clip;
        let t = train_unsupervised(clips.iter().cloned().map(Ok), &cfg).unwrap();
        for (id, _, _, l) in &t.windows {
            let want = if id.starts_with("unstable") { StabilityLabel::Unstable } else { StabilityLabel::Stable };
            assert_eq!(*l, want);
        }
        let m = UnsupervisedModel::from_bytes(&t.model.to_bytes()).unwrap();
        assert_eq!(m.granularity, LabelGranularity::Clip);
    }

    #[test]
    fn corrupted_model_files_name_the_section() {
        let m = train(&corpus(6, 3), 3).model;
        let bytes = m.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(UnsupervisedModel::from_bytes(&bad).unwrap_err().to_string().contains("bad magic"));

        let mut old = bytes.clone();
        old[4..8].copy_from_slice(&0u32.to_le_bytes());
        let e = UnsupervisedModel::from_bytes(&old).unwrap_err().to_string();
        assert!(e.contains("unsupported version 0"), "{e}");

        // flip a byte inside the PCA mean payload
        let at = find(&bytes, b"PCAM") + 12 + 8 + 16;
        let mut flipped = bytes.clone();
        flipped[at] ^= 0x40;
        match UnsupervisedModel::from_bytes(&flipped) {
            Err(Error::ModelLoad { section, message }) => {
                assert_eq!(section, "PCAM");
                assert!(message.contains("checksum"));
            }
            other => panic!("{other:?}"),
        }

        let cut = &bytes[..find(&bytes, b"KMNS") + 30];
        match UnsupervisedModel::from_bytes(cut) {
            Err(Error::ModelLoad { section, .. }) => assert_eq!(section, "KMNS"),
            other => panic!("{other:?}"),
        }

        let mut trailer = bytes.clone();
        let n = trailer.len();
        trailer[n - 1] ^= 1;
        match UnsupervisedModel::from_bytes(&trailer) {
            Err(Error::ModelLoad { section, .. }) => assert_eq!(section, "trailer"),
            other => panic!("{other:?}"),
        }
    }

    fn find(hay: &[u8], needle: &[u8]) -> usize {
        hay.windows(needle.len()).position(|w| w == needle).unwrap()
    }
}
