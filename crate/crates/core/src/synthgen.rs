//! Seeded synthetic flame footage.
//!
//! A scenario renders a flat bright flame region over a dark background. Events
//! darken the flame region for a run of frames: an extinction drops it to the
//! background level, a dimming drops it by `depth` of the base-to-background
//! gap. Gaussian sensor noise is added per pixel, then values are rounded
//! half-up and clamped to 8 bits. Each frame draws from its own RNG stream
//! keyed by `(seed, frame_index)`, so frames can be rendered in parallel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::flsc::FlscConfig;
use crate::imaging::{self, BoundingBox, Clip, Frame, TopOriginRect};
use crate::label::{Binary, StabilityLabel};

/// Largest frame-mean excursion attributable to sensor noise on still footage.
pub const SENSOR_NOISE_CEILING: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Extinction,
    Dimming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub depth: f64,
}

impl Event {
    pub fn covers(&self, frame: usize) -> bool {
        (self.start_frame..self.end_frame).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub duration: usize,
    pub flame_region: BoundingBox,
    pub base_luminance: u8,
    pub background_luminance: u8,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    /// Event-free, noise-free scenario.
    pub fn steady(width: usize, height: usize, duration: usize, flame_region: BoundingBox, base: u8, background: u8) -> Self {
        Self {
            width,
            height,
            fps: imaging::DEFAULT_FPS,
            duration,
            flame_region,
            base_luminance: base,
            background_luminance: background,
            events: vec![],
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.width == 0 || self.height == 0 {
            problems.push(format!("frame size {}x{} must be positive", self.width, self.height));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            problems.push(format!("fps {} must be positive", self.fps));
        }
        if self.duration == 0 {
            problems.push("duration must be at least one frame".into());
        }
        if self.width > 0 && self.height > 0 {
            if let Err(e) = self.flame_region.to_top_origin(self.width, self.height) {
                problems.push(format!("flame_region: {e}"));
            }
        }
        if self.base_luminance <= self.background_luminance {
            problems.push(format!(
                "base_luminance {} must exceed background_luminance {}",
                self.base_luminance, self.background_luminance
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            problems.push(format!("noise_sigma {} must be finite and non-negative", self.noise_sigma));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.start_frame >= e.end_frame || e.end_frame > self.duration {
                problems.push(format!(
                    "event {i}: frames [{}, {}) not a non-empty range within [0, {})",
                    e.start_frame, e.end_frame, self.duration
                ));
            }
            if !(e.depth > 0.0 && e.depth <= 1.0) {
                problems.push(format!("event {i}: depth {} outside (0, 1]", e.depth));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Noise-free flame-region luminance at `frame`; overlapping events take the darkest.
    pub fn flame_level(&self, frame: usize) -> f64 {
        let base = self.base_luminance as f64;
        let bg = self.background_luminance as f64;
        self.events
            .iter()
            .filter(|e| e.covers(frame))
            .map(|e| match e.kind {
                EventKind::Extinction => bg,
                EventKind::Dimming => base - e.depth * (base - bg),
            })
            .fold(base, f64::min)
    }

    pub fn has_event_in(&self, first: usize, len: usize) -> bool {
        (first..first + len).any(|f| self.events.iter().any(|e| e.covers(f)))
    }

    pub fn truth(&self) -> Binary {
        if self.events.is_empty() {
            Binary::Stable
        } else {
            Binary::Unstable
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let s: Scenario = serde_json::from_slice(bytes)?;
        s.validate()?;
        Ok(s)
    }
}

/// Per-pixel noise sigma whose frame-mean fluctuation over `box_pixels`
/// stays inside [`SENSOR_NOISE_CEILING`] at four standard deviations.
pub fn ceiling_noise_sigma(box_pixels: usize) -> f64 {
    SENSOR_NOISE_CEILING / 4.0 * (box_pixels as f64).sqrt()
}

fn quantize(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn generate_clip(scenario: &Scenario) -> Result<Clip> {
    scenario.validate()?;
    let frames = (0..scenario.duration)
        .into_par_iter()
        .map(|f| render_frame(scenario, f))
        .collect::<Result<Vec<_>>>()?;
    Clip::new(frames, scenario.fps)
}

pub fn render_frame(s: &Scenario, frame: usize) -> Result<Frame> {
    let rect = s.flame_region.to_top_origin(s.width, s.height)?;
    let level = s.flame_level(frame);
    let bg = s.background_luminance as f64;
    let mut pixels = vec![0u8; s.width * s.height];
    let inside = |x: usize, y: usize| {
        (rect.x..rect.x + rect.width).contains(&x) && (rect.y..rect.y + rect.height).contains(&y)
    };
    if s.noise_sigma == 0.0 {
        let (fl, bl) = (quantize(level), quantize(bg));
        for y in 0..s.height {
            for x in 0..s.width {
                pixels[y * s.width + x] = if inside(x, y) { fl } else { bl };
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(frame as u64);
        let normal = Normal::new(0.0, s.noise_sigma).expect("validated sigma");
        for y in 0..s.height {
            for x in 0..s.width {
                let mean = if inside(x, y) { level } else { bg };
                pixels[y * s.width + x] = quantize(mean + normal.sample(&mut rng));
            }
        }
    }
    Frame::new(s.width, s.height, pixels)
}

pub fn write_scenario_clip(scenario: &Scenario, dir: &Path) -> Result<Clip> {
    let clip = generate_clip(scenario)?;
    imaging::write_clip_dir(&clip, dir)?;
    Ok(clip)
}

/// Analytic FLSC verdict for a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedLabel {
    Determinate(StabilityLabel),
    /// Some frame sits close enough to a threshold that noise could flip
    /// the outcome; `analytic` is the noise-averaged answer.
    Indeterminate { analytic: StabilityLabel },
}

impl ExpectedLabel {
    pub fn analytic(self) -> StabilityLabel {
        match self {
            Self::Determinate(l) | Self::Indeterminate { analytic: l } => l,
        }
    }

    pub fn determinate(self) -> Option<StabilityLabel> {
        match self {
            Self::Determinate(l) => Some(l),
            Self::Indeterminate { .. } => None,
        }
    }
}

/// Expected value of a rounded, clamped pixel drawn around `level`.
fn expected_pixel(level: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return quantize(level) as f64;
    }
    let cdf = |x: f64| 0.5 * erfc(-(x - level) / (sigma * std::f64::consts::SQRT_2));
    // E[v] = sum_{v=1}^{255} P(q >= v) = sum_v (1 - cdf(v - 0.5))
    (1..=255).map(|v| 1.0 - cdf(v as f64 - 0.5)).sum()
}

fn overlap(a: &TopOriginRect, b: &TopOriginRect) -> usize {
    let w = (a.x + a.width).min(b.x + b.width).saturating_sub(a.x.max(b.x));
    let h = (a.y + a.height).min(b.y + b.height).saturating_sub(a.y.max(b.y));
    w * h
}

/// Number of noise standard deviations a frame deviation must clear from each
/// threshold before the oracle commits to a label.
const ORACLE_SIGMAS: f64 = 6.0;
const ORACLE_TIE: f64 = 1e-9;

pub fn expected_label(scenario: &Scenario, config: &FlscConfig) -> Result<ExpectedLabel> {
    scenario.validate()?;
    config.validate()?;
    let bx = config.bbox.to_top_origin(scenario.width, scenario.height)?;
    let flame = scenario.flame_region.to_top_origin(scenario.width, scenario.height)?;
    let n = bx.width * bx.height;
    let shared = overlap(&bx, &flame) as f64;
    let sigma = scenario.noise_sigma;
    let bg = expected_pixel(scenario.background_luminance as f64, sigma);

    let means: Vec<f64> = (0..scenario.duration)
        .map(|f| {
            let lit = expected_pixel(scenario.flame_level(f), sigma);
            (shared * lit + (n as f64 - shared) * bg) / n as f64
        })
        .collect();
    let clip_mean = means.iter().sum::<f64>() / means.len() as f64;
    if clip_mean <= 0.0 {
        return Ok(ExpectedLabel::Determinate(StabilityLabel::Unstable));
    }
    let devs: Vec<f64> = means.iter().map(|m| (m - clip_mean).abs() / clip_mean).collect();
    let max_dev = devs.iter().copied().fold(0.0, f64::max);
    let label = config.label_for_deviation(max_dev);

    // noise in a frame mean plus the (smaller) noise in the clip mean, propagated to the ratio
    let frame_sd = sigma / (n as f64).sqrt();
    let rel_sd = frame_sd * (1.0 + 1.0 / (means.len() as f64).sqrt()) * (1.0 + max_dev) / clip_mean;
    let margin = ORACLE_SIGMAS * rel_sd + ORACLE_TIE;
    let close = devs.iter().any(|d| {
        [config.uncertain_threshold, config.unstable_threshold]
            .iter()
            .any(|t| (d - t).abs() < margin)
    });
    Ok(if close {
        ExpectedLabel::Indeterminate { analytic: label }
    } else {
        ExpectedLabel::Determinate(label)
    })
}

/// Layout of a synthetic training or evaluation corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames_per_clip: usize,
    /// Region FLSC and the feature windows look at.
    pub anchor_box: BoundingBox,
    pub window_len: usize,
    pub base_range: (u8, u8),
    pub background_range: (u8, u8),
    /// Extinction length in frames, inclusive range.
    pub extinction_frames: (usize, usize),
    /// Extinctions per window, inclusive range. Each falls in its own equal
    /// slice of the window.
    pub extinctions_per_window: (usize, usize),
    pub noise_sigma: f64,
}

impl CorpusSpec {
    /// 640x480 footage, anchor box at the original nozzle position, three
    /// seconds per clip, noise at the sensor ceiling.
    pub fn full_size() -> Self {
        Self {
            width: 640,
            height: 480,
            fps: imaging::DEFAULT_FPS,
            frames_per_clip: 90,
            anchor_box: BoundingBox::DEFAULT_ANCHOR,
            window_len: 30,
            base_range: (130, 190),
            background_range: (5, 15),
            extinction_frames: (1, 2),
            extinctions_per_window: (8, 10),
            noise_sigma: ceiling_noise_sigma(BoundingBox::DEFAULT_ANCHOR.area()),
        }
    }

    /// Flame glow around the anchor box: a margin of up to 10 px where the frame allows.
    fn flame_region(&self) -> BoundingBox {
        let b = self.anchor_box;
        let left = b.left.saturating_sub(10);
        let right = (b.left + b.width + 10).min(self.width);
        let top = (b.bottom_offset + 10).min(self.height);
        let bottom = b.bottom_offset.saturating_sub(b.height + 10);
        BoundingBox {
            left,
            bottom_offset: top,
            width: right - left,
            height: top - bottom,
        }
    }

    /// Steady clip with a random base level.
    pub fn stable_scenario(&self, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = self.base_scenario(&mut rng, seed);
        s.events.clear();
        s
    }

    /// Clip whose flame keeps detaching: every window holds several brief
    /// extinctions, each in its own slice of the window.
    pub fn extinction_scenario(&self, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = self.base_scenario(&mut rng, seed);
        let (lo, hi) = self.extinction_frames;
        let windows = self.frames_per_clip / self.window_len;
        for w in 0..windows.max(1) {
            let count = rng.random_range(self.extinctions_per_window.0..=self.extinctions_per_window.1);
            let slice = self.window_len / count.max(1);
            for e in 0..count {
                let len = rng.random_range(lo..=hi).min(slice);
                let start = w * self.window_len + e * slice + rng.random_range(0..=slice - len);
                s.events.push(Event {
                    start_frame: start,
                    end_frame: (start + len).min(self.frames_per_clip),
                    kind: EventKind::Extinction,
                    depth: 1.0,
                });
            }
        }
        s
    }

    fn base_scenario(&self, rng: &mut ChaCha8Rng, seed: u64) -> Scenario {
        Scenario {
            width: self.width,
            height: self.height,
            fps: self.fps,
            duration: self.frames_per_clip,
            flame_region: self.flame_region(),
            base_luminance: rng.random_range(self.base_range.0..=self.base_range.1),
            background_luminance: rng.random_range(self.background_range.0..=self.background_range.1),
            events: vec![],
            noise_sigma: self.noise_sigma,
            seed,
        }
    }

    /// `stable` steady clips then `unstable` extinction clips, ids `stable_NNN` / `unstable_NNN`.
    pub fn scenarios(&self, stable: usize, unstable: usize, seed: u64) -> Vec<(String, Scenario)> {
        let mut out = Vec::with_capacity(stable + unstable);
        for i in 0..stable {
            out.push((format!("stable_{i:03}"), self.stable_scenario(mix(seed, 2 * i as u64))));
        }
        for i in 0..unstable {
            out.push((format!("unstable_{i:03}"), self.extinction_scenario(mix(seed, 2 * i as u64 + 1))));
        }
        out
    }
}

/// SplitMix64 step, used to derive independent child seeds.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random scenario for sweeps: a small frame, the flame region partly or
/// fully covering the anchor box, and up to three events of random kind,
/// depth and length.
pub fn sweep_scenario(seed: u64, anchor: BoundingBox, frame: (usize, usize), noise_sigma: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = frame;
    let duration = rng.random_range(20..=90);
    // shift the flame region a little so some scenarios only partly cover the box
    let dx = rng.random_range(0..=anchor.left.min(6));
    let grow = rng.random_range(0..=4);
    let left = anchor.left - dx;
    let bottom_offset = (anchor.bottom_offset + grow).min(height);
    let flame_region = BoundingBox {
        left,
        bottom_offset,
        width: (anchor.width + grow).min(width - left),
        height: (anchor.height + 2 * grow).min(bottom_offset),
    };
    let base = rng.random_range(90..=230u8);
    let background = rng.random_range(0..=40u8);
    let n_events = rng.random_range(0..=3);
    let events = (0..n_events)
        .map(|_| {
            let len = rng.random_range(1..=duration / 3);
            let start = rng.random_range(0..=duration - len);
            let kind = if rng.random_bool(0.4) { EventKind::Extinction } else { EventKind::Dimming };
            Event {
                start_frame: start,
                end_frame: start + len,
                kind,
                depth: rng.random_range(0.05..=1.0),
            }
        })
        .collect();
    Scenario {
        width,
        height,
        fps: imaging::DEFAULT_FPS,
        duration,
        flame_region,
        base_luminance: base,
        background_luminance: background,
        events,
        noise_sigma,
        seed: mix(seed, 0xF1A3),
    }
}
