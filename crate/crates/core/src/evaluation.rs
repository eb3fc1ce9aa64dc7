//! Scoring classifier output against expert ratings.
//!
//! Experts score each video 0 (unstable), 1 (uncertain) or 2 (stable). The
//! per-video mean is the ground truth; it is stable above 1.2 and unstable
//! otherwise. Every rate below treats `Unstable` as the positive class.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::label::{Binary, StabilityLabel};
use crate::stats::mean_and_sample_std;

pub const STABLE_ABOVE: f64 = 1.2;
pub const UNSTABLE_BELOW: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RaterScore {
    pub video_id: String,
    pub rater_id: String,
    pub score: u8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaterTable {
    rows: Vec<RaterScore>,
}

impl RaterTable {
    pub fn new(rows: Vec<RaterScore>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if r.score > 2 {
                return Err(Error::Data(format!(
                    "video {} rater {}: score {} outside 0..=2",
                    r.video_id, r.rater_id, r.score
                )));
            }
            if !seen.insert((r.video_id.as_str(), r.rater_id.as_str())) {
                return Err(Error::Data(format!(
                    "duplicate score for video {} rater {}",
                    r.video_id, r.rater_id
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Reads `video_id,rater_id,score` with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for col in ["video_id", "rater_id", "score"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Data(format!("rater CSV lacks column {col:?}")));
            }
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<RaterScore>, _>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[RaterScore] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consensus {
    pub mean_score: f64,
    pub ternary: StabilityLabel,
}

/// Stable above 1.2, unstable below 0.8, uncertain on the closed band between.
pub fn ternarize(mean_score: f64) -> StabilityLabel {
    if mean_score > STABLE_ABOVE {
        StabilityLabel::Stable
    } else if mean_score < UNSTABLE_BELOW {
        StabilityLabel::Unstable
    } else {
        StabilityLabel::Uncertain
    }
}

pub fn aggregate_raters(table: &RaterTable) -> Result<BTreeMap<String, Consensus>> {
    let mut by_video: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in table.rows() {
        by_video.entry(&r.video_id).or_default().push(r.score as f64);
    }
    by_video
        .into_iter()
        .map(|(id, scores)| {
            if scores.is_empty() {
                return Err(Error::Data(format!("video {id} has no scores")));
            }
            // integer-valued scores: the sum is exact, so rater order cannot matter
            let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
            Ok((
                id.to_string(),
                Consensus {
                    mean_score,
                    ternary: ternarize(mean_score),
                },
            ))
        })
        .collect()
}

pub fn binarize(score: f64) -> Result<Binary> {
    if !(0.0..=2.0).contains(&score) {
        return Err(Error::Data(format!("score {score} outside [0, 2]")));
    }
    Ok(if score > STABLE_ABOVE {
        Binary::Stable
    } else {
        Binary::Unstable
    })
}

/// Binary ground truth straight from a rater table.
pub fn truth_from_raters(table: &RaterTable) -> Result<BTreeMap<String, Binary>> {
    aggregate_raters(table)?
        .into_iter()
        .map(|(id, c)| Ok((id, binarize(c.mean_score)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub n: usize,
    pub accuracy: f64,
    /// `fp / (fp + tn)`; `None` when there are no negatives.
    pub fp_rate: Option<f64>,
    /// `fn / (fn + tp)`; `None` when there are no positives.
    pub fn_rate: Option<f64>,
}

impl EvaluationReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let n = tp + fp + tn + fn_;
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            tp,
            fp,
            tn,
            fn_,
            n,
            accuracy: ratio(tp + tn, n).unwrap_or(f64::NAN),
            fp_rate: ratio(fp, fp + tn),
            fn_rate: ratio(fn_, fn_ + tp),
        }
    }
}

pub fn confusion(
    predictions: &BTreeMap<String, Binary>,
    truth: &BTreeMap<String, Binary>,
) -> Result<EvaluationReport> {
    let missing: Vec<String> = truth.keys().filter(|k| !predictions.contains_key(*k)).cloned().collect();
    let extra: Vec<String> = predictions.keys().filter(|k| !truth.contains_key(*k)).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::KeyMismatch { missing, extra });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (id, t) in truth {
        match (predictions[id], *t) {
            (Binary::Unstable, Binary::Unstable) => tp += 1,
            (Binary::Unstable, Binary::Stable) => fp += 1,
            (Binary::Stable, Binary::Stable) => tn += 1,
            (Binary::Stable, Binary::Unstable) => fn_ += 1,
        }
    }
    Ok(EvaluationReport::from_counts(tp, fp, tn, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub trials: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Accuracy of fair-coin guessing, one independent RNG stream per trial.
pub fn random_baseline(truth: &BTreeMap<String, Binary>, trials: usize, seed: u64) -> Result<Baseline> {
    if truth.is_empty() {
        return Err(Error::EmptyInput("ground truth has no videos".into()));
    }
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let labels: Vec<Binary> = truth.values().copied().collect();
    let accuracies: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let correct = labels
                .iter()
                .filter(|&&l| {
                    let guess = if rng.random_bool(0.5) { Binary::Stable } else { Binary::Unstable };
                    guess == l
                })
                .count();
            correct as f64 / labels.len() as f64
        })
        .collect();
    let (mean_accuracy, std_accuracy) = mean_and_sample_std(&accuracies);
    Ok(Baseline {
        trials,
        mean_accuracy,
        std_accuracy,
    })
}

/// Per-video predictions on the 0..=2 scale. Ternary codes and real-valued
/// scores both pass through [`binarize`].
pub type Predictions = BTreeMap<String, f64>;

/// Reads `video_id,prediction` with a header row.
pub fn read_predictions<R: Read>(reader: R) -> Result<Predictions> {
    #[derive(Deserialize)]
    struct Row {
        video_id: String,
        prediction: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let Row { video_id, prediction } = row?;
        binarize(prediction)?;
        if out.insert(video_id.clone(), prediction).is_some() {
            return Err(Error::Data(format!("duplicate prediction for video {video_id}")));
        }
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(predictions: &Predictions, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["video_id", "prediction"])?;
    for (id, p) in predictions {
        w.write_record([id.as_str(), &p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn binarize_all(predictions: &Predictions) -> Result<BTreeMap<String, Binary>> {
    predictions
        .iter()
        .map(|(id, &p)| Ok((id.clone(), binarize(p)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub video_id: String,
    pub method: String,
    pub prediction_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    /// Long-form rows, one per (method, video), methods in name order.
    pub rows: Vec<ComparisonRow>,
    pub reports: BTreeMap<String, EvaluationReport>,
}

pub fn compare_methods(
    methods: &BTreeMap<String, Predictions>,
    truth: &BTreeMap<String, Binary>,
) -> Result<Comparison> {
    let mut out = Comparison::default();
    for (method, preds) in methods {
        let report = confusion(&binarize_all(preds)?, truth)?;
        out.reports.insert(method.clone(), report);
        out.rows.extend(preds.iter().map(|(id, &v)| ComparisonRow {
            video_id: id.clone(),
            method: method.clone(),
            prediction_value: v,
        }));
    }
    Ok(out)
}

impl Comparison {
    /// `video_id,method,prediction_value`. The expert consensus, when given,
    /// is emitted as method `human`.
    pub fn write_long_csv<W: Write>(
        &self,
        consensus: Option<&BTreeMap<String, Consensus>>,
        writer: W,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["video_id", "method", "prediction_value"])?;
        if let Some(c) = consensus {
            for (id, v) in c {
                w.write_record([id.as_str(), "human", &v.mean_score.to_string()])?;
            }
        }
        for r in &self.rows {
            w.write_record([r.video_id.as_str(), r.method.as_str(), &r.prediction_value.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// `method,n,tp,fp,tn,fn,accuracy,fp_rate,fn_rate`; undefined rates are left empty.
    pub fn write_report_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_report_csv(&self.reports, writer)
    }
}

pub fn write_report_csv<W: Write>(reports: &BTreeMap<String, EvaluationReport>, writer: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "n", "tp", "fp", "tn", "fn", "accuracy", "fp_rate", "fn_rate"])?;
    for (m, r) in reports {
        w.write_record([
            m.clone(),
            r.n.to_string(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.tn.to_string(),
            r.fn_.to_string(),
            r.accuracy.to_string(),
            opt(r.fp_rate),
            opt(r.fn_rate),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Truth map with `stable` stable videos followed by `unstable` unstable ones.
pub fn synthetic_truth(stable: usize, unstable: usize) -> BTreeMap<String, Binary> {
    (0..stable + unstable)
        .map(|i| {
            let label = if i < stable { Binary::Stable } else { Binary::Unstable };
            (format!("v{i:04}"), label)
        })
        .collect()
}

/// Ids present in either map but not both.
pub fn key_difference<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>) -> BTreeSet<String> {
    a.keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .cloned()
        .collect()
}
