use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use chrono::{SecondsFormat, Utc};
use flamestab::classifier::{ClassifierOptions, ClassifierRegistry};
use flamestab::evaluation::{
    aggregate_raters, compare_methods, random_baseline, read_predictions, synthetic_truth, truth_from_raters,
    write_predictions, Predictions, RaterTable,
};
use flamestab::flsc::{classify_clip_flsc, deviation_series, FlscConfig};
use flamestab::imaging::read_clip_dir;
use flamestab::label::{Binary, StabilityLabel};
use flamestab::pipeline::{
    classify_clip, load_model, project_corpus, save_model, train_unsupervised, write_projection_csv, TrainConfig,
};
use flamestab::stream::{monitor, write_stream, AlertRecord, StreamSummary};
use flamestab::synthgen::{expected_label, write_scenario_clip, CorpusSpec, Scenario};
use serde::Serialize;

use crate::{corpus, Command, FlscArgs};

pub enum Failure {
    Usage(String),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

type Outcome = Result<u8, Failure>;

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{} is not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{} does not exist", path.display())))
    }
}

fn flsc_config(args: &FlscArgs) -> Result<FlscConfig, Failure> {
    FlscConfig::new(args.bbox, args.thresholds.0, args.thresholds.1).map_err(|e| Failure::Usage(e.to_string()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Flsc { clip_dir, flsc, out } => cmd_flsc(&clip_dir, &flsc, out.as_deref()),
        Command::Train {
            corpus_dir,
            seed,
            out,
            flsc,
            window_len,
            k,
            restarts,
            label_granularity,
        } => {
            let mut config = TrainConfig::new(flsc_config(&flsc)?, seed);
            config.window_len = window_len;
            config.k = k;
            config.restarts = restarts;
            config.granularity = label_granularity;
            cmd_train(&corpus_dir, &config, &out)
        }
        Command::Classify { model, clip_dir } => cmd_classify(&model, &clip_dir),
        Command::Monitor { model, stream } => cmd_monitor(&model, &stream),
        Command::Evaluate {
            truth,
            preds,
            out_report,
            out_fig8,
        } => cmd_evaluate(&truth, &preds, out_report.as_deref(), out_fig8.as_deref()),
        Command::Baseline {
            truth,
            stable,
            unstable,
            trials,
            seed,
        } => cmd_baseline(truth.as_deref(), stable.zip(unstable), trials, seed),
        Command::Synth { scenario, out, flsc } => cmd_synth(&scenario, &out, &flsc_config(&flsc)?),
        Command::SynthCorpus {
            out,
            stable,
            unstable,
            seed,
            frames,
            width,
            height,
            bbox,
        } => {
            let spec = CorpusSpec {
                width,
                height,
                frames_per_clip: frames,
                anchor_box: bbox,
                ..CorpusSpec::full_size()
            };
            cmd_synth_corpus(&out, &spec, stable, unstable, seed)
        }
        Command::Project { model, corpus_dir, out } => cmd_project(&model, &corpus_dir, out.as_deref()),
        Command::Predict {
            corpus_dir,
            method,
            model,
            flsc,
        } => cmd_predict(&corpus_dir, &method, model.as_deref(), &flsc_config(&flsc)?),
        Command::Stream { clip_dir } => cmd_stream(&clip_dir),
    }
}

fn cmd_flsc(clip_dir: &Path, args: &FlscArgs, out: Option<&Path>) -> Outcome {
    require_dir(clip_dir)?;
    let config = flsc_config(args)?;
    let clip = read_clip_dir(clip_dir)?;
    let label = classify_clip_flsc(&clip, &config)?;
    let (clip_mean, max_dev) = match deviation_series(&clip, &config) {
        Ok(series) => {
            if let Some(path) = out {
                series.write_csv(create(path)?)?;
            }
            (series.clip_mean, series.max_deviation())
        }
        Err(flamestab::Error::DarkClip) => {
            if out.is_some() {
                tracing::warn!("anchor box is dark in every frame; no deviation CSV written");
            }
            (0.0, f64::NAN)
        }
        Err(e) => return Err(e.into()),
    };
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["label", "code", "clip_mean", "max_deviation"])?;
    w.write_record([label.as_str(), &label.code().to_string(), &clip_mean.to_string(), &max_dev.to_string()])?;
    w.flush()?;
    Ok(match label {
        StabilityLabel::Stable => 0,
        StabilityLabel::Uncertain => 1,
        StabilityLabel::Unstable => 2,
    })
}

fn cmd_train(corpus_dir: &Path, config: &TrainConfig, out: &Path) -> Outcome {
    require_dir(corpus_dir)?;
    let dirs = corpus::clip_dirs(corpus_dir)?;
    let training = train_unsupervised(corpus::clips(dirs), config)?;
    for warning in &training.warnings {
        eprintln!("warning: {warning}");
    }
    let model = &training.model;
    save_model(model, out)?;
    tracing::info!(
        windows = training.windows.len(),
        ratio = ?model.pca.explained_variance_ratio(),
        "model written to {}",
        out.display()
    );
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["cluster", "unstable", "uncertain", "stable", "is_unstable_cluster", "low_confidence"])?;
    for (j, s) in model.training_summary.iter().enumerate() {
        w.write_record([
            j.to_string(),
            s.unstable.to_string(),
            s.uncertain.to_string(),
            s.stable.to_string(),
            (j == model.unstable_cluster).to_string(),
            model.low_confidence.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(0)
}

fn cmd_classify(model_path: &Path, clip_dir: &Path) -> Outcome {
    require_file(model_path)?;
    require_dir(clip_dir)?;
    let model = load_model(model_path)?;
    let clip = read_clip_dir(clip_dir)?;
    let verdict = classify_clip(&model, &clip)?;
    let n = model.window_len;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["scope", "window", "first_frame", "last_frame", "label", "d_unstable", "d_other"])?;
    for (i, v) in verdict.windows.iter().enumerate() {
        w.write_record([
            "window".to_string(),
            i.to_string(),
            (i * n).to_string(),
            (i * n + n - 1).to_string(),
            v.label.to_string(),
            v.d_unstable.to_string(),
            v.d_other.to_string(),
        ])?;
    }
    let last = verdict.windows.len() * n - 1;
    w.write_record(["clip", "", "0", &last.to_string(), verdict.label.as_str(), "", ""])?;
    w.flush()?;
    Ok(0)
}

#[derive(Serialize)]
struct Timestamped<'a, T> {
    #[serde(flatten)]
    record: &'a T,
    ts: String,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: bool,
    #[serde(flatten)]
    stats: &'a StreamSummary,
}

fn write_line<T: Serialize>(out: &mut impl Write, record: &T) -> io::Result<()> {
    let line = Timestamped {
        record,
        ts: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")?;
    out.flush()
}

fn cmd_monitor(model_path: &Path, stream: &str) -> Outcome {
    require_file(model_path)?;
    let model = load_model(model_path)?;
    let reader: Box<dyn Read + Send> = if stream == "stdin" || stream == "-" {
        Box::new(io::stdin())
    } else {
        let path = PathBuf::from(stream);
        require_file(&path)?;
        Box::new(open(&path)?)
    };
    let mut out = io::stdout().lock();
    let summary = monitor(&model, reader, |r: &AlertRecord| {
        write_line(&mut out, r).map_err(|e| flamestab::Error::Io {
            path: "<stdout>".into(),
            error: e,
        })
    })?;
    write_line(
        &mut out,
        &SummaryLine {
            summary: true,
            stats: &summary,
        },
    )?;
    Ok(0)
}

fn cmd_evaluate(truth: &Path, preds: &[String], out_report: Option<&Path>, out_fig8: Option<&Path>) -> Outcome {
    require_file(truth)?;
    let table = RaterTable::from_csv(open(truth)?)?;
    let truth_labels = truth_from_raters(&table)?;
    let consensus = aggregate_raters(&table)?;

    let mut methods: BTreeMap<String, Predictions> = BTreeMap::new();
    for spec in preds {
        let (name, path) = match spec.split_once('=') {
            Some((name, path)) => (name.to_string(), PathBuf::from(path)),
            None => {
                let path = PathBuf::from(spec);
                let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                (stem, path)
            }
        };
        require_file(&path)?;
        let p = read_predictions(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
        if methods.insert(name.clone(), p).is_some() {
            return Err(Failure::Usage(format!("method name {name:?} given twice")));
        }
    }
    let comparison = compare_methods(&methods, &truth_labels)?;
    comparison.write_report_csv(io::stdout().lock())?;
    if let Some(path) = out_report {
        comparison.write_report_csv(create(path)?)?;
    }
    if let Some(path) = out_fig8 {
        comparison.write_long_csv(Some(&consensus), create(path)?)?;
    }
    Ok(0)
}

fn cmd_baseline(truth: Option<&Path>, counts: Option<(usize, usize)>, trials: usize, seed: u64) -> Outcome {
    let labels = match (truth, counts) {
        (Some(path), _) => {
            require_file(path)?;
            truth_from_raters(&RaterTable::from_csv(open(path)?)?)?
        }
        (None, Some((stable, unstable))) => synthetic_truth(stable, unstable),
        (None, None) => return Err(Failure::Usage("give --truth or both --stable and --unstable".into())),
    };
    let b = random_baseline(&labels, trials, seed)?;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["trials", "n", "mean_accuracy", "std_accuracy"])?;
    w.write_record([
        b.trials.to_string(),
        labels.len().to_string(),
        b.mean_accuracy.to_string(),
        b.std_accuracy.to_string(),
    ])?;
    w.flush()?;
    Ok(0)
}

fn cmd_synth(scenario_path: &Path, out: &Path, config: &FlscConfig) -> Outcome {
    require_file(scenario_path)?;
    let bytes = std::fs::read(scenario_path).with_context(|| format!("reading {}", scenario_path.display()))?;
    let scenario = Scenario::from_json(&bytes)?;
    let clip = write_scenario_clip(&scenario, out)?;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["frames", "truth", "expected_flsc", "determinate"])?;
    let (expected, determinate) = match config.bbox.to_top_origin(scenario.width, scenario.height) {
        Ok(_) => {
            let e = expected_label(&scenario, config)?;
            (e.analytic().as_str().to_string(), e.determinate().is_some().to_string())
        }
        // the anchor box does not fit this frame, so there is no FLSC expectation
        Err(_) => (String::new(), String::new()),
    };
    w.write_record([clip.len().to_string(), scenario.truth().to_string(), expected, determinate])?;
    w.flush()?;
    Ok(0)
}

fn cmd_synth_corpus(out: &Path, spec: &CorpusSpec, stable: usize, unstable: usize, seed: u64) -> Outcome {
    spec.anchor_box
        .to_top_origin(spec.width, spec.height)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut truth = csv::Writer::from_writer(create(&out.join("truth.csv"))?);
    truth.write_record(["video_id", "rater_id", "score"])?;
    for (id, scenario) in spec.scenarios(stable, unstable, seed) {
        write_scenario_clip(&scenario, &out.join(&id))?;
        let score = if scenario.truth() == Binary::Unstable { "0" } else { "2" };
        truth.write_record([id.as_str(), "generator", score])?;
        tracing::info!("wrote {id}");
    }
    truth.flush()?;
    Ok(0)
}

fn cmd_project(model_path: &Path, corpus_dir: &Path, out: Option<&Path>) -> Outcome {
    require_file(model_path)?;
    require_dir(corpus_dir)?;
    let model = load_model(model_path)?;
    let rows = project_corpus(&model, corpus::clips(corpus::clip_dirs(corpus_dir)?))?;
    match out {
        Some(path) => write_projection_csv(&rows, create(path)?)?,
        None => write_projection_csv(&rows, io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_predict(corpus_dir: &Path, method: &str, model: Option<&Path>, flsc: &FlscConfig) -> Outcome {
    require_dir(corpus_dir)?;
    let model = match model {
        Some(path) => {
            require_file(path)?;
            Some(Arc::new(load_model(path)?))
        }
        None => None,
    };
    let registry = ClassifierRegistry::with_builtins();
    let options = ClassifierOptions { flsc: *flsc, model };
    let classifier = registry
        .create(method, &options)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let mut predictions = Predictions::new();
    for item in corpus::clips(corpus::clip_dirs(corpus_dir)?) {
        let (id, clip) = item?;
        let p = classifier.classify(&clip).with_context(|| format!("clip {id}"))?;
        predictions.insert(id, p);
    }
    write_predictions(&predictions, io::stdout().lock())?;
    Ok(0)
}

fn cmd_stream(clip_dir: &Path) -> Outcome {
    require_dir(clip_dir)?;
    let clip = read_clip_dir(clip_dir)?;
    write_stream(&clip, BufWriter::new(io::stdout().lock())).map_err(|e| anyhow!(e))?;
    Ok(0)
}
