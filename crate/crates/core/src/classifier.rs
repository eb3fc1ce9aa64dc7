//! Named clip classifiers selectable at runtime.
//!
//! Every classifier maps a clip to a prediction on the rater scale
//! (0 unstable, 1 uncertain, 2 stable) so that predictions from different
//! methods can be scored with the same evaluation code.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flsc::{classify_clip_flsc, FlscConfig};
use crate::imaging::Clip;
use crate::pipeline::{classify_clip, UnsupervisedModel};

pub trait ClipClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify(&self, clip: &Clip) -> Result<f64>;
}

#[derive(Debug, Clone, Default)]
pub struct ClassifierOptions {
    pub flsc: FlscConfig,
    pub model: Option<Arc<UnsupervisedModel>>,
}

type Factory = Box<dyn Fn(&ClassifierOptions) -> Result<Box<dyn ClipClassifier>> + Send + Sync>;

pub struct ClassifierRegistry {
    factories: BTreeMap<String, Factory>,
}

impl ClassifierRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("flsc", |o| Ok(Box::new(FlscClassifier { config: o.flsc })));
        r.register("unsupervised", |o| {
            let model = o
                .model
                .clone()
                .ok_or_else(|| Error::Parameter("method unsupervised needs a trained model".into()))?;
            Ok(Box::new(UnsupervisedClassifier { model }))
        });
        r
    }

    /// Replaces any classifier already registered under `name`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&ClassifierOptions) -> Result<Box<dyn ClipClassifier>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, options: &ClassifierOptions) -> Result<Box<dyn ClipClassifier>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Parameter(format!("unknown method {name:?}; available: {}", self.names().join(", ")))
        })?;
        factory(options)
    }
}

impl Default for ClassifierRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

pub struct FlscClassifier {
    pub config: FlscConfig,
}

impl ClipClassifier for FlscClassifier {
    fn name(&self) -> &str {
        "flsc"
    }

    fn classify(&self, clip: &Clip) -> Result<f64> {
        Ok(classify_clip_flsc(clip, &self.config)?.code() as f64)
    }
}

pub struct UnsupervisedClassifier {
    pub model: Arc<UnsupervisedModel>,
}

impl ClipClassifier for UnsupervisedClassifier {
    fn name(&self) -> &str {
        "unsupervised"
    }

    fn classify(&self, clip: &Clip) -> Result<f64> {
        Ok(classify_clip(&self.model, clip)?.label.score())
    }
}
